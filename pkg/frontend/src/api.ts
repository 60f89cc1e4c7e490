// Typed client for the SR editing service. The UI never computes model
// math; every number shown comes verbatim from these payloads.

export interface AttentionEntry {
  word: string;
  map_b64: string;
  raw_min: number;
  raw_max: number;
}

export interface SRResponse {
  fine_b64: string;
  coarse_b64?: string;
  attention?: AttentionEntry[];
  tim: number;
  latency_ms: number;
}

export interface SRRequest {
  image_b64: string;
  caption: string;
  return_attention: boolean;
  return_coarse: boolean;
}

export interface HealthResponse {
  status: string;
  scale: number;
  vocab_size: number;
}

export class ServiceError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

export type FetchFn = typeof fetch;

async function parseError(status: number, res: Response): Promise<ServiceError> {
  let code = 'unknown_error';
  let message = `service returned ${status}`;
  try {
    const body = (await res.json()) as { error_code?: string; message?: string };
    if (body.error_code) code = body.error_code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep defaults
  }
  return new ServiceError(status, code, message);
}

export async function fetchHealth(base: string, fetchFn: FetchFn = fetch): Promise<HealthResponse> {
  const res = await fetchFn(`${base}/health`);
  if (!res.ok) throw await parseError(res.status, res);
  return (await res.json()) as HealthResponse;
}

export async function fetchVocab(base: string, fetchFn: FetchFn = fetch): Promise<string[]> {
  const res = await fetchFn(`${base}/vocab`);
  if (!res.ok) throw await parseError(res.status, res);
  const body = (await res.json()) as { words: string[] };
  return body.words;
}

export async function superResolve(
  base: string,
  request: SRRequest,
  fetchFn: FetchFn = fetch,
): Promise<SRResponse> {
  const res = await fetchFn(`${base}/sr`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(request),
  });
  if (!res.ok) throw await parseError(res.status, res);
  return (await res.json()) as SRResponse;
}
