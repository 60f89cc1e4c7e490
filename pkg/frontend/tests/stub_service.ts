// In-memory stand-in for the SR service: same routes, same shapes, canned
// pixels. Attention entries mirror the request's caption words so chip
// counts track caption length like the real service.

import type { FetchFn } from '../src/api.js';

export const LR_B64 =
  'iVBORw0KGgoAAAANSUhEUgAAAAgAAAAICAIAAABLbSncAAAAFElEQVR4nGM8oaHBgA0wYRUdtBIA4DgBKJ8lCQoAAAAASUVORK5CYII=';
export const FINE_B64 =
  'iVBORw0KGgoAAAANSUhEUgAAAEAAAABACAIAAAAlC+aJAAAAY0lEQVR4nO3PQQ3AIADAQEANcpCNrIngcVnSU9DOfc/4s6UDXjWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgNaA1oDWgfZHQAcBNj7/2AAAAAElFTkSuQmCC';
export const MAP_B64 =
  'iVBORw0KGgoAAAANSUhEUgAAABAAAAAQCAAAAAA6mKC9AAAAEUlEQVR4nGNsYEAFTAwjWgAAmZAAoC0n3a4AAAAASUVORK5CYII=';

export const STUB_VOCAB = [
  'a', 'the', 'small', 'large', 'red', 'yellow', 'green', 'cyan', 'blue',
  'magenta', 'square', 'circle', 'triangle', 'diamond', 'cross', 'near',
  'center', 'top', 'bottom', 'left', 'right', 'on', 'background',
];

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

export interface StubService {
  fetchFn: FetchFn;
  calls: { url: string; body?: unknown }[];
  srCalls(): number;
}

export function stubService(): StubService {
  const calls: { url: string; body?: unknown }[] = [];
  const fetchFn: FetchFn = async (input, init) => {
    const url = String(input);
    const entry: { url: string; body?: unknown } = { url };
    if (init?.body) entry.body = JSON.parse(String(init.body));
    calls.push(entry);

    if (url.endsWith('/health')) {
      return json({ status: 'ok', scale: 8, vocab_size: STUB_VOCAB.length });
    }
    if (url.endsWith('/vocab')) {
      return json({ words: STUB_VOCAB });
    }
    if (url.endsWith('/sr')) {
      const req = (entry.body ?? {}) as { caption?: string; image_b64?: string };
      const caption = (req.caption ?? '').trim();
      if (!caption) {
        return json({ error_code: 'empty_caption', message: 'caption has no usable words' }, 422);
      }
      const words = caption.split(/\s+/);
      if (words.every((w) => !STUB_VOCAB.includes(w.toLowerCase()))) {
        return json(
          { error_code: 'no_known_words', message: 'caption contains no in-vocabulary words' },
          422,
        );
      }
      return json({
        fine_b64: FINE_B64,
        coarse_b64: FINE_B64,
        tim: 0.5125,
        latency_ms: 12.5,
        attention: words.map((word) => ({
          word,
          map_b64: MAP_B64,
          raw_min: 0.0,
          raw_max: 1.0,
        })),
      });
    }
    return json({ error_code: 'not_found', message: url }, 404);
  };
  return {
    fetchFn,
    calls,
    srCalls: () => calls.filter((c) => c.url.endsWith('/sr')).length,
  };
}
