// Client-side edit session state. History is append-only within a session;
// the comparison selection is always a subset of history ids with size <= 3.

import type { AttentionEntry, SRResponse } from './api.js';

export interface Run {
  id: number;
  caption: string;
  fineB64: string;
  coarseB64?: string;
  attention: AttentionEntry[];
  tim: number;
  latencyMs: number;
  timestamp: number;
}

export interface EditSession {
  imageB64: string | null;
  history: Run[];
  selected: number[];
  pending: boolean;
  nextId: number;
}

export const MAX_COMPARE = 3;

export function createSession(): EditSession {
  return { imageB64: null, history: [], selected: [], pending: false, nextId: 1 };
}

export function setImage(session: EditSession, imageB64: string): void {
  session.imageB64 = imageB64;
}

/** Client-side gate: non-empty caption, an image, and no request in flight. */
export function canSubmit(session: EditSession, caption: string): boolean {
  return !session.pending && session.imageB64 !== null && caption.trim().length > 0;
}

export function beginSubmit(session: EditSession): void {
  if (session.pending) throw new Error('a request is already in flight');
  session.pending = true;
}

/** Append a run from a service response. Never rewrites earlier entries. */
export function completeSubmit(
  session: EditSession,
  caption: string,
  response: SRResponse,
  timestamp: number,
): Run {
  const run: Run = {
    id: session.nextId,
    caption,
    fineB64: response.fine_b64,
    coarseB64: response.coarse_b64,
    attention: response.attention ?? [],
    tim: response.tim,
    latencyMs: response.latency_ms,
    timestamp,
  };
  session.nextId += 1;
  session.history.push(run);
  session.pending = false;
  return run;
}

/** Failed request: clear the in-flight flag, leave history untouched. */
export function failSubmit(session: EditSession): void {
  session.pending = false;
}

export function getRun(session: EditSession, runId: number): Run | undefined {
  return session.history.find((r) => r.id === runId);
}

/**
 * Toggle a run in the comparison selection. Returns false when the id is
 * unknown or the selection is already at MAX_COMPARE.
 */
export function toggleSelect(session: EditSession, runId: number): boolean {
  if (!getRun(session, runId)) return false;
  const at = session.selected.indexOf(runId);
  if (at >= 0) {
    session.selected.splice(at, 1);
    return true;
  }
  if (session.selected.length >= MAX_COMPARE) return false;
  session.selected.push(runId);
  return true;
}

export function selectedRuns(session: EditSession): Run[] {
  return session.selected
    .map((id) => getRun(session, id))
    .filter((r): r is Run => r !== undefined);
}
