import { describe, expect, it } from 'vitest';

import type { SRResponse } from '../src/api.js';
import {
  MAX_COMPARE,
  beginSubmit,
  canSubmit,
  completeSubmit,
  createSession,
  failSubmit,
  selectedRuns,
  setImage,
  toggleSelect,
} from '../src/session.js';

const RESPONSE: SRResponse = {
  fine_b64: 'AAA=',
  tim: 0.25,
  latency_ms: 10,
  attention: [{ word: 'red', map_b64: 'BBB=', raw_min: 0, raw_max: 1 }],
};

function sessionWithRuns(n: number) {
  const s = createSession();
  setImage(s, 'AAA=');
  for (let i = 0; i < n; i++) {
    beginSubmit(s);
    completeSubmit(s, `caption ${i}`, RESPONSE, 1000 + i);
  }
  return s;
}

describe('canSubmit', () => {
  it('requires an image, a non-empty caption, and no pending request', () => {
    const s = createSession();
    expect(canSubmit(s, 'a red square')).toBe(false);
    setImage(s, 'AAA=');
    expect(canSubmit(s, '   ')).toBe(false);
    expect(canSubmit(s, 'a red square')).toBe(true);
    beginSubmit(s);
    expect(canSubmit(s, 'a red square')).toBe(false);
  });
});

describe('history', () => {
  it('appends runs with increasing ids and never rewrites entries', () => {
    const s = sessionWithRuns(2);
    const first = s.history[0];
    beginSubmit(s);
    completeSubmit(s, 'caption 2', RESPONSE, 1002);
    expect(s.history).toHaveLength(3);
    expect(s.history[0]).toBe(first);
    expect(s.history.map((r) => r.id)).toEqual([1, 2, 3]);
  });

  it('keeps history untouched when a request fails', () => {
    const s = sessionWithRuns(1);
    beginSubmit(s);
    failSubmit(s);
    expect(s.history).toHaveLength(1);
    expect(s.pending).toBe(false);
  });

  it('rejects a second in-flight request', () => {
    const s = sessionWithRuns(0);
    beginSubmit(s);
    expect(() => beginSubmit(s)).toThrow();
  });
});

describe('comparison selection', () => {
  it('stays a subset of history and respects the size cap', () => {
    const s = sessionWithRuns(5);
    expect(toggleSelect(s, 99)).toBe(false);
    expect(toggleSelect(s, 1)).toBe(true);
    expect(toggleSelect(s, 2)).toBe(true);
    expect(toggleSelect(s, 3)).toBe(true);
    expect(toggleSelect(s, 4)).toBe(false);
    expect(s.selected).toHaveLength(MAX_COMPARE);
    expect(selectedRuns(s).map((r) => r.id)).toEqual([1, 2, 3]);
  });

  it('toggles a selected run back off', () => {
    const s = sessionWithRuns(2);
    toggleSelect(s, 1);
    toggleSelect(s, 2);
    expect(toggleSelect(s, 1)).toBe(true);
    expect(s.selected).toEqual([2]);
  });
});
