// Positional token diff between captions, used by the comparison panels.

export interface DiffToken {
  text: string;
  changed: boolean;
}

export function tokenize(caption: string): string[] {
  return caption.trim().split(/\s+/).filter((w) => w.length > 0);
}

/**
 * Mark tokens of `caption` that differ from `baseline` at the same position.
 * Extra trailing tokens on either side count as changed.
 */
export function diffAgainst(baseline: string, caption: string): DiffToken[] {
  const base = tokenize(baseline);
  const words = tokenize(caption);
  return words.map((text, i) => ({ text, changed: base[i] !== text }));
}

/**
 * Tokens of `baseline` marked as changed wherever any of `others` disagrees
 * at that position (or is missing it).
 */
export function diffBaseline(baseline: string, others: string[]): DiffToken[] {
  const base = tokenize(baseline);
  const tokenized = others.map(tokenize);
  return base.map((text, i) => ({
    text,
    changed: tokenized.some((words) => words[i] !== text),
  }));
}
