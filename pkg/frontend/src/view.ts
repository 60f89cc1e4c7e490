// DOM rendering. All functions take explicit containers so tests can drive
// them inside jsdom; nothing here talks to the network.

import { diffAgainst, diffBaseline, DiffToken } from './diff.js';
import type { Run } from './session.js';

export function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

export type BannerTone = 'error' | 'warning' | 'info';

export function showBanner(el: HTMLElement, tone: BannerTone, text: string): void {
  el.textContent = text;
  el.className = `banner ${tone}`;
  el.style.display = 'block';
}

export function clearBanner(el: HTMLElement): void {
  el.textContent = '';
  el.className = 'banner';
  el.style.display = 'none';
}

/**
 * Render the latest run: fine output, optional coarse, TIM badge and one
 * word chip per attention entry. Clicking a chip toggles its heatmap overlay
 * on the fine image; that is a pure view change, no request is made.
 */
export function renderRun(container: HTMLElement, run: Run): void {
  container.replaceChildren();

  const frame = document.createElement('div');
  frame.className = 'output-frame';

  const fine = document.createElement('img');
  fine.className = 'fine-image';
  fine.src = pngSrc(run.fineB64);
  fine.alt = `fine output for "${run.caption}"`;
  frame.appendChild(fine);

  run.attention.forEach((entry, index) => {
    const overlay = document.createElement('img');
    overlay.className = 'overlay';
    overlay.dataset.index = String(index);
    overlay.src = pngSrc(entry.map_b64);
    overlay.alt = `attention for "${entry.word}"`;
    overlay.style.display = 'none';
    frame.appendChild(overlay);
  });
  container.appendChild(frame);

  if (run.coarseB64) {
    const coarse = document.createElement('img');
    coarse.className = 'coarse-image';
    coarse.src = pngSrc(run.coarseB64);
    coarse.alt = 'coarse output';
    container.appendChild(coarse);
  }

  const badge = document.createElement('div');
  badge.className = 'tim-badge';
  badge.textContent = `TIM ${run.tim.toFixed(4)} · ${run.latencyMs.toFixed(0)} ms`;
  container.appendChild(badge);

  const chips = document.createElement('div');
  chips.className = 'chips';
  run.attention.forEach((entry, index) => {
    const chip = document.createElement('button');
    chip.type = 'button';
    chip.className = 'chip';
    chip.dataset.index = String(index);
    chip.textContent = entry.word;
    chip.title = `raw ${entry.raw_min.toFixed(3)} .. ${entry.raw_max.toFixed(3)}`;
    chip.addEventListener('click', () => toggleOverlay(container, index));
    chips.appendChild(chip);
  });
  container.appendChild(chips);
}

/** Show the overlay for one chip (hiding the rest), or hide it when active. */
export function toggleOverlay(container: HTMLElement, index: number): void {
  const chips = container.querySelectorAll<HTMLButtonElement>('.chip');
  const overlays = container.querySelectorAll<HTMLImageElement>('.overlay');
  const target = container.querySelector<HTMLButtonElement>(`.chip[data-index="${index}"]`);
  const wasActive = target?.classList.contains('active') ?? false;
  chips.forEach((c) => c.classList.remove('active'));
  overlays.forEach((o) => {
    o.style.display = 'none';
  });
  if (!wasActive && target) {
    target.classList.add('active');
    const overlay = container.querySelector<HTMLImageElement>(`.overlay[data-index="${index}"]`);
    if (overlay) overlay.style.display = 'block';
  }
}

export function renderHistory(
  list: HTMLElement,
  runs: Run[],
  selected: number[],
  onToggle: (runId: number, check: HTMLInputElement) => void,
): void {
  list.replaceChildren();
  for (const run of runs) {
    const item = document.createElement('li');
    item.className = 'history-entry';
    item.dataset.runId = String(run.id);

    const thumb = document.createElement('img');
    thumb.className = 'thumb';
    thumb.src = pngSrc(run.fineB64);
    thumb.alt = `run ${run.id}`;
    item.appendChild(thumb);

    const caption = document.createElement('span');
    caption.className = 'history-caption';
    caption.textContent = run.caption;
    item.appendChild(caption);

    const tim = document.createElement('span');
    tim.className = 'history-tim';
    tim.textContent = run.tim.toFixed(4);
    item.appendChild(tim);

    const check = document.createElement('input');
    check.type = 'checkbox';
    check.className = 'compare-check';
    check.checked = selected.includes(run.id);
    check.addEventListener('change', () => onToggle(run.id, check));
    item.appendChild(check);

    list.appendChild(item);
  }
}

function tokenSpan(token: DiffToken): HTMLElement {
  const span = document.createElement('span');
  span.className = token.changed ? 'token changed' : 'token';
  span.textContent = token.text;
  return span;
}

/** Side-by-side panels; changed caption words are highlighted per panel. */
export function renderCompare(panel: HTMLElement, runs: Run[]): void {
  panel.replaceChildren();
  if (runs.length < 2) return;
  const captions = runs.map((r) => r.caption);
  runs.forEach((run, i) => {
    const cell = document.createElement('div');
    cell.className = 'compare-cell';
    cell.dataset.runId = String(run.id);

    const words = document.createElement('div');
    words.className = 'compare-caption';
    const tokens = i === 0
      ? diffBaseline(captions[0], captions.slice(1))
      : diffAgainst(captions[0], captions[i]);
    for (const token of tokens) words.appendChild(tokenSpan(token));
    cell.appendChild(words);

    const img = document.createElement('img');
    img.className = 'compare-image';
    img.src = pngSrc(run.fineB64);
    img.alt = `run ${run.id}`;
    cell.appendChild(img);

    const tim = document.createElement('div');
    tim.className = 'compare-tim';
    tim.textContent = `TIM ${run.tim.toFixed(4)}`;
    cell.appendChild(tim);

    panel.appendChild(cell);
  });
}
