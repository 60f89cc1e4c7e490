// Page wiring: builds the editor skeleton, owns the session, and connects
// DOM events to the service client.

import { FetchFn, ServiceError, superResolve } from './api.js';
import {
  EditSession,
  beginSubmit,
  canSubmit,
  completeSubmit,
  createSession,
  failSubmit,
  selectedRuns,
  setImage,
  toggleSelect,
} from './session.js';
import {
  clearBanner,
  renderCompare,
  renderHistory,
  renderRun,
  showBanner,
} from './view.js';

export interface AppOptions {
  base?: string;
  fetchFn?: FetchFn;
  now?: () => number;
}

export interface App {
  session: EditSession;
  root: HTMLElement;
  submit(): Promise<void>;
  loadImageB64(b64: string): void;
}

const SKELETON = `
  <div class="banner" id="banner" style="display:none"></div>
  <section class="controls">
    <label>LR image
      <input type="file" id="image-input" accept="image/png">
    </label>
    <img id="image-preview" alt="" style="display:none">
    <label>Caption
      <input type="text" id="caption-input" placeholder="a small red square near the center">
    </label>
    <button type="button" id="submit-btn">Super-resolve</button>
  </section>
  <section id="result"></section>
  <section>
    <h2>History</h2>
    <ul id="history"></ul>
    <button type="button" id="compare-btn">Compare selected</button>
  </section>
  <section id="compare-panel" class="compare-panel"></section>
`;

export function init(root: HTMLElement, options: AppOptions = {}): App {
  const base = options.base ?? '';
  const fetchFn = options.fetchFn ?? fetch;
  const now = options.now ?? Date.now;
  const session = createSession();

  root.innerHTML = SKELETON;
  const banner = root.querySelector<HTMLElement>('#banner')!;
  const imageInput = root.querySelector<HTMLInputElement>('#image-input')!;
  const preview = root.querySelector<HTMLImageElement>('#image-preview')!;
  const captionInput = root.querySelector<HTMLInputElement>('#caption-input')!;
  const submitBtn = root.querySelector<HTMLButtonElement>('#submit-btn')!;
  const result = root.querySelector<HTMLElement>('#result')!;
  const historyList = root.querySelector<HTMLElement>('#history')!;
  const compareBtn = root.querySelector<HTMLButtonElement>('#compare-btn')!;
  const comparePanel = root.querySelector<HTMLElement>('#compare-panel')!;

  function refreshHistory(): void {
    renderHistory(historyList, session.history, session.selected, (runId, check) => {
      if (!toggleSelect(session, runId)) {
        check.checked = session.selected.includes(runId);
        showBanner(banner, 'warning', 'comparison holds at most 3 runs');
      }
    });
  }

  function loadImageB64(b64: string): void {
    setImage(session, b64);
    preview.src = `data:image/png;base64,${b64}`;
    preview.style.display = 'block';
  }

  imageInput.addEventListener('change', () => {
    const file = imageInput.files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      const url = String(reader.result ?? '');
      const comma = url.indexOf(',');
      if (comma >= 0) loadImageB64(url.slice(comma + 1));
    };
    reader.readAsDataURL(file);
  });

  async function submit(): Promise<void> {
    const caption = captionInput.value;
    if (caption.trim().length === 0) {
      showBanner(banner, 'error', 'caption must not be empty');
      return;
    }
    if (session.imageB64 === null) {
      showBanner(banner, 'error', 'load an LR image first');
      return;
    }
    if (!canSubmit(session, caption)) return;

    beginSubmit(session);
    submitBtn.disabled = true;
    try {
      const response = await superResolve(
        base,
        {
          image_b64: session.imageB64,
          caption,
          return_attention: true,
          return_coarse: true,
        },
        fetchFn,
      );
      const run = completeSubmit(session, caption, response, now());
      clearBanner(banner);
      renderRun(result, run);
      refreshHistory();
    } catch (err) {
      failSubmit(session);
      if (err instanceof ServiceError) {
        showBanner(banner, 'error', `${err.code}: ${err.message}`);
      } else {
        showBanner(banner, 'error', `request failed: ${String(err)}`);
      }
    } finally {
      submitBtn.disabled = false;
    }
  }

  submitBtn.addEventListener('click', () => {
    void submit();
  });
  captionInput.addEventListener('keydown', (event) => {
    if ((event as KeyboardEvent).key === 'Enter') void submit();
  });

  compareBtn.addEventListener('click', () => {
    const runs = selectedRuns(session);
    if (runs.length < 2) {
      showBanner(banner, 'warning', 'select 2 or 3 runs to compare');
      return;
    }
    clearBanner(banner);
    renderCompare(comparePanel, runs);
  });

  return { session, root, submit, loadImageB64 };
}
