/**
 * DOM wiring: a piano-roll-like token grid bound to the editor controller.
 *
 * The grid is the model's native space (24 uneven ticks per measure), so the
 * editor works directly in tokens; engraving is out of scope. Playback is
 * behind a feature flag and correctness never depends on it.
 */

import { InpaintClient } from "./client.js";
import {
  EditorController,
  EditorError,
  acceptCandidate,
  browseCandidate,
  createEditor,
  editCell,
  setSelection,
  undo,
  viewScore,
} from "./editor.js";
import { TICKS_PER_MEASURE, emptyScore, exportTokenText, importTokenText } from "./tokenText.js";

const ENABLE_PLAYBACK = false; // tone-synthesis preview; off by default

const DEFAULT_MEASURES = 16;

function el<K extends keyof HTMLElementTagNameMap>(tag: K, cls?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  return node;
}

export function mount(root: HTMLElement, baseUrl: string): EditorController {
  const client = new InpaintClient(baseUrl);
  const controller = new EditorController(createEditor(emptyScore(DEFAULT_MEASURES)), client);

  const banner = el("div", "banner");
  const grid = el("table", "grid");
  const toolbar = el("div", "toolbar");

  const startInput = el("input") as HTMLInputElement;
  startInput.type = "number";
  startInput.value = "7";
  const countInput = el("input") as HTMLInputElement;
  countInput.type = "number";
  countInput.value = "4";
  const samplesInput = el("input") as HTMLInputElement;
  samplesInput.type = "number";
  samplesInput.value = "3";

  const selectBtn = el("button");
  selectBtn.textContent = "Select";
  const requestBtn = el("button");
  requestBtn.textContent = "Suggest";
  const acceptBtn = el("button");
  acceptBtn.textContent = "Accept";
  const undoBtn = el("button");
  undoBtn.textContent = "Undo";
  const prevBtn = el("button");
  prevBtn.textContent = "<";
  const nextBtn = el("button");
  nextBtn.textContent = ">";
  const candidateLabel = el("span", "candidate-label");
  const exportBtn = el("button");
  exportBtn.textContent = "Export";
  const importInput = el("input") as HTMLInputElement;
  importInput.type = "file";

  toolbar.append("start", startInput, "count", countInput, selectBtn,
    "samples", samplesInput, requestBtn, prevBtn, candidateLabel, nextBtn,
    acceptBtn, undoBtn, exportBtn, importInput);

  function guarded(fn: () => void): void {
    try {
      fn();
    } catch (err) {
      banner.textContent = err instanceof EditorError ? err.message : String(err);
    }
  }

  selectBtn.onclick = () => guarded(() => {
    controller.apply((s) => setSelection(s, Number(startInput.value), Number(countInput.value)));
  });
  requestBtn.onclick = () => guarded(() => {
    void controller.requestInpaint({ numSamples: Number(samplesInput.value) });
  });
  acceptBtn.onclick = () => guarded(() => {
    controller.apply((s) => acceptCandidate(s, s.activeCandidate));
  });
  undoBtn.onclick = () => controller.apply(undo);
  prevBtn.onclick = () => guarded(() => {
    controller.apply((s) => browseCandidate(s, Math.max(0, s.activeCandidate - 1)));
  });
  nextBtn.onclick = () => guarded(() => {
    controller.apply((s) => browseCandidate(s, Math.min(s.candidates.length - 1, s.activeCandidate + 1)));
  });
  exportBtn.onclick = () => {
    const blob = new Blob([exportTokenText(controller.state.score)], { type: "text/plain" });
    const a = el("a") as HTMLAnchorElement;
    a.href = URL.createObjectURL(blob);
    a.download = "score.tokens";
    a.click();
    URL.revokeObjectURL(a.href);
  };
  importInput.onchange = async () => {
    const file = importInput.files?.[0];
    if (!file) return;
    const text = await file.text();
    guarded(() => {
      const score = importTokenText(text);
      controller.apply(() => createEditor(score));
    });
  };

  function render(): void {
    const state = controller.state;
    const view = viewScore(state);
    banner.textContent = state.error ?? (state.pending ? "thinking..." : "");
    candidateLabel.textContent = state.candidates.length
      ? `${state.activeCandidate + 1}/${state.candidates.length}`
      : "-";
    grid.textContent = "";
    for (let m = 0; m < view.length; m++) {
      const row = el("tr");
      const inSelection = state.selection
        && m >= state.selection.start
        && m < state.selection.start + state.selection.count;
      const label = el("td", "measure-label");
      label.textContent = String(m);
      row.append(label);
      for (let t = 0; t < TICKS_PER_MEASURE; t++) {
        const cell = el("td", inSelection ? "cell selected" : "cell");
        cell.textContent = view[m][t];
        cell.onclick = () => {
          const value = window.prompt(`measure ${m}, tick ${t}`, view[m][t]);
          if (value !== null) guarded(() => controller.apply((s) => editCell(s, m, t, value)));
        };
        row.append(cell);
      }
      grid.append(row);
    }
  }

  controller.subscribe(render);
  root.append(banner, toolbar, grid);
  render();

  if (ENABLE_PLAYBACK) {
    // reserved for the optional tone-synthesis preview
  }
  return controller;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(document.getElementById("app")!, "");
}
