/**
 * Editor state machine for the composer grid.
 *
 * The state is immutable: every operation returns a fresh EditorState (or
 * throws EditorError without touching the input). The renderer subscribes
 * to the controller, which owns the single mutable reference plus the
 * network lifecycle (one in-flight request, stale responses discarded by
 * token matching).
 *
 * Invariants maintained here:
 *   - a selection always leaves at least one measure of past and future
 *     context;
 *   - browsing candidates never alters cells outside the selection (the
 *     candidate view is spliced into the current score, not the reverse);
 *   - accepting a candidate pushes the previous score onto the undo stack
 *     and makes the accepted score the context for the next request.
 */

import type { InpaintClient, InpaintRequestBody } from "./client.js";
import {
  Score,
  TICKS_PER_MEASURE,
  cloneScore,
  isValidToken,
  scoresEqual,
} from "./tokenText.js";

export interface Selection {
  start: number;
  count: number;
}

export interface Candidate {
  measures: Score;
  seed: number;
}

export interface EditorState {
  score: Score;
  selection: Selection | null;
  pending: boolean;
  requestToken: number;
  candidates: Candidate[];
  activeCandidate: number; // -1 = none
  history: Score[];
  error: string | null;
}

export class EditorError extends Error {}

export function createEditor(score: Score): EditorState {
  return {
    score: cloneScore(score),
    selection: null,
    pending: false,
    requestToken: 0,
    candidates: [],
    activeCandidate: -1,
    history: [],
    error: null,
  };
}

export function editCell(state: EditorState, measure: number, tick: number,
                         value: string): EditorState {
  if (measure < 0 || measure >= state.score.length) {
    throw new EditorError(`measure ${measure} out of range`);
  }
  if (tick < 0 || tick >= TICKS_PER_MEASURE) {
    throw new EditorError(`tick ${tick} out of range`);
  }
  if (!isValidToken(value)) {
    throw new EditorError(`invalid token ${JSON.stringify(value)}`);
  }
  const score = cloneScore(state.score);
  score[measure][tick] = value;
  // edited context makes any shown candidates stale
  return { ...state, score, candidates: [], activeCandidate: -1, error: null };
}

export function selectionValid(state: EditorState, start: number, count: number): boolean {
  return count >= 1 && start >= 1 && start + count <= state.score.length - 1;
}

export function setSelection(state: EditorState, start: number, count: number): EditorState {
  if (!selectionValid(state, start, count)) {
    throw new EditorError(
      `selection [${start}, ${start + count}) must leave one measure of context on each side`,
    );
  }
  return { ...state, selection: { start, count }, error: null };
}

export function clearSelection(state: EditorState): EditorState {
  return { ...state, selection: null, candidates: [], activeCandidate: -1 };
}

/** The score to draw: current score with the active candidate's gap spliced in. */
export function viewScore(state: EditorState): Score {
  if (state.activeCandidate < 0 || !state.selection) return state.score;
  const candidate = state.candidates[state.activeCandidate];
  const view = cloneScore(state.score);
  const { start, count } = state.selection;
  for (let m = start; m < start + count; m++) {
    view[m] = [...candidate.measures[m]];
  }
  return view;
}

export function browseCandidate(state: EditorState, index: number): EditorState {
  if (index < 0 || index >= state.candidates.length) {
    throw new EditorError(`no candidate ${index}`);
  }
  return { ...state, activeCandidate: index };
}

export function acceptCandidate(state: EditorState, index: number): EditorState {
  if (index < 0 || index >= state.candidates.length) {
    throw new EditorError(`no candidate ${index}`);
  }
  if (!state.selection) throw new EditorError("no selection to accept into");
  const accepted = cloneScore(state.score);
  const { start, count } = state.selection;
  for (let m = start; m < start + count; m++) {
    accepted[m] = [...state.candidates[index].measures[m]];
  }
  return {
    ...state,
    score: accepted,
    history: [...state.history, state.score],
    candidates: [],
    activeCandidate: -1,
    error: null,
  };
}

export function undo(state: EditorState): EditorState {
  if (!state.history.length) return state;
  const history = [...state.history];
  const score = history.pop()!;
  return { ...state, score, history, candidates: [], activeCandidate: -1 };
}

export interface RequestOptions {
  numSamples: number;
  seed?: number;
  zMode?: "sample" | "mean";
}

export function buildRequestBody(state: EditorState, opts: RequestOptions): InpaintRequestBody {
  if (!state.selection) throw new EditorError("select measures to fill first");
  const body: InpaintRequestBody = {
    measures: cloneScore(state.score),
    mask: { start_measure: state.selection.start, count: state.selection.count },
    num_samples: opts.numSamples,
  };
  if (opts.seed !== undefined) body.seed = opts.seed;
  if (opts.zMode) body.z_mode = opts.zMode;
  return body;
}

export type Listener = (state: EditorState) => void;

/**
 * Owns the live EditorState and the single in-flight request.
 *
 * A response is applied only if its token still matches: edits and newer
 * requests bump the token, so superseded responses are dropped on arrival.
 */
export class EditorController {
  private listeners: Listener[] = [];
  private abort: AbortController | null = null;

  constructor(
    public state: EditorState,
    private readonly client: InpaintClient,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private commit(state: EditorState): void {
    this.state = state;
    for (const l of this.listeners) l(state);
  }

  apply(fn: (state: EditorState) => EditorState): void {
    const next = fn(this.state);
    if (next === this.state) return;
    // any state change invalidates an in-flight request
    this.commit({ ...next, requestToken: this.state.requestToken + 1, pending: false });
    this.abort?.abort();
    this.abort = null;
  }

  cancelRequest(): void {
    this.abort?.abort();
    this.abort = null;
    this.commit({ ...this.state, pending: false });
  }

  async requestInpaint(opts: RequestOptions): Promise<void> {
    if (this.state.pending) throw new EditorError("a request is already in flight");
    const body = buildRequestBody(this.state, opts);
    const token = this.state.requestToken;
    this.abort = new AbortController();
    this.commit({ ...this.state, pending: true, error: null });
    try {
      const response = await this.client.inpaint(body, this.abort.signal);
      if (this.state.requestToken !== token) return; // stale: context changed meanwhile
      const candidates: Candidate[] = response.samples.map((s) => ({
        measures: s.measures,
        seed: s.seed,
      }));
      this.commit({
        ...this.state,
        pending: false,
        candidates,
        activeCandidate: candidates.length ? 0 : -1,
      });
    } catch (err) {
      if (this.state.requestToken !== token) return;
      const message = err instanceof Error ? err.message : String(err);
      // the score is untouched on failure; only the banner changes
      this.commit({ ...this.state, pending: false, error: message });
    } finally {
      this.abort = null;
    }
  }
}

export { scoresEqual };
