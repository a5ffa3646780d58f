import type { Bookmark, ViewerState } from "./types.js";

/** Slider quantization step for the domain coordinate. */
export const BETA_STEP = 0.01;

export const WINDOW_PRESETS = {
  bone: { center: 400, width: 1500 },
  softTissue: { center: 50, width: 120 },
} as const;

export function clampCoordinate(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

/** Clamp to [0, 1] and snap to the 0.01 slider grid. */
export function quantizeCoordinate(value: number): number {
  const clamped = clampCoordinate(value);
  return Math.min(1, Math.max(0, Math.round(clamped / BETA_STEP) * BETA_STEP));
}

export function initialState(volumeId: string): ViewerState {
  return {
    volumeId,
    sliceIndex: 0,
    alpha: null,
    beta: 0,
    windowCenter: WINDOW_PRESETS.bone.center,
    windowWidth: WINDOW_PRESETS.bone.width,
    viewMode: "side_by_side",
    bookmarks: [],
  };
}

export function withBeta(state: ViewerState, rawBeta: number): ViewerState {
  return { ...state, beta: quantizeCoordinate(rawBeta) };
}

export function withAlpha(state: ViewerState, rawAlpha: number | null): ViewerState {
  return {
    ...state,
    alpha: rawAlpha === null ? null : quantizeCoordinate(rawAlpha),
  };
}

export function withSlice(state: ViewerState, index: number, nSlices: number): ViewerState {
  const bounded = Math.min(Math.max(0, Math.trunc(index)), Math.max(0, nSlices - 1));
  return { ...state, sliceIndex: bounded };
}

export function withWindow(state: ViewerState, center: number, width: number): ViewerState {
  if (!(width > 0)) {
    throw new Error("window width must be positive");
  }
  return { ...state, windowCenter: center, windowWidth: width };
}

export function addBookmark(state: ViewerState, note: string): ViewerState {
  const bookmark: Bookmark = { beta: state.beta, note };
  return { ...state, bookmarks: [...state.bookmarks, bookmark] };
}

/** Re-apply a stored beta; the request this triggers is identical by design. */
export function recallBookmark(state: ViewerState, index: number): ViewerState {
  const bookmark = state.bookmarks[index];
  if (!bookmark) {
    throw new Error(`no bookmark ${index}`);
  }
  return withBeta(state, bookmark.beta);
}
