import type { ConvertResult, ViewerState } from "./types.js";

export const DEBOUNCE_MS = 150;

/**
 * Debounced conversion requests with stale-response discarding.
 *
 * Slider movement calls schedule() freely; a request is only issued once the
 * state has been quiet for the debounce interval. Every issued request gets a
 * token, and a response is dropped unless its token is still the newest, so a
 * slow early response can never overwrite a newer beta's image.
 */
export class ConversionScheduler {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private newestToken = 0;
  private inFlight = 0;

  constructor(
    private readonly send: (state: ViewerState) => Promise<ConvertResult>,
    private readonly onResult: (result: ConvertResult) => void,
    private readonly onError: (error: unknown) => void,
    private readonly delayMs: number = DEBOUNCE_MS,
  ) {}

  schedule(state: ViewerState): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    const snapshot: ViewerState = { ...state, bookmarks: [...state.bookmarks] };
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.issue(snapshot);
    }, this.delayMs);
  }

  /** Bypass the debounce (slice change, bookmark recall). */
  requestNow(state: ViewerState): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    void this.issue({ ...state, bookmarks: [...state.bookmarks] });
  }

  hasPending(): boolean {
    return this.timer !== null || this.inFlight > 0;
  }

  private async issue(state: ViewerState): Promise<void> {
    const token = ++this.newestToken;
    this.inFlight++;
    try {
      const result = await this.send(state);
      if (token === this.newestToken) {
        this.onResult(result);
      }
    } catch (error) {
      if (token === this.newestToken) {
        this.onError(error);
      }
    } finally {
      this.inFlight--;
    }
  }
}
