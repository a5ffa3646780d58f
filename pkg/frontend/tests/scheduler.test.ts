import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ConversionScheduler, DEBOUNCE_MS } from "../src/scheduler.js";
import { initialState, withBeta } from "../src/state.js";
import type { ConvertResult, ViewerState } from "../src/types.js";

function result(beta: number): ConvertResult {
  return {
    image: { width: 1, height: 1, hu: new Int32Array([0]) },
    meta: { alpha: null, beta, modelId: "m", durationMs: 1 },
  };
}

describe("ConversionScheduler", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("issues at most one request for a burst of rapid slider moves", async () => {
    const send = vi.fn(async (s: ViewerState) => result(s.beta));
    const results: ConvertResult[] = [];
    const scheduler = new ConversionScheduler(send, (r) => results.push(r), () => {});

    let state = initialState("v");
    for (let i = 1; i <= 10; i++) {
      state = withBeta(state, i / 10);
      scheduler.schedule(state);
      vi.advanceTimersByTime(10); // well inside the debounce window
    }
    expect(send).not.toHaveBeenCalled();
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 1);
    expect(send.mock.calls.length).toBeLessThanOrEqual(3);
    expect(send).toHaveBeenCalledTimes(1);
    expect(send.mock.calls[0][0].beta).toBe(1);
    expect(results).toHaveLength(1);
  });

  it("waits at least the debounce interval after the last change", async () => {
    const send = vi.fn(async (s: ViewerState) => result(s.beta));
    const scheduler = new ConversionScheduler(send, () => {}, () => {});
    scheduler.schedule(initialState("v"));
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS - 10);
    expect(send).not.toHaveBeenCalled();
    await vi.advanceTimersByTimeAsync(11);
    expect(send).toHaveBeenCalledTimes(1);
  });

  it("discards stale responses", async () => {
    const resolvers: Array<(r: ConvertResult) => void> = [];
    const send = vi.fn(
      (s: ViewerState) =>
        new Promise<ConvertResult>((resolve) => {
          resolvers.push((r) => resolve(r));
        }),
    );
    const rendered: number[] = [];
    const scheduler = new ConversionScheduler(send, (r) => rendered.push(r.meta.beta), () => {});

    scheduler.schedule(withBeta(initialState("v"), 0.2));
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 1);
    scheduler.schedule(withBeta(initialState("v"), 0.9));
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 1);
    expect(send).toHaveBeenCalledTimes(2);

    // the newer request resolves first, then the stale one arrives late
    resolvers[1](result(0.9));
    await Promise.resolve();
    resolvers[0](result(0.2));
    await Promise.resolve();
    expect(rendered).toEqual([0.9]);
  });

  it("reports errors for the newest request and preserves state", async () => {
    const send = vi.fn(async () => {
      throw new Error("service unreachable");
    });
    const errors: unknown[] = [];
    const scheduler = new ConversionScheduler(send, () => {}, (e) => errors.push(e));
    const state = withBeta(initialState("v"), 0.5);
    scheduler.schedule(state);
    await vi.advanceTimersByTimeAsync(DEBOUNCE_MS + 1);
    expect(errors).toHaveLength(1);
    expect(state.beta).toBe(0.5);
  });

  it("requestNow bypasses the debounce", async () => {
    const send = vi.fn(async (s: ViewerState) => result(s.beta));
    const scheduler = new ConversionScheduler(send, () => {}, () => {});
    scheduler.requestNow(initialState("v"));
    await Promise.resolve();
    expect(send).toHaveBeenCalledTimes(1);
  });
});
