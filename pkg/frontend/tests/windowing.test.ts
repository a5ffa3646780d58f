import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
  applyWindowLevel,
  DIFFERENCE_WIDTH,
  differenceView,
  grayToRgba,
} from "../src/windowing.js";

const fixture = (name: string) =>
  JSON.parse(readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf8"));

describe("applyWindowLevel", () => {
  it("maps the window center to 128", () => {
    const out = applyWindowLevel([50], 50, 120);
    expect(out[0]).toBe(128);
  });

  it("clamps below the window to 0", () => {
    const out = applyWindowLevel([50 - 60, 50 - 600], 50, 120);
    expect(out[0]).toBe(0);
    expect(out[1]).toBe(0);
  });

  it("clamps above the window to 255", () => {
    const out = applyWindowLevel([50 + 60, 50 + 600], 50, 120);
    expect(out[0]).toBe(255);
    expect(out[1]).toBe(255);
  });

  it("is linear between the bounds", () => {
    const center = 0;
    const width = 400;
    const quarter = applyWindowLevel([-100], center, width)[0];
    expect(quarter).toBe(Math.floor(0.25 * 255 + 0.5));
  });

  it("rejects non-positive widths", () => {
    expect(() => applyWindowLevel([0], 0, 0)).toThrow();
    expect(() => applyWindowLevel([0], 0, -5)).toThrow();
  });

  it("matches the server implementation on recorded cases", () => {
    for (const c of fixture("window_cases.json")) {
      const got = applyWindowLevel(c.values, c.center, c.width);
      expect(Array.from(got)).toEqual(c.expected);
    }
  });
});

describe("differenceView", () => {
  it("renders identical images as uniform mid-gray", () => {
    const a = [0, 100, -50, 900];
    const out = differenceView(a, a);
    for (const v of out) {
      expect(v).toBe(128);
    }
  });

  it("respects the fixed window bounds", () => {
    const a = [0, 0];
    const b = [DIFFERENCE_WIDTH, -DIFFERENCE_WIDTH];
    const out = differenceView(a, b);
    expect(out[0]).toBe(255);
    expect(out[1]).toBe(255);
  });

  it("rejects mismatched sizes", () => {
    expect(() => differenceView([1, 2], [1])).toThrow();
  });

  it("matches the server-computed difference within rounding", () => {
    const a: number[][] = fixture("slice_a.json");
    const b: number[][] = fixture("slice_b.json");
    const serverDiff: number[][] = fixture("diff_server.json");
    const flatA = a.flat();
    const flatB = b.flat();
    const mine = differenceView(flatA, flatB);
    const server = serverDiff.flat();
    for (let i = 0; i < server.length; i++) {
      expect(Math.abs(mine[i] - server[i])).toBeLessThanOrEqual(1);
    }
  });
});

describe("grayToRgba", () => {
  it("expands gray bytes to opaque RGBA", () => {
    const out = grayToRgba(new Uint8ClampedArray([7, 250]));
    expect(Array.from(out)).toEqual([7, 7, 7, 255, 250, 250, 250, 255]);
  });
});
