import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { decodePng16, samplesToHu } from "../src/png16.js";

const fixturePath = (name: string) => new URL(`./fixtures/${name}`, import.meta.url);

describe("decodePng16", () => {
  it("decodes a server-encoded slice back to exact HU values", async () => {
    const png = new Uint8Array(readFileSync(fixturePath("slice_a.png")));
    const expected: number[][] = JSON.parse(
      readFileSync(fixturePath("slice_a.json"), "utf8"),
    );
    const decoded = await decodePng16(png);
    expect(decoded.width).toBe(16);
    expect(decoded.height).toBe(16);
    const hu = samplesToHu(decoded.samples);
    const flat = expected.flat();
    expect(hu.length).toBe(flat.length);
    for (let i = 0; i < flat.length; i++) {
      expect(hu[i]).toBe(flat[i]);
    }
  });

  it("rejects non-PNG bytes", async () => {
    await expect(decodePng16(new Uint8Array([1, 2, 3, 4]))).rejects.toThrow();
  });
});
