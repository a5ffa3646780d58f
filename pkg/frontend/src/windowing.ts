/**
 * Radiology display mapping: a linear HU window to 8-bit grayscale.
 *
 * Rounding is floor(x + 0.5) (round half up), so the window center maps to
 * 128. The inference service uses the same arithmetic for its difference
 * PNGs, which keeps client and server renderings comparable pixel for pixel.
 */

export function applyWindowLevel(
  hu: ArrayLike<number>,
  center: number,
  width: number,
): Uint8ClampedArray {
  if (!(width > 0)) {
    throw new Error(`window width must be positive, got ${width}`);
  }
  const lo = center - width / 2;
  const out = new Uint8ClampedArray(hu.length);
  for (let i = 0; i < hu.length; i++) {
    const scaled = ((hu[i] - lo) / width) * 255;
    out[i] = Math.min(255, Math.max(0, Math.floor(scaled + 0.5)));
  }
  return out;
}

/** Fixed difference window from the reading workflow: (-200, 200) HU. */
export const DIFFERENCE_CENTER = 0;
export const DIFFERENCE_WIDTH = 400;

/** |a - b| rendered through the fixed difference window. */
export function differenceView(
  a: ArrayLike<number>,
  b: ArrayLike<number>,
  center: number = DIFFERENCE_CENTER,
  width: number = DIFFERENCE_WIDTH,
): Uint8ClampedArray {
  if (a.length !== b.length) {
    throw new Error(`image sizes differ: ${a.length} vs ${b.length}`);
  }
  const diff = new Float64Array(a.length);
  for (let i = 0; i < a.length; i++) {
    diff[i] = Math.abs(a[i] - b[i]);
  }
  return applyWindowLevel(diff, center, width);
}

/** Grayscale bytes to RGBA for a canvas ImageData buffer. */
export function grayToRgba(gray: Uint8ClampedArray): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(gray.length * 4));
  for (let i = 0; i < gray.length; i++) {
    out[4 * i] = out[4 * i + 1] = out[4 * i + 2] = gray[i];
    out[4 * i + 3] = 255;
  }
  return out;
}
