/**
 * Minimal decoder for the 16-bit grayscale PNGs the inference service emits
 * (color type 0, bit depth 16, non-interlaced). Uses the platform
 * DecompressionStream for the zlib stream, so it runs in browsers and in
 * node-based tests without a bundled PNG library.
 */

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

export interface Png16 {
  width: number;
  height: number;
  /** Raw 16-bit samples, row-major. */
  samples: Uint16Array;
}

interface Chunk {
  type: string;
  data: Uint8Array;
}

function readChunks(bytes: Uint8Array): Chunk[] {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) {
      throw new Error("not a PNG file");
    }
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const chunks: Chunk[] = [];
  let offset = SIGNATURE.length;
  while (offset + 8 <= bytes.length) {
    const length = view.getUint32(offset);
    const type = String.fromCharCode(...bytes.subarray(offset + 4, offset + 8));
    const start = offset + 8;
    if (start + length > bytes.length) {
      throw new Error(`truncated PNG chunk ${type}`);
    }
    chunks.push({ type, data: bytes.subarray(start, start + length) });
    offset = start + length + 4; // skip CRC
    if (type === "IEND") break;
  }
  return chunks;
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const stream = new Blob([data as BlobPart])
    .stream()
    .pipeThrough(new DecompressionStream("deflate"));
  const buffer = await new Response(stream).arrayBuffer();
  return new Uint8Array(buffer);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

function unfilter(raw: Uint8Array, width: number, height: number): Uint8Array {
  const bpp = 2; // one 16-bit sample per pixel
  const stride = width * bpp;
  if (raw.length < height * (stride + 1)) {
    throw new Error("PNG pixel data is truncated");
  }
  const out = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const src = (y * (stride + 1)) + 1;
    const dst = y * stride;
    for (let x = 0; x < stride; x++) {
      const value = raw[src + x];
      const left = x >= bpp ? out[dst + x - bpp] : 0;
      const up = y > 0 ? out[dst + x - stride] : 0;
      const upLeft = y > 0 && x >= bpp ? out[dst + x - stride - bpp] : 0;
      let recon: number;
      switch (filter) {
        case 0:
          recon = value;
          break;
        case 1:
          recon = value + left;
          break;
        case 2:
          recon = value + up;
          break;
        case 3:
          recon = value + ((left + up) >> 1);
          break;
        case 4:
          recon = value + paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unsupported PNG filter ${filter}`);
      }
      out[dst + x] = recon & 0xff;
    }
  }
  return out;
}

export async function decodePng16(bytes: Uint8Array): Promise<Png16> {
  const chunks = readChunks(bytes);
  const ihdr = chunks.find((c) => c.type === "IHDR");
  if (!ihdr || ihdr.data.length < 13) {
    throw new Error("PNG is missing its header");
  }
  const view = new DataView(ihdr.data.buffer, ihdr.data.byteOffset);
  const width = view.getUint32(0);
  const height = view.getUint32(4);
  const bitDepth = ihdr.data[8];
  const colorType = ihdr.data[9];
  const interlace = ihdr.data[12];
  if (bitDepth !== 16 || colorType !== 0 || interlace !== 0) {
    throw new Error(
      `expected 16-bit grayscale non-interlaced PNG, got depth ${bitDepth} ` +
      `color ${colorType} interlace ${interlace}`,
    );
  }
  const idat = chunks.filter((c) => c.type === "IDAT");
  if (idat.length === 0) {
    throw new Error("PNG has no pixel data");
  }
  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.data.length, 0));
  let at = 0;
  for (const c of idat) {
    compressed.set(c.data, at);
    at += c.data.length;
  }
  const raw = await inflate(compressed);
  const bytesOut = unfilter(raw, width, height);
  const samples = new Uint16Array(width * height);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = (bytesOut[2 * i] << 8) | bytesOut[2 * i + 1];
  }
  return { width, height, samples };
}

/** Offset-encoded samples back to Hounsfield units (pixel = HU + offset). */
export function samplesToHu(samples: Uint16Array, offset: number = 1024): Int32Array {
  const hu = new Int32Array(samples.length);
  for (let i = 0; i < samples.length; i++) {
    hu[i] = samples[i] - offset;
  }
  return hu;
}
