import { decodePng16, samplesToHu } from "./png16.js";
import type {
  ConvertResult,
  HuImage,
  ModelManifest,
  ViewerState,
  VolumeManifest,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    out[i] = binary.charCodeAt(i);
  }
  return out;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async json(path: string, init?: RequestInit): Promise<any> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? `HTTP ${resp.status}`);
    }
    return body;
  }

  async health(): Promise<{ status: string; version: string }> {
    return this.json("/healthz");
  }

  async listModels(): Promise<ModelManifest[]> {
    return (await this.json("/models")).models;
  }

  async listVolumes(): Promise<VolumeManifest[]> {
    return (await this.json("/volumes")).volumes;
  }

  async sourceSlice(volumeId: string, index: number): Promise<HuImage> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/volumes/${volumeId}/slices/${index}`,
    );
    if (!resp.ok) {
      const body = await resp.json().catch(() => ({}));
      throw new ApiError(resp.status, body.error ?? `HTTP ${resp.status}`);
    }
    const png = await decodePng16(new Uint8Array(await resp.arrayBuffer()));
    return { width: png.width, height: png.height, hu: samplesToHu(png.samples) };
  }

  async convert(state: ViewerState, modelId: string): Promise<ConvertResult> {
    const body = {
      volume_id: state.volumeId,
      slice_index: state.sliceIndex,
      alpha: state.alpha,
      beta: state.beta,
      model_id: modelId,
      window_center: state.windowCenter,
      window_width: state.windowWidth,
    };
    const reply = await this.json("/convert", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const png = await decodePng16(base64ToBytes(reply.png_base64));
    return {
      image: {
        width: png.width,
        height: png.height,
        hu: samplesToHu(png.samples, reply.hu_offset ?? 1024),
      },
      meta: {
        alpha: reply.alpha,
        beta: reply.beta,
        modelId: reply.model_id,
        durationMs: reply.duration_ms,
      },
    };
  }
}
