/** Browser wiring for the kernel-conversion explorer. */

import { ApiClient } from "./api.js";
import { ConversionScheduler } from "./scheduler.js";
import {
  addBookmark,
  initialState,
  recallBookmark,
  WINDOW_PRESETS,
  withAlpha,
  withBeta,
  withSlice,
  withWindow,
} from "./state.js";
import type { ConvertResult, HuImage, ModelManifest, ViewerState, VolumeManifest } from "./types.js";
import { applyWindowLevel, differenceView, grayToRgba } from "./windowing.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function drawGray(canvas: HTMLCanvasElement, gray: Uint8ClampedArray, w: number, h: number) {
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(grayToRgba(gray), w, h), 0, 0);
}

class App {
  private api = new ApiClient("");
  private state: ViewerState = initialState("");
  private models: ModelManifest[] = [];
  private volumes: VolumeManifest[] = [];
  private source: HuImage | null = null;
  private converted: ConvertResult | null = null;
  private sourceCache = new Map<string, HuImage>();
  private scheduler = new ConversionScheduler(
    (state) => this.api.convert(state, this.modelId()),
    (result) => this.onConverted(result),
    (error) => this.showError(error),
  );

  private modelId(): string {
    return (el<HTMLSelectElement>("model")).value;
  }

  private currentModel(): ModelManifest | undefined {
    return this.models.find((m) => m.model_id === this.modelId());
  }

  private volume(): VolumeManifest | undefined {
    return this.volumes.find((v) => v.volume_id === this.state.volumeId);
  }

  async start() {
    try {
      this.models = await this.api.listModels();
      this.volumes = await this.api.listVolumes();
    } catch (error) {
      this.showError(error);
      return;
    }
    const modelSel = el<HTMLSelectElement>("model");
    modelSel.innerHTML = this.models
      .map((m) => `<option value="${m.model_id}">${m.model_id} (${m.mode})</option>`)
      .join("");
    const volumeSel = el<HTMLSelectElement>("volume");
    volumeSel.innerHTML = this.volumes
      .map((v) => `<option value="${v.volume_id}">${v.subject_id}/${v.kernel_label}</option>`)
      .join("");
    modelSel.onchange = () => this.onModelChange();
    volumeSel.onchange = () => void this.onVolumeChange(volumeSel.value);
    this.wireControls();
    this.onModelChange();
    if (this.volumes.length > 0) {
      await this.onVolumeChange(this.volumes[0].volume_id);
    }
  }

  private wireControls() {
    const beta = el<HTMLInputElement>("beta");
    beta.min = "0";
    beta.max = "1";
    beta.step = "0.01";
    beta.oninput = () => {
      this.state = withBeta(this.state, Number(beta.value));
      el<HTMLSpanElement>("beta-value").textContent = this.state.beta.toFixed(2);
      this.scheduler.schedule(this.state);
    };
    const alpha = el<HTMLInputElement>("alpha");
    alpha.min = "0";
    alpha.max = "1";
    alpha.step = "0.01";
    alpha.oninput = () => {
      this.state = withAlpha(this.state, Number(alpha.value));
      el<HTMLSpanElement>("alpha-value").textContent = String(this.state.alpha ?? "-");
      this.scheduler.schedule(this.state);
    };
    const slice = el<HTMLInputElement>("slice");
    slice.oninput = () => {
      const n = this.volume()?.n_slices ?? 1;
      this.state = withSlice(this.state, Number(slice.value), n);
      void this.loadSource();
      this.scheduler.requestNow(this.state);
      this.prefetchNeighbors();
    };
    for (const [name, preset] of Object.entries(WINDOW_PRESETS)) {
      el<HTMLButtonElement>(`preset-${name}`).onclick = () => {
        this.state = withWindow(this.state, preset.center, preset.width);
        this.render();
      };
    }
    const center = el<HTMLInputElement>("window-center");
    const width = el<HTMLInputElement>("window-width");
    const applyWindow = () => {
      const w = Number(width.value);
      if (w > 0) {
        this.state = withWindow(this.state, Number(center.value), w);
        this.render();
      }
    };
    center.onchange = applyWindow;
    width.onchange = applyWindow;
    for (const mode of ["side_by_side", "toggle", "difference"] as const) {
      el<HTMLInputElement>(`mode-${mode}`).onchange = () => {
        this.state = { ...this.state, viewMode: mode };
        this.render();
      };
    }
    el<HTMLButtonElement>("bookmark-add").onclick = () => {
      const note = el<HTMLInputElement>("bookmark-note").value;
      this.state = addBookmark(this.state, note);
      this.renderBookmarks();
    };
  }

  private onModelChange() {
    const model = this.currentModel();
    const split = model?.mode === "switchable_3dom";
    el<HTMLInputElement>("alpha").disabled = !split;
    this.state = withAlpha(this.state, split ? 1.0 : null);
    this.scheduler.requestNow(this.state);
  }

  private async onVolumeChange(volumeId: string) {
    this.state = { ...this.state, volumeId, sliceIndex: 0 };
    const slice = el<HTMLInputElement>("slice");
    slice.min = "0";
    slice.max = String((this.volume()?.n_slices ?? 1) - 1);
    slice.value = "0";
    await this.loadSource();
    this.scheduler.requestNow(this.state);
    this.prefetchNeighbors();
  }

  private sourceKey(index: number): string {
    return `${this.state.volumeId}:${index}`;
  }

  private async loadSource() {
    try {
      const key = this.sourceKey(this.state.sliceIndex);
      if (!this.sourceCache.has(key)) {
        this.sourceCache.set(
          key,
          await this.api.sourceSlice(this.state.volumeId, this.state.sliceIndex),
        );
      }
      this.source = this.sourceCache.get(key) ?? null;
      this.render();
    } catch (error) {
      this.showError(error);
    }
  }

  /** Warm the source cache for the neighboring slices at the current beta. */
  private prefetchNeighbors() {
    const n = this.volume()?.n_slices ?? 0;
    for (const delta of [-1, 1]) {
      const index = this.state.sliceIndex + delta;
      if (index < 0 || index >= n || this.sourceCache.has(this.sourceKey(index))) {
        continue;
      }
      void this.api
        .sourceSlice(this.state.volumeId, index)
        .then((img) => this.sourceCache.set(this.sourceKey(index), img))
        .catch(() => undefined);
    }
  }

  private onConverted(result: ConvertResult) {
    this.converted = result;
    el<HTMLDivElement>("banner").hidden = true;
    el<HTMLSpanElement>("latency").textContent = `${result.meta.durationMs.toFixed(0)} ms`;
    this.render();
  }

  private showError(error: unknown) {
    const banner = el<HTMLDivElement>("banner");
    banner.hidden = false;
    banner.textContent = `request failed: ${error instanceof Error ? error.message : error}`;
  }

  private renderBookmarks() {
    const list = el<HTMLUListElement>("bookmarks");
    list.innerHTML = "";
    this.state.bookmarks.forEach((bookmark, i) => {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.textContent = `β=${bookmark.beta.toFixed(2)} ${bookmark.note}`;
      button.onclick = () => {
        this.state = recallBookmark(this.state, i);
        el<HTMLInputElement>("beta").value = String(this.state.beta);
        el<HTMLSpanElement>("beta-value").textContent = this.state.beta.toFixed(2);
        this.scheduler.requestNow(this.state);
      };
      item.appendChild(button);
      list.appendChild(item);
    });
  }

  private render() {
    const { windowCenter, windowWidth, viewMode } = this.state;
    const sourceCanvas = el<HTMLCanvasElement>("canvas-source");
    const convertedCanvas = el<HTMLCanvasElement>("canvas-converted");
    if (this.source) {
      drawGray(
        sourceCanvas,
        applyWindowLevel(this.source.hu, windowCenter, windowWidth),
        this.source.width,
        this.source.height,
      );
    }
    if (this.converted) {
      const img = this.converted.image;
      if (viewMode === "difference" && this.source && this.source.hu.length === img.hu.length) {
        drawGray(convertedCanvas, differenceView(img.hu, this.source.hu), img.width, img.height);
      } else {
        drawGray(
          convertedCanvas,
          applyWindowLevel(img.hu, windowCenter, windowWidth),
          img.width,
          img.height,
        );
      }
    }
    sourceCanvas.parentElement!.style.display =
      viewMode === "side_by_side" ? "" : viewMode === "toggle" ? "none" : "";
  }
}

window.addEventListener("DOMContentLoaded", () => {
  void new App().start();
});
