export type ViewMode = "side_by_side" | "toggle" | "difference";

export interface Bookmark {
  beta: number;
  note: string;
}

export interface ViewerState {
  volumeId: string;
  sliceIndex: number;
  /** Source-domain coordinate; null for single-code (two-domain) models. */
  alpha: number | null;
  beta: number;
  windowCenter: number;
  windowWidth: number;
  viewMode: ViewMode;
  bookmarks: Bookmark[];
}

export interface HuImage {
  width: number;
  height: number;
  /** Hounsfield units per pixel, row-major. */
  hu: Int32Array;
}

export interface ConvertMeta {
  alpha: number | null;
  beta: number;
  modelId: string;
  durationMs: number;
}

export interface ConvertResult {
  image: HuImage;
  meta: ConvertMeta;
}

export interface ModelManifest {
  model_id: string;
  mode: string;
  train_config_digest: string;
  checkpoint_path: string;
  created_at: string;
}

export interface VolumeManifest {
  volume_id: string;
  subject_id: string;
  kernel_label: string;
  n_slices: number;
  height: number;
  width: number;
}
