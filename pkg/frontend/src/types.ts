/** Shared types for the explorer. The service is the only pixel source. */

export type Mode = "full" | "foveated" | "mix" | "blend" | "panorama";

export type BlendMode = "horizontal-linear" | "radial" | "constant";

export interface ModelInfo {
  config: {
    H: number;
    W: number;
    latent_dim: number;
    n_blocks: number;
    kind: string;
    [key: string]: unknown;
  };
  resolution: [number, number];
  config_hash: string;
  counts: Record<string, number>;
  seed: number;
}

export interface SparsePixel {
  x: number;
  y: number;
  rgb: [number, number, number];
}

export interface SparseResponse {
  domain: { H: number; W: number };
  pixels: SparsePixel[];
}

/** One user interaction; logs are replayed in order. */
export type InteractionEvent =
  | { kind: "seed-a"; value: number }
  | { kind: "seed-b"; value: number }
  | { kind: "fraction"; value: number }
  | { kind: "gaze"; x: number; y: number }
  | { kind: "mode"; value: Mode }
  | { kind: "mix-range"; lo: number; hi: number }
  | { kind: "blend-mode"; value: BlendMode }
  | { kind: "alpha"; value: number }
  | { kind: "pan-x0"; value: number };

/** Explorer state: everything a synthesis request is derived from, plus
 * the per-canvas transport flags. At most one request is in flight; the
 * gate coalesces pointer moves to the latest. */
export interface ViewState {
  seedA: number;
  seedB: number;
  fraction: number;
  gaze: { x: number; y: number } | null;
  mode: Mode;
  mixLo: number;
  mixHi: number;
  blendMode: BlendMode;
  alpha: number;
  panX0: number;
  pendingRequest: boolean;
  lastSparse: SparseResponse | null;
}

export interface SynthesizeBody {
  style: Record<string, unknown>;
  mix?: Record<string, unknown>;
  grid: Record<string, unknown>;
  mode: "sparse-json" | "png" | "png-base64";
}

/** A rendered frame: RGBA bytes plus which pixels came straight from the
 * service (fill-shaded gaps are visually distinguished and excluded). */
export interface Frame {
  width: number;
  height: number;
  rgba: Uint8ClampedArray;
  sampled: Uint8Array;
  nSynthesized: number;
}
