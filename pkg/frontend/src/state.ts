/** ViewState fold and the pure state -> request mapping. Every canvas is
 * a deterministic function of (checkpoint, state), which is what makes
 * interaction logs replayable. */

import type {
  InteractionEvent,
  ModelInfo,
  SynthesizeBody,
  ViewState,
} from "./types.js";

export function defaultState(): ViewState {
  return {
    seedA: 1,
    seedB: 2,
    fraction: 0.25,
    gaze: null,
    mode: "full",
    mixLo: 1,
    mixHi: 1,
    blendMode: "horizontal-linear",
    alpha: 0,
    panX0: 0,
    pendingRequest: false,
    lastSparse: null,
  };
}

export function applyEvent(state: ViewState, ev: InteractionEvent): ViewState {
  const next = { ...state };
  switch (ev.kind) {
    case "seed-a":
      next.seedA = ev.value | 0;
      break;
    case "seed-b":
      next.seedB = ev.value | 0;
      break;
    case "fraction":
      next.fraction = Math.min(Math.max(ev.value, 0.01), 1);
      break;
    case "gaze":
      next.gaze = { x: ev.x, y: ev.y };
      break;
    case "mode":
      next.mode = ev.value;
      break;
    case "mix-range":
      next.mixLo = ev.lo | 0;
      next.mixHi = ev.hi | 0;
      break;
    case "blend-mode":
      next.blendMode = ev.value;
      break;
    case "alpha":
      next.alpha = Math.min(Math.max(ev.value, 0), 1);
      break;
    case "pan-x0":
      next.panX0 = ev.value | 0;
      break;
  }
  return next;
}

export interface RequestPlan {
  body: SynthesizeBody;
  /** Raster extent for order-based reassembly; null = scatter (foveated). */
  raster: { H: number; W: number } | null;
  /** Style vectors to interpolate client-side before sending, if any. */
  needsMap: { seedA: number; seedB: number; alpha: number } | null;
}

export function planRequest(state: ViewState, model: ModelInfo): RequestPlan {
  const { H, W, n_blocks } = model.config;
  const full = { kind: "full" };
  switch (state.mode) {
    case "full": {
      if (state.alpha <= 0 || state.alpha >= 1) {
        const seed = state.alpha >= 1 ? state.seedB : state.seedA;
        return {
          body: { style: { seed }, grid: full, mode: "sparse-json" },
          raster: { H, W },
          needsMap: null,
        };
      }
      return {
        // style.w is attached after /map resolves both endpoints
        body: { style: {}, grid: full, mode: "sparse-json" },
        raster: { H, W },
        needsMap: { seedA: state.seedA, seedB: state.seedB, alpha: state.alpha },
      };
    }
    case "foveated": {
      if (state.fraction >= 1) {
        // the slider at 100% degenerates to a plain full-grid request
        return {
          body: { style: { seed: state.seedA }, grid: full, mode: "sparse-json" },
          raster: { H, W },
          needsMap: null,
        };
      }
      const grid: Record<string, unknown> = {
        kind: "foveated",
        fraction: state.fraction,
        rng_seed: 0,
      };
      if (state.gaze) grid.center = [state.gaze.x, state.gaze.y];
      return {
        body: { style: { seed: state.seedA }, grid, mode: "sparse-json" },
        raster: null,
        needsMap: null,
      };
    }
    case "mix": {
      const lo = Math.max(1, state.mixLo);
      const hi = Math.min(n_blocks, state.mixHi);
      const blocks = [];
      for (let b = lo; b <= hi; b++) blocks.push(b);
      return {
        body: {
          style: { seed: state.seedA },
          mix: { blocks, style: { seed: state.seedB } },
          grid: full,
          mode: "sparse-json",
        },
        raster: { H, W },
        needsMap: null,
      };
    }
    case "blend": {
      const blend: Record<string, unknown> = { mode: state.blendMode };
      if (state.blendMode === "constant") blend.value = state.alpha;
      return {
        body: {
          style: {
            pair: { a: { seed: state.seedA }, b: { seed: state.seedB }, blend },
          },
          grid: full,
          mode: "sparse-json",
        },
        raster: { H, W },
        needsMap: null,
      };
    }
    case "panorama": {
      const grid = {
        kind: "cylinder",
        crop_h: H,
        crop_w: W,
        x0: state.panX0,
        y0: 0,
      };
      return {
        body: { style: { seed: state.seedA }, grid, mode: "sparse-json" },
        raster: { H, W },
        needsMap: null,
      };
    }
  }
}

export function lerpStyle(wA: number[], wB: number[], alpha: number): number[] {
  return wA.map((a, i) => (1 - alpha) * a + alpha * wB[i]);
}
