/** Sparse-response -> RGBA frame assembly. Raster grids rebuild by point
 * order (order is significant in the service contract); foveated grids
 * scatter by coordinate and shade the gaps with the mirrored IDW fill,
 * dimmed so interpolated pixels are visually distinct from synthesized
 * ones. */

import { floatToU8 } from "./convert.js";
import { idwFill } from "./fill.js";
import type { Frame, SparseResponse } from "./types.js";

/** Dim factor applied to fill-shaded (non-synthesized) pixels. */
export const FILL_DIM = 0.8;

export function rasterFrame(
  resp: SparseResponse,
  outH: number,
  outW: number,
): Frame {
  if (resp.pixels.length !== outH * outW) {
    throw new Error(
      `raster response has ${resp.pixels.length} pixels, expected ${outH * outW}`,
    );
  }
  const rgba = new Uint8ClampedArray(outH * outW * 4);
  const sampled = new Uint8Array(outH * outW).fill(1);
  for (let i = 0; i < resp.pixels.length; i++) {
    const [r, g, b] = resp.pixels[i].rgb;
    rgba[i * 4] = floatToU8(r);
    rgba[i * 4 + 1] = floatToU8(g);
    rgba[i * 4 + 2] = floatToU8(b);
    rgba[i * 4 + 3] = 255;
  }
  return { width: outW, height: outH, rgba, sampled, nSynthesized: resp.pixels.length };
}

export function foveatedFrame(resp: SparseResponse): Frame {
  const { H, W } = resp.domain;
  // tiny budgets (slider at 1%) can undercut the usual k=4 neighbors
  const k = Math.min(4, resp.pixels.length);
  const { image, sampled } = idwFill(resp.pixels, H, W, k);
  const rgba = new Uint8ClampedArray(H * W * 4);
  for (let p = 0; p < H * W; p++) {
    for (let c = 0; c < 3; c++) {
      const u8 = floatToU8(image[p * 3 + c]);
      rgba[p * 4 + c] = sampled[p] ? u8 : Math.round(u8 * FILL_DIM);
    }
    rgba[p * 4 + 3] = 255;
  }
  return { width: W, height: H, rgba, sampled, nSynthesized: resp.pixels.length };
}

/** FNV-1a over dimensions plus RGBA bytes; the replay identity check. */
export function frameChecksum(frame: Frame): string {
  let h = 0x811c9dc5;
  const mix = (byte: number) => {
    h ^= byte & 0xff;
    h = Math.imul(h, 0x01000193);
  };
  for (const v of [frame.width & 0xff, frame.width >> 8, frame.height & 0xff, frame.height >> 8]) {
    mix(v);
  }
  for (let i = 0; i < frame.rgba.length; i++) mix(frame.rgba[i]);
  return (h >>> 0).toString(16).padStart(8, "0");
}
