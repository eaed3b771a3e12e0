/** Client-side inverse-distance fill, mirroring the service's
 * fill_missing rule exactly (k nearest samples, weight 1/d^power,
 * distance ties broken toward the lowest row-major index) so toggling
 * between sparse and PNG modes is visually consistent.
 */

import type { SparsePixel } from "./types.js";

export interface FillResult {
  /** (H*W*3) floats in [-1, 1], sampled pixels passed through. */
  image: Float64Array;
  /** (H*W) flags: 1 where the service supplied the pixel. */
  sampled: Uint8Array;
}

export function idwFill(
  pixels: SparsePixel[],
  H: number,
  W: number,
  k = 4,
  power = 2.0,
): FillResult {
  if (pixels.length < k) {
    throw new Error(`fill needs at least ${k} samples, got ${pixels.length}`);
  }
  const n = pixels.length;
  const xi = new Int32Array(n);
  const yi = new Int32Array(n);
  for (let i = 0; i < n; i++) {
    xi[i] = rint(pixels[i].x);
    yi[i] = rint(pixels[i].y);
    if (xi[i] < 0 || xi[i] > W - 1 || yi[i] < 0 || yi[i] > H - 1) {
      throw new Error(`sample (${pixels[i].x}, ${pixels[i].y}) outside ${H}x${W}`);
    }
  }

  // canonical sample order: ascending row-major index (stable)
  const order = Array.from({ length: n }, (_, i) => i);
  order.sort((a, b) => yi[a] * W + xi[a] - (yi[b] * W + xi[b]) || a - b);
  const sx = new Float64Array(n);
  const sy = new Float64Array(n);
  const sc = new Float64Array(n * 3);
  for (let j = 0; j < n; j++) {
    const i = order[j];
    sx[j] = xi[i];
    sy[j] = yi[i];
    sc[j * 3] = pixels[i].rgb[0];
    sc[j * 3 + 1] = pixels[i].rgb[1];
    sc[j * 3 + 2] = pixels[i].rgb[2];
  }

  const image = new Float64Array(H * W * 3);
  const sampled = new Uint8Array(H * W);
  for (let i = 0; i < n; i++) {
    const at = yi[i] * W + xi[i]; // later duplicates win, raster painting
    image[at * 3] = pixels[i].rgb[0];
    image[at * 3 + 1] = pixels[i].rgb[1];
    image[at * 3 + 2] = pixels[i].rgb[2];
    sampled[at] = 1;
  }

  const d2 = new Float64Array(n);
  const idx = Array.from({ length: n }, (_, j) => j);
  for (let p = 0; p < H * W; p++) {
    if (sampled[p]) continue;
    const mx = p % W;
    const my = (p - mx) / W;
    for (let j = 0; j < n; j++) {
      d2[j] = (mx - sx[j]) * (mx - sx[j]) + (my - sy[j]) * (my - sy[j]);
    }
    idx.sort((a, b) => d2[a] - d2[b] || a - b);
    let wsum = 0;
    let r = 0;
    let g = 0;
    let b = 0;
    for (let m = 0; m < k; m++) {
      const j = idx[m];
      const w = Math.pow(d2[j], -power / 2.0);
      wsum += w;
      r += w * sc[j * 3];
      g += w * sc[j * 3 + 1];
      b += w * sc[j * 3 + 2];
    }
    image[p * 3] = r / wsum;
    image[p * 3 + 1] = g / wsum;
    image[p * 3 + 2] = b / wsum;
  }
  return { image, sampled };
}

/** Round half to even, matching the service's coordinate rounding. */
function rint(v: number): number {
  const floor = Math.floor(v);
  const diff = v - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}
