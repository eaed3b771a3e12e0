/** Float [-1, 1] <-> u8 conversions, matching the service's PNG encoder
 * bit for bit (clamp to [0, 1], scale by 255, round half to even). */

export function rintHalfToEven(v: number): number {
  const floor = Math.floor(v);
  const diff = v - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

export function floatToU8(v: number): number {
  const unit = Math.min(Math.max((v + 1.0) / 2.0, 0.0), 1.0);
  return rintHalfToEven(unit * 255.0);
}

export function pixelBudget(fraction: number, H: number, W: number): number {
  if (!(fraction > 0 && fraction <= 1)) {
    throw new Error(`fraction must lie in (0, 1], got ${fraction}`);
  }
  return Math.ceil(fraction * H * W);
}
