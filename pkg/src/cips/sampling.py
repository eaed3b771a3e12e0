"""Grid constructors and resampling.

Because synthesis is per-pixel, a "grid" is just an ordered list of
coordinates, and everything here reduces to constructing such lists:
full raster grids, dilated patches, foveated Gaussian samples, dense
super-resolution grids, and cylindrical panorama crops. The two pixel
resamplers (IDW fill for scattered samples, Lanczos-3 for the classical
upsampling baseline) operate on plain image arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .encoding import CARTESIAN, CYLINDRICAL, CoordGrid

__all__ = [
    "PatchSpec", "FoveaSpec",
    "full_grid", "patch_grid", "foveated_sample", "fill_missing",
    "dense_grid", "lanczos_upsample", "lanczos3_kernel", "cylinder_crop",
    "blend_alpha_field", "blend_alpha_points",
    "sparse_to_json", "sparse_from_json",
]

_FOVEA_CHUNK = 1024  # fixed draw chunk; part of the deterministic stream


@dataclass
class PatchSpec:
    """Dilated K×K patch anchored at (u, v) with integer stride sigma."""
    u: int
    v: int
    K: int
    sigma: int = 1

    def __post_init__(self):
        if self.K < 1 or self.sigma < 1:
            raise ValueError(f"invalid patch K={self.K}, sigma={self.sigma}")


@dataclass
class FoveaSpec:
    """Gaussian gaze model: center, spread, and pixel budget fraction."""
    center: tuple[float, float] | None = None
    sigma: float | None = None  # default 0.4 * min(H, W)
    fraction: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.fraction <= 1.0):
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")


def full_grid(H: int, W: int) -> CoordGrid:
    """Row-major integer grid: x varies fastest, matching image rasters."""
    xs, ys = np.meshgrid(np.arange(W, dtype=np.float64),
                         np.arange(H, dtype=np.float64))
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    return CoordGrid(kind=CARTESIAN, H=H, W=W, points=pts)


def patch_grid(spec: PatchSpec, H: int, W: int) -> CoordGrid:
    """K² points (u + i·sigma, v + j·sigma), row-major in (j, i)."""
    u, v, K, s = spec.u, spec.v, spec.K, spec.sigma
    if not (0 <= u and u + (K - 1) * s <= W - 1):
        raise ValueError(f"patch x-extent [{u}, {u + (K - 1) * s}] exceeds [0, {W - 1}]")
    if not (0 <= v and v + (K - 1) * s <= H - 1):
        raise ValueError(f"patch y-extent [{v}, {v + (K - 1) * s}] exceeds [0, {H - 1}]")
    i = np.arange(K, dtype=np.float64)
    xs, ys = np.meshgrid(u + i * s, v + i * s)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    return CoordGrid(kind=CARTESIAN, H=H, W=W, points=pts)


def foveated_sample(spec: FoveaSpec, H: int, W: int) -> CoordGrid:
    """Sample exactly ceil(fraction·H·W) unique integer pixels.

    Pixels are drawn from an isotropic Gaussian at the fovea center,
    rounded to integers; out-of-bounds and repeated draws are rejected.
    If the rejection loop stalls (10·H·W total draws), the remaining
    budget is filled uniformly from the not-yet-sampled pixels, so the
    budget is exact for every fraction including 1.0.
    """
    budget = math.ceil(spec.fraction * H * W)
    cx, cy = spec.center if spec.center is not None else ((W - 1) / 2.0, (H - 1) / 2.0)
    sigma = spec.sigma if spec.sigma is not None else 0.4 * min(H, W)
    rng = np.random.default_rng(spec.rng_seed)

    seen = np.zeros(H * W, dtype=bool)
    order: list[int] = []
    attempts = 0
    threshold = 10 * H * W
    while len(order) < budget and attempts < threshold:
        n = min(_FOVEA_CHUNK, threshold - attempts)
        draws = rng.normal(size=(n, 2))
        attempts += n
        xs = np.rint(cx + sigma * draws[:, 0]).astype(np.int64)
        ys = np.rint(cy + sigma * draws[:, 1]).astype(np.int64)
        ok = (xs >= 0) & (xs <= W - 1) & (ys >= 0) & (ys <= H - 1)
        for x, y in zip(xs[ok], ys[ok]):
            flat = int(y) * W + int(x)
            if not seen[flat]:
                seen[flat] = True
                order.append(flat)
                if len(order) == budget:
                    break

    deficit = budget - len(order)
    if deficit > 0:
        remaining = np.flatnonzero(~seen)
        extra = rng.choice(remaining, size=deficit, replace=False)
        order.extend(int(i) for i in extra)

    flat = np.asarray(order, dtype=np.int64)
    pts = np.column_stack([(flat % W).astype(np.float64),
                           (flat // W).astype(np.float64)])
    return CoordGrid(kind=CARTESIAN, H=H, W=W, points=pts)


def fill_missing(points: np.ndarray, colors: np.ndarray, H: int, W: int,
                 k: int = 4, power: float = 2.0) -> np.ndarray:
    """Scatter-to-dense: sampled pixels pass through, gaps are filled by
    inverse-distance weighting over the k nearest samples.

    Distance ties are broken toward the sample with the lowest row-major
    index, making the fill independent of input order.
    """
    points = np.asarray(points)
    colors = np.asarray(colors, dtype=np.float64)
    if points.shape[0] < k:
        raise ValueError(f"fill_missing needs at least {k} samples, got {points.shape[0]}")
    if colors.shape != (points.shape[0], 3):
        raise ValueError(f"colors shape {colors.shape} != ({points.shape[0]}, 3)")
    xi = np.rint(points[:, 0]).astype(np.int64)
    yi = np.rint(points[:, 1]).astype(np.int64)
    if (xi < 0).any() or (xi > W - 1).any() or (yi < 0).any() or (yi > H - 1).any():
        raise ValueError("sample coordinates outside the image domain")

    # canonical sample order: ascending row-major index; with a stable
    # sort over distances this resolves ties toward the lowest index
    rm = yi * W + xi
    sort = np.argsort(rm, kind="stable")
    sx, sy, sc = xi[sort].astype(np.float64), yi[sort].astype(np.float64), colors[sort]

    img = np.zeros((H, W, 3), dtype=np.float64)
    img[yi, xi] = colors  # later duplicates win, as in raster painting
    covered = np.zeros((H, W), dtype=bool)
    covered[yi, xi] = True

    miss_y, miss_x = np.nonzero(~covered)
    if miss_y.size == 0:
        return img

    chunk = 2048
    for lo in range(0, miss_y.size, chunk):
        my = miss_y[lo:lo + chunk].astype(np.float64)
        mx = miss_x[lo:lo + chunk].astype(np.float64)
        d2 = (mx[:, None] - sx[None, :]) ** 2 + (my[:, None] - sy[None, :]) ** 2
        near = np.argsort(d2, axis=1, kind="stable")[:, :k]
        nd2 = np.take_along_axis(d2, near, axis=1)
        w = nd2 ** (-power / 2.0)
        nc = sc[near]  # (chunk, k, 3)
        filled = (w[:, :, None] * nc).sum(axis=1) / w.sum(axis=1)[:, None]
        img[miss_y[lo:lo + chunk], miss_x[lo:lo + chunk]] = filled
    return img


def dense_grid(H_out: int, W_out: int, H: int, W: int) -> CoordGrid:
    """Super-resolution grid: H_out×W_out points spread over the model's
    native [0, W-1]×[0, H-1] domain with endpoints exactly on the corners
    (align-corners mapping), so corner pixels reproduce native synthesis
    bit-exactly.
    """
    if H_out < H or W_out < W:
        raise ValueError(f"dense grid must not downsample: {(H_out, W_out)} < {(H, W)}")
    if H_out < 2 or W_out < 2:
        raise ValueError("dense grid extents must be >= 2")
    xs = np.arange(W_out, dtype=np.float64) * (W - 1) / (W_out - 1)
    ys = np.arange(H_out, dtype=np.float64) * (H - 1) / (H_out - 1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return CoordGrid(kind=CARTESIAN, H=H, W=W, points=pts)


def lanczos3_kernel(t):
    """Lanczos-3 window: sinc(t)·sinc(t/3) for |t| < 3, else 0."""
    t = np.asarray(t, dtype=np.float64)
    out = np.sinc(t) * np.sinc(t / 3.0)
    return np.where(np.abs(t) < 3.0, out, 0.0)


def _lanczos_axis(image: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = image.shape[axis]
    src = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
    base = np.floor(src).astype(np.int64)
    taps = np.arange(-2, 4)  # 6-tap support for a=3
    idx = base[:, None] + taps[None, :]
    t = src[:, None] - idx
    w = lanczos3_kernel(t)
    w = w / w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    moved = np.moveaxis(image, axis, 0)
    gathered = moved[idx]            # (n_out, 6, ...)
    out = (w.reshape(w.shape + (1,) * (gathered.ndim - 2)) * gathered).sum(axis=1)
    return np.moveaxis(out, 0, axis)


def lanczos_upsample(image: np.ndarray, factor: float) -> np.ndarray:
    """Separable Lanczos-3 resampling with edge clamping.

    Output extents are round(extent·factor); source positions follow the
    same align-corners mapping as dense_grid, so the two upsampling
    routes are geometrically comparable. factor=1 is the identity (the
    kernel is exactly 1 at t=0 and 0 at other integers).
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    image = np.asarray(image, dtype=np.float64)
    H, W = image.shape[:2]
    H_out, W_out = int(round(H * factor)), int(round(W * factor))
    out = _lanczos_axis(image, H_out, axis=0)
    out = _lanczos_axis(out, W_out, axis=1)
    return out


def cylinder_crop(W_pan: int, H: int, crop_w: int, crop_h: int,
                  x0: int, y0: int) -> CoordGrid:
    """crop_h×crop_w cylindrical grid starting at (x0, y0); the azimuth
    wraps modulo W_pan, the vertical extent must fit."""
    if y0 < 0 or y0 + crop_h > H:
        raise ValueError(f"vertical crop [{y0}, {y0 + crop_h}) exceeds [0, {H})")
    if crop_w < 1 or crop_h < 1:
        raise ValueError("empty crop")
    xs = np.arange(crop_w, dtype=np.float64) + x0
    ys = np.arange(crop_h, dtype=np.float64) + y0
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return CoordGrid(kind=CYLINDRICAL, H=H, W=W_pan, points=pts)


def blend_alpha_points(points: np.ndarray, H: int, W: int,
                       mode: str = "horizontal-linear",
                       center: tuple[float, float] | None = None,
                       radius: float | None = None,
                       value: float = 0.0) -> np.ndarray:
    """Blend weights evaluated at arbitrary (x, y) points of an H×W domain.

    horizontal-linear: alpha ramps 0 -> 1 left to right. radial: alpha is
    dist/radius clipped to [0, 1] (0 at the center, 1 outside the
    radius); radius 0 degenerates to 1 everywhere except the exact
    center. constant: alpha = value everywhere (value 0 reproduces the
    first style exactly).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    xs, ys = pts[:, 0], pts[:, 1]
    if mode == "horizontal-linear":
        return xs / (W - 1) if W > 1 else np.zeros(len(xs))
    if mode == "radial":
        cx, cy = center if center is not None else ((W - 1) / 2.0, (H - 1) / 2.0)
        r = radius if radius is not None else min(H, W) / 2.0
        dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        if r == 0:
            return (dist > 0).astype(np.float64)
        return np.clip(dist / r, 0.0, 1.0)
    if mode == "constant":
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"constant alpha must lie in [0, 1], got {value}")
        return np.full(len(xs), float(value))
    raise ValueError(f"unknown blend mode {mode!r}")


def blend_alpha_field(shape: tuple[int, int], mode: str = "horizontal-linear",
                      center: tuple[float, float] | None = None,
                      radius: float | None = None,
                      value: float = 0.0) -> np.ndarray:
    """blend_alpha_points over the full row-major grid of ``shape``."""
    H, W = shape
    return blend_alpha_points(full_grid(H, W).points, H, W, mode=mode,
                              center=center, radius=radius, value=value)


def sparse_to_json(grid: CoordGrid, colors: np.ndarray) -> str:
    """Sparse pixel exchange format: domain header plus {x, y, rgb} rows."""
    colors = np.asarray(colors, dtype=np.float64)
    if colors.shape != (grid.n_points, 3):
        raise ValueError(f"colors shape {colors.shape} != ({grid.n_points}, 3)")
    pixels = [
        {"x": float(x), "y": float(y), "rgb": [float(c) for c in rgb]}
        for (x, y), rgb in zip(grid.points, colors)
    ]
    return json.dumps({"domain": {"H": grid.H, "W": grid.W}, "pixels": pixels})


def sparse_from_json(text: str) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Inverse of sparse_to_json: (points, colors, H, W)."""
    obj = json.loads(text)
    H, W = int(obj["domain"]["H"]), int(obj["domain"]["W"])
    pix = obj["pixels"]
    points = np.array([[p["x"], p["y"]] for p in pix], dtype=np.float64).reshape(-1, 2)
    colors = np.array([p["rgb"] for p in pix], dtype=np.float64).reshape(-1, 3)
    return points, colors, H, W
