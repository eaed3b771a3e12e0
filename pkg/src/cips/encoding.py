"""Coordinate grids, Fourier features, and learned coordinate embeddings.

Every synthesized pixel starts here: its (x, y) position is normalized,
pushed through a learnable sine projection (Fourier features), looked up
in a learnable per-position embedding table, and the two feature vectors
are concatenated. Both branches are ordinary autodiff tensors, so they
train together with the generator.

Cylindrical (panorama) grids treat x as an azimuth with period W. The
wrap happens at the coordinate level (x mod W), which makes seam
continuity exact: a point at x=W is the point at x=0, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, gather_rows, matmul, mul, sin

__all__ = [
    "CoordGrid", "FourierFeatureMap", "CoordEmbeddingTable", "EncoderFlags",
    "normalize_coords", "fourier_encode", "embed_lookup", "encode",
    "raw_channels",
]

CARTESIAN = "cartesian"
CYLINDRICAL = "cylindrical"


@dataclass
class CoordGrid:
    """An ordered set of real-valued pixel coordinates over an H×W domain.

    Points are stored as an (P, 2) float64 array of (x, y). Order is
    significant and preserved through synthesis. For cylindrical grids x
    is wrapped modulo W on construction; Cartesian coordinates must lie
    inside the domain.
    """

    kind: str
    H: int
    W: int
    points: np.ndarray

    def __post_init__(self):
        if self.kind not in (CARTESIAN, CYLINDRICAL):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.H < 2 or self.W < 2:
            raise ValueError(
                f"degenerate domain {self.H}x{self.W}: extents must be >= 2 "
                "for [-1, 1] normalization")
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be (P, 2), got {pts.shape}")
        pts = np.ascontiguousarray(pts)
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == CYLINDRICAL:
            x = np.mod(x, self.W)
            pts = np.column_stack([x, y])
        elif x.size and (x.min() < 0 or x.max() > self.W - 1):
            raise ValueError(f"x out of domain [0, {self.W - 1}]")
        if y.size and (y.min() < 0 or y.max() > self.H - 1):
            raise ValueError(f"y out of domain [0, {self.H - 1}]")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass
class EncoderFlags:
    """Diagnostic switches that zero one encoding branch (ablation runs)."""
    zero_fourier: bool = False
    zero_embeddings: bool = False


def normalize_coords(x, y, H: int, W: int):
    """Map pixel coordinates to [-1, 1]²: x' = 2x/(W-1) - 1, likewise y."""
    if W <= 1 or H <= 1:
        raise ValueError(f"degenerate extent H={H}, W={W}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return 2.0 * x / (W - 1) - 1.0, 2.0 * y / (H - 1) - 1.0


def raw_channels(grid: CoordGrid) -> np.ndarray:
    """Raw coordinate channels feeding the Fourier projection.

    Cartesian: (x', y') normalized to [-1, 1]. Cylindrical: (cos θ,
    sin θ, y') with θ = 2πx/W, which is seamless in x by construction.
    """
    x, y = grid.points[:, 0], grid.points[:, 1]
    if grid.kind == CYLINDRICAL:
        theta = 2.0 * np.pi * x / grid.W
        y_n = 2.0 * y / (grid.H - 1) - 1.0
        return np.column_stack([np.cos(theta), np.sin(theta), y_n])
    x_n, y_n = normalize_coords(x, y, grid.H, grid.W)
    return np.column_stack([x_n, y_n])


def _n_raw(kind: str) -> int:
    return 3 if kind == CYLINDRICAL else 2


@dataclass
class FourierFeatureMap:
    """Learnable sine projection of raw coordinates: e_fo = sin(raw @ B_fo).

    B_fo has one row per raw channel (2 Cartesian, 3 cylindrical) and one
    column per output feature.
    """

    B_fo: Tensor
    kind: str = CARTESIAN

    @classmethod
    def init(cls, n_features: int = 512, kind: str = CARTESIAN,
             std: float = 10.0, seed: int = 0) -> "FourierFeatureMap":
        rng = np.random.default_rng(seed)
        rows = _n_raw(kind)
        B = rng.normal(0.0, std, size=(rows, n_features))
        return cls(B_fo=Tensor(B, requires_grad=True), kind=kind)

    @property
    def n_features(self) -> int:
        return self.B_fo.shape[1]


def fourier_encode(grid: CoordGrid, fmap: FourierFeatureMap) -> Tensor:
    """Per-point Fourier features, shape (P, n), values in [-1, 1]."""
    rows = fmap.B_fo.shape[0]
    if rows != _n_raw(grid.kind):
        raise ValueError(
            f"Fourier map has {rows} raw channels but grid kind "
            f"{grid.kind!r} provides {_n_raw(grid.kind)}")
    raw = Tensor(raw_channels(grid))
    return sin(matmul(raw, fmap.B_fo))


@dataclass
class CoordEmbeddingTable:
    """H×W learnable d-vectors addressed by integer pixel position.

    Stored flat as a (H·W, d) tensor in row-major (y, x) order so lookups
    are plain row gathers. Fractional coordinates blend the four integer
    neighbors bilinearly; integer coordinates recover stored rows exactly
    (the off-row weights are exactly zero).
    """

    table: Tensor
    H: int
    W: int
    wrap_x: bool = False

    @classmethod
    def init(cls, H: int, W: int, d: int = 512, wrap_x: bool = False,
             seed: int = 0) -> "CoordEmbeddingTable":
        rng = np.random.default_rng(seed)
        t = rng.normal(0.0, 1.0 / np.sqrt(d), size=(H * W, d))
        return cls(table=Tensor(t, requires_grad=True), H=H, W=W, wrap_x=wrap_x)

    @property
    def dim(self) -> int:
        return self.table.shape[1]


def embed_lookup(grid: CoordGrid, table: CoordEmbeddingTable) -> Tensor:
    """Per-point embeddings, shape (P, d)."""
    if (grid.H, grid.W) != (table.H, table.W):
        raise ValueError(
            f"grid domain {(grid.H, grid.W)} != table domain {(table.H, table.W)}")
    wrap = table.wrap_x or grid.kind == CYLINDRICAL
    x, y = grid.points[:, 0], grid.points[:, 1]
    H, W, d = table.H, table.W, table.dim

    if y.size and (y.min() < 0 or y.max() > H - 1):
        raise ValueError(f"y out of domain [0, {H - 1}]")
    if not wrap and x.size and (x.min() < 0 or x.max() > W - 1):
        raise ValueError(f"x out of domain [0, {W - 1}]")
    if wrap:
        x = np.mod(x, W)

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    if wrap:
        x1 = np.mod(x0 + 1, W)
    else:
        x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)

    # integer grids are the common case: a single exact gather
    if not fx.any() and not fy.any():
        return gather_rows(table.table, y0 * W + x0)

    def corner(ix, iy, wgt):
        rows = gather_rows(table.table, iy * W + ix)
        return mul(rows, Tensor(np.repeat(wgt[:, None], d, axis=1)))

    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    out = corner(x0, y0, w00)
    out = out + corner(x1, y0, w10)
    out = out + corner(x0, y1, w01)
    out = out + corner(x1, y1, w11)
    return out


def encode(grid: CoordGrid,
           fmap: FourierFeatureMap | None,
           table: CoordEmbeddingTable | None,
           flags: EncoderFlags | None = None) -> Tensor:
    """Full per-point encoding: [e_fo, e_co] concatenated along features.

    A missing branch (None) is dropped from the output; a zero flag keeps
    the branch's width but replaces its values with zeros (ablation
    diagnostics). At least one branch must be present.
    """
    if fmap is None and table is None:
        raise ValueError("encode: both encoding branches absent")
    flags = flags or EncoderFlags()
    parts: list[Tensor] = []
    P = grid.n_points
    if fmap is not None:
        if flags.zero_fourier:
            parts.append(Tensor(np.zeros((P, fmap.n_features))))
        else:
            parts.append(fourier_encode(grid, fmap))
    if table is not None:
        if flags.zero_embeddings:
            parts.append(Tensor(np.zeros((P, table.dim))))
        else:
            parts.append(embed_lookup(grid, table))
    if len(parts) == 1:
        return parts[0]
    return concat(parts, axis=1)
