"""The conditionally-independent pixel generator.

A generator is a per-pixel function: RGB = G(x, y; z). The latent z is
mapped once to a style vector w; each pixel's coordinate encoding then
flows through a stack of modulated fully-connected (ModFC) layers whose
effective weights depend on w. No pixel ever sees another pixel, which is
the property everything else in this package leans on: any subset of the
grid synthesizes bit-identically to the same subset of a full-grid pass.

To keep that property airtight there is exactly one synthesis code path:
styles are always expanded to one row per pixel (constant styles are
tiled), and every matrix product uses the row-independent deterministic
matmul from the autodiff module.

Architecture (paper configuration): an 8-layer mapping MLP; an
unmodulated projection of the 1024-dim coordinate encoding to width 512;
7 blocks of two demodulated ModFC layers each (15 backbone FC layers
total); and per-block modulated RGB projections summed into the output
("skips" mode). "residual" rescales each block by 1/sqrt(2) with a single
RGB head; "base" is the plain chain.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .autodiff import (
    Tensor, add, div, leaky_relu, matmul, mul, no_grad, reshape, sin,
    sqrt, square, tensor_sum, tile_cols, tile_rows, transpose,
)
from .encoding import (
    CARTESIAN, CYLINDRICAL, CoordEmbeddingTable, CoordGrid, EncoderFlags,
    FourierFeatureMap, encode,
)
from .sampling import dense_grid, full_grid

__all__ = [
    "GeneratorConfig", "ModFCLayer", "Generator",
    "modulate_weights", "modfc_forward", "layer_style_mix",
    "blend_style_field", "latent_from_seed", "synthesize_grid_threaded",
]

SKIP_MODES = ("skips", "residual", "base")
ACTIVATIONS = ("leaky", "sine")


@dataclass
class GeneratorConfig:
    """Architecture hyperparameters. Defaults are the paper-scale model;
    desk-scale presets shrink width/dims for CPU training."""

    width: int = 512
    n_blocks: int = 7
    fourier_dim: int = 512
    embed_dim: int = 512
    H: int = 256
    W: int = 256
    use_fourier: bool = True
    use_embeddings: bool = True
    skip_mode: str = "skips"
    activation: str = "leaky"
    mapping_depth: int = 8
    mapping_hidden: int = 256
    latent_dim: int = 512
    epsilon: float = 1e-8
    kind: str = CARTESIAN
    fourier_std: float = 10.0
    sine_w0: float = 30.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if not (self.use_fourier or self.use_embeddings):
            raise ValueError("at least one encoding branch must be enabled")
        if self.skip_mode not in SKIP_MODES:
            raise ValueError(f"skip_mode must be one of {SKIP_MODES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.kind not in (CARTESIAN, CYLINDRICAL):
            raise ValueError(f"kind must be cartesian or cylindrical, got {self.kind!r}")

    @property
    def enc_dim(self) -> int:
        return (self.fourier_dim if self.use_fourier else 0) + \
               (self.embed_dim if self.use_embeddings else 0)

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ModFCLayer:
    """One modulated fully-connected layer: psi = B_hat(s) @ phi + b.

    B is (out, in) as written in the modulation formula; s = A(w) scales
    the input axis. With demodulate=True each effective row is normalized
    to unit-ish L2 norm (exact up to the epsilon guard).
    """

    B: Tensor
    b: Tensor
    A_w: Tensor
    A_b: Tensor
    demodulate: bool = True
    eps: float = 1e-8

    @property
    def tensors(self) -> dict[str, Tensor]:
        return {"B": self.B, "b": self.b, "A_w": self.A_w, "A_b": self.A_b}


def modulate_weights(B, s, demodulate: bool = True, eps: float = 1e-8) -> Tensor:
    """Effective weight matrix B_hat for a single style vector s.

    B_hat[i, j] = s[j]·B[i, j] / sqrt(eps + sum_k (s[k]·B[i, k])²)
    (denominator omitted when demodulate is false).
    """
    B = B if isinstance(B, Tensor) else Tensor(B)
    s = s if isinstance(s, Tensor) else Tensor(s)
    if s.ndim != 1 or s.shape[0] != B.shape[1]:
        raise ValueError(f"style length {s.shape} != weight columns {B.shape}")
    if not np.all(np.isfinite(s.data)):
        raise ValueError("non-finite style scale")
    scaled = mul(B, s)
    if not demodulate:
        return scaled
    denom = sqrt(add(tensor_sum(square(scaled), axis=1), Tensor(float(eps))))
    return div(scaled, tile_cols(denom, B.shape[1]))


def _styles(layer: ModFCLayer, w_field: Tensor) -> Tensor:
    return add(matmul(w_field, layer.A_w), layer.A_b)


def modfc_forward(layer: ModFCLayer, phi: Tensor, w_field: Tensor) -> Tensor:
    """Apply the layer per pixel. ``w_field`` is (P, latent): one style
    source row per pixel (tile a single w for constant-style synthesis).

    Uses the factored per-pixel form of the modulation formula (never
    materializing a per-pixel weight tensor):

        numer = (phi ⊙ S) @ Bᵀ,  denom² = eps + S² @ (B²)ᵀ

    which equals B_hat(s_i) @ phi_i row by row.
    """
    if phi.ndim != 2 or phi.shape[1] != layer.B.shape[1]:
        raise ValueError(f"features {phi.shape} do not match weights {layer.B.shape}")
    if w_field.ndim != 2 or w_field.shape[0] != phi.shape[0]:
        raise ValueError(f"style field {w_field.shape} does not match features {phi.shape}")
    S = _styles(layer, w_field)
    scaled = mul(phi, S)
    numer = matmul(scaled, transpose(layer.B))
    if layer.demodulate:
        d2 = matmul(square(S), transpose(square(layer.B)))
        denom = sqrt(add(d2, Tensor(float(layer.eps))))
        return add(div(numer, denom), layer.b)
    return add(numer, layer.b)


class Generator:
    """Full CIPS generator with mapping network and encoding branches."""

    def __init__(self, config: GeneratorConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        c = config

        self.fmap = None
        if c.use_fourier:
            rows = 3 if c.kind == CYLINDRICAL else 2
            B = rng.normal(0.0, c.fourier_std, size=(rows, c.fourier_dim))
            self.fmap = FourierFeatureMap(B_fo=Tensor(B, requires_grad=True), kind=c.kind)

        self.table = None
        if c.use_embeddings:
            t = rng.normal(0.0, 1.0 / np.sqrt(c.embed_dim), size=(c.H * c.W, c.embed_dim))
            self.table = CoordEmbeddingTable(
                table=Tensor(t, requires_grad=True), H=c.H, W=c.W,
                wrap_x=(c.kind == CYLINDRICAL))

        def dense(n_in, n_out):
            w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)),
                       requires_grad=True)
            b = Tensor(np.zeros(n_out), requires_grad=True)
            return w, b

        self.mapping: list[tuple[Tensor, Tensor]] = []
        dims = _mapping_dims(c.mapping_depth, c.latent_dim, c.mapping_hidden)
        for n_in, n_out in dims:
            self.mapping.append(dense(n_in, n_out))

        if c.activation == "sine":
            a = 1.0 / c.enc_dim
            fw = Tensor(rng.uniform(-a, a, size=(c.enc_dim, c.width)), requires_grad=True)
            self.first = (fw, Tensor(np.zeros(c.width), requires_grad=True))
        else:
            self.first = dense(c.enc_dim, c.width)

        def modfc(demodulate: bool, n_out: int) -> ModFCLayer:
            n_in = c.width
            if c.activation == "sine" and demodulate:
                bound = np.sqrt(6.0 / n_in)
                B = Tensor(rng.uniform(-bound, bound, size=(n_out, n_in)),
                           requires_grad=True)
            else:
                B = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in)),
                           requires_grad=True)
            return ModFCLayer(
                B=B,
                b=Tensor(np.zeros(n_out), requires_grad=True),
                A_w=Tensor(rng.normal(0.0, 1.0 / np.sqrt(c.latent_dim),
                                      size=(c.latent_dim, n_in)), requires_grad=True),
                A_b=Tensor(np.ones(n_in), requires_grad=True),
                demodulate=demodulate, eps=c.epsilon)

        self.blocks: list[tuple[ModFCLayer, ModFCLayer]] = [
            (modfc(True, c.width), modfc(True, c.width)) for _ in range(c.n_blocks)]
        n_heads = c.n_blocks if c.skip_mode == "skips" else 1
        self.heads: list[ModFCLayer] = [modfc(False, 3) for _ in range(n_heads)]

    # -- parameters ---------------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(self.mapping):
            out[f"mapping.{i}.w"] = w
            out[f"mapping.{i}.b"] = b
        if self.fmap is not None:
            out["fourier.B_fo"] = self.fmap.B_fo
        if self.table is not None:
            out["embed.table"] = self.table.table
        out["first.w"], out["first.b"] = self.first
        for k, (fc1, fc2) in enumerate(self.blocks):
            for j, fc in enumerate((fc1, fc2)):
                for name, t in fc.tensors.items():
                    out[f"block{k}.fc{j}.{name}"] = t
        for k, head in enumerate(self.heads):
            for name, t in head.tensors.items():
                out[f"head{k}.{name}"] = t
        return out

    def count_params(self) -> dict[str, int]:
        """Learnable scalar counts per component plus the total."""
        groups = {"mapping": 0, "fourier": 0, "embeddings": 0,
                  "backbone": 0, "rgb_heads": 0}
        for name, t in self.params().items():
            if name.startswith("mapping."):
                groups["mapping"] += t.size
            elif name.startswith("fourier."):
                groups["fourier"] += t.size
            elif name.startswith("embed."):
                groups["embeddings"] += t.size
            elif name.startswith(("first.", "block")):
                groups["backbone"] += t.size
            else:
                groups["rgb_heads"] += t.size
        groups["total"] = sum(groups.values())
        return groups

    # -- forward ------------------------------------------------------------

    def _act(self, h: Tensor, first: bool = False) -> Tensor:
        if self.config.activation == "sine":
            return sin(mul(h, float(self.config.sine_w0))) if first else sin(h)
        return leaky_relu(h, self.config.leaky_slope)

    def map_latent(self, z) -> Tensor:
        """Style vector w = M(z). Accepts (latent,) or (batch, latent);
        rank is preserved. mapping_depth=0 returns z unchanged."""
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float64))
        if z.ndim not in (1, 2):
            raise ValueError(f"latent must be rank 1 or 2, got {z.shape}")
        squeeze = z.ndim == 1
        h = reshape(z, (1, z.shape[0])) if squeeze else z
        if h.shape[1] != self.config.latent_dim:
            raise ValueError(
                f"latent dim {h.shape[1]} != configured {self.config.latent_dim}")
        for w, b in self.mapping:
            h = self._mapping_act(add(matmul(h, w), b))
        return reshape(h, (h.shape[1],)) if squeeze else h

    def _mapping_act(self, h: Tensor) -> Tensor:
        return leaky_relu(h, self.config.leaky_slope)

    def _block_styles(self, grid_n: int, w) -> list[Tensor]:
        """Normalize a style argument to one (P, latent) field per block."""
        c = self.config
        if isinstance(w, (list, tuple)):
            fields = [self._one_field(grid_n, item) for item in w]
            if len(fields) != c.n_blocks:
                raise ValueError(f"expected {c.n_blocks} per-block styles, got {len(fields)}")
            return fields
        return [self._one_field(grid_n, w)] * c.n_blocks

    def _one_field(self, grid_n: int, w) -> Tensor:
        w = w if isinstance(w, Tensor) else Tensor(np.asarray(w, dtype=np.float64))
        if w.ndim == 1:
            if w.shape[0] != self.config.latent_dim:
                raise ValueError(f"style length {w.shape[0]} != latent_dim")
            return tile_rows(w, grid_n)
        if w.ndim == 2:
            if w.shape != (grid_n, self.config.latent_dim):
                raise ValueError(
                    f"style field {w.shape} != ({grid_n}, {self.config.latent_dim})")
            return w
        raise ValueError(f"style must be rank 1 or 2, got {w.shape}")

    def synthesize_pixels(self, grid: CoordGrid, w,
                          flags: EncoderFlags | None = None) -> Tensor:
        """Per-point RGB for a single style vector (or per-block list)."""
        fields = self._block_styles(grid.n_points, w)
        return self._forward(grid, fields, flags)

    def pixelwise_style_synthesize(self, grid: CoordGrid, w_field,
                                   flags: EncoderFlags | None = None) -> Tensor:
        """Per-point RGB with an individual style vector per point."""
        w_field = w_field if isinstance(w_field, Tensor) else \
            Tensor(np.asarray(w_field, dtype=np.float64))
        if w_field.shape != (grid.n_points, self.config.latent_dim):
            raise ValueError(
                f"style field {w_field.shape} != "
                f"({grid.n_points}, {self.config.latent_dim})")
        return self._forward(grid, [w_field] * self.config.n_blocks, flags)

    def _forward(self, grid: CoordGrid, fields: list[Tensor],
                 flags: EncoderFlags | None) -> Tensor:
        c = self.config
        if grid.kind != c.kind:
            raise ValueError(f"grid kind {grid.kind!r} != generator kind {c.kind!r}")
        phi = encode(grid, self.fmap, self.table, flags)
        h = self._act(add(matmul(phi, self.first[0]), self.first[1]), first=True)
        rgb = None
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for k, (fc1, fc2) in enumerate(self.blocks):
            h1 = self._act(modfc_forward(fc1, h, fields[k]))
            h2 = self._act(modfc_forward(fc2, h1, fields[k]))
            if c.skip_mode == "residual":
                h = mul(add(h, h2), inv_sqrt2)
            else:
                h = h2
            if c.skip_mode == "skips":
                proj = modfc_forward(self.heads[k], h, fields[k])
                rgb = proj if rgb is None else add(rgb, proj)
        if c.skip_mode != "skips":
            rgb = modfc_forward(self.heads[0], h, fields[-1])
        return rgb

    def synthesize_image(self, H: int, W: int, z,
                         flags: EncoderFlags | None = None) -> np.ndarray:
        """Full-raster synthesis: z -> w -> (H, W, 3) float image in [-1, 1].

        Extents other than the training resolution use the dense
        super-resolution grid (same [-1,1] span, fractional embedding
        lookups)."""
        c = self.config
        if (H, W) == (c.H, c.W):
            grid = full_grid(c.H, c.W)
        else:
            grid = dense_grid(H, W, c.H, c.W)
        if c.kind == CYLINDRICAL:
            grid = CoordGrid(kind=CYLINDRICAL, H=grid.H, W=grid.W, points=grid.points)
        with no_grad():
            w = self.map_latent(np.asarray(z, dtype=np.float64))
            px = self.synthesize_pixels(grid, w, flags)
        return px.data.reshape(H, W, 3)

    # -- checkpointing ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        cfg = {"format": "cips-generator", "version": 1,
               "config": asdict(self.config), "seed": self.seed,
               "config_hash": self.config.hash()}
        tensors = {name: t.data for name, t in self.params().items()}
        tensorio.save_checkpoint(path, cfg, tensors)

    @classmethod
    def load(cls, path: str | Path) -> "Generator":
        meta, tensors = tensorio.load_checkpoint(path)
        if meta.get("format") != "cips-generator":
            raise tensorio.TensorFormatError(
                f"not a generator checkpoint: format={meta.get('format')!r}")
        if meta.get("version") != 1:
            raise tensorio.TensorFormatError(
                f"unsupported generator checkpoint version {meta.get('version')}")
        config = GeneratorConfig(**meta["config"])
        if meta.get("config_hash") != config.hash():
            raise tensorio.TensorFormatError("config hash mismatch: metadata edited?")
        gen = cls(config, seed=int(meta.get("seed", 0)))
        own = gen.params()
        if set(own) != set(tensors):
            missing = sorted(set(own) ^ set(tensors))
            raise tensorio.TensorFormatError(
                f"checkpoint tensor set mismatch at {missing[:4]}")
        for name, arr in tensors.items():
            if own[name].shape != arr.shape:
                raise tensorio.TensorFormatError(
                    f"shape mismatch for {name}: checkpoint {arr.shape}, "
                    f"config implies {own[name].shape}")
            own[name].data = np.ascontiguousarray(arr.astype(np.float64))
        return gen


def _mapping_dims(depth: int, latent: int, hidden: int) -> list[tuple[int, int]]:
    """Layer shapes for the mapping MLP: latent -> hidden.. -> latent."""
    if depth == 0:
        return []
    if depth == 1:
        return [(latent, latent)]
    dims = [(latent, hidden)]
    dims += [(hidden, hidden)] * (depth - 2)
    dims.append((hidden, latent))
    return dims


def latent_from_seed(seed: int, dim: int) -> np.ndarray:
    """The canonical seed -> z recipe shared by the CLI and the service,
    so equal seeds give equal bytes across interfaces."""
    return np.random.default_rng(int(seed)).normal(size=int(dim))


def synthesize_grid_threaded(gen: Generator, grid: CoordGrid, w,
                             threads: int = 1, chunk: int = 4096) -> np.ndarray:
    """Fan synthesis out over contiguous point chunks on a thread pool.

    Pixels are conditionally independent, so the result is bit-identical
    to a single synthesize_pixels pass for any thread count or chunking.
    """
    import concurrent.futures

    n = grid.n_points
    with no_grad():
        if threads <= 1 or n <= chunk:
            return gen.synthesize_pixels(grid, w).data

        spans = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]

        def work(span):
            lo, hi = span
            sub = CoordGrid(kind=grid.kind, H=grid.H, W=grid.W,
                            points=grid.points[lo:hi])
            return gen.synthesize_pixels(sub, w).data

        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, spans))
    return np.concatenate(parts, axis=0)


def blend_style_field(wA, wB, alpha) -> np.ndarray:
    """Per-pixel style lerp (1-alpha)·wA + alpha·wB, shape (P, latent).

    Rows where alpha is exactly 0 or 1 take the endpoint's bits unchanged,
    so pure-endpoint blends reproduce single-style synthesis bit-exactly.
    """
    wA = np.asarray(wA, dtype=np.float64).reshape(-1)
    wB = np.asarray(wB, dtype=np.float64).reshape(-1)
    if wA.shape != wB.shape:
        raise ValueError(f"style shapes differ: {wA.shape} vs {wB.shape}")
    a = np.asarray(alpha, dtype=np.float64).reshape(-1, 1)
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("alpha values must lie in [0, 1]")
    out = (1.0 - a) * wA[None, :] + a * wB[None, :]
    out = np.where(a == 0.0, wA[None, :], out)
    out = np.where(a == 1.0, wB[None, :], out)
    return out


def layer_style_mix(gen: Generator, wA, wB, block_range) -> np.ndarray:
    """Full-grid synthesis with wB applied at the given blocks (1-indexed),
    wA elsewhere. An empty/None range reduces to plain synthesis with wA."""
    c = gen.config
    blocks = sorted(set(int(b) for b in block_range)) if block_range else []
    if any(b < 1 or b > c.n_blocks for b in blocks):
        raise ValueError(f"block indices must lie in [1, {c.n_blocks}], got {blocks}")
    per_block = [wB if (k + 1) in blocks else wA for k in range(c.n_blocks)]
    grid = full_grid(c.H, c.W)
    if c.kind == CYLINDRICAL:
        grid = CoordGrid(kind=CYLINDRICAL, H=grid.H, W=grid.W, points=grid.points)
    with no_grad():
        px = gen.synthesize_pixels(grid, per_block)
    return px.data.reshape(c.H, c.W, 3)
