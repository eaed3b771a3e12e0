"""Desk-scale adversarial training.

Non-saturating logistic GAN losses, an R1 gradient penalty computed with
genuine second-order differentiation (lazy, every r1_every steps, scaled
by the interval), a small convolutional or MLP discriminator built from
the same autodiff primitives as the generator, and synthetic datasets
small enough to train on a CPU in minutes.

The whole loop is deterministic: one seeded random generator owns every
draw (latents, batch indices, patch positions) in a fixed order, and all
tensor math reduces in shape-determined order, so two runs with the same
seed produce bit-identical metric streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import (
    Tensor, add, backward, concat, enable_grad, gather_rows, grad,
    leaky_relu, matmul, mean, mul, no_grad, reshape, second_order_grad,
    softplus, square, tensor_sum,
)
from .encoding import CoordGrid
from .generator import Generator
from .optim import Adam
from .sampling import PatchSpec, full_grid, patch_grid

__all__ = [
    "Discriminator", "TrainConfig", "Dataset",
    "g_loss", "d_loss", "r1_penalty",
    "make_synthetic_dataset", "patch_train_batch",
    "train_step", "train", "TrainState",
]


# ---------------------------------------------------------------------------
# losses

def g_loss(d_logits_fake: Tensor) -> Tensor:
    """Non-saturating generator loss: mean softplus(-D(G(z)))."""
    return mean(softplus(mul(d_logits_fake, -1.0)))


def d_loss(d_logits_real: Tensor, d_logits_fake: Tensor) -> Tensor:
    """Discriminator loss: mean softplus(-D(real)) + mean softplus(D(fake))."""
    return add(mean(softplus(mul(d_logits_real, -1.0))),
               mean(softplus(d_logits_fake)))


def r1_penalty(disc: "Discriminator", real_batch: np.ndarray,
               gamma: float = 10.0) -> Tensor:
    """(gamma/2)·E_x ‖∇ₓD(x)‖², recorded differentiably in D's parameters.

    The input gradient is taken with create_graph=True so the returned
    scalar supports a further backward pass (gradient-of-gradient).
    """
    B = real_batch.shape[0]
    flat = real_batch.reshape(B, -1).astype(np.float64)
    x = Tensor(flat, requires_grad=True)
    # the penalty's value is defined through a gradient, so recording must
    # be on here even if the caller wrapped us in no_grad
    with enable_grad():
        logits = disc.forward(x)
        # each logit depends only on its own row-block of x, so the gradient
        # of the logit sum stacks the per-sample input gradients
        (gx,) = grad(tensor_sum(logits), [x], create_graph=True)
        return mul(tensor_sum(square(gx)), gamma / (2.0 * B))


# ---------------------------------------------------------------------------
# discriminator

def _conv_out(n: int, stride: int) -> int:
    return (n + stride - 1) // stride  # 3x3 kernel, pad 1


def _conv_index_map(H: int, W: int, stride: int, k: int) -> np.ndarray:
    """Per-output-pixel tap indices into a row-major H·W feature map;
    -1 marks zero-padding taps."""
    Ho, Wo = _conv_out(H, stride), _conv_out(W, stride)
    pad = (k - 1) // 2
    oy, ox = np.meshgrid(np.arange(Ho), np.arange(Wo), indexing="ij")
    idx = np.empty((Ho * Wo, k * k), dtype=np.int64)
    t = 0
    for ky in range(k):
        for kx in range(k):
            iy = oy * stride - pad + ky
            ix = ox * stride - pad + kx
            valid = (iy >= 0) & (iy < H) & (ix >= 0) & (ix < W)
            flat = np.where(valid, iy * W + ix, -1)
            idx[:, t] = flat.ravel()
            t += 1
    return idx


class _Conv:
    """3x3 (or 1x1) convolution over row-major (B·H·W, C) feature rows,
    implemented as zero-pad + gather + one matrix product so that it is
    differentiable to second order."""

    def __init__(self, rng, H, W, c_in, c_out, stride=1, k=3):
        self.H, self.W, self.stride, self.k = H, W, stride, k
        self.c_in, self.c_out = c_in, c_out
        self.Ho, self.Wo = _conv_out(H, stride), _conv_out(W, stride)
        self.idx = _conv_index_map(H, W, stride, k)
        fan_in = k * k * c_in
        self.weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in),
                                        size=(fan_in, c_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor, batch: int) -> Tensor:
        P = self.H * self.W
        zero_row = batch * P
        offs = (np.arange(batch, dtype=np.int64) * P)[:, None, None]
        idx = np.where(self.idx[None, :, :] >= 0,
                       self.idx[None, :, :] + offs, zero_row)
        xpad = concat([x, Tensor(np.zeros((1, self.c_in)))], axis=0)
        gathered = gather_rows(xpad, idx.reshape(-1))
        col = reshape(gathered, (batch * self.Ho * self.Wo, self.k * self.k * self.c_in))
        return add(matmul(col, self.weight), self.bias)

    @property
    def tensors(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Discriminator:
    """Desk-scale critic emitting one logit per image.

    kind="small-conv": stride-2 3x3 stages (default widths 32/64/128)
    followed by a linear head on the flattened final feature map; the
    residual option wraps each stage as (main + 1x1 shortcut)/sqrt(2).
    kind="mlp": plain fully-connected stack on flattened pixels.
    """

    def __init__(self, kind: str = "small-conv", H: int = 16, W: int = 16,
                 widths: Sequence[int] = (32, 64, 128), residual: bool = False,
                 slope: float = 0.2, seed: int = 0):
        if kind not in ("small-conv", "mlp"):
            raise ValueError(f"unknown discriminator kind {kind!r}")
        self.kind = kind
        self.H, self.W = H, W
        self.widths = tuple(widths)
        self.residual = residual
        self.slope = slope
        rng = np.random.default_rng(seed)
        self._params: list[tuple[str, Tensor]] = []

        if kind == "small-conv":
            self.stages = []
            h, w, c = H, W, 3
            for i, c_out in enumerate(self.widths):
                main = _Conv(rng, h, w, c, c_out, stride=2, k=3)
                short = _Conv(rng, h, w, c, c_out, stride=2, k=1) if residual else None
                self.stages.append((main, short))
                for j, t in enumerate(main.tensors):
                    self._params.append((f"stage{i}.main.{j}", t))
                if short is not None:
                    for j, t in enumerate(short.tensors):
                        self._params.append((f"stage{i}.short.{j}", t))
                h, w, c = main.Ho, main.Wo, c_out
            feat = h * w * c
            self.head_w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(feat), size=(feat, 1)),
                                 requires_grad=True)
            self.head_b = Tensor(np.zeros(1), requires_grad=True)
            self._spatial_tail = (h, w, c)
        else:
            dims = [H * W * 3, *self.widths, 1]
            self.layers = []
            for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
                w_t = Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out)),
                             requires_grad=True)
                b_t = Tensor(np.zeros(n_out), requires_grad=True)
                self.layers.append((w_t, b_t))
                self._params.append((f"fc{i}.w", w_t))
                self._params.append((f"fc{i}.b", b_t))
            self.head_w = self.head_b = None
        if self.head_w is not None:
            self._params.append(("head.w", self.head_w))
            self._params.append(("head.b", self.head_b))

    def params(self) -> dict[str, Tensor]:
        return dict(self._params)

    def forward(self, x: Tensor) -> Tensor:
        """x: (B, H·W·3) flattened images in [-1, 1]. Returns (B, 1) logits."""
        if x.ndim != 2 or x.shape[1] != self.H * self.W * 3:
            raise ValueError(
                f"expected (B, {self.H * self.W * 3}) input, got {x.shape}")
        B = x.shape[0]
        if self.kind == "mlp":
            h = x
            for i, (w_t, b_t) in enumerate(self.layers):
                h = add(matmul(h, w_t), b_t)
                if i < len(self.layers) - 1:
                    h = leaky_relu(h, self.slope)
            return h
        h = reshape(x, (B * self.H * self.W, 3))
        inv_sqrt2 = 1.0 / math.sqrt(2.0)
        for main, short in self.stages:
            out = leaky_relu(main(h, B), self.slope)
            if short is not None:
                out = mul(add(out, short(h, B)), inv_sqrt2)
            h = out
        hh, ww, c = self._spatial_tail
        flat = reshape(h, (B, hh * ww * c))
        return add(matmul(flat, self.head_w), self.head_b)


# ---------------------------------------------------------------------------
# datasets

@dataclass
class Dataset:
    """In-memory image collection in [-1, 1], shape (N, H, W, 3)."""
    images: np.ndarray
    source: str

    @property
    def resolution(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def __len__(self) -> int:
        return self.images.shape[0]

    def batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, len(self), size=size)
        return self.images[idx]


def make_synthetic_dataset(kind: str, n: int, resolution: int, seed: int = 0) -> Dataset:
    """Deterministic toy datasets.

    solid: constant-color images with channel means uniform in [-0.8, 0.8].
    gradient: two-color linear ramps at random orientations.
    """
    rng = np.random.default_rng(seed)
    H = W = resolution
    if kind == "synthetic-solid":
        colors = rng.uniform(-0.8, 0.8, size=(n, 3))
        images = np.broadcast_to(colors[:, None, None, :], (n, H, W, 3)).copy()
    elif kind == "synthetic-gradient":
        xs, ys = np.meshgrid(np.arange(W, dtype=np.float64),
                             np.arange(H, dtype=np.float64))
        images = np.empty((n, H, W, 3))
        for i in range(n):
            c0, c1 = rng.uniform(-0.8, 0.8, size=(2, 3))
            theta = rng.uniform(0.0, 2.0 * np.pi)
            proj = xs * np.cos(theta) + ys * np.sin(theta)
            t = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-12)
            images[i] = c0 + t[..., None] * (c1 - c0)
    else:
        raise ValueError(f"unknown synthetic dataset kind {kind!r}")
    return Dataset(images=images, source=kind)


def patch_train_batch(images: np.ndarray, K: int, sigma_choices: Sequence[int],
                      rng: np.random.Generator) -> tuple[np.ndarray, list[PatchSpec]]:
    """Sample one dilated patch per image: the real crop plus the spec the
    generator needs to synthesize the matching fake patch."""
    B, H, W = images.shape[:3]
    specs = []
    out = np.empty((B, K, K, 3))
    for b in range(B):
        sigma = int(rng.choice(np.asarray(sigma_choices, dtype=np.int64)))
        span = (K - 1) * sigma
        if span >= W or span >= H:
            raise ValueError(
                f"patch K={K}, sigma={sigma} does not fit in {H}x{W}")
        u = int(rng.integers(0, W - span))
        v = int(rng.integers(0, H - span))
        specs.append(PatchSpec(u=u, v=v, K=K, sigma=sigma))
        out[b] = images[b, v:v + span + 1:sigma, u:u + span + 1:sigma]
    return out, specs


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    lr: float = 2e-3
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    r1_gamma: float = 10.0
    r1_every: int = 16
    batch_size: int = 8
    steps: int = 1000
    seed: int = 0
    patch_enabled: bool = False
    patch_K: int = 8
    patch_sigma_choices: tuple[int, ...] = (1, 2)
    log_every: int = 50


@dataclass
class TrainState:
    """Everything the loop mutates besides the parameters themselves."""
    step: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    pixels_synthesized: int = 0


def _batch_latents(rng: np.random.Generator, B: int, dim: int) -> np.ndarray:
    return rng.normal(size=(B, dim))


def _synthesize_batch(gen: Generator, grids, w_batch: Tensor) -> Tensor:
    """Concatenate per-image grids into one pass; image b's pixels use
    style row b (gather keeps the graph differentiable into the mapping)."""
    pts = np.concatenate([g.points for g in grids], axis=0)
    # the generator's kind decides wrap semantics (cylindrical models train
    # on the same integer grids, azimuth-wrapped)
    joint = CoordGrid(kind=gen.config.kind, H=grids[0].H, W=grids[0].W, points=pts)
    counts = [g.n_points for g in grids]
    owner = np.repeat(np.arange(len(grids), dtype=np.int64), counts)
    w_field = gather_rows(w_batch, owner)
    return gen.pixelwise_style_synthesize(joint, w_field)


def train_step(gen: Generator, disc: Discriminator, dataset: Dataset,
               cfg: TrainConfig, state: TrainState,
               g_opt: Adam, d_opt: Adam) -> dict:
    """One D update (with lazy R1) followed by one G update."""
    B = cfg.batch_size
    c = gen.config
    state.step += 1

    real = dataset.batch(state.rng, B)
    if cfg.patch_enabled:
        real, specs = patch_train_batch(real, cfg.patch_K,
                                        cfg.patch_sigma_choices, state.rng)
        grids = [patch_grid(s, c.H, c.W) for s in specs]
    else:
        grids = [full_grid(c.H, c.W)] * B

    # ---- discriminator update
    z_d = _batch_latents(state.rng, B, c.latent_dim)
    with no_grad():
        w_d = gen.map_latent(z_d)
        fake_px = _synthesize_batch(gen, grids, w_d).data
    state.pixels_synthesized += fake_px.shape[0]
    n_px = grids[0].n_points
    fake_flat = Tensor(fake_px.reshape(B, n_px * 3))
    real_flat = Tensor(real.reshape(B, n_px * 3))

    logits_real = disc.forward(real_flat)
    logits_fake = disc.forward(fake_flat)
    loss_d = d_loss(logits_real, logits_fake)

    r1_val = 0.0
    d_params = disc.params()
    if cfg.r1_gamma > 0 and state.step % cfg.r1_every == 0:
        penalty = r1_penalty(disc, real, gamma=cfg.r1_gamma * cfg.r1_every)
        r1_val = float(penalty.data) / cfg.r1_every
        # second_order_grad both differentiates the penalty into D's
        # parameters and rejects a non-differentiably recorded first pass
        grads_d = second_order_grad(add(loss_d, penalty))
    else:
        grads_d = backward(loss_d)
    if not np.isfinite(float(loss_d.data)):
        raise RuntimeError(f"non-finite d_loss at step {state.step}")
    d_grad_norm = _grad_norm(grads_d, d_params.values())
    d_opt.step(grads_d)

    # ---- generator update
    z_g = _batch_latents(state.rng, B, c.latent_dim)
    w_g = gen.map_latent(z_g)
    fake = _synthesize_batch(gen, grids, w_g)
    state.pixels_synthesized += fake.shape[0]
    logits = disc.forward(reshape(fake, (B, n_px * 3)))
    loss_g = g_loss(logits)
    if not np.isfinite(float(loss_g.data)):
        raise RuntimeError(f"non-finite g_loss at step {state.step}")
    grads_g = backward(loss_g)
    g_params = gen.params()
    g_grad_norm = _grad_norm(grads_g, g_params.values())
    g_opt.step(grads_g)

    return {
        "step": state.step,
        "d_loss": float(loss_d.data),
        "g_loss": float(loss_g.data),
        "r1": r1_val,
        "d_grad_norm": d_grad_norm,
        "g_grad_norm": g_grad_norm,
        "pixels_synthesized": state.pixels_synthesized,
    }


def _grad_norm(grads: dict, params) -> float:
    total = 0.0
    for p in params:
        g = grads.get(p)
        if g is not None:
            total += float(np.sum(g.data * g.data))
    return float(np.sqrt(total))


def train(gen: Generator, disc: Discriminator, dataset: Dataset,
          cfg: TrainConfig,
          on_metrics: Callable[[dict], None] | None = None) -> list[dict]:
    """Run cfg.steps alternating updates; returns the full metric stream.

    The metric stream is deterministic for a fixed (cfg.seed, dataset,
    initial parameters) triple.
    """
    state = TrainState(rng=np.random.default_rng(cfg.seed))
    g_params = list(gen.params().values())
    d_params = list(disc.params().values())
    g_opt = Adam(g_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    d_opt = Adam(d_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    metrics = []
    for _ in range(cfg.steps):
        m = train_step(gen, disc, dataset, cfg, state, g_opt, d_opt)
        metrics.append(m)
        if on_metrics is not None:
            on_metrics(m)
    return metrics


def metrics_to_ndjson(metrics: Sequence[dict]) -> str:
    """Newline-delimited JSON records {step, d_loss, g_loss, r1, ...}."""
    return "\n".join(json.dumps(m, sort_keys=True) for m in metrics) + "\n"
