"""Programmatic invariant suite behind `cips verify`.

Each check re-derives one of the library's contracts on fresh desk-scale
models, so a clean checkout can be validated in seconds without fixtures.
The suite returns structured results; the CLI renders them and maps any
failure to exit code 3.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .analysis import azimuthal_integration, fft2d, ifft2d, pca_embeddings
from .autodiff import Tensor, matmul, mul, square, tensor_sum
from .encoding import CYLINDRICAL, CoordEmbeddingTable, CoordGrid
from .generator import Generator, GeneratorConfig, modulate_weights
from .gradcheck import finite_diff_check
from .optim import Adam
from .sampling import (
    FoveaSpec, PatchSpec, cylinder_crop, fill_missing, foveated_sample,
    full_grid, lanczos_upsample, patch_grid,
)
from .tensorio import load_tensor, save_tensor
from .training import (
    Discriminator, TrainConfig, d_loss, g_loss, make_synthetic_dataset,
    metrics_to_ndjson, r1_penalty, train,
)

__all__ = ["CheckResult", "run_all", "CHECKS"]


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _desk(seed=0, **over):
    cfg = GeneratorConfig(width=16, n_blocks=2, fourier_dim=16, embed_dim=16,
                          H=8, W=8, latent_dim=16, mapping_depth=2,
                          mapping_hidden=16, **over)
    return Generator(cfg, seed=seed)


# ---------------------------------------------------------------------------
# checks (each returns a detail string or raises)

def check_gradients_composed() -> str:
    rng = np.random.default_rng(0)
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 4)))

    def build():
        return tensor_sum(square(matmul(x, w)))

    report = finite_diff_check(build, {"w": w}, tolerance=1e-6)
    assert report.passed, report.summary()
    return f"max rel err {report.max_rel_err:.2e}"


def check_adam_zero_grad_identity() -> str:
    t = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    before = t.data.tobytes()
    opt = Adam([t])
    opt.step({})
    assert t.data.tobytes() == before, "zero-grad step moved parameters"
    assert opt.t == 1
    return "params bit-identical, t advanced"


def check_r1_linear_closed_form() -> str:
    disc = Discriminator(kind="mlp", H=1, W=1, widths=(), seed=3)
    a_t = disc.layers[0][0]
    penalty = r1_penalty(disc, np.random.default_rng(4).normal(size=(5, 3)),
                         gamma=7.0)
    expected = 3.5 * float(np.sum(a_t.data ** 2))
    dev = abs(float(penalty.data) - expected)
    assert dev < 1e-10, f"deviation {dev:.2e}"
    return f"|penalty - (gamma/2)||a||^2| = {dev:.1e}"


def check_loss_values() -> str:
    z = Tensor(np.zeros((3, 1)))
    dev_g = abs(float(g_loss(z).data) - math.log(2))
    dev_d = abs(float(d_loss(z, z).data) - 2 * math.log(2))
    assert dev_g < 1e-12 and dev_d < 1e-12
    return "softplus fixed points match"


def check_demodulation_norms() -> str:
    rng = np.random.default_rng(5)
    worst = 1.0
    for _ in range(200):
        B = Tensor(rng.normal(size=(6, 5)))
        s = Tensor(rng.uniform(0.5, 2.0, size=5))
        Bhat = modulate_weights(B, s, demodulate=True, eps=1e-8)
        norms = np.sqrt(np.sum(Bhat.data ** 2, axis=1))
        worst = min(worst, norms.min())
        assert np.all(norms <= 1.0 + 1e-12) and np.all(norms >= 0.999)
    return f"row norms in [{worst:.6f}, 1]"


def check_subset_bit_exact() -> str:
    gen = _desk()
    z = np.random.default_rng(6).normal(size=16)
    grid = full_grid(8, 8)
    full = gen.synthesize_image(8, 8, z).reshape(-1, 3)
    rng = np.random.default_rng(7)
    for _ in range(10):
        idx = rng.choice(64, size=17, replace=False)
        sub = CoordGrid(kind=grid.kind, H=8, W=8, points=grid.points[idx])
        w = gen.map_latent(z)
        px = gen.synthesize_pixels(sub, w).data
        assert px.tobytes() == full[idx].tobytes(), "subset grid diverged"
    return "10 random subsets bit-identical"


def check_patch_identity() -> str:
    gen = _desk()
    z = np.random.default_rng(8).normal(size=16)
    img = gen.synthesize_image(8, 8, z)
    w = gen.map_latent(z)
    rng = np.random.default_rng(9)
    for _ in range(5):
        sigma = int(rng.integers(1, 3))
        K = int(rng.integers(2, 4))
        span = (K - 1) * sigma
        u = int(rng.integers(0, 8 - span))
        v = int(rng.integers(0, 8 - span))
        spec = PatchSpec(u=u, v=v, K=K, sigma=sigma)
        px = gen.synthesize_pixels(patch_grid(spec, 8, 8), w).data
        ref = img[v:v + span + 1:sigma, u:u + span + 1:sigma].reshape(-1, 3)
        assert px.tobytes() == ref.tobytes(), f"patch {spec} diverged"
    return "5 random dilated patches bit-identical"


def check_cylindrical_wrap() -> str:
    gen = _desk(kind=CYLINDRICAL)
    z = np.random.default_rng(10).normal(size=16)
    w = gen.map_latent(z)
    a = gen.synthesize_pixels(cylinder_crop(8, 8, 4, 8, 6, 0), w).data
    b = gen.synthesize_pixels(cylinder_crop(8, 8, 4, 8, 6 + 8, 0), w).data
    assert a.tobytes() == b.tobytes(), "azimuth shift by W_pan changed pixels"
    return "crop at x0 and x0+W_pan bit-identical"


def check_foveated_budget_and_fill() -> str:
    for f in (0.05, 0.25, 1.0):
        grid = foveated_sample(FoveaSpec(fraction=f, rng_seed=0), 16, 16)
        budget = math.ceil(f * 256)
        assert grid.n_points == budget, f"f={f}: {grid.n_points} != {budget}"
    grid = foveated_sample(FoveaSpec(fraction=1.0, rng_seed=0), 8, 8)
    colors = np.random.default_rng(11).uniform(-1, 1, size=(64, 3))
    filled = fill_missing(grid.points, colors, 8, 8)
    ys = grid.points[:, 1].astype(int)
    xs = grid.points[:, 0].astype(int)
    assert np.array_equal(filled[ys, xs], colors), "fill altered sampled pixels"
    return "budgets exact, passthrough holds"


def check_lanczos_identity() -> str:
    img = np.random.default_rng(12).uniform(-1, 1, size=(6, 7, 3))
    dev = float(np.max(np.abs(lanczos_upsample(img, 1.0) - img)))
    assert dev < 1e-12, f"factor-1 deviation {dev:.2e}"
    return f"factor-1 max deviation {dev:.1e}"


def check_fft_contracts() -> str:
    x = np.random.default_rng(13).normal(size=(16, 16))
    spec = fft2d(x)
    rt = float(np.max(np.abs(ifft2d(spec) - x)))
    assert rt < 1e-10, f"round-trip {rt:.2e}"
    pix = float(np.sum(x * x))
    coef = float(np.sum(np.abs(spec.data) ** 2))
    rel = abs(pix - coef) / pix
    assert rel < 1e-9, f"Parseval rel {rel:.2e}"
    prof = azimuthal_integration(spec)
    part = abs(prof.total_power - coef) / coef
    assert part < 1e-9, f"AI partition rel {part:.2e}"
    return f"round-trip {rt:.1e}, Parseval {rel:.1e}, partition {part:.1e}"


def check_pca_orthonormal() -> str:
    table = CoordEmbeddingTable.init(8, 8, d=8, seed=14)
    res = pca_embeddings(table, k=8)
    dev = float(np.max(np.abs(res.components @ res.components.T - np.eye(8))))
    assert dev < 1e-8, f"orthonormality deviation {dev:.2e}"
    assert np.all(np.diff(res.explained) <= 1e-12), "explained increased"
    return f"orthonormality deviation {dev:.1e}"


def check_checkpoint_roundtrip() -> str:
    gen = _desk(seed=15)
    z = np.random.default_rng(16).normal(size=16)
    img = gen.synthesize_image(8, 8, z)
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "m.ckpt"
        gen.save(path)
        back = Generator.load(path)
    img2 = back.synthesize_image(8, 8, z)
    assert img.tobytes() == img2.tobytes(), "reloaded synthesis diverged"
    return "save -> load -> synthesis bit-identical"


def check_tensorio_alignment() -> str:
    arr = np.random.default_rng(17).normal(size=(3, 5))
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "t.tnsr"
        save_tensor(path, arr)
        back = load_tensor(path)
    assert np.array_equal(arr, back), "tensor roundtrip diverged"
    return "CTNSR01 roundtrip exact"


def check_training_determinism() -> str:
    streams = []
    for _ in range(2):
        gen = _desk(seed=18)
        disc = Discriminator(kind="mlp", H=8, W=8, widths=(16,), seed=19)
        ds = make_synthetic_dataset("synthetic-solid", n=16, resolution=8, seed=20)
        cfg = TrainConfig(steps=4, batch_size=2, seed=21, r1_every=2)
        streams.append(metrics_to_ndjson(train(gen, disc, ds, cfg)))
    assert streams[0] == streams[1], "metric streams diverged"
    return "4-step metric streams identical"


def check_dense_corners() -> str:
    gen = _desk(seed=22)
    z = np.random.default_rng(23).normal(size=16)
    native = gen.synthesize_image(8, 8, z)
    dense = gen.synthesize_image(32, 32, z)
    for (dy, dx), (ny, nx) in (((0, 0), (0, 0)), ((0, 31), (0, 7)),
                               ((31, 0), (7, 0)), ((31, 31), (7, 7))):
        assert dense[dy, dx].tobytes() == native[ny, nx].tobytes(), \
            f"corner {(dy, dx)} diverged"
    return "4x dense corners bit-identical"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("gradients vs finite differences", check_gradients_composed),
    ("adam zero-grad identity", check_adam_zero_grad_identity),
    ("R1 linear closed form", check_r1_linear_closed_form),
    ("GAN loss fixed points", check_loss_values),
    ("demodulated row norms", check_demodulation_norms),
    ("conditional independence (subsets)", check_subset_bit_exact),
    ("patch-restriction identity", check_patch_identity),
    ("cylindrical wrap", check_cylindrical_wrap),
    ("foveated budget + fill passthrough", check_foveated_budget_and_fill),
    ("lanczos factor-1 identity", check_lanczos_identity),
    ("FFT round-trip / Parseval / AI partition", check_fft_contracts),
    ("PCA orthonormality", check_pca_orthonormal),
    ("checkpoint roundtrip", check_checkpoint_roundtrip),
    ("CTNSR01 roundtrip", check_tensorio_alignment),
    ("training determinism", check_training_determinism),
    ("dense-grid corner exactness", check_dense_corners),
]


def run_all(on_result: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            detail = fn()
            res = CheckResult(name=name, ok=True, detail=detail or "")
        except Exception as exc:  # noqa: BLE001 - a check failing IS the signal
            res = CheckResult(name=name, ok=False, detail=f"{type(exc).__name__}: {exc}")
        results.append(res)
        if on_result is not None:
            on_result(res)
    return results
