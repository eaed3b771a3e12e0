"""HTTP inference service over a loaded checkpoint.

Request handlers share the model read-only; a bounded semaphore caps
concurrent synthesis work (excess load gets 503 rather than queueing
unboundedly). Checkpoint reload drains in-flight requests first, so a
response is always produced by exactly one parameter set.
"""

from __future__ import annotations

import base64
import io
import os
import threading
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import Response

from .autodiff import no_grad
from .encoding import CYLINDRICAL, CoordGrid
from .generator import (
    Generator, blend_style_field, latent_from_seed, synthesize_grid_threaded,
)
from .images import to_u8
from .sampling import (
    FoveaSpec, PatchSpec, blend_alpha_points, cylinder_crop, dense_grid,
    foveated_sample, fill_missing, full_grid, patch_grid, sparse_to_json,
)
from .tensorio import TensorFormatError

__all__ = ["create_app"]

MODES = ("png", "sparse-json", "png-base64")
DRAIN_TIMEOUT = 30.0


def _bad(msg: str) -> HTTPException:
    return HTTPException(status_code=400, detail=msg)


def _png_bytes(img: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(to_u8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _build_grid(gen: Generator, spec: dict) -> tuple[CoordGrid, tuple[int, int] | None]:
    """Grid plus the (H, W) raster shape for image responses (None when the
    points are not a contiguous raster, i.e. foveated)."""
    c = gen.config
    if not isinstance(spec, dict) or "kind" not in spec:
        raise _bad("grid spec must be an object with a 'kind' field")
    kind = spec["kind"]
    extra = set(spec) - {"kind"}
    try:
        if kind == "full":
            if extra:
                raise _bad(f"unknown full-grid fields: {sorted(extra)}")
            grid, shape = full_grid(c.H, c.W), (c.H, c.W)
        elif kind == "patch":
            ps = PatchSpec(u=int(spec.get("u", 0)), v=int(spec.get("v", 0)),
                           K=int(spec.get("K", 8)), sigma=int(spec.get("sigma", 1)))
            grid, shape = patch_grid(ps, c.H, c.W), (ps.K, ps.K)
        elif kind == "foveated":
            center = spec.get("center")
            fs = FoveaSpec(
                fraction=float(spec.get("fraction", 0.05)),
                center=tuple(float(v) for v in center) if center else None,
                sigma=float(spec["sigma"]) if spec.get("sigma") is not None else None,
                rng_seed=int(spec.get("rng_seed", 0)))
            grid, shape = foveated_sample(fs, c.H, c.W), None
        elif kind == "dense":
            factor = int(spec.get("factor", 2))
            if factor < 1:
                raise _bad("dense factor must be >= 1")
            grid = dense_grid(c.H * factor, c.W * factor, c.H, c.W)
            shape = (c.H * factor, c.W * factor)
        elif kind == "cylinder":
            if c.kind != CYLINDRICAL:
                raise _bad("cylinder grid needs a cylindrical checkpoint")
            ch = int(spec.get("crop_h", c.H))
            cw = int(spec.get("crop_w", c.W))
            grid = cylinder_crop(c.W, c.H, cw, ch,
                                 int(spec.get("x0", 0)), int(spec.get("y0", 0)))
            shape = (ch, cw)
        else:
            raise _bad(f"unknown grid kind {kind!r}")
    except (TypeError, ValueError) as exc:
        raise _bad(f"invalid grid spec: {exc}")
    if c.kind == CYLINDRICAL and grid.kind != CYLINDRICAL:
        grid = CoordGrid(kind=CYLINDRICAL, H=grid.H, W=grid.W, points=grid.points)
    return grid, shape


def _style_vector(gen: Generator, spec: dict, what: str = "style") -> np.ndarray:
    """Resolve {seed} or {w} to a mapped style vector."""
    if not isinstance(spec, dict):
        raise _bad(f"{what} must be an object")
    if "seed" in spec:
        z = latent_from_seed(int(spec["seed"]), gen.config.latent_dim)
        with no_grad():
            return gen.map_latent(z).data
    if "w" in spec:
        w = np.asarray(spec["w"], dtype=np.float64)
        if w.shape != (gen.config.latent_dim,):
            raise _bad(f"{what}.w must have length {gen.config.latent_dim}, "
                       f"got shape {w.shape}")
        return w
    raise _bad(f"{what} needs 'seed', 'w', or 'pair'")


def _style_field(gen: Generator, spec: dict, grid: CoordGrid) -> np.ndarray | None:
    """Per-pixel field for pair+blend styles; None for uniform styles."""
    pair = spec.get("pair") if isinstance(spec, dict) else None
    if pair is None:
        return None
    if not isinstance(pair, dict) or "a" not in pair or "b" not in pair:
        raise _bad("style.pair needs 'a' and 'b' sub-styles")
    wA = _style_vector(gen, pair["a"], "style.pair.a")
    wB = _style_vector(gen, pair["b"], "style.pair.b")
    blend = pair.get("blend") or {}
    center = blend.get("center")
    try:
        alpha = blend_alpha_points(
            grid.points, grid.H, grid.W,
            mode=blend.get("mode", "horizontal-linear"),
            center=tuple(float(v) for v in center) if center else None,
            radius=float(blend["radius"]) if blend.get("radius") is not None else None,
            value=float(blend.get("value", 0.0)))
        return blend_style_field(wA, wB, alpha)
    except (TypeError, ValueError) as exc:
        raise _bad(f"invalid blend spec: {exc}")


def _resolve_styles(gen: Generator, payload: dict, grid: CoordGrid):
    """The per-block style list for synthesize_pixels, honoring mix."""
    style = payload.get("style")
    if style is None:
        raise _bad("request needs a 'style' object")
    field = _style_field(gen, style, grid)
    base = field if field is not None else _style_vector(gen, style)

    mix = payload.get("mix")
    if mix is None:
        return [base] * gen.config.n_blocks
    if not isinstance(mix, dict) or "style" not in mix:
        raise _bad("mix needs a 'style' object")
    blocks = mix.get("blocks", [])
    try:
        blocks = sorted(set(int(b) for b in blocks))
    except (TypeError, ValueError):
        raise _bad("mix.blocks must be a list of integers")
    n = gen.config.n_blocks
    if any(b < 1 or b > n for b in blocks):
        raise _bad(f"mix.blocks indices must lie in [1, {n}]")
    other_field = _style_field(gen, mix["style"], grid)
    other = other_field if other_field is not None else \
        _style_vector(gen, mix["style"], "mix.style")
    return [other if (k + 1) in blocks else base for k in range(n)]


def create_app(ckpt_path: str | None = None, pixel_cap: int = 2 ** 20,
               queue_depth: int = 4, threads: int = 1,
               ui_dir: str | None = None) -> FastAPI:
    """Build the service app; ckpt_path=None starts without a model
    (every model endpoint returns 503 until /reload loads one)."""
    app = FastAPI(title="cips-service")
    state = {"gen": Generator.load(ckpt_path) if ckpt_path else None}
    sem = threading.BoundedSemaphore(queue_depth)
    reload_lock = threading.Lock()

    def model_or_503() -> Generator:
        gen = state["gen"]
        if gen is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return gen

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": state["gen"] is not None}

    @app.get("/model")
    def model():
        gen = model_or_503()
        c = gen.config
        return {"config": asdict(c), "counts": gen.count_params(),
                "resolution": [c.H, c.W], "config_hash": c.hash(),
                "seed": gen.seed}

    @app.post("/map")
    def map_latent(payload: dict = Body(...)):
        gen = model_or_503()
        has_seed = "seed" in payload
        has_z = "z" in payload
        if has_seed == has_z:
            raise _bad("provide exactly one of 'seed' or 'z'")
        if has_seed:
            z = latent_from_seed(int(payload["seed"]), gen.config.latent_dim)
        else:
            z = np.asarray(payload["z"], dtype=np.float64)
            if z.shape != (gen.config.latent_dim,):
                raise _bad(f"z must have length {gen.config.latent_dim}, "
                           f"got shape {z.shape}")
        with no_grad():
            w = gen.map_latent(z).data
        return {"w": [float(v) for v in w]}

    @app.post("/synthesize")
    def synthesize(payload: dict = Body(...)):
        gen = model_or_503()
        mode = payload.get("mode", "png")
        if mode not in MODES:
            raise _bad(f"mode must be one of {list(MODES)}, got {mode!r}")
        grid, shape = _build_grid(gen, payload.get("grid", {"kind": "full"}))
        if grid.n_points > pixel_cap:
            raise HTTPException(
                status_code=413,
                detail=f"request wants {grid.n_points} pixels, cap is {pixel_cap}")
        styles = _resolve_styles(gen, payload, grid)

        if not sem.acquire(blocking=False):
            raise HTTPException(status_code=503,
                                detail=f"busy: queue depth {queue_depth} exceeded")
        try:
            if all(s is styles[0] for s in styles) and styles[0].ndim == 1:
                colors = synthesize_grid_threaded(gen, grid, styles[0],
                                                  threads=threads)
            else:
                with no_grad():
                    colors = gen.synthesize_pixels(grid, styles).data
        finally:
            sem.release()

        if mode == "sparse-json":
            return Response(content=sparse_to_json(grid, colors),
                            media_type="application/json")
        if shape is None:
            img = fill_missing(grid.points, colors, grid.H, grid.W)
        else:
            img = colors.reshape(shape[0], shape[1], 3)
        png = _png_bytes(img)
        if mode == "png-base64":
            return {"png_base64": base64.b64encode(png).decode("ascii"),
                    "H": img.shape[0], "W": img.shape[1],
                    "n_synthesized": grid.n_points}
        return Response(content=png, media_type="image/png")

    @app.post("/reload")
    def reload(payload: dict = Body(...)):
        path = payload.get("ckpt_path")
        if not path:
            raise _bad("provide 'ckpt_path'")
        if not reload_lock.acquire(blocking=False):
            raise HTTPException(status_code=503, detail="reload in progress")
        drained = 0
        try:
            try:
                gen = Generator.load(path)
            except FileNotFoundError:
                raise _bad(f"checkpoint not found: {path}")
            except TensorFormatError as exc:
                raise _bad(f"unreadable checkpoint: {exc}")
            # take every queue slot so in-flight synthesis finishes before
            # the swap and nothing runs against a half-replaced model
            for _ in range(queue_depth):
                if not sem.acquire(timeout=DRAIN_TIMEOUT):
                    raise HTTPException(status_code=503,
                                        detail="drain timed out")
                drained += 1
            state["gen"] = gen
        finally:
            for _ in range(drained):
                sem.release()
            reload_lock.release()
        return {"loaded": str(path), "config_hash": state["gen"].config.hash()}

    ui = ui_dir or os.environ.get("CIPS_UI_DIR")
    if ui is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui = str(candidate) if candidate.is_dir() else None
    if ui and Path(ui).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui, html=True), name="ui")

    return app
