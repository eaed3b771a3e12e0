"""Command-line interface: one subcommand per workflow.

Exit codes: 0 success, 2 usage error (unknown flags, missing checkpoint,
malformed config), 3 verification failure.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .analysis import (
    azimuthal_integration, fft2d, latent_lerp, magnitude_spectrum_avg,
    pca_embeddings, profile_to_csv, profiles_to_csv, spectrum_to_array,
)
from .autodiff import no_grad
from .encoding import CYLINDRICAL, CoordGrid
from .generator import (
    Generator, blend_style_field, latent_from_seed, layer_style_mix,
    synthesize_grid_threaded,
)
from .images import load_image_folder, save_png
from .sampling import (
    FoveaSpec, blend_alpha_points, cylinder_crop, fill_missing,
    foveated_sample, full_grid, lanczos_upsample, sparse_to_json,
)
from .tensorio import TensorFormatError, load_checkpoint, save_tensor
from .training import metrics_to_ndjson, train
from .verify import run_all


def _load_gen(ckpt: str) -> Generator:
    try:
        return Generator.load(ckpt)
    except FileNotFoundError:
        raise click.UsageError(f"checkpoint not found: {ckpt}")
    except TensorFormatError as exc:
        raise click.UsageError(f"unreadable checkpoint {ckpt}: {exc}")


def _load_cfg(ref: str) -> dict:
    try:
        return cfgmod.load_config(ref)
    except cfgmod.ConfigError as exc:
        raise click.UsageError(str(exc))


def _style(gen: Generator, seed: int) -> np.ndarray:
    z = latent_from_seed(seed, gen.config.latent_dim)
    return gen.map_latent(z).data


def _raster(gen: Generator, grid, w, threads: int) -> np.ndarray:
    return synthesize_grid_threaded(gen, grid, w, threads=threads)


@click.group()
@click.option("--threads", type=int, default=None,
              help="Cap synthesis worker threads (default: logical cores). "
                   "Outputs are identical for any value.")
@click.pass_context
def main(ctx: click.Context, threads: int | None) -> None:
    """Conditionally-independent pixel synthesis toolkit."""
    ctx.obj = {"threads": threads if threads and threads > 0
               else (os.cpu_count() or 1)}


# ---------------------------------------------------------------------------


@main.command(name="train")
@click.option("--config", "config_ref", default="desk", show_default=True,
              help="TOML config path or bundled preset name.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Checkpoint output path.")
@click.option("--metrics", "metrics_path", type=click.Path(), default=None,
              help="NDJSON metric stream output.")
@click.option("--steps", type=int, default=None, help="Override [train].steps.")
@click.option("--seed", type=int, default=None, help="Override [train].seed.")
def train_cmd(config_ref, out_path, metrics_path, steps, seed):
    """Train a generator adversarially (desk scale)."""
    cfg = _load_cfg(config_ref)
    gen_cfg = cfgmod.generator_config_from(cfg)
    gen = Generator(gen_cfg, seed=cfgmod.generator_seed_from(cfg))
    tc = cfgmod.train_config_from(cfg)
    if steps is not None:
        tc = dataclasses.replace(tc, steps=steps)
    if seed is not None:
        tc = dataclasses.replace(tc, seed=seed)
    side = tc.patch_K if tc.patch_enabled else gen_cfg.H
    disc = cfgmod.discriminator_from(cfg, H=side, W=side)
    dataset = cfgmod.dataset_from(cfg)
    if dataset.resolution != (gen_cfg.H, gen_cfg.W):
        raise click.UsageError(
            f"dataset resolution {dataset.resolution} != model "
            f"{(gen_cfg.H, gen_cfg.W)}")

    def progress(m):
        if m["step"] % tc.log_every == 0 or m["step"] == tc.steps:
            click.echo(f"step {m['step']:5d}  d_loss {m['d_loss']:.4f}  "
                       f"g_loss {m['g_loss']:.4f}  r1 {m['r1']:.5f}")

    metrics = train(gen, disc, dataset, tc, on_metrics=progress)
    gen.save(out_path)
    click.echo(f"saved checkpoint to {out_path}")
    if metrics_path:
        Path(metrics_path).write_text(metrics_to_ndjson(metrics))
        click.echo(f"wrote {len(metrics)} metric records to {metrics_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def sample(ctx, ckpt, seed, out_path):
    """Synthesize one full-resolution image from a seed."""
    gen = _load_gen(ckpt)
    c = gen.config
    img = gen.synthesize_image(c.H, c.W, latent_from_seed(seed, c.latent_dim))
    save_png(out_path, img)
    click.echo(f"wrote {c.H}x{c.W} sample (seed {seed}) to {out_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fraction", type=float, default=0.05, show_default=True)
@click.option("--center", type=(float, float), default=None,
              help="Fovea center (x, y); default image center.")
@click.option("--sigma", type=float, default=None,
              help="Gaussian spread; default 0.4*min(H, W).")
@click.option("--rng-seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--sparse-out", type=click.Path(), default=None,
              help="Also write the raw sparse pixels as JSON.")
@click.pass_context
def foveate(ctx, ckpt, seed, fraction, center, sigma, rng_seed, out_path,
            sparse_out):
    """Foveated synthesis: sample a Gaussian pixel budget, fill the rest."""
    gen = _load_gen(ckpt)
    c = gen.config
    try:
        spec = FoveaSpec(fraction=fraction, center=center, sigma=sigma,
                         rng_seed=rng_seed)
        grid = foveated_sample(spec, c.H, c.W)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    w = _style(gen, seed)
    colors = _raster(gen, grid, w, ctx.obj["threads"])
    click.echo(f"synthesized {grid.n_points} pixels "
               f"({fraction:g} of {c.H * c.W})")
    if sparse_out:
        Path(sparse_out).write_text(sparse_to_json(grid, colors))
        click.echo(f"wrote sparse pixels to {sparse_out}")
    filled = fill_missing(grid.points, colors, c.H, c.W)
    save_png(out_path, filled)
    click.echo(f"wrote filled image to {out_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--factor", type=int, default=4, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Side-by-side strip: model-dense left, Lanczos right.")
@click.pass_context
def upsample(ctx, ckpt, seed, factor, out_path):
    """Beyond-training-resolution synthesis next to a Lanczos baseline."""
    if factor < 1:
        raise click.UsageError("--factor must be >= 1")
    gen = _load_gen(ckpt)
    c = gen.config
    z = latent_from_seed(seed, c.latent_dim)
    native = gen.synthesize_image(c.H, c.W, z)
    dense = gen.synthesize_image(c.H * factor, c.W * factor, z)
    lanczos = lanczos_upsample(native, float(factor))
    strip = np.concatenate([dense, lanczos], axis=1)
    save_png(out_path, strip)
    click.echo(f"wrote dense|lanczos strip ({strip.shape[0]}x{strip.shape[1]}) "
               f"to {out_path}")


@main.command()
@click.option("--ckpt", required=True, help="Cylindrical checkpoint.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--pan-width", type=int, default=None,
              help="Panorama circumference; defaults to the model W. With a "
                   "coordinate-embedding table the circumference is fixed by "
                   "the table, so overrides need an NE checkpoint.")
@click.option("--crop-w", type=int, default=None,
              help="Sweep crop width; default pan width / 4.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def panorama(ctx, ckpt, seed, pan_width, crop_w, out_path):
    """Sweep cylindrical crops around the full circumference and stitch."""
    gen = _load_gen(ckpt)
    c = gen.config
    if c.kind != CYLINDRICAL:
        raise click.UsageError(
            "panorama needs a cylindrical checkpoint (model.kind = 'cylindrical')")
    W_pan = pan_width or c.W
    if W_pan != c.W and gen.table is not None:
        raise click.UsageError(
            f"this checkpoint's embedding table fixes the circumference at "
            f"{c.W}; --pan-width {W_pan} would leave its domain")
    cw = crop_w or max(1, W_pan // 4)
    w = _style(gen, seed)
    strips = []
    for x0 in range(0, W_pan, cw):
        width = min(cw, W_pan - x0)
        grid = cylinder_crop(W_pan, c.H, width, c.H, x0, 0)
        px = _raster(gen, grid, w, ctx.obj["threads"])
        strips.append(px.reshape(c.H, width, 3))
    pano = np.concatenate(strips, axis=1)
    save_png(out_path, pano)
    click.echo(f"wrote {c.H}x{W_pan} panorama ({len(strips)} crops) to {out_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--seed-a", type=int, default=0, show_default=True)
@click.option("--seed-b", type=int, default=1, show_default=True)
@click.option("--mode", type=click.Choice(["horizontal-linear", "radial",
                                           "constant"]),
              default="horizontal-linear", show_default=True)
@click.option("--center", type=(float, float), default=None)
@click.option("--radius", type=float, default=None)
@click.option("--value", type=float, default=0.0,
              help="Alpha for --mode constant.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def blend(ctx, ckpt, seed_a, seed_b, mode, center, radius, value, out_path):
    """Pixel-wise style blending between two seeds."""
    gen = _load_gen(ckpt)
    c = gen.config
    grid = full_grid(c.H, c.W)
    if c.kind == CYLINDRICAL:
        grid = CoordGrid(kind=CYLINDRICAL, H=grid.H, W=grid.W, points=grid.points)
    try:
        alpha = blend_alpha_points(grid.points, c.H, c.W, mode=mode,
                                   center=center, radius=radius, value=value)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    field = blend_style_field(_style(gen, seed_a), _style(gen, seed_b), alpha)
    with no_grad():
        px = gen.pixelwise_style_synthesize(grid, field).data
    save_png(out_path, px.reshape(c.H, c.W, 3))
    click.echo(f"wrote {mode} blend of seeds {seed_a}/{seed_b} to {out_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--seed-a", type=int, default=0, show_default=True)
@click.option("--seed-b", type=int, default=1, show_default=True)
@click.option("--blocks", default="", help="1-indexed range like 2-3 "
                                           "(empty: plain seed-a synthesis).")
@click.option("--out", "out_path", required=True, type=click.Path())
def mix(ckpt, seed_a, seed_b, blocks, out_path):
    """Layer-wise style mixing: seed-b styles at the chosen blocks."""
    gen = _load_gen(ckpt)
    block_list: list[int] = []
    if blocks:
        try:
            if "-" in blocks:
                lo, hi = (int(p) for p in blocks.split("-", 1))
                block_list = list(range(lo, hi + 1))
            else:
                block_list = [int(blocks)]
        except ValueError:
            raise click.UsageError(f"cannot parse --blocks {blocks!r}")
    try:
        img = layer_style_mix(gen, _style(gen, seed_a), _style(gen, seed_b),
                              block_list)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    save_png(out_path, img)
    click.echo(f"wrote mix (blocks {blocks or 'none'}) to {out_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--seed-a", type=int, default=0, show_default=True)
@click.option("--seed-b", type=int, default=1, show_default=True)
@click.option("--steps", type=int, default=8, show_default=True)
@click.option("--space", type=click.Choice(["w", "z"]), default="w",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Horizontal strip PNG of all frames.")
def interpolate(ckpt, seed_a, seed_b, steps, space, out_path):
    """Latent morph strip between two seeds."""
    gen = _load_gen(ckpt)
    c = gen.config
    try:
        frames = latent_lerp(gen, latent_from_seed(seed_a, c.latent_dim),
                             latent_from_seed(seed_b, c.latent_dim),
                             steps=steps, space=space)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    save_png(out_path, np.concatenate(frames, axis=1))
    click.echo(f"wrote {steps}-frame {space}-space morph to {out_path}")


@main.command()
@click.option("--ckpt", required=True)
@click.option("--samples", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-spectrum", type=click.Path(), default=None,
              help="Log-magnitude heatmap PNG.")
@click.option("--out-profile", type=click.Path(), default=None,
              help="Azimuthal profile CSV.")
@click.option("--out-tensor", type=click.Path(), default=None,
              help="Raw averaged spectrum as CTNSR01.")
@click.option("--real", "real_folder", type=click.Path(exists=True),
              default=None, help="PNG folder: emit paired real/generated "
                                 "profiles in the CSV.")
def spectrum(ckpt, samples, seed, out_spectrum, out_profile, out_tensor,
             real_folder):
    """Average magnitude spectrum and azimuthal power profile of samples."""
    if samples < 1:
        raise click.UsageError("--samples must be >= 1")
    gen = _load_gen(ckpt)
    c = gen.config
    rng = np.random.default_rng(seed)
    imgs = np.stack([gen.synthesize_image(c.H, c.W, rng.normal(size=c.latent_dim))
                     for _ in range(samples)])
    spec = magnitude_spectrum_avg(imgs)

    gray = imgs.mean(axis=-1)
    power = np.zeros((c.H, c.W))
    for g in gray:
        power += np.abs(fft2d(g).data) ** 2
    prof = azimuthal_integration(power / samples)

    if out_spectrum:
        lo, hi = spec.data.min(), spec.data.max()
        span = (hi - lo) if hi > lo else 1.0
        save_png(out_spectrum, (spec.data - lo) / span * 2.0 - 1.0)
        click.echo(f"wrote spectrum heatmap to {out_spectrum}")
    if out_profile:
        if real_folder:
            real = load_image_folder(real_folder, c.H, c.W)
            rpower = np.zeros((c.H, c.W))
            for g in real.mean(axis=-1):
                rpower += np.abs(fft2d(g).data) ** 2
            rprof = azimuthal_integration(rpower / len(real))
            Path(out_profile).write_text(
                profiles_to_csv({"real": rprof, "generated": prof}))
        else:
            Path(out_profile).write_text(profile_to_csv(prof))
        click.echo(f"wrote azimuthal profile to {out_profile}")
    if out_tensor:
        save_tensor(out_tensor, spectrum_to_array(spec))
        click.echo(f"wrote spectrum tensor to {out_tensor}")
    click.echo(f"averaged over {samples} samples")


@main.command(name="pca-embed")
@click.option("--ckpt", required=True)
@click.option("-k", "--components", "k", type=int, default=3, show_default=True)
@click.option("--out-prefix", required=True,
              help="Writes <prefix>-c<i>.png, <prefix>-components.tnsr, "
                   "<prefix>-explained.csv")
def pca_embed(ckpt, k, out_prefix):
    """PCA of the coordinate embedding table, exported as images."""
    gen = _load_gen(ckpt)
    if gen.table is None:
        raise click.UsageError("checkpoint has no embedding table (NE variant)")
    try:
        res = pca_embeddings(gen.table, k=k)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    for i in range(k):
        save_png(f"{out_prefix}-c{i + 1}.png",
                 res.projections_norm[:, :, i] * 2.0 - 1.0)
    save_tensor(f"{out_prefix}-components.tnsr", res.components)
    lines = ["component,explained_variance"]
    lines += [f"{i + 1},{float(v)!r}" for i, v in enumerate(res.explained)]
    Path(f"{out_prefix}-explained.csv").write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {k} component images and stats under {out_prefix}-*")


@main.command()
@click.option("--config", "config_ref", default="paper-default",
              show_default=True, help="TOML config path or preset name.")
def params(config_ref):
    """Parameter-count table for a model configuration."""
    cfg = _load_cfg(config_ref)
    gen_cfg = cfgmod.generator_config_from(cfg)
    gen = Generator(gen_cfg, seed=cfgmod.generator_seed_from(cfg))
    counts = gen.count_params()
    width = max(len(k) for k in counts)
    for key in ("mapping", "fourier", "embeddings", "backbone", "rgb_heads"):
        click.echo(f"{key.ljust(width)}  {counts[key]:>12,}")
    click.echo(f"{'total'.ljust(width)}  {counts['total']:>12,}")


@main.command()
def verify():
    """Run the full invariant suite; exit 3 if anything fails."""
    failures = 0

    def render(res):
        nonlocal failures
        mark = "ok " if res.ok else "FAIL"
        click.echo(f"[{mark}] {res.name}" + (f" - {res.detail}" if res.detail else ""))
        failures += 0 if res.ok else 1

    run_all(on_result=render)
    if failures:
        click.echo(f"{failures} check(s) failed")
        sys.exit(3)
    click.echo("all checks passed")


@main.command()
@click.option("--ckpt", default=None, help="Checkpoint (or env CIPS_CKPT).")
@click.option("--addr", default=None, help="host:port (or env CIPS_ADDR); "
                                           "default 127.0.0.1:8000.")
@click.option("--pixel-cap", type=int, default=2 ** 20, show_default=True)
@click.option("--queue-depth", type=int, default=4, show_default=True)
def serve(ckpt, addr, pixel_cap, queue_depth):
    """Serve the inference HTTP API over a checkpoint."""
    import uvicorn

    from .service import create_app

    ckpt = ckpt or os.environ.get("CIPS_CKPT")
    addr = addr or os.environ.get("CIPS_ADDR") or "127.0.0.1:8000"
    host, _, port_s = addr.rpartition(":")
    if not host or not port_s.isdigit():
        raise click.UsageError(f"--addr must be host:port, got {addr!r}")
    app = create_app(ckpt_path=ckpt, pixel_cap=pixel_cap,
                     queue_depth=queue_depth)
    uvicorn.run(app, host=host, port=int(port_s), log_level="info")


@main.command()
@click.option("--ckpt", required=True)
def info(ckpt):
    """Print checkpoint metadata as JSON."""
    try:
        meta, tensors = load_checkpoint(ckpt)
    except FileNotFoundError:
        raise click.UsageError(f"checkpoint not found: {ckpt}")
    except TensorFormatError as exc:
        raise click.UsageError(f"unreadable checkpoint {ckpt}: {exc}")
    out = {
        "format": meta.get("format"),
        "version": meta.get("version"),
        "seed": meta.get("seed"),
        "config_hash": meta.get("config_hash"),
        "config": meta.get("config"),
        "n_tensors": len(tensors),
        "n_parameters": int(sum(t.size for t in tensors.values())),
        "file_bytes": Path(ckpt).stat().st_size,
    }
    click.echo(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
