"""TOML run configuration: [model], [train], [disc], [data] sections.

Configs are resolved either from an explicit path or from the bundled
presets (``paper-default``, ``desk``) by bare name.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .generator import GeneratorConfig
from .images import load_image_folder
from .training import Dataset, Discriminator, TrainConfig, make_synthetic_dataset

__all__ = [
    "ConfigError", "preset_path", "load_config",
    "generator_config_from", "generator_seed_from", "train_config_from",
    "discriminator_from", "dataset_from",
]

_PRESET_DIR = Path(__file__).parent / "presets"


class ConfigError(ValueError):
    """Malformed or unresolvable run configuration."""


def preset_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".toml") else name
    return _PRESET_DIR / f"{stem}.toml"


def load_config(ref: str | Path) -> dict:
    """Parse a TOML config from a path, or from a bundled preset name."""
    path = Path(ref)
    if not path.exists():
        candidate = preset_path(str(ref))
        if not candidate.exists():
            raise ConfigError(
                f"config {ref!r} is neither a file nor a bundled preset "
                f"(presets: {', '.join(sorted(p.stem for p in _PRESET_DIR.glob('*.toml')))})")
        path = candidate
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc


def _build(cls, section: dict, what: str, drop=()):
    known = {f.name for f in dataclasses.fields(cls)}
    cleaned = {k: v for k, v in section.items() if k not in drop}
    unknown = set(cleaned) - known
    if unknown:
        raise ConfigError(f"unknown [{what}] keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**cleaned)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{what}] section: {exc}") from exc


def generator_config_from(cfg: dict) -> GeneratorConfig:
    return _build(GeneratorConfig, cfg.get("model", {}), "model", drop=("seed",))


def generator_seed_from(cfg: dict) -> int:
    return int(cfg.get("model", {}).get("seed", 0))


def train_config_from(cfg: dict) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    if "patch_sigma_choices" in section:
        section["patch_sigma_choices"] = tuple(section["patch_sigma_choices"])
    return _build(TrainConfig, section, "train")


def discriminator_from(cfg: dict, H: int, W: int) -> Discriminator:
    section = dict(cfg.get("disc", {}))
    kind = section.pop("kind", "mlp")
    widths = tuple(section.pop("widths", (64,)))
    residual = bool(section.pop("residual", False))
    seed = int(section.pop("seed", 1))
    if section:
        raise ConfigError(f"unknown [disc] keys: {', '.join(sorted(section))}")
    try:
        return Discriminator(kind=kind, H=H, W=W, widths=widths,
                             residual=residual, seed=seed)
    except ValueError as exc:
        raise ConfigError(f"invalid [disc] section: {exc}") from exc


def dataset_from(cfg: dict) -> Dataset:
    section = dict(cfg.get("data", {}))
    source = section.get("source", "synthetic-solid")
    resolution = int(section.get("resolution", 16))
    if source in ("synthetic-solid", "synthetic-gradient"):
        return make_synthetic_dataset(source, n=int(section.get("n", 256)),
                                      resolution=resolution,
                                      seed=int(section.get("seed", 0)))
    if source == "image-folder":
        folder = section.get("path")
        if not folder:
            raise ConfigError("[data] source 'image-folder' needs a 'path'")
        images = load_image_folder(folder, resolution, resolution)
        return Dataset(images=images, source=f"image-folder:{folder}")
    raise ConfigError(f"unknown [data] source {source!r}")
