"""Shared fixtures: small checkpoints reused across CLI/service tests."""

import pytest

from cips.generator import Generator, GeneratorConfig


def small_config(**overrides) -> GeneratorConfig:
    base = dict(width=16, n_blocks=2, fourier_dim=16, embed_dim=16,
                H=8, W=8, latent_dim=16, mapping_depth=2, mapping_hidden=16)
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture(scope="session")
def small_ckpt(tmp_path_factory):
    """Untrained 8x8 cartesian checkpoint (synthesis needs no training)."""
    path = tmp_path_factory.mktemp("ckpt") / "small.ckpt"
    Generator(small_config(), seed=0).save(path)
    return str(path)


@pytest.fixture(scope="session")
def cyl_ckpt(tmp_path_factory):
    """Untrained cylindrical checkpoint, circumference 12."""
    path = tmp_path_factory.mktemp("ckpt") / "cyl.ckpt"
    Generator(small_config(W=12, kind="cylindrical"), seed=0).save(path)
    return str(path)
