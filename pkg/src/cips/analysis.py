"""Spectral forensics, embedding PCA, and latent interpolation.

The Fourier pieces delegate to numpy's FFT (unitary normalization) and
only add the conventions used throughout: DC-centered layout, channel-mean
grayscale, log-magnitude in dB, and floor-of-radius azimuthal binning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, no_grad
from .encoding import CYLINDRICAL, CoordEmbeddingTable, CoordGrid
from .generator import Generator
from .sampling import full_grid

__all__ = [
    "Spectrum", "AIProfile", "PCAResult",
    "fft2d", "ifft2d", "magnitude_spectrum_avg", "azimuthal_integration",
    "pca_embeddings", "latent_lerp",
    "profile_to_csv", "profiles_to_csv", "spectrum_to_array",
]


@dataclass
class Spectrum:
    """DC-centered H×W spectrum; complex for raw transforms, real (dB) for
    averaged magnitude displays. ``count`` = images averaged over."""
    data: np.ndarray
    count: int = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def power(self) -> np.ndarray:
        """|F|² for complex content; real content is returned unchanged
        (it is already a power or log-magnitude surface)."""
        if np.iscomplexobj(self.data):
            return (self.data.conj() * self.data).real
        return self.data


@dataclass
class AIProfile:
    """Mean spectral power per integer radius from the DC bin.

    ``radial_power``/``counts`` cover every radius on the grid so the
    population-weighted sum reproduces the total power exactly;
    ``profile`` is the ⌊min(H,W)/2⌋-bin prefix used for plots, where all
    rings are complete.
    """
    radial_power: np.ndarray
    counts: np.ndarray
    n_display: int

    @property
    def profile(self) -> np.ndarray:
        return self.radial_power[:self.n_display]

    @property
    def total_power(self) -> float:
        return float(np.dot(self.radial_power, self.counts))


def _require_pow2(n: int, axis: str) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"{axis} extent {n} is not a power of two")


def fft2d(channel: np.ndarray) -> Spectrum:
    """Unitary 2D DFT of one real channel, DC moved to the center."""
    arr = np.asarray(channel, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D channel, got shape {arr.shape}")
    _require_pow2(arr.shape[0], "H")
    _require_pow2(arr.shape[1], "W")
    return Spectrum(np.fft.fftshift(np.fft.fft2(arr, norm="ortho")), count=1)


def ifft2d(spectrum: Spectrum) -> np.ndarray:
    """Inverse of fft2d; returns the complex grid (real-input round trips
    carry ~1e-16 imaginary dust)."""
    return np.fft.ifft2(np.fft.ifftshift(spectrum.data), norm="ortho")


def magnitude_spectrum_avg(images: np.ndarray) -> Spectrum:
    """Mean log-magnitude spectrum, 20·log10(|F|+1e-12), of channel-mean
    grayscale images. images: (N, H, W, 3) or (N, H, W)."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., None]  # (N, H, W) treated as single-channel
    if arr.ndim != 4 or arr.shape[0] < 1:
        raise ValueError(f"expected (N, H, W, C) with N >= 1, got {arr.shape}")
    gray = arr.mean(axis=-1)
    acc = np.zeros(gray.shape[1:], dtype=np.float64)
    for img in gray:
        mag = np.abs(fft2d(img).data)
        acc += 20.0 * np.log10(mag + 1e-12)
    return Spectrum(acc / gray.shape[0], count=int(gray.shape[0]))


def azimuthal_integration(spectrum: Spectrum | np.ndarray) -> AIProfile:
    """Mean power per integer radius ⌊distance to the DC bin⌋.

    Accepts a Spectrum (complex data is converted to power |F|²) or a raw
    DC-centered power array.
    """
    power = spectrum.power() if isinstance(spectrum, Spectrum) else np.asarray(spectrum, dtype=np.float64)
    if power.ndim != 2:
        raise ValueError(f"expected a 2D power spectrum, got shape {power.shape}")
    H, W = power.shape
    cy, cx = H // 2, W // 2
    ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    radii = np.floor(np.sqrt((ys - cy) ** 2.0 + (xs - cx) ** 2.0)).astype(np.int64)
    n_bins = int(radii.max()) + 1
    counts = np.bincount(radii.ravel(), minlength=n_bins)
    sums = np.bincount(radii.ravel(), weights=power.ravel(), minlength=n_bins)
    means = sums / np.maximum(counts, 1)
    return AIProfile(radial_power=means, counts=counts.astype(np.float64),
                     n_display=min(H, W) // 2)


# ---------------------------------------------------------------------------
# PCA of coordinate embeddings

@dataclass
class PCAResult:
    components: np.ndarray        # (k, d), orthonormal rows (zero rows pad past rank)
    explained: np.ndarray         # (k,), non-increasing eigenvalues
    projections: np.ndarray       # (H, W, k), mean-centered data onto components
    projections_norm: np.ndarray  # (H, W, k), min-max normalized per component
    mean: np.ndarray              # (d,)


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry (first on ties) is positive."""
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def pca_embeddings(table: CoordEmbeddingTable, k: int = 3) -> PCAResult:
    """Principal components of the per-pixel embedding vectors.

    Mean-centered eigendecomposition of the d×d covariance; rows of the
    flat table are samples. Components past the data rank are zero rows
    (with a warning) rather than arbitrary null-space directions.
    """
    X = table.table.data
    P, d = X.shape
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must be in [1, {d}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / max(P - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]

    tol = eigvals[0] * 1e-12 if eigvals[0] > 0 else 0.0
    rank = int(np.sum(eigvals > tol))
    comps = np.zeros((k, d))
    n_real = min(k, rank)
    for i in range(n_real):
        comps[i] = _canonical_sign(eigvecs[:, i])
    if n_real < k:
        warnings.warn(
            f"requested k={k} components but data rank is {rank}; "
            f"padding {k - n_real} with zeros", RuntimeWarning, stacklevel=2)

    proj = Xc @ comps.T
    proj_img = proj.reshape(table.H, table.W, k)
    lo = proj_img.min(axis=(0, 1), keepdims=True)
    hi = proj_img.max(axis=(0, 1), keepdims=True)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return PCAResult(components=comps, explained=eigvals[:k].copy(),
                     projections=proj_img,
                     projections_norm=(proj_img - lo) / span, mean=mean)


# ---------------------------------------------------------------------------
# latent interpolation

def latent_lerp(gen: Generator, zA: np.ndarray, zB: np.ndarray,
                steps: int, space: str = "w") -> list[np.ndarray]:
    """Linear morph between two latents; returns ``steps`` images.

    space="w" interpolates mapped style vectors (the default); space="z"
    interpolates raw latents before mapping. Endpoints reuse the inputs
    untouched, so frame 0 and frame -1 reproduce the endpoint syntheses
    bit-exactly.
    """
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    if space not in ("w", "z"):
        raise ValueError(f"space must be 'w' or 'z', got {space!r}")
    c = gen.config
    zA = np.asarray(zA, dtype=np.float64)
    zB = np.asarray(zB, dtype=np.float64)

    grid = full_grid(c.H, c.W)
    if c.kind == CYLINDRICAL:
        grid = CoordGrid(kind=CYLINDRICAL, H=grid.H, W=grid.W, points=grid.points)
    frames = []
    with no_grad():
        if space == "w":
            wA = gen.map_latent(zA).data
            wB = gen.map_latent(zB).data
        for i in range(steps):
            alpha = i / (steps - 1)
            if space == "z":
                z = zA if alpha == 0.0 else (zB if alpha == 1.0 else
                                             (1.0 - alpha) * zA + alpha * zB)
                w = gen.map_latent(z).data
            else:
                w = wA if alpha == 0.0 else (wB if alpha == 1.0 else
                                             (1.0 - alpha) * wA + alpha * wB)
            px = gen.synthesize_pixels(grid, Tensor(w)).data
            frames.append(px.reshape(c.H, c.W, 3))
    return frames


# ---------------------------------------------------------------------------
# exports

def profile_to_csv(profile: AIProfile) -> str:
    lines = ["radius,power"]
    for r, p in enumerate(profile.profile):
        lines.append(f"{r},{float(p)!r}")
    return "\n".join(lines) + "\n"


def profiles_to_csv(named: dict[str, AIProfile]) -> str:
    """Paired profiles (e.g. real vs generated) on a shared radius axis."""
    if not named:
        raise ValueError("no profiles given")
    names = list(named)
    n = min(p.n_display for p in named.values())
    lines = ["radius," + ",".join(names)]
    for r in range(n):
        vals = ",".join(repr(float(named[k].profile[r])) for k in names)
        lines.append(f"{r},{vals}")
    return "\n".join(lines) + "\n"


def spectrum_to_array(spec: Spectrum) -> np.ndarray:
    """Real f8 tensor for CTNSR01 export: (2, H, W) real/imag stack for
    complex spectra, (H, W) as-is for real ones."""
    if np.iscomplexobj(spec.data):
        return np.stack([spec.data.real, spec.data.imag])
    return np.asarray(spec.data, dtype=np.float64)
