"""Image array conventions and PNG IO.

Synthesis produces float images in [-1, 1] (H, W, 3). Export clamps to
[0, 1] and quantizes to 8-bit; ingestion reverses the affine map. All
conversions are deterministic, so identical float images always yield
identical PNG bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

__all__ = ["to_unit", "to_u8", "from_u8", "save_png", "load_png",
           "center_crop_resize", "load_image_folder"]


def to_unit(img: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1] with clamping."""
    return np.clip((np.asarray(img, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


def to_u8(img: np.ndarray) -> np.ndarray:
    return np.rint(to_unit(img) * 255.0).astype(np.uint8)


def from_u8(img: np.ndarray) -> np.ndarray:
    """uint8 -> float in [-1, 1]."""
    return np.asarray(img, dtype=np.float64) / 255.0 * 2.0 - 1.0


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Write a [-1, 1] float image (H, W, 3) or (H, W) as PNG."""
    arr = to_u8(img)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG into a [-1, 1] float RGB array."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_u8(arr)


def center_crop_resize(img: np.ndarray, H: int, W: int) -> np.ndarray:
    """Center-crop to the target aspect ratio, then resize (bilinear)."""
    h, w = img.shape[:2]
    target = W / H
    if w / h > target:
        new_w = int(round(h * target))
        x0 = (w - new_w) // 2
        img = img[:, x0:x0 + new_w]
    else:
        new_h = int(round(w / target))
        y0 = (h - new_h) // 2
        img = img[y0:y0 + new_h]
    pil = Image.fromarray(to_u8(img), mode="RGB")
    pil = pil.resize((W, H), Image.BILINEAR)
    return from_u8(np.asarray(pil))


def load_image_folder(folder: str | Path, H: int, W: int) -> np.ndarray:
    """Load every PNG in a folder (sorted by name) as a (N, H, W, 3) batch."""
    paths = sorted(Path(folder).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG files under {folder}")
    return np.stack([center_crop_resize(load_png(p), H, W) for p in paths])
