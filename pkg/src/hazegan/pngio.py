"""8-bit PNG in/out. Internal math is always float in [0, 1]; writes
quantize with round(v * 255) and reads dequantize as v / 255."""

from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageReadError(ValueError):
    pass


def write_png(path: str, img: np.ndarray) -> None:
    """Write a (C, H, W) float image in [0, 1]; C must be 1 or 3."""
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"write_png expects (1|3, H, W), got shape {img.shape}")
    u8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    if u8.shape[0] == 1:
        pil = Image.fromarray(u8[0], mode="L")
    else:
        pil = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    pil.save(path, format="PNG")


def read_png(path: str, gray: bool = False) -> np.ndarray:
    """Read any PIL-supported image as float32 (3, H, W) (or (1, H, W))."""
    try:
        with Image.open(path) as pil:
            pil = pil.convert("L" if gray else "RGB")
            arr = np.asarray(pil, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc
    if gray:
        return arr[None]
    return arr.transpose(2, 0, 1).copy()
