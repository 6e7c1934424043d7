"""Image loading and the patch-multiple resize policy."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .models import ImageDecodeError


def load_image_rgb(path: str | Path) -> np.ndarray:
    """Decode an image file to an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc


def resize_to_patch_multiple(
    image: np.ndarray, patch_size: int, short_side: int = 224
) -> np.ndarray:
    """Scale so the shorter side is ~`short_side`, both sides multiples of P.

    The shorter side is rounded to the nearest positive multiple of
    `patch_size`; the longer side keeps the aspect ratio and is then
    rounded down to a multiple (minimum one patch).
    """
    height, width = image.shape[:2]
    scale = short_side / min(height, width)
    new_h, new_w = height * scale, width * scale
    if height <= width:
        new_h = _nearest_multiple(new_h, patch_size)
        new_w = _floor_multiple(new_w, patch_size)
    else:
        new_w = _nearest_multiple(new_w, patch_size)
        new_h = _floor_multiple(new_h, patch_size)
    resized = Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR)
    return np.asarray(resized)


def _nearest_multiple(value: float, base: int) -> int:
    return max(base, int(round(value / base)) * base)


def _floor_multiple(value: float, base: int) -> int:
    return max(base, int(value // base) * base)
