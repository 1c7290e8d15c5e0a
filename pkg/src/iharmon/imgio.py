"""8-bit image and mask file I/O.

Values are scaled by 1/255 on read and round(255*v) on write. Masks are
stored as 8-bit single-channel PNG with 255 = selected.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

__all__ = [
    "read_image",
    "write_image",
    "read_mask",
    "write_mask",
    "decode_image",
    "decode_mask",
    "encode_png",
    "mask_to_png",
]


def read_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG/JPEG as H x W x 3 float in [0, 1]."""
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG/JPEG bytes as H x W x 3 float in [0, 1]."""
    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_image(path: str | Path, img: np.ndarray, quality: int = 95) -> None:
    """Write a float image as 8-bit PNG or JPEG (by extension)."""
    PILImage.fromarray(_to_u8(img)).save(path, quality=quality)


def encode_png(img: np.ndarray) -> bytes:
    """Encode a float image as PNG bytes."""
    buf = io.BytesIO()
    PILImage.fromarray(_to_u8(img)).save(buf, format="PNG")
    return buf.getvalue()


def read_mask(path: str | Path) -> np.ndarray:
    """Read an 8-bit single-channel PNG mask as H x W float in [0, 1]."""
    with PILImage.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def decode_mask(data: bytes) -> np.ndarray:
    """Decode mask PNG bytes as H x W float in [0, 1]."""
    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Write a float mask as 8-bit single-channel PNG (255 = selected)."""
    PILImage.fromarray(_mask_u8(mask), mode="L").save(path)


def mask_to_png(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(_mask_u8(mask), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _to_u8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def _mask_u8(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    return np.clip(np.round(mask * 255.0), 0, 255).astype(np.uint8)
