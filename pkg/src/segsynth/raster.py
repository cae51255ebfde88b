"""Small raster helpers: grayscale, rounding, bilinear resampling, PNG IO.

All image arrays are numpy, H x W (single channel) or H x W x 3 (RGB).
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """RGB uint8 -> float64 luma in [0, 1] (ITU-R BT.601 weights)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionMismatchError(f"expected HxWx3 RGB raster, got shape {image.shape}")
    rgb = image.astype(np.float64) / 255.0
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def round_half_up(values: np.ndarray) -> np.ndarray:
    # np.rint rounds half-to-even; file formats and the wire need half-up.
    return np.floor(values + 0.5)


def quantize_unit(values: np.ndarray) -> np.ndarray:
    """Map floats in [0, 1] to uint8 0..255, rounding half-up."""
    return round_half_up(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def bilinear_resize(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a float raster to (out_h, out_w).

    Half-pixel-center convention with edge clamping; resizing to the
    source dimensions returns the input bit-exactly.
    """
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"target dimensions must be positive, got {out_h}x{out_w}")
    in_h, in_w = data.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return data.copy()

    src_y = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    src_x = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5

    y0 = np.clip(np.floor(src_y).astype(np.int64), 0, in_h - 1)
    x0 = np.clip(np.floor(src_x).astype(np.int64), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(src_y - y0, 0.0, 1.0)
    wx = np.clip(src_x - x0, 0.0, 1.0)

    if data.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]

    top = data[y0][:, x0] * (1 - wx) + data[y0][:, x1] * wx
    bottom = data[y1][:, x0] * (1 - wx) + data[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def resize_rgb_u8(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an 8-bit RGB raster, rounding half-up."""
    if image.shape[:2] == (out_h, out_w):
        return image.copy()
    resized = bilinear_resize(image.astype(np.float64), out_h, out_w)
    return round_half_up(np.clip(resized, 0.0, 255.0)).astype(np.uint8)


def load_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_rgb_png(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(image, mode="RGB").save(path, format="PNG")


def save_gray_png(path: str | Path, gray_u8: np.ndarray) -> None:
    Image.fromarray(gray_u8, mode="L").save(path, format="PNG")


def encode_png(array: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(blob: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(blob)) as img:
        return np.asarray(img)
