"""PNG and raw-buffer image I/O.

PNG files are 8-bit sRGB; decoding converts to linear float64 and encoding
converts back. The raw dump is a debugging format: one ASCII header line
``"W H 3"`` followed by row-major float32 little-endian pixel data.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

from .colorspace import linear_to_srgb, srgb_to_linear
from .errors import InvalidParameterError


def load_png(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit PNG as a linear float64 (H, W, 3) image in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(rgb)


def save_png(path: str | os.PathLike, image: np.ndarray) -> None:
    """Save a linear float (H, W, 3) image as an 8-bit sRGB PNG."""
    image = _require_rgb(image)
    srgb = np.rint(linear_to_srgb(image) * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(srgb, mode="RGB").save(path, format="PNG")


def load_mask_png(path: str | os.PathLike) -> np.ndarray:
    """Load a grayscale PNG as a boolean (H, W) mask (nonzero = True)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 0


def save_mask_png(path: str | os.PathLike, mask: np.ndarray) -> None:
    """Save a boolean (H, W) mask as a black/white PNG."""
    mask = np.asarray(mask, dtype=bool)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def save_raw(path: str | os.PathLike, image: np.ndarray) -> None:
    """Dump a linear float image as ``"W H 3\\n"`` + float32 LE pixel data."""
    image = _require_rgb(image)
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"{w} {h} 3\n".encode("ascii"))
        f.write(np.ascontiguousarray(image, dtype="<f4").tobytes())


def load_raw(path: str | os.PathLike) -> np.ndarray:
    """Read a raw dump written by :func:`save_raw`, as float64 (H, W, 3)."""
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 3 or header[2] != "3":
            raise InvalidParameterError(f"bad raw header in {path}: {header}")
        w, h = int(header[0]), int(header[1])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != h * w * 3:
        raise InvalidParameterError(
            f"raw payload size {data.size} != {h}x{w}x3 in {path}"
        )
    return data.reshape(h, w, 3).astype(np.float64)


def _require_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidParameterError(f"expected (H, W, 3) image, got {image.shape}")
    return image
