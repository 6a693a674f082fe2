"""Color conversions shared by image I/O, metrics, hashing, and the mock editor.

All in-memory images are float64 linear RGB in [0, 1], shape (H, W, 3).
Luma / chroma use the Rec.601 weights applied directly to linear RGB; the
engine only ever compares quantities computed with the same convention, so
consistency matters more than colorimetric purity here.
"""

from __future__ import annotations

import numpy as np

# Rec.601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Rec.601 chroma rows (Cb, Cr), zero-centered.
_CB_ROW = np.array([-0.168735892, -0.331264108, 0.5])
_CR_ROW = np.array([0.5, -0.418687589, -0.081312411])


def srgb_to_linear(srgb: np.ndarray) -> np.ndarray:
    """Apply the sRGB EOTF (decode gamma) to values in [0, 1]."""
    srgb = np.asarray(srgb, dtype=np.float64)
    low = srgb <= 0.04045
    return np.where(low, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(linear: np.ndarray) -> np.ndarray:
    """Apply the sRGB OETF (encode gamma) to values in [0, 1]."""
    linear = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    low = linear <= 0.0031308
    return np.where(low, linear * 12.92, 1.055 * linear ** (1.0 / 2.4) - 0.055)


def luma(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an (H, W, 3) image, shape (H, W)."""
    return np.asarray(rgb, dtype=np.float64) @ LUMA_WEIGHTS


def chroma(rgb: np.ndarray) -> np.ndarray:
    """Zero-centered (Cb, Cr) chroma of an (..., 3) array, shape (..., 2)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.stack([rgb @ _CB_ROW, rgb @ _CR_ROW], axis=-1)


def luma_chroma_to_rgb(y: np.ndarray, cbcr: np.ndarray) -> np.ndarray:
    """Invert :func:`luma` / :func:`chroma`, clipping to [0, 1]."""
    y = np.asarray(y, dtype=np.float64)
    cb = cbcr[..., 0]
    cr = cbcr[..., 1]
    r = y + 1.402 * cr
    g = y - 0.344136286 * cb - 0.714136286 * cr
    b = y + 1.772 * cb
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def rotate_chroma(cbcr: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate (Cb, Cr) vectors by ``angle_rad`` (hue rotation)."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    cb = cbcr[..., 0] * c - cbcr[..., 1] * s
    cr = cbcr[..., 0] * s + cbcr[..., 1] * c
    return np.stack([cb, cr], axis=-1)
