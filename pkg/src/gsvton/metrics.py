"""Pixel-level quality metrics: PSNR and windowed SSIM, plus report plumbing.

SSIM uses an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1,
computed on Rec.601 luma over the valid (fully-covered) region. Learned
metrics (FID, LPIPS, CLIP similarities) need trained networks and are out
of scope; the report format keeps named slots so externally computed values
can be merged into comparison tables.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .colorspace import luma
from .errors import DimensionMismatchError, InvalidParameterError

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 99."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM on luma; symmetric in its arguments."""
    a, b = _check_pair(a, b)
    x = luma(a) if a.ndim == 3 else a
    y = luma(b) if b.ndim == 3 else b
    return float(np.mean(ssim_map(x, y)[0]))


def gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized sampled Gaussian taps of odd length ``size``."""
    radius = (size - 1) // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    return taps / taps.sum()


def filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2D image with a 1D kernel."""
    k = len(kernel)
    tmp = sliding_window_view(img, k, axis=1) @ kernel
    return sliding_window_view(tmp, k, axis=0) @ kernel


def filter_adjoint(weights: np.ndarray, kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`filter_valid` mapping valid-size weights back to ``shape``."""
    k = len(kernel)
    padded = np.zeros(shape)
    padded[: weights.shape[0], : weights.shape[1]] = weights
    # full correlation with the (symmetric) kernel == zero-pad + valid pass
    full = np.zeros((shape[0] + 2 * (k - 1), shape[1] + 2 * (k - 1)))
    full[k - 1: k - 1 + shape[0], k - 1: k - 1 + shape[1]] = padded
    out = filter_valid(full, kernel)
    return out[: shape[0], : shape[1]]


def ssim_window_for(shape: tuple[int, int]) -> int:
    """Window size for an image shape, shrunk (with a warning) when small."""
    win = min(SSIM_WINDOW, shape[0], shape[1])
    if win % 2 == 0:
        win -= 1
    if win < 1:
        raise InvalidParameterError(f"image too small for SSIM: {shape}")
    if win < SSIM_WINDOW:
        warnings.warn(
            f"image {shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window; "
            f"using {win}x{win}",
            stacklevel=3,
        )
    return win


def ssim_map(x: np.ndarray, y: np.ndarray):
    """Local SSIM map over the valid region plus the intermediates.

    Returns ``(map, parts)`` where ``parts`` carries the filtered moments
    needed by gradient code: ux, uy, vxy-terms and the kernel.
    """
    if x.shape != y.shape:
        raise DimensionMismatchError(f"luma shapes differ: {x.shape} vs {y.shape}")
    win = ssim_window_for(x.shape)
    kernel = gaussian_kernel(win)
    ux = filter_valid(x, kernel)
    uy = filter_valid(y, kernel)
    uxx = filter_valid(x * x, kernel)
    uyy = filter_valid(y * y, kernel)
    uxy = filter_valid(x * y, kernel)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    a1 = 2.0 * ux * uy + c1
    a2 = 2.0 * vxy + c2
    b1 = ux * ux + uy * uy + c1
    b2 = vx + vy + c2
    smap = (a1 * a2) / (b1 * b2)
    parts = {
        "kernel": kernel, "ux": ux, "uy": uy, "a1": a1, "a2": a2,
        "b1": b1, "b2": b2, "map": smap,
    }
    return smap, parts


def ssim_luma_gradient(x: np.ndarray, y: np.ndarray):
    """Mean-SSIM value and its gradient with respect to the luma plane ``x``."""
    smap, p = ssim_map(x, y)
    n = smap.size
    b1b2 = p["b1"] * p["b2"]
    ds_da1 = p["a2"] / b1b2
    ds_da2 = p["a1"] / b1b2
    ds_db1 = -smap / p["b1"]
    ds_db2 = -smap / p["b2"]
    ux, uy = p["ux"], p["uy"]
    w_ux = (ds_da1 * 2.0 * uy + ds_da2 * (-2.0 * uy)
            + ds_db1 * 2.0 * ux + ds_db2 * (-2.0 * ux)) / n
    w_uxx = ds_db2 / n
    w_uxy = ds_da2 * 2.0 / n
    kernel = p["kernel"]
    grad = (filter_adjoint(w_ux, kernel, x.shape)
            + 2.0 * x * filter_adjoint(w_uxx, kernel, x.shape)
            + y * filter_adjoint(w_uxy, kernel, x.shape))
    return float(np.mean(smap)), grad


@dataclass
class MetricReport:
    """Per-view and aggregate quality numbers for one image pairing."""

    dataset_id: str
    pairing: str  # which stages / sources were compared
    per_view_psnr: dict[int, float] = field(default_factory=dict)
    per_view_ssim: dict[int, float] = field(default_factory=dict)
    mean_psnr: float = 0.0
    mean_ssim: float = 0.0
    # slots for externally computed learned metrics (not produced here)
    external: dict[str, float | None] = field(
        default_factory=lambda: {"fid": None, "lpips": None,
                                 "clip_text_image": None, "clip_image_image": None}
    )

    @staticmethod
    def from_pairs(pairs: dict[int, tuple[np.ndarray, np.ndarray]],
                   dataset_id: str, pairing: str) -> "MetricReport":
        report = MetricReport(dataset_id=dataset_id, pairing=pairing)
        for view_index, (a, b) in sorted(pairs.items()):
            report.per_view_psnr[view_index] = psnr(a, b)
            report.per_view_ssim[view_index] = ssim(a, b)
        if pairs:
            report.mean_psnr = float(np.mean(list(report.per_view_psnr.values())))
            report.mean_ssim = float(np.mean(list(report.per_view_ssim.values())))
        return report

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "pairing": self.pairing,
            "per_view": {
                str(v): {"psnr": self.per_view_psnr[v], "ssim": self.per_view_ssim[v]}
                for v in sorted(self.per_view_psnr)
            },
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "external": self.external,
        }

    def save_json(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def save_csv(self, path) -> None:
        lines = ["view,psnr,ssim"]
        for v in sorted(self.per_view_psnr):
            lines.append(f"{v},{self.per_view_psnr[v]:.6f},{self.per_view_ssim[v]:.6f}")
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f}")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n")


def _check_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise InvalidParameterError(f"expected 2D or 3D image, got shape {a.shape}")
    return a, b
