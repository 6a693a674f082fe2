"""Screen-space projection and front-to-back alpha compositing.

The renderer projects every Gaussian with the affine (EWA) approximation of
the perspective map, sorts the resulting splats globally by camera-space
depth (ties broken by source index), and composites them per pixel. A splat
contributes to a pixel only where its alpha reaches 1/255; per-pixel alpha
is clamped at 0.99. Both constants and the 0.3 px^2 low-pass dilation match
common splatting practice. Everything is plain numpy and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .scene import CameraView, GaussianCloud, covariance_batch, sh_basis

ALPHA_CLAMP = 0.99
ALPHA_CUTOFF = 1.0 / 255.0
LOWPASS_PX2 = 0.3


@dataclass(frozen=True)
class RenderConfig:
    """Rendering knobs; defaults are the conventional splatting values."""

    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    near_plane: float = 0.01


@dataclass(frozen=True)
class Splat2D:
    """A Gaussian projected to screen space."""

    mean2d: np.ndarray  # (2,) pixels
    cov2d: np.ndarray  # (2, 2) pixels^2, low-pass dilated
    depth: float  # camera-space z
    color: np.ndarray  # (3,) rgb at this view direction
    alpha_base: float  # opacity
    source_index: int


@dataclass(frozen=True)
class RenderedImage:
    """Composited view: linear rgb plus the per-pixel residual transmittance."""

    pixels: np.ndarray  # (H, W, 3) in [0, 1]
    final_transmittance: np.ndarray  # (H, W) in [0, 1]

    @property
    def accumulated_weight(self) -> np.ndarray:
        return 1.0 - self.final_transmittance


@dataclass
class SplatRaster:
    """Per-splat rasterization record (internal; consumed by the optimizer)."""

    source_index: int
    order: int  # rank in the global depth sort
    y0: int
    y1: int  # inclusive
    x0: int
    x1: int  # inclusive
    alpha: np.ndarray  # (h, w) effective alpha (cutoff + clamp applied)
    gauss: np.ndarray  # (h, w) raw exp(-m/2) before opacity
    grad_mask: np.ndarray  # (h, w) True where alpha responds to parameters
    transmittance_in: np.ndarray | None  # (h, w) T before this splat, if recorded
    mean2d: np.ndarray
    cov2d: np.ndarray
    inv_cov: np.ndarray
    v_cam: np.ndarray  # (3, 3) world covariance rotated into camera axes
    t_cam: np.ndarray  # (3,) camera-space center
    depth: float
    color: np.ndarray  # (3,) clamped
    color_raw: np.ndarray  # (3,) before the [0, 1] clamp
    alpha_base: float
    view_dir: np.ndarray  # (3,) unit, camera center -> gaussian
    view_dist: float


@dataclass
class RasterResult:
    image: RenderedImage
    splats: list[SplatRaster] = field(default_factory=list)


def _project_cloud(cloud: GaussianCloud, cam: CameraView, near: float):
    """Batch-project a cloud; returns per-gaussian arrays plus a validity mask."""
    arrays = cloud.arrays()
    n = len(cloud)

    rot = cam.rotation
    t = arrays.positions @ rot.T + cam.translation  # (N, 3) camera space
    valid = t[:, 2] > near

    fx, fy = cam.focal
    cx, cy = cam.principal_point
    z = np.where(valid, t[:, 2], 1.0)  # placeholder for culled rows
    mean2d = np.stack([fx * t[:, 0] / z + cx, fy * t[:, 1] / z + cy], axis=1)

    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = fx / z
    jac[:, 0, 2] = -fx * t[:, 0] / z**2
    jac[:, 1, 1] = fy / z
    jac[:, 1, 2] = -fy * t[:, 1] / z**2

    sigma = covariance_batch(arrays.rotations, arrays.scales)
    v_cam = rot[None] @ sigma @ rot.T[None]  # (N, 3, 3)
    cov2d = jac @ v_cam @ np.swapaxes(jac, 1, 2)
    cov2d[:, 0, 0] += LOWPASS_PX2
    cov2d[:, 1, 1] += LOWPASS_PX2

    centers = arrays.positions - cam.center
    dist = np.linalg.norm(centers, axis=1)
    dist = np.where(dist > 0, dist, 1.0)
    view_dirs = centers / dist[:, None]
    basis = sh_basis(view_dirs, cloud.sh_degree)  # (N, K)
    color_raw = np.einsum("nk,nkc->nc", basis, arrays.sh_coeffs) + 0.5
    colors = np.clip(color_raw, 0.0, 1.0)

    return {
        "t": t,
        "valid": valid,
        "mean2d": mean2d,
        "jac": jac,
        "v_cam": v_cam,
        "cov2d": cov2d,
        "colors": colors,
        "color_raw": color_raw,
        "view_dirs": view_dirs,
        "view_dist": dist,
        "opacities": arrays.opacities,
    }


def _footprint_radius(cov2d: np.ndarray, alpha_base: float) -> float:
    """Pixel radius beyond which alpha is guaranteed below the cutoff."""
    if alpha_base * 255.0 <= 1.0:
        return 0.0
    a, b, c = cov2d[0, 0], cov2d[0, 1], cov2d[1, 1]
    mid = 0.5 * (a + c)
    det = a * c - b * b
    lam_max = mid + np.sqrt(max(mid * mid - det, 0.0))
    return float(np.sqrt(2.0 * np.log(255.0 * alpha_base) * lam_max))


def project_gaussian(gaussian, cam: CameraView, near: float = RenderConfig.near_plane):
    """Project one Gaussian; returns a :class:`Splat2D` or None when culled.

    Culling covers the near plane and footprints that cannot reach any pixel
    of the view (guard band of one footprint radius around the image).
    """
    cloud = GaussianCloud(gaussians=(gaussian,), sh_degree=gaussian.sh_degree)
    proj = _project_cloud(cloud, cam, near)
    if not proj["valid"][0]:
        return None
    cov2d = proj["cov2d"][0]
    mean2d = proj["mean2d"][0]
    radius = _footprint_radius(cov2d, float(proj["opacities"][0]))
    if radius <= 0.0:
        return None
    if (mean2d[0] < -radius or mean2d[0] > cam.width + radius
            or mean2d[1] < -radius or mean2d[1] > cam.height + radius):
        return None
    return Splat2D(
        mean2d=mean2d,
        cov2d=cov2d,
        depth=float(proj["t"][0, 2]),
        color=proj["colors"][0],
        alpha_base=float(proj["opacities"][0]),
        source_index=0,
    )


def composite_pixel(splats, background=(0.0, 0.0, 0.0)):
    """Front-to-back composite of depth-ascending (alpha, color) pairs.

    Returns (rgb, transmittance); the background shows through the residual
    transmittance. Raises if an alpha is outside [0, 0.99].
    """
    color = np.zeros(3)
    transmittance = 1.0
    for alpha, rgb in splats:
        if not 0.0 <= alpha <= ALPHA_CLAMP:
            raise InvalidParameterError(f"alpha {alpha} outside [0, {ALPHA_CLAMP}]")
        color = color + transmittance * alpha * np.asarray(rgb, dtype=np.float64)
        transmittance *= 1.0 - alpha
    return color + transmittance * np.asarray(background, dtype=np.float64), transmittance


def rasterize(cloud: GaussianCloud, cam: CameraView,
              config: RenderConfig = RenderConfig(),
              record: bool = False) -> RasterResult:
    """Render and (optionally) keep per-splat rasterization records."""
    if len(cloud) == 0:
        raise InvalidParameterError("cannot render an empty cloud")
    if cam.width <= 0 or cam.height <= 0:
        raise InvalidParameterError("camera image area is zero")

    h, w = cam.height, cam.width
    proj = _project_cloud(cloud, cam, config.near_plane)

    candidates = []
    for i in np.flatnonzero(proj["valid"]):
        alpha_base = float(proj["opacities"][i])
        radius = _footprint_radius(proj["cov2d"][i], alpha_base)
        if radius <= 0.0:
            continue
        mx, my = proj["mean2d"][i]
        x0 = max(0, int(np.floor(mx - radius - 0.5)))
        x1 = min(w - 1, int(np.ceil(mx + radius - 0.5)))
        y0 = max(0, int(np.floor(my - radius - 0.5)))
        y1 = min(h - 1, int(np.ceil(my + radius - 0.5)))
        if x0 > x1 or y0 > y1:
            continue
        candidates.append((float(proj["t"][i, 2]), int(i), x0, x1, y0, y1))
    candidates.sort(key=lambda c: (c[0], c[1]))

    color_acc = np.zeros((h, w, 3))
    transmittance = np.ones((h, w))
    records: list[SplatRaster] = []

    for order, (depth, i, x0, x1, y0, y1) in enumerate(candidates):
        inv_cov = _invert_2x2(proj["cov2d"][i])
        mx, my = proj["mean2d"][i]
        dx = np.arange(x0, x1 + 1) + 0.5 - mx
        dy = np.arange(y0, y1 + 1) + 0.5 - my
        a, b, c = inv_cov[0, 0], inv_cov[0, 1], inv_cov[1, 1]
        m = a * dx[None, :] ** 2 + 2.0 * b * dy[:, None] * dx[None, :] + c * dy[:, None] ** 2
        gauss = np.exp(-0.5 * m)
        raw = proj["opacities"][i] * gauss
        visible = raw >= ALPHA_CUTOFF
        alpha = np.where(visible, np.minimum(raw, ALPHA_CLAMP), 0.0)
        if not visible.any():
            continue

        sub_t = transmittance[y0:y1 + 1, x0:x1 + 1]
        t_in = sub_t.copy() if record else None
        weight = alpha * sub_t
        color_acc[y0:y1 + 1, x0:x1 + 1] += weight[:, :, None] * proj["colors"][i]
        transmittance[y0:y1 + 1, x0:x1 + 1] = sub_t * (1.0 - alpha)

        records.append(SplatRaster(
            source_index=i,
            order=order,
            y0=y0, y1=y1, x0=x0, x1=x1,
            alpha=alpha,
            gauss=gauss,
            grad_mask=visible & (raw <= ALPHA_CLAMP),
            transmittance_in=t_in,
            mean2d=proj["mean2d"][i],
            cov2d=proj["cov2d"][i],
            inv_cov=inv_cov,
            v_cam=proj["v_cam"][i],
            t_cam=proj["t"][i],
            depth=depth,
            color=proj["colors"][i],
            color_raw=proj["color_raw"][i],
            alpha_base=float(proj["opacities"][i]),
            view_dir=proj["view_dirs"][i],
            view_dist=float(proj["view_dist"][i]),
        ))

    pixels = color_acc + transmittance[:, :, None] * np.asarray(config.background)
    image = RenderedImage(pixels=pixels, final_transmittance=transmittance)
    return RasterResult(image=image, splats=records if record else [])


def render_view(cloud: GaussianCloud, cam: CameraView,
                config: RenderConfig = RenderConfig()) -> RenderedImage:
    """Render the cloud from one camera (deterministic for fixed inputs)."""
    return rasterize(cloud, cam, config, record=False).image


def _invert_2x2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det <= 0.0:
        raise InvalidParameterError("projected covariance is not positive definite")
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
