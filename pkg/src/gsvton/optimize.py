"""Reconstruction loss and gradient-descent optimization of cloud parameters.

The loss is ``(1 - lambda) * mean|diff| + lambda * (1 - SSIM) / 2`` with
lambda 0.2. Gradients w.r.t. color (all SH coefficients), opacity, and
position are analytic, backpropagated through the compositing chain,
including the dependence of the projected covariance on position and the
view-direction dependence of SH color. Rotation and scale can optionally be
stepped with numeric gradients (off by default; it re-renders per probe and
is only sensible for small editable sets).

Plain gradient descent, no momentum state: a frozen Gaussian is represented
by the same object before and after a step, so the freeze contract is
bit-exact. The default learning rates are tuned for plain descent at desk
scale (see README); they are deliberately much larger than the Adam-style
rates used by GPU splatting trainers, whose per-parameter normalization we
do not have.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .colorspace import LUMA_WEIGHTS, luma
from .errors import DimensionMismatchError, InvalidParameterError
from .metrics import ssim_luma_gradient
from .render import RenderConfig, RenderedImage, SplatRaster, rasterize
from .scene import CameraView, Gaussian, GaussianCloud, sh_basis, sh_basis_gradient

LOSS_LAMBDA = 0.2


@dataclass(frozen=True)
class LearningRates:
    """Per-parameter-group step sizes for plain gradient descent."""

    position: float = 0.05
    color: float = 8.0
    opacity: float = 4.0
    rotation: float = 0.0  # used only when numeric rotation/scale steps are enabled
    scale: float = 0.0


@dataclass
class LossReport:
    """Loss breakdown plus per-parameter-group gradient norms for one step."""

    l1: float
    dssim: float
    total: float
    gradient_norms: dict[str, float] = field(default_factory=dict)
    skipped: tuple[str, ...] = ()


def reconstruction_loss(rendered, target: np.ndarray, lam: float = LOSS_LAMBDA) -> LossReport:
    """L1 / D-SSIM mix between a render and a target image."""
    pixels = rendered.pixels if isinstance(rendered, RenderedImage) else np.asarray(rendered)
    target = np.asarray(target, dtype=np.float64)
    if pixels.shape != target.shape:
        raise DimensionMismatchError(f"image shapes differ: {pixels.shape} vs {target.shape}")
    l1, dssim, total, _ = _loss_and_pixel_gradient(pixels, target, lam, need_gradient=False)
    return LossReport(l1=l1, dssim=dssim, total=total)


def _loss_and_pixel_gradient(pixels: np.ndarray, target: np.ndarray, lam: float,
                             need_gradient: bool = True):
    """Loss terms and (optionally) d(total)/d(pixels)."""
    diff = pixels - target
    l1 = float(np.mean(np.abs(diff)))
    x = luma(pixels)
    y = luma(target)
    if need_gradient:
        mssim, ssim_grad_luma = ssim_luma_gradient(x, y)
    else:
        from .metrics import ssim_map

        mssim, ssim_grad_luma = float(np.mean(ssim_map(x, y)[0])), None
    dssim = (1.0 - mssim) / 2.0
    total = (1.0 - lam) * l1 + lam * dssim
    if not need_gradient:
        return l1, dssim, total, None
    grad = (1.0 - lam) * np.sign(diff) / diff.size
    grad += (-0.5 * lam) * ssim_grad_luma[:, :, None] * LUMA_WEIGHTS
    return l1, dssim, total, grad


def cloud_gradients(cloud: GaussianCloud, cam: CameraView, target: np.ndarray,
                    config: RenderConfig = RenderConfig(), lam: float = LOSS_LAMBDA):
    """Analytic d(loss)/d(color, opacity, position) for one view.

    Returns ``(loss_report, grads)`` with grads keyed ``sh`` (N, K, 3),
    ``opacity`` (N,), ``position`` (N, 3).
    """
    target = np.asarray(target, dtype=np.float64)
    result = rasterize(cloud, cam, config, record=True)
    pixels = result.image.pixels
    if pixels.shape != target.shape:
        raise DimensionMismatchError(f"render {pixels.shape} vs target {target.shape}")
    l1, dssim, total, g = _loss_and_pixel_gradient(pixels, target, lam)

    n = len(cloud)
    k = cloud.arrays().sh_coeffs.shape[1]
    grads = {
        "sh": np.zeros((n, k, 3)),
        "opacity": np.zeros(n),
        "position": np.zeros((n, 3)),
    }

    rot = cam.rotation
    fx, fy = cam.focal
    behind = np.broadcast_to(np.asarray(config.background, dtype=np.float64),
                             pixels.shape).copy()

    for rec in reversed(result.splats):
        s = (slice(rec.y0, rec.y1 + 1), slice(rec.x0, rec.x1 + 1))
        g_sub = g[s]
        b_sub = behind[s]
        t_in = rec.transmittance_in
        alpha = rec.alpha

        # color path: dC/dc = alpha * T, per channel, gated by the color clamp
        weight = alpha * t_in
        grad_color = np.einsum("hw,hwc->c", weight, g_sub)
        clamp_open = (rec.color_raw > 0.0) & (rec.color_raw < 1.0)
        grad_color = np.where(clamp_open, grad_color, 0.0)
        basis = sh_basis(rec.view_dir, cloud.sh_degree)
        grads["sh"][rec.source_index] += np.outer(basis, grad_color)

        # alpha path: dC/dalpha = T * (c - color_behind)
        d_alpha = t_in * np.einsum("hwc,hwc->hw", g_sub,
                                   rec.color[None, None, :] - b_sub)
        d_alpha = np.where(rec.grad_mask, d_alpha, 0.0)
        grads["opacity"][rec.source_index] += float(np.sum(d_alpha * rec.gauss))

        grads["position"][rec.source_index] += _position_gradient(
            rec, d_alpha, grad_color, rot, fx, fy, cloud)

        behind[s] = rec.color * alpha[:, :, None] + (1.0 - alpha[:, :, None]) * b_sub

    report = LossReport(l1=l1, dssim=dssim, total=total)
    return report, grads


def _position_gradient(rec: SplatRaster, d_alpha: np.ndarray, grad_color: np.ndarray,
                       rot: np.ndarray, fx: float, fy: float,
                       cloud: GaussianCloud) -> np.ndarray:
    """World-position gradient of one splat: screen-mean, covariance-through-
    Jacobian, and SH view-direction paths."""
    mx, my = rec.mean2d
    dx = np.arange(rec.x0, rec.x1 + 1) + 0.5 - mx
    dy = np.arange(rec.y0, rec.y1 + 1) + 0.5 - my
    ic = rec.inv_cov
    qx = ic[0, 0] * dx[None, :] + ic[0, 1] * dy[:, None]
    qy = ic[0, 1] * dx[None, :] + ic[1, 1] * dy[:, None]

    f = d_alpha * rec.alpha_base * rec.gauss  # d(loss)/d(exponent scale)
    s_mean = np.array([np.sum(f * qx), np.sum(f * qy)])
    s_cov = 0.5 * np.array([
        [np.sum(f * qx * qx), np.sum(f * qx * qy)],
        [np.sum(f * qx * qy), np.sum(f * qy * qy)],
    ])

    tx, ty, tz = rec.t_cam
    jac = np.array([[fx / tz, 0.0, -fx * tx / tz**2],
                    [0.0, fy / tz, -fy * ty / tz**2]])
    grad_t = jac.T @ s_mean

    dj = (
        np.array([[0.0, 0.0, -fx / tz**2], [0.0, 0.0, 0.0]]),
        np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -fy / tz**2]]),
        np.array([[-fx / tz**2, 0.0, 2.0 * fx * tx / tz**3],
                  [0.0, -fy / tz**2, 2.0 * fy * ty / tz**3]]),
    )
    vjt = rec.v_cam @ jac.T  # (3, 2)
    for axis in range(3):
        d_cov = dj[axis] @ vjt
        d_cov = d_cov + d_cov.T
        grad_t[axis] += float(np.sum(s_cov * d_cov))

    grad_world = rot.T @ grad_t

    if cloud.sh_degree > 0:
        dbasis = sh_basis_gradient(rec.view_dir, cloud.sh_degree)  # (K, 3)
        sh = cloud.gaussians[rec.source_index].sh_coeffs  # (K, 3)
        dcolor_ddir = sh.T @ dbasis  # (3 channels, 3 dir components)
        dir_grad = dcolor_ddir.T @ grad_color
        proj = (np.eye(3) - np.outer(rec.view_dir, rec.view_dir)) / rec.view_dist
        grad_world = grad_world + proj @ dir_grad
    return grad_world


def optimize_step(cloud: GaussianCloud, views, editable_set,
                  lrs: LearningRates = LearningRates(),
                  config: RenderConfig = RenderConfig(),
                  lam: float = LOSS_LAMBDA,
                  numeric_rotation_scale: bool = False):
    """One plain-gradient-descent step against a subset of views.

    ``views`` is a sequence of (CameraView, target image) pairs; gradients
    are averaged over it. Only members of ``editable_set`` change; all other
    Gaussians are the same objects afterwards (bit-identical). Non-finite
    gradients skip the affected parameter group and are flagged in the
    report.
    """
    editable = sorted(set(int(i) for i in editable_set))
    if editable and (editable[0] < 0 or editable[-1] >= len(cloud)):
        raise InvalidParameterError("editable_set contains out-of-range indices")
    if not views:
        raise InvalidParameterError("optimize_step needs at least one view")

    reports = []
    totals = None
    for cam, target in views:
        report, grads = cloud_gradients(cloud, cam, target, config, lam)
        reports.append(report)
        if totals is None:
            totals = grads
        else:
            for key in totals:
                totals[key] += grads[key]
    for key in totals:
        totals[key] /= len(views)

    mean_report = LossReport(
        l1=float(np.mean([r.l1 for r in reports])),
        dssim=float(np.mean([r.dssim for r in reports])),
        total=float(np.mean([r.total for r in reports])),
    )
    idx = np.array(editable, dtype=int)
    mean_report.gradient_norms = {
        "position": float(np.linalg.norm(totals["position"][idx])) if editable else 0.0,
        "color": float(np.linalg.norm(totals["sh"][idx])) if editable else 0.0,
        "opacity": float(np.linalg.norm(totals["opacity"][idx])) if editable else 0.0,
    }
    if not editable:
        return cloud, mean_report

    numeric = {}
    if numeric_rotation_scale and (lrs.rotation > 0.0 or lrs.scale > 0.0):
        numeric = _numeric_rotation_scale_gradients(cloud, views, editable, config, lam)

    skipped: set[str] = set()
    updates: dict[int, Gaussian] = {}
    for i in editable:
        g = cloud.gaussians[i]
        position, rotation, scale, opacity, sh = (
            g.position, g.rotation, g.scale, g.opacity, g.sh_coeffs)
        if np.all(np.isfinite(totals["position"][i])):
            position = position - lrs.position * totals["position"][i]
        else:
            skipped.add("position")
        if np.all(np.isfinite(totals["sh"][i])):
            sh = sh - lrs.color * totals["sh"][i]
        else:
            skipped.add("color")
        if np.isfinite(totals["opacity"][i]):
            opacity = float(np.clip(opacity - lrs.opacity * totals["opacity"][i], 0.0, 1.0))
        else:
            skipped.add("opacity")
        if i in numeric:
            rot_grad, scale_grad = numeric[i]
            if lrs.rotation > 0.0:
                if np.all(np.isfinite(rot_grad)):
                    rotation = rotation - lrs.rotation * rot_grad
                else:
                    skipped.add("rotation")
            if lrs.scale > 0.0:
                if np.all(np.isfinite(scale_grad)):
                    scale = np.maximum(scale - lrs.scale * scale_grad, 1e-9)
                else:
                    skipped.add("scale")
        updates[i] = Gaussian(position=position, rotation=rotation, scale=scale,
                              opacity=opacity, sh_coeffs=sh)
    mean_report.skipped = tuple(sorted(skipped))
    return cloud.with_gaussians(updates), mean_report


def _numeric_rotation_scale_gradients(cloud, views, editable, config, lam, h: float = 1e-4):
    """Central-difference rotation/scale gradients (costly; small sets only)."""

    def mean_loss(c: GaussianCloud) -> float:
        values = []
        for cam, target in views:
            image = rasterize(c, cam, config).image
            values.append(reconstruction_loss(image, target, lam).total)
        return float(np.mean(values))

    out = {}
    for i in editable:
        g = cloud.gaussians[i]
        rot_grad = np.zeros(4)
        for c in range(4):
            for sign in (+1.0, -1.0):
                q = np.array(g.rotation)
                q[c] += sign * h
                probe = cloud.with_gaussians({i: replace_gaussian(g, rotation=q)})
                rot_grad[c] += sign * mean_loss(probe)
        rot_grad /= 2.0 * h
        scale_grad = np.zeros(3)
        for c in range(3):
            for sign in (+1.0, -1.0):
                sc = np.array(g.scale)
                sc[c] = max(sc[c] + sign * h, 1e-9)
                probe = cloud.with_gaussians({i: replace_gaussian(g, scale=sc)})
                scale_grad[c] += sign * mean_loss(probe)
        scale_grad /= 2.0 * h
        out[i] = (rot_grad, scale_grad)
    return out


def replace_gaussian(g: Gaussian, **kwargs) -> Gaussian:
    """Dataclass-style replace that reruns validation/normalization."""
    fields = {"position": g.position, "rotation": g.rotation, "scale": g.scale,
              "opacity": g.opacity, "sh_coeffs": g.sh_coeffs}
    fields.update(kwargs)
    return Gaussian(**fields)


def fit_scene(dataset, init_cloud: GaussianCloud, iterations: int,
              lrs: LearningRates = LearningRates(),
              config: RenderConfig = RenderConfig(),
              lam: float = LOSS_LAMBDA,
              seed: int = 0,
              editable_set=None,
              on_step=None) -> GaussianCloud:
    """Fit a cloud to a multi-view dataset by repeated single-view steps.

    ``dataset`` is either a sequence of (CameraView, target) pairs or any
    object with a ``snapshot_targets()`` method. Views are sampled with a
    seeded generator, one per iteration, so runs are reproducible.
    """
    if hasattr(dataset, "snapshot_targets"):
        views = dataset.snapshot_targets()
    else:
        views = list(dataset)
    if len(views) < 2:
        raise InvalidParameterError(f"fit_scene needs at least 2 views, got {len(views)}")
    if editable_set is None:
        editable_set = range(len(init_cloud))

    rng = np.random.default_rng(seed)
    cloud = init_cloud
    for step in range(iterations):
        cam, target = views[int(rng.integers(len(views)))]
        cloud, report = optimize_step(cloud, [(cam, target)], editable_set, lrs, config, lam)
        if on_step is not None:
            on_step(step, report)
    return cloud
