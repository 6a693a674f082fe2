"""Gaussian scene representation: primitives, cameras, covariance and SH color.

Conventions (see README):
  - quaternions are stored (w, x, y, z) and re-normalized on construction;
  - cameras follow the COLMAP axes (x right, y down, z forward), with
    ``world_to_camera`` mapping world points into that frame;
  - SH color is ``clamp(sum_l c_l * Y_l(dir) + 0.5, 0, 1)``, the standard
    splatting PLY convention, so third-party scenes render correctly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateCovarianceError, InvalidParameterError

MAX_SH_DEGREE = 3
CONDITION_LIMIT = 1e12

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def sh_coeff_count(degree: int) -> int:
    """Number of SH coefficients for a given degree, (L+1)^2."""
    if not 0 <= degree <= MAX_SH_DEGREE:
        raise InvalidParameterError(f"SH degree must be 0..{MAX_SH_DEGREE}, got {degree}")
    return (degree + 1) ** 2


def sh_degree_from_count(count: int) -> int:
    """Inverse of :func:`sh_coeff_count`; raises if count is not a valid (L+1)^2."""
    for degree in range(MAX_SH_DEGREE + 1):
        if (degree + 1) ** 2 == count:
            return degree
    raise InvalidParameterError(f"{count} is not (L+1)^2 for any supported degree")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Gaussian:
    """One anisotropic Gaussian primitive (immutable value record)."""

    position: np.ndarray  # (3,) world units
    rotation: np.ndarray  # (4,) unit quaternion (w, x, y, z)
    scale: np.ndarray  # (3,) per-axis stddev, > 0
    opacity: float  # [0, 1]
    sh_coeffs: np.ndarray  # (K, 3), K = (degree+1)^2

    def __post_init__(self):
        position = np.asarray(self.position, dtype=np.float64).reshape(3)
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        scale = np.asarray(self.scale, dtype=np.float64).reshape(3)
        sh = np.asarray(self.sh_coeffs, dtype=np.float64)
        if sh.ndim != 2 or sh.shape[1] != 3:
            raise InvalidParameterError(f"sh_coeffs must be (K, 3), got {sh.shape}")
        sh_degree_from_count(sh.shape[0])
        for name, arr in (("position", position), ("rotation", rotation),
                          ("scale", scale), ("sh_coeffs", sh)):
            if not np.all(np.isfinite(arr)):
                raise InvalidParameterError(f"non-finite {name}: {arr}")
        norm = float(np.linalg.norm(rotation))
        if norm == 0.0:
            raise InvalidParameterError("zero-norm rotation quaternion")
        rotation = rotation / norm
        if np.any(scale <= 0.0):
            raise InvalidParameterError(f"scale must be strictly positive, got {scale}")
        opacity = float(self.opacity)
        if not np.isfinite(opacity) or not 0.0 <= opacity <= 1.0:
            raise InvalidParameterError(f"opacity must be in [0, 1], got {opacity}")
        object.__setattr__(self, "position", _frozen(position))
        object.__setattr__(self, "rotation", _frozen(rotation))
        object.__setattr__(self, "scale", _frozen(scale))
        object.__setattr__(self, "opacity", opacity)
        object.__setattr__(self, "sh_coeffs", _frozen(sh))

    @property
    def sh_degree(self) -> int:
        return sh_degree_from_count(self.sh_coeffs.shape[0])


@dataclass(frozen=True)
class CloudArrays:
    """Stacked parameter arrays of a cloud, the renderer-facing layout."""

    positions: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4)
    scales: np.ndarray  # (N, 3)
    opacities: np.ndarray  # (N,)
    sh_coeffs: np.ndarray  # (N, K, 3)


@dataclass(frozen=True)
class GaussianCloud:
    """Ordered collection of Gaussians sharing one SH degree."""

    gaussians: tuple[Gaussian, ...]
    sh_degree: int

    def __post_init__(self):
        gaussians = tuple(self.gaussians)
        expected = sh_coeff_count(self.sh_degree)
        for i, g in enumerate(gaussians):
            if g.sh_coeffs.shape[0] != expected:
                raise InvalidParameterError(
                    f"gaussian {i} has {g.sh_coeffs.shape[0]} SH coefficients, "
                    f"cloud degree {self.sh_degree} needs {expected}"
                )
        object.__setattr__(self, "gaussians", gaussians)

    def __len__(self) -> int:
        return len(self.gaussians)

    def __getitem__(self, index: int) -> Gaussian:
        return self.gaussians[index]

    def arrays(self) -> CloudArrays:
        if not self.gaussians:
            raise InvalidParameterError("empty cloud has no arrays")
        return CloudArrays(
            positions=np.stack([g.position for g in self.gaussians]),
            rotations=np.stack([g.rotation for g in self.gaussians]),
            scales=np.stack([g.scale for g in self.gaussians]),
            opacities=np.array([g.opacity for g in self.gaussians]),
            sh_coeffs=np.stack([g.sh_coeffs for g in self.gaussians]),
        )

    def with_gaussians(self, updates: dict[int, Gaussian]) -> "GaussianCloud":
        """New cloud with ``updates`` swapped in; untouched members are shared."""
        members = list(self.gaussians)
        for index, gaussian in updates.items():
            members[index] = gaussian
        return replace(self, gaussians=tuple(members))

    @staticmethod
    def from_arrays(positions, rotations, scales, opacities, sh_coeffs) -> "GaussianCloud":
        n = len(positions)
        gaussians = tuple(
            Gaussian(positions[i], rotations[i], scales[i], float(opacities[i]), sh_coeffs[i])
            for i in range(n)
        )
        degree = sh_degree_from_count(np.asarray(sh_coeffs).shape[1])
        return GaussianCloud(gaussians=gaussians, sh_degree=degree)


@dataclass(frozen=True)
class CameraView:
    """Calibrated pinhole camera; pixel (i, j) has center (j + 0.5, i + 0.5)."""

    world_to_camera: np.ndarray  # (4, 4) rigid transform
    focal: np.ndarray  # (fx, fy), pixels
    principal_point: np.ndarray  # (cx, cy), pixels
    width: int
    height: int
    view_index: int = 0

    def __post_init__(self):
        w2c = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        focal = np.asarray(self.focal, dtype=np.float64).reshape(2)
        pp = np.asarray(self.principal_point, dtype=np.float64).reshape(2)
        if not np.all(np.isfinite(w2c)):
            raise InvalidParameterError("non-finite world_to_camera")
        r = w2c[:3, :3]
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-6:
            raise InvalidParameterError("world_to_camera rotation block is not orthonormal")
        if np.max(np.abs(w2c[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-12:
            raise InvalidParameterError("world_to_camera last row must be (0, 0, 0, 1)")
        if np.any(focal <= 0.0):
            raise InvalidParameterError(f"focal must be positive, got {focal}")
        object.__setattr__(self, "world_to_camera", _frozen(w2c))
        object.__setattr__(self, "focal", _frozen(focal))
        object.__setattr__(self, "principal_point", _frozen(pp))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "view_index", int(self.view_index))

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_cam_points(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) world points into camera coordinates."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    @staticmethod
    def look_at(eye, target, up, focal: float, width: int, height: int,
                view_index: int = 0) -> "CameraView":
        """Camera at ``eye`` looking toward ``target`` (z forward, y down)."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(forward)
        if norm == 0.0:
            raise InvalidParameterError("look_at eye and target coincide")
        z = forward / norm
        up = np.asarray(up, dtype=np.float64)
        x = np.cross(z, up)
        x_norm = np.linalg.norm(x)
        if x_norm < 1e-12:
            raise InvalidParameterError("up vector is parallel to view direction")
        x = x / x_norm
        y = np.cross(z, x)  # points opposite world-up: image y runs downward
        rot = np.stack([x, y, z])  # rows: camera axes in world coords
        w2c = np.eye(4)
        w2c[:3, :3] = rot
        w2c[:3, 3] = -rot @ eye
        return CameraView(
            world_to_camera=w2c,
            focal=np.array([focal, focal]),
            principal_point=np.array([width / 2.0, height / 2.0]),
            width=width,
            height=height,
            view_index=view_index,
        )


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(w, x, y, z) unit quaternion(s) to rotation matrix; supports (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def build_covariance(rotation: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """3x3 world covariance from a unit quaternion and per-axis scales.

    Computed as M M^T with M = R diag(scale), which is exactly symmetric in
    floating point and positive definite for positive scales.
    """
    rotation = np.asarray(rotation, dtype=np.float64).reshape(4)
    scale = np.asarray(scale, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(scale))):
        raise InvalidParameterError("non-finite rotation or scale")
    norm = float(np.linalg.norm(rotation))
    if norm == 0.0:
        raise InvalidParameterError("zero-norm rotation quaternion")
    if np.any(scale <= 0.0):
        raise InvalidParameterError(f"scale must be strictly positive, got {scale}")
    m = quaternion_to_rotation(rotation / norm) * scale  # columns scaled
    return m @ m.T


def covariance_batch(rotations: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Vectorized :func:`build_covariance` for (N, 4) + (N, 3) inputs."""
    r = quaternion_to_rotation(rotations)
    m = r * scales[:, None, :]
    return m @ np.swapaxes(m, -1, -2)


def evaluate_gaussian(sigma: np.ndarray, offset: np.ndarray) -> float:
    """Unnormalized Gaussian density exp(-1/2 d^T Sigma^-1 d), in (0, 1]."""
    sigma = np.asarray(sigma, dtype=np.float64).reshape(3, 3)
    offset = np.asarray(offset, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(offset))):
        raise InvalidParameterError("non-finite covariance or offset")
    eigenvalues = np.linalg.eigvalsh(sigma)
    if eigenvalues[0] <= 0.0 or eigenvalues[-1] / eigenvalues[0] > CONDITION_LIMIT:
        raise DegenerateCovarianceError(
            f"covariance is degenerate (eigenvalues {eigenvalues})"
        )
    chol = np.linalg.cholesky(sigma)
    half = np.linalg.solve(chol, offset)
    return float(np.exp(-0.5 * np.dot(half, half)))


def sh_basis(view_dir: np.ndarray, degree: int) -> np.ndarray:
    """Real SH basis values at unit direction(s), shape (..., (degree+1)^2)."""
    d = np.asarray(view_dir, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = np.empty(d.shape[:-1] + (sh_coeff_count(degree),))
    out[..., 0] = SH_C0
    if degree >= 1:
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 4] = SH_C2[0] * x * y
        out[..., 5] = SH_C2[1] * y * z
        out[..., 6] = SH_C2[2] * (2 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * x * z
        out[..., 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        out[..., 9] = SH_C3[0] * y * (3 * xx - yy)
        out[..., 10] = SH_C3[1] * x * y * z
        out[..., 11] = SH_C3[2] * y * (4 * zz - xx - yy)
        out[..., 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        out[..., 13] = SH_C3[4] * x * (4 * zz - xx - yy)
        out[..., 14] = SH_C3[5] * z * (xx - yy)
        out[..., 15] = SH_C3[6] * x * (xx - 3 * yy)
    return out


def sh_basis_gradient(view_dir: np.ndarray, degree: int) -> np.ndarray:
    """d(basis)/d(direction) at a single unit direction, shape (K, 3)."""
    x, y, z = (float(c) for c in np.asarray(view_dir, dtype=np.float64).reshape(3))
    grad = np.zeros((sh_coeff_count(degree), 3))
    if degree >= 1:
        grad[1] = (0.0, -SH_C1, 0.0)
        grad[2] = (0.0, 0.0, SH_C1)
        grad[3] = (-SH_C1, 0.0, 0.0)
    if degree >= 2:
        grad[4] = (SH_C2[0] * y, SH_C2[0] * x, 0.0)
        grad[5] = (0.0, SH_C2[1] * z, SH_C2[1] * y)
        grad[6] = (-2 * SH_C2[2] * x, -2 * SH_C2[2] * y, 4 * SH_C2[2] * z)
        grad[7] = (SH_C2[3] * z, 0.0, SH_C2[3] * x)
        grad[8] = (2 * SH_C2[4] * x, -2 * SH_C2[4] * y, 0.0)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        grad[9] = (SH_C3[0] * 6 * x * y, SH_C3[0] * (3 * xx - 3 * yy), 0.0)
        grad[10] = (SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y)
        grad[11] = (
            -2 * SH_C3[2] * x * y,
            SH_C3[2] * (4 * zz - xx - 3 * yy),
            8 * SH_C3[2] * y * z,
        )
        grad[12] = (
            -6 * SH_C3[3] * x * z,
            -6 * SH_C3[3] * y * z,
            SH_C3[3] * (6 * zz - 3 * xx - 3 * yy),
        )
        grad[13] = (
            SH_C3[4] * (4 * zz - 3 * xx - yy),
            -2 * SH_C3[4] * x * y,
            8 * SH_C3[4] * x * z,
        )
        grad[14] = (2 * SH_C3[5] * x * z, -2 * SH_C3[5] * y * z, SH_C3[5] * (xx - yy))
        grad[15] = (SH_C3[6] * (3 * xx - 3 * yy), -6 * SH_C3[6] * x * y, 0.0)
    return grad


def sh_to_color(sh_coeffs: np.ndarray, view_dir: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Evaluate SH color at a unit view direction; rgb in [0, 1] when clamped."""
    sh = np.asarray(sh_coeffs, dtype=np.float64)
    if sh.ndim != 2 or sh.shape[1] != 3:
        raise InvalidParameterError(f"sh_coeffs must be (K, 3), got {sh.shape}")
    degree = sh_degree_from_count(sh.shape[0])
    d = np.asarray(view_dir, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(d))
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
        raise InvalidParameterError(f"view_dir must be unit norm, got |d| = {norm}")
    color = sh_basis(d, degree) @ sh + 0.5
    return np.clip(color, 0.0, 1.0) if clamp else color
