"""Binary PLY load/save in the standard splatting layout.

Property names follow the widely used splat PLY convention so third-party
scenes interoperate: ``x y z nx ny nz f_dc_0..2 f_rest_* opacity
scale_0..2 rot_0..3``, all float32 little-endian. Opacity is stored as a
logit (sigmoid applied on load), scale as a log (exp applied on load), and
quaternions as (w, x, y, z). ``f_rest`` is channel-major: the first
(K - 1) values are the red coefficients for bands 1..L, then green, then
blue.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .scene import GaussianCloud, sh_coeff_count, sh_degree_from_count

_MAGIC = b"ply"


def _logit(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _property_names(sh_degree: int) -> list[str]:
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    rest = sh_coeff_count(sh_degree) - 1
    names += [f"f_rest_{i}" for i in range(3 * rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def save_ply(path: str | os.PathLike, cloud: GaussianCloud) -> None:
    """Write a cloud as binary little-endian PLY."""
    if len(cloud) == 0:
        raise InvalidParameterError("refusing to save an empty cloud")
    arrays = cloud.arrays()
    n = len(cloud)
    rest = sh_coeff_count(cloud.sh_degree) - 1

    columns = [
        arrays.positions,
        np.zeros((n, 3)),  # normals, unused but conventional
        arrays.sh_coeffs[:, 0, :],
    ]
    if rest:
        # channel-major: all red band-1..L coefficients, then green, then blue
        columns.append(arrays.sh_coeffs[:, 1:, :].transpose(0, 2, 1).reshape(n, -1))
    columns += [
        _logit(arrays.opacities)[:, None],
        np.log(arrays.scales),
        arrays.rotations,
    ]
    data = np.concatenate(columns, axis=1).astype("<f4")

    names = _property_names(cloud.sh_degree)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(data).tobytes())


def load_ply(path: str | os.PathLike) -> GaussianCloud:
    """Read a binary little-endian splat PLY into a cloud."""
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(_MAGIC):
        raise InvalidParameterError(f"{path} is not a PLY file")
    header_end = raw.find(b"end_header\n")
    if header_end < 0:
        raise InvalidParameterError(f"{path}: missing end_header")
    body = raw[header_end + len(b"end_header\n"):]

    count = 0
    names: list[str] = []
    for line in raw[:header_end].decode("ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "binary_little_endian":
            raise InvalidParameterError(f"{path}: unsupported format {parts[1]}")
        if parts[0] == "element":
            if parts[1] != "vertex":
                raise InvalidParameterError(f"{path}: unsupported element {parts[1]}")
            count = int(parts[2])
        if parts[0] == "property":
            if parts[1] != "float":
                raise InvalidParameterError(f"{path}: unsupported property type {parts[1]}")
            names.append(parts[2])

    table = np.frombuffer(body, dtype="<f4", count=count * len(names))
    table = table.reshape(count, len(names)).astype(np.float64)
    col = {name: table[:, i] for i, name in enumerate(names)}

    required = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    missing = [name for name in required if name not in col]
    if missing:
        raise InvalidParameterError(f"{path}: missing properties {missing}")

    rest_names = sorted(
        (name for name in names if name.startswith("f_rest_")),
        key=lambda s: int(s.rsplit("_", 1)[1]),
    )
    if len(rest_names) % 3 != 0:
        raise InvalidParameterError(f"{path}: f_rest count {len(rest_names)} not divisible by 3")
    rest = len(rest_names) // 3
    degree = sh_degree_from_count(rest + 1)

    n = count
    sh = np.zeros((n, rest + 1, 3))
    sh[:, 0, 0] = col["f_dc_0"]
    sh[:, 0, 1] = col["f_dc_1"]
    sh[:, 0, 2] = col["f_dc_2"]
    if rest:
        flat = np.stack([col[name] for name in rest_names], axis=1)  # (n, 3*rest)
        sh[:, 1:, :] = flat.reshape(n, 3, rest).transpose(0, 2, 1)

    positions = np.stack([col["x"], col["y"], col["z"]], axis=1)
    scales = np.exp(np.stack([col["scale_0"], col["scale_1"], col["scale_2"]], axis=1))
    rotations = np.stack([col["rot_0"], col["rot_1"], col["rot_2"], col["rot_3"]], axis=1)
    opacities = np.clip(_sigmoid(col["opacity"]), 0.0, 1.0)

    cloud = GaussianCloud.from_arrays(positions, rotations, scales, opacities, sh)
    if cloud.sh_degree != degree:
        raise InvalidParameterError(f"{path}: inconsistent SH degree")
    return cloud
