"""Analytic vector fields, voxel-brick rasterization, and trilinear sampling.

Three closed-form stand-in fields are provided, one per qualitative load
pattern of interest:

* ``abc``      -- chaotic trajectories spread over the whole domain,
* ``jets``     -- long domain-spanning trajectories (a 3D double gyre with
                  weak vertical transport),
* ``toroidal`` -- orbital trajectories concentrated around a central ring.

All fields are defined on the unit cube ``[0, 1]^3`` and are pure: the same
point always evaluates to the same vector, bit-exactly.

The voxel lattice has ``resolution`` nodes per axis at positions
``i * spacing`` with ``spacing = 1 / (resolution - 1)``. A :class:`Block` is
a brick of that lattice padded with a one-cell ghost layer; ghost nodes that
fall outside the lattice are clamped to the boundary sample. Throughout this
module "g-space" means position divided by spacing, i.e. fractional node
coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, DomainError, OutOfBlockError

FIELD_KINDS = ("abc", "jets", "toroidal")

_DEFAULT_PARAMS = {
    "abc": {"A": math.sqrt(3.0), "B": math.sqrt(2.0), "C": 1.0},
    "jets": {"w0": 0.3},
    "toroidal": {"R0": 0.25, "kappa": 0.5},
}

# Guard against division blow-ups on the torus axis / ring core.
_EPS = 1e-6


@dataclass(frozen=True)
class AnalyticField:
    """A closed-form vector field on the unit cube.

    ``params`` holds the named scalar coefficients of the chosen ``kind``;
    unspecified ones take the defaults from ``_DEFAULT_PARAMS``.
    """

    kind: str
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ConfigError(f"unknown field kind {self.kind!r}; expected one of {FIELD_KINDS}")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise ConfigError(f"field {self.kind!r} has no parameter {key!r}")
            merged[key] = float(value)
        object.__setattr__(self, "params", merged)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the field at ``points`` of shape ``(..., 3)``.

        No domain check is performed here; use :func:`evaluate_field` for the
        checked single-point entry point.
        """
        pts = np.asarray(points, dtype=np.float64)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        p = self.params
        if self.kind == "abc":
            qx, qy, qz = 2.0 * np.pi * x, 2.0 * np.pi * y, 2.0 * np.pi * z
            vx = p["A"] * np.sin(qz) + p["C"] * np.cos(qy)
            vy = p["B"] * np.sin(qx) + p["A"] * np.cos(qz)
            vz = p["C"] * np.sin(qy) + p["B"] * np.cos(qx)
        elif self.kind == "jets":
            vx = -np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
            vy = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
            vz = p["w0"] * np.sin(np.pi * z) * np.sin(np.pi * x)
        else:  # toroidal
            dx, dy, dz = x - 0.5, y - 0.5, z - 0.5
            rho = np.maximum(np.sqrt(dx * dx + dy * dy), _EPS)
            r = np.sqrt((rho - p["R0"]) ** 2 + dz * dz)
            rs = np.maximum(r, _EPS)
            k = p["kappa"]
            vx = -dy / rho + k * (-dz * dx / rho) / rs
            vy = dx / rho + k * (-dz * dy / rho) / rs
            vz = k * (rho - p["R0"]) / rs
        return np.stack([vx, vy, vz], axis=-1)


def evaluate_field(field: AnalyticField, point) -> np.ndarray:
    """Evaluate ``field`` at a single point inside ``[0, 1]^3``.

    Raises :class:`DomainError` for points outside the unit cube.
    """
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ConfigError(f"expected a 3-vector point, got shape {p.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError(f"point {p.tolist()} outside the [0,1]^3 domain")
    return field.evaluate(p[np.newaxis, :])[0]


def _check_resolution(resolution) -> tuple[int, int, int]:
    res = tuple(int(r) for r in resolution)
    if len(res) != 3 or any(r < 2 for r in res):
        raise ConfigError(f"resolution must be three integers >= 2, got {resolution}")
    return res


def lattice_spacing(resolution) -> np.ndarray:
    """Domain units per voxel: ``1 / (resolution - 1)`` per axis."""
    res = _check_resolution(resolution)
    return 1.0 / (np.asarray(res, dtype=np.float64) - 1.0)


def rasterize_global(field: AnalyticField, resolution) -> np.ndarray:
    """Evaluate ``field`` on the full voxel lattice.

    Returns an array of shape ``(rx, ry, rz, 3)`` indexed ``[ix, iy, iz]``.
    One shared global rasterization keeps every block's ghost layer
    bit-identical to its neighbor's core by construction.
    """
    res = _check_resolution(resolution)
    spacing = lattice_spacing(res)
    ax = [np.arange(r, dtype=np.float64) * spacing[a] for a, r in enumerate(res)]
    gx, gy, gz = np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)
    return field.evaluate(pts.reshape(-1, 3)).reshape(res + (3,))


@dataclass(frozen=True)
class Block:
    """A ghost-padded brick of the rasterized lattice.

    ``data`` has shape ``(core + 2*ghost)`` per axis; element ``[a, b, c]``
    holds the lattice sample at node ``origin - ghost + (a, b, c)`` with node
    indices clamped to the global lattice. Immutable after construction.
    """

    origin: tuple[int, int, int]
    core_dims: tuple[int, int, int]
    resolution: tuple[int, int, int]
    spacing: np.ndarray
    data: np.ndarray
    ghost: int = 1

    @property
    def padded_dims(self) -> tuple[int, int, int]:
        return tuple(n + 2 * self.ghost for n in self.core_dims)

    def core_lo_g(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    def core_hi_g(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64) + np.asarray(self.core_dims, dtype=np.float64)

    def sample_lo_g(self) -> np.ndarray:
        return self.core_lo_g() - self.ghost

    def sample_hi_g(self) -> np.ndarray:
        # Last padded node index per axis; sampling is valid up to it.
        return self.core_hi_g() - 1.0 + self.ghost

    def to_g(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.spacing

    def samplable_mask(self, points: np.ndarray) -> np.ndarray:
        """True where a point lies inside the ghost-padded sampling extent."""
        g = self.to_g(points)
        return np.all((g >= self.sample_lo_g()) & (g <= self.sample_hi_g()), axis=-1)

    def owned_mask(self, points: np.ndarray) -> np.ndarray:
        """True where a point lies in this block's half-open core region."""
        g = self.to_g(points)
        return np.all((g >= self.core_lo_g()) & (g < self.core_hi_g()), axis=-1)

    def sample_clamped(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation with cell indices clipped to the block.

        No validity checking: callers track which rows are inside the
        sampling extent themselves (clipped garbage rows stay finite and are
        discarded lane-locally, so they cannot contaminate valid rows).
        """
        pts = np.asarray(points, dtype=np.float64)
        g = pts / self.spacing
        lo = self.sample_lo_g()
        cell = np.floor(g).astype(np.int64)
        # Clamp to the last valid cell so g == hi lands weight 1 on the top node.
        for a in range(3):
            np.clip(cell[..., a], int(lo[a]), int(lo[a]) + self.padded_dims[a] - 2, out=cell[..., a])
        frac = g - cell
        local = cell - lo.astype(np.int64)
        pnx, pny, pnz = self.padded_dims
        flat = (local[..., 0] * pny + local[..., 1]) * pnz + local[..., 2]
        fdata = self.data.reshape(-1, 3)
        offs = np.array([0, 1, pnz, pnz + 1, pny * pnz, pny * pnz + 1, pny * pnz + pnz, pny * pnz + pnz + 1])
        c = fdata[flat[..., np.newaxis] + offs]  # (..., 8, 3): x-major corner order
        fx = frac[..., 0, np.newaxis]
        fy = frac[..., 1, np.newaxis]
        fz = frac[..., 2, np.newaxis]
        c00 = (1.0 - fz) * c[..., 0, :] + fz * c[..., 1, :]
        c01 = (1.0 - fz) * c[..., 2, :] + fz * c[..., 3, :]
        c10 = (1.0 - fz) * c[..., 4, :] + fz * c[..., 5, :]
        c11 = (1.0 - fz) * c[..., 6, :] + fz * c[..., 7, :]
        c0 = (1.0 - fy) * c00 + fy * c01
        c1 = (1.0 - fy) * c10 + fy * c11
        return (1.0 - fx) * c0 + fx * c1

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Checked trilinear sampling; raises :class:`OutOfBlockError`."""
        pts = np.asarray(points, dtype=np.float64)
        if not np.all(self.samplable_mask(pts)):
            raise OutOfBlockError(
                f"point(s) outside block origin={self.origin} core={self.core_dims} sampling extent"
            )
        return self.sample_clamped(pts)


def rasterize_block(
    field: AnalyticField,
    global_resolution,
    origin_voxel,
    core_dims,
    *,
    global_data: np.ndarray | None = None,
    ghost: int = 1,
) -> Block:
    """Rasterize one ghost-padded block of the global lattice.

    When ``global_data`` (a :func:`rasterize_global` result) is given the
    block is sliced from it, which makes ghost replication exact by
    construction; otherwise the padded lattice is evaluated directly.
    """
    res = _check_resolution(global_resolution)
    origin = tuple(int(v) for v in origin_voxel)
    core = tuple(int(v) for v in core_dims)
    if any(n < 1 for n in core):
        raise ConfigError(f"core_dims must be >= 1 per axis, got {core}")
    if any(o < 0 or o + n > r for o, n, r in zip(origin, core, res)):
        raise ConfigError(f"block origin={origin} core={core} exceeds resolution {res}")
    spacing = lattice_spacing(res)
    # Ghost node indices clamped to the lattice boundary.
    idx = [np.clip(np.arange(o - ghost, o + n + ghost), 0, r - 1) for o, n, r in zip(origin, core, res)]
    if global_data is not None:
        data = global_data[np.ix_(idx[0], idx[1], idx[2])].copy()
    else:
        ax = [idx[a].astype(np.float64) * spacing[a] for a in range(3)]
        gx, gy, gz = np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1)
        shape = tuple(len(i) for i in idx) + (3,)
        data = field.evaluate(pts.reshape(-1, 3)).reshape(shape)
    data.setflags(write=False)
    return Block(origin=origin, core_dims=core, resolution=res, spacing=spacing, data=data, ghost=ghost)


def sample_trilinear(block: Block, point) -> np.ndarray:
    """Sample ``block`` at a single point; the operation-level entry point."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ConfigError(f"expected a 3-vector point, got shape {p.shape}")
    return block.sample(p[np.newaxis, :])[0]


def export_block(block: Block, data_path, sidecar_path=None) -> None:
    """Debug export: flat little-endian float32 triplets, x-fastest order.

    Writes a small JSON sidecar (``<data_path>.json`` by default) with the
    dims, origin and spacing needed to reinterpret the raw stream.
    """
    data_path = str(data_path)
    if sidecar_path is None:
        sidecar_path = data_path + ".json"
    # data is [ix, iy, iz]; x-fastest flat order wants z slowest.
    flat = np.transpose(block.data, (2, 1, 0, 3)).astype("<f4").ravel()
    flat.tofile(data_path)
    sidecar = {
        "dims": list(block.padded_dims),
        "core_dims": list(block.core_dims),
        "origin_voxel": list(block.origin),
        "ghost": block.ghost,
        "spacing": [float(s) for s in block.spacing],
        "order": "x-fastest",
        "dtype": "<f4",
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
