"""Dense voxel radiance field.

Raw parameters live on a regular grid of voxel centers; activations are
softplus for density (sigma >= 0) and sigmoid for color.  Queries use
trilinear interpolation of the *activated* values between voxel centers,
clamped at the boundary layer; density is exactly zero outside the bounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import Aabb, vec3


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus_inv(y: np.ndarray, floor: float = -40.0) -> np.ndarray:
    """Raw value whose softplus is ``y``; clamped so y=0 maps to ``floor``."""
    y = np.asarray(y, dtype=np.float64)
    out = np.full_like(y, floor)
    ok = y > 1e-12
    yo = y[ok]
    out[ok] = np.maximum(yo + np.log1p(-np.exp(-yo)), floor)
    return out


@dataclass
class VoxelField:
    """Trainable density + color grid on ``bounds`` with ``resolution``^3 voxels."""

    resolution: int = 128
    bounds: Aabb = None
    raw_density: np.ndarray = None
    raw_color: np.ndarray = None

    DENSITY_INIT = -2.0  # softplus(-2) ~ 0.127: light fog, carved down or grown by training

    def __post_init__(self):
        if self.bounds is None:
            self.bounds = Aabb(vec3(-1, -1, -1), vec3(1, 1, 1))
        n = self.resolution
        if self.raw_density is None:
            self.raw_density = np.full((n, n, n), self.DENSITY_INIT, dtype=np.float64)
        if self.raw_color is None:
            self.raw_color = np.zeros((n, n, n, 3), dtype=np.float64)
        if self.raw_density.shape != (n, n, n):
            raise ValueError(f"raw_density shape {self.raw_density.shape} != ({n},{n},{n})")
        if self.raw_color.shape != (n, n, n, 3):
            raise ValueError(f"raw_color shape {self.raw_color.shape} != ({n},{n},{n},3)")

    @property
    def dtype(self):
        return self.raw_density.dtype

    @property
    def cell_size(self) -> np.ndarray:
        return self.bounds.extent / self.resolution

    def astype(self, dtype) -> "VoxelField":
        return VoxelField(
            resolution=self.resolution,
            bounds=self.bounds,
            raw_density=self.raw_density.astype(dtype),
            raw_color=self.raw_color.astype(dtype),
        )

    def density_grid(self) -> np.ndarray:
        """Activated sigma at every voxel center."""
        return softplus(self.raw_density)

    def color_grid(self) -> np.ndarray:
        return sigmoid(self.raw_color)

    def voxel_centers(self) -> np.ndarray:
        """(N, N, N, 3) world positions of voxel centers."""
        n = self.resolution
        cell = self.cell_size
        axes = [self.bounds.min[a] + (np.arange(n) + 0.5) * cell[a] for a in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    @staticmethod
    def from_density(sigma: np.ndarray, bounds: Aabb | None = None,
                     color: np.ndarray | None = None) -> "VoxelField":
        """Field whose activated density equals ``sigma`` (clamped near zero)."""
        n = sigma.shape[0]
        raw_c = None
        if color is not None:
            c = np.clip(np.asarray(color, dtype=np.float64), 1e-6, 1.0 - 1e-6)
            raw_c = np.log(c / (1.0 - c))
        return VoxelField(
            resolution=n,
            bounds=bounds,
            raw_density=softplus_inv(sigma),
            raw_color=raw_c,
        )


def interp_weights(field: VoxelField, points: np.ndarray):
    """Trilinear interpolation stencil at ``points`` (M, 3).

    Returns (idx, w, inside): flat corner indices (M, 8) into the raveled
    grid, corner weights (M, 8), and the in-bounds mask (M,).  Coordinates
    are clamped to the boundary voxel layer, so out-of-bounds points get a
    valid stencil; callers apply the inside mask to enforce the
    zero-outside-density contract.
    """
    n = field.resolution
    pts = np.asarray(points)
    dt = pts.dtype if pts.dtype in (np.float32, np.float64) else np.float64
    lo = field.bounds.min.astype(dt)
    hi = field.bounds.max.astype(dt)
    inside = np.all((pts >= lo) & (pts <= hi), axis=-1)
    cell = field.cell_size.astype(dt)
    q = (pts - lo) / cell - dt.type(0.5)
    i0 = np.clip(np.floor(q), 0, n - 2).astype(np.int32)
    f = np.clip(q - i0, 0.0, 1.0).astype(dt)
    wx = np.stack([1.0 - f[:, 0], f[:, 0]], axis=1)
    wy = np.stack([1.0 - f[:, 1], f[:, 1]], axis=1)
    wz = np.stack([1.0 - f[:, 2], f[:, 2]], axis=1)
    # Corner order: (dx, dy, dz) in lexicographic order.
    w = (
        wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]
    ).reshape(-1, 8)
    ix = np.stack([i0[:, 0], i0[:, 0] + 1], axis=1)
    iy = np.stack([i0[:, 1], i0[:, 1] + 1], axis=1)
    iz = np.stack([i0[:, 2], i0[:, 2] + 1], axis=1)
    idx = (
        ix[:, :, None, None] * (n * n) + iy[:, None, :, None] * n + iz[:, None, None, :]
    ).reshape(-1, 8)
    return idx, w, inside


def field_sample(field: VoxelField, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(sigma, rgb) at world points (..., 3); sigma is 0 outside bounds."""
    pts = np.asarray(points, dtype=np.float64)
    flat = pts.reshape(-1, 3)
    idx, w, inside = interp_weights(field, flat)
    sig_grid = softplus(field.raw_density).reshape(-1)
    rgb_grid = sigmoid(field.raw_color).reshape(-1, 3)
    sigma = np.einsum("mk,mk->m", w, sig_grid[idx])
    sigma = np.where(inside, sigma, 0.0)
    rgb = np.einsum("mk,mkc->mc", w, rgb_grid[idx])
    shape = pts.shape[:-1]
    return sigma.reshape(shape), rgb.reshape(shape + (3,))


def density_normals(
    field: VoxelField, points: np.ndarray, h: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals from the negated central-difference density gradient.

    Returns (normals, defined): normals are zero where the gradient magnitude
    is below 1e-8 (``defined`` False there).
    """
    if h is None:
        h = 1e-3 * float(np.max(field.bounds.extent))
    if h <= 0:
        raise ValueError("finite-difference step h must be > 0")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    g = np.empty_like(pts)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        sp, _ = field_sample(field, pts + step)
        sm, _ = field_sample(field, pts - step)
        g[:, axis] = (sp - sm) / (2.0 * h)
    mag = np.linalg.norm(g, axis=-1)
    defined = mag >= 1e-8
    normals = np.zeros_like(pts)
    normals[defined] = -g[defined] / mag[defined][:, None]
    return normals, defined


def density_normal(field: VoxelField, p: np.ndarray, h: float | None = None) -> np.ndarray | None:
    """Single-point version of :func:`density_normals`; None when undefined."""
    normals, defined = density_normals(field, np.asarray(p)[None], h)
    return normals[0] if defined[0] else None


def save_checkpoint(field: VoxelField, path: str | Path, step: int = 0) -> None:
    """Header JSON line + raw float32 little-endian density then color arrays."""
    header = {
        "resolution": field.resolution,
        "bounds": {
            "min": [float(v) for v in field.bounds.min],
            "max": [float(v) for v in field.bounds.max],
        },
        "activations": {"density": "softplus", "color": "sigmoid"},
        "step": int(step),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(field.raw_density.astype("<f4").tobytes())
        f.write(field.raw_color.astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[VoxelField, int]:
    path = Path(path)
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: malformed checkpoint header: {e}") from e
        n = int(header["resolution"])
        blob = f.read()
    expected = n**3 * 4 + n**3 * 3 * 4
    if len(blob) != expected:
        raise ValueError(f"{path}: checkpoint payload {len(blob)} bytes, expected {expected}")
    density = np.frombuffer(blob[: n**3 * 4], dtype="<f4").reshape(n, n, n).astype(np.float64)
    color = np.frombuffer(blob[n**3 * 4 :], dtype="<f4").reshape(n, n, n, 3).astype(np.float64)
    bounds = Aabb(
        np.array(header["bounds"]["min"], dtype=np.float64),
        np.array(header["bounds"]["max"], dtype=np.float64),
    )
    field = VoxelField(resolution=n, bounds=bounds, raw_density=density, raw_color=color)
    return field, int(header.get("step", 0))
