"""Procedural SDF assets and sphere tracing.

These objects stand in for generated 3D content: simple primitives combined
by (smooth) union, with exact signed distances, so renders come with exact
depth and normal ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Aabb, Ray, Vec3, vec3

_SHAPES = ("sphere", "box", "torus", "cylinder")

HIT_TOL = 1e-5
NORMAL_EPS = 1e-5
MAX_STEPS = 512


@dataclass(frozen=True)
class DirectionalLight:
    """Directional light; ``direction`` points from the surface toward the light."""

    direction: Vec3
    intensity: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise ValueError("light direction must be nonzero")
        object.__setattr__(self, "direction", d / n)

    def to_dict(self) -> dict:
        return {"direction": [float(v) for v in self.direction], "intensity": float(self.intensity)}

    @staticmethod
    def from_dict(d: dict) -> "DirectionalLight":
        return DirectionalLight(np.array(d["direction"], dtype=np.float64), float(d["intensity"]))


@dataclass(frozen=True)
class Primitive:
    """One SDF primitive with a rigid transform plus uniform scale.

    Canonical shapes and their parameters:
      sphere:   params = (radius,)
      box:      params = (hx, hy, hz) half extents
      torus:    params = (major_radius, minor_radius), tube in the xy plane
      cylinder: params = (radius, half_height), axis along z
    """

    shape: str
    params: tuple
    translation: Vec3 = field(default_factory=lambda: vec3(0, 0, 0))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    scale: float = 1.0
    albedo: tuple = (0.7, 0.7, 0.7)

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown primitive shape {self.shape!r}")
        if self.scale <= 0:
            raise ValueError("primitive scale must be > 0")
        if any(p <= 0 for p in self.params):
            raise ValueError(f"{self.shape} parameters must be > 0, got {self.params}")
        if not all(0.0 <= c <= 1.0 for c in self.albedo):
            raise ValueError("albedo channels must lie in [0, 1]")
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))

    def bounding_radius(self) -> float:
        """Radius of a world-space sphere around ``translation`` containing the shape."""
        if self.shape == "sphere":
            rho = self.params[0]
        elif self.shape == "box":
            rho = math.sqrt(sum(p * p for p in self.params))
        elif self.shape == "torus":
            rho = self.params[0] + self.params[1]
        else:  # cylinder
            rho = math.hypot(self.params[0], self.params[1])
        return self.scale * rho

    def distance(self, p: np.ndarray) -> np.ndarray:
        """Exact signed distance at world points ``p`` of shape (..., 3)."""
        local = (p - self.translation) @ self.rotation / self.scale
        if self.shape == "sphere":
            d = np.linalg.norm(local, axis=-1) - self.params[0]
        elif self.shape == "box":
            q = np.abs(local) - np.asarray(self.params, dtype=np.float64)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            inside = np.minimum(np.max(q, axis=-1), 0.0)
            d = outside + inside
        elif self.shape == "torus":
            major, minor = self.params
            ring = np.hypot(local[..., 0], local[..., 1]) - major
            d = np.hypot(ring, local[..., 2]) - minor
        else:  # cylinder
            radius, half_h = self.params
            dr = np.hypot(local[..., 0], local[..., 1]) - radius
            dz = np.abs(local[..., 2]) - half_h
            outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
            inside = np.minimum(np.maximum(dr, dz), 0.0)
            d = outside + inside
        return d * self.scale


def _smooth_min(d1: np.ndarray, d2: np.ndarray, k: float) -> np.ndarray:
    h = np.clip(0.5 + 0.5 * (d2 - d1) / k, 0.0, 1.0)
    return d2 * (1.0 - h) + d1 * h - k * h * (1.0 - h)


@dataclass(frozen=True)
class SdfAsset:
    """Union (hard or smooth) of primitives, guaranteed to fit inside [-1, 1]^3."""

    primitives: tuple
    combine: str = "union"  # "union" | "smooth"
    smooth_k: float = 0.1

    def __post_init__(self):
        prims = tuple(self.primitives)
        if not prims:
            raise ValueError("asset needs at least one primitive")
        if self.combine not in ("union", "smooth"):
            raise ValueError(f"unknown combine mode {self.combine!r}")
        if self.combine == "smooth" and self.smooth_k <= 0:
            raise ValueError("smooth union parameter k must be > 0")
        object.__setattr__(self, "primitives", prims)
        margin = self.smooth_k / 4.0 if self.combine == "smooth" else 0.0
        for prim in prims:
            reach = np.abs(prim.translation) + prim.bounding_radius() + margin
            if np.any(reach > 1.0 + 1e-9):
                raise ValueError(
                    f"primitive {prim.shape} at {prim.translation} (reach {reach}) "
                    "does not fit inside [-1, 1]^3"
                )

    def bounds(self) -> Aabb:
        """Conservative AABB from primitive bounding spheres."""
        margin = self.smooth_k / 4.0 if self.combine == "smooth" else 0.0
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for prim in self.primitives:
            r = prim.bounding_radius() + margin
            lo = np.minimum(lo, prim.translation - r)
            hi = np.maximum(hi, prim.translation + r)
        return Aabb(lo, hi)

    def albedo_at(self, p: np.ndarray) -> np.ndarray:
        """Albedo of the nearest primitive at each point, (..., 3)."""
        dists = np.stack([prim.distance(p) for prim in self.primitives], axis=-1)
        nearest = np.argmin(dists, axis=-1)
        albedos = np.array([prim.albedo for prim in self.primitives], dtype=np.float64)
        return albedos[nearest]


def sdf_eval(asset: SdfAsset, p: np.ndarray) -> np.ndarray:
    """Signed distance of the combined asset at world points ``p`` of shape (..., 3)."""
    p = np.asarray(p, dtype=np.float64)
    d = asset.primitives[0].distance(p)
    for prim in asset.primitives[1:]:
        di = prim.distance(p)
        if asset.combine == "union":
            d = np.minimum(d, di)
        else:
            d = _smooth_min(d, di, asset.smooth_k)
    return d


def sdf_normal(asset: SdfAsset, p: np.ndarray, eps: float = NORMAL_EPS) -> np.ndarray:
    """Central-difference gradient of the SDF, normalized."""
    p = np.asarray(p, dtype=np.float64)
    g = np.empty_like(p)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = eps
        g[..., axis] = sdf_eval(asset, p + step) - sdf_eval(asset, p - step)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.where(n == 0, 1.0, n)


def sphere_trace_batch(
    asset: SdfAsset,
    origins: np.ndarray,
    directions: np.ndarray,
    max_t: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sphere-trace many rays at once.

    Returns (hit_mask, t, points, normals); entries of misses are undefined
    except hit_mask.  Ray origins are assumed outside the surface.
    """
    if max_t <= 0:
        raise ValueError("max_t must be > 0")
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    t = np.zeros(n)
    active = np.ones(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    for _ in range(MAX_STEPS):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        p = origins[idx] + t[idx, None] * directions[idx]
        d = sdf_eval(asset, p)
        converged = np.abs(d) < HIT_TOL
        hit[idx[converged]] = True
        active[idx[converged]] = False
        t[idx] += np.where(converged, 0.0, d)
        overshoot = t[idx] > max_t
        active[idx[overshoot]] = False
    points = origins + t[:, None] * directions
    normals = np.zeros_like(points)
    if hit.any():
        normals[hit] = sdf_normal(asset, points[hit])
    return hit, t, points, normals


def sphere_trace(asset: SdfAsset, ray: Ray, max_t: float) -> dict | None:
    """First surface crossing along ``ray`` within ``max_t``, or None on miss."""
    hit, t, points, normals = sphere_trace_batch(
        asset, ray.origin[None], ray.direction[None], max_t
    )
    if not hit[0]:
        return None
    return {"t": float(t[0]), "point": points[0], "normal": normals[0]}
