"""Cameras, rays, and the coordinate conventions shared by every module.

Conventions (fixed once, used everywhere):

- World frame is right-handed with +z up.  Units are meters.
- A camera looks down its own -z axis; +x is right, +y is up in the image.
- ``CameraPose.rotation`` maps camera-frame vectors to world-frame vectors
  (world <- camera).
- Pixel centers sit at half-integer coordinates: pixel (row, col) has its
  center at (col + 0.5, row + 0.5).  Row 0 is the top image row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Vec3 = np.ndarray  # shape (3,), float64


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unit-normalize along ``axis``; zero vectors are returned unchanged."""
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return np.where(n > 0, v / np.where(n == 0, 1.0, n), v)


def is_rotation(m: np.ndarray, tol: float = 1e-6) -> bool:
    if m.shape != (3, 3):
        return False
    if not np.allclose(m.T @ m, np.eye(3), atol=tol):
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box; min <= max componentwise."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        if np.any(lo > hi):
            raise ValueError(f"Aabb min {lo} exceeds max {hi}")

    @property
    def extent(self) -> Vec3:
        return self.max - self.min

    def contains(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return np.all((p >= self.min) & (p <= self.max), axis=-1)

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3  # unit norm

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"ray direction must be unit norm, got |d| = {n}")

    def at(self, t: float) -> Vec3:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera pose and intrinsics.

    ``rotation`` is the 3x3 orthonormal world <- camera matrix; ``fov_y`` is
    the full vertical field of view in radians.
    """

    position: Vec3
    rotation: np.ndarray
    fov_y: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        if not is_rotation(self.rotation):
            raise ValueError("camera rotation must be orthonormal with det +1")
        if not (0.0 < self.fov_y < math.pi):
            raise ValueError(f"fov_y must lie in (0, pi), got {self.fov_y}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1 pixel")

    @property
    def forward(self) -> Vec3:
        """World-frame viewing direction (the camera's -z axis)."""
        return -self.rotation[:, 2]

    def to_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "fov_y": float(self.fov_y),
            "width": int(self.width),
            "height": int(self.height),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraPose":
        return CameraPose(
            position=np.array(d["position"], dtype=np.float64),
            rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
            fov_y=float(d["fov_y"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class RayMap:
    """Per-pixel ray origins and directions, (H, W, 3) each.

    ``frame`` records which frame the rays are expressed in: "world" or
    "reference" (some other camera's frame).
    """

    origins: np.ndarray
    directions: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        if self.origins.shape != self.directions.shape or self.origins.shape[-1] != 3:
            raise ValueError("origins/directions must both be (H, W, 3)")
        norms = np.linalg.norm(self.directions, axis=-1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("raymap directions must be unit norm")

    @property
    def height(self) -> int:
        return self.origins.shape[0]

    @property
    def width(self) -> int:
        return self.origins.shape[1]


def look_at_rotation(position: Vec3, target: Vec3, up: Vec3 | None = None) -> np.ndarray:
    """World <- camera rotation for a camera at ``position`` looking at ``target``.

    The camera -z axis points at the target; +y is aligned with ``up``
    (world +z by default) as closely as possible.
    """
    if up is None:
        up = vec3(0.0, 0.0, 1.0)
    fwd = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("camera position coincides with look-at target")
    fwd = fwd / n
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        # Looking straight along the up axis; pick an arbitrary right vector.
        right = np.cross(fwd, vec3(0.0, 1.0, 0.0))
        rn = np.linalg.norm(right)
    right = right / rn
    cam_up = np.cross(right, fwd)
    # Columns are the camera axes in world coordinates: x, y, z = right, up, -forward.
    return np.stack([right, cam_up, -fwd], axis=1)


def generate_camera_ring(
    count: int,
    radius: float,
    elevation: float,
    look_at: Vec3,
    image_size: tuple[int, int],
    fov_y: float,
) -> list[CameraPose]:
    """Cameras evenly spaced in azimuth on a circle, all looking at ``look_at``.

    ``elevation`` is the angle above the look_at plane, so every position has
    z = look_at.z + radius * sin(elevation).  Deterministic: azimuth of camera
    i is 2*pi*i/count starting at 0.
    """
    if count < 1:
        raise ValueError(f"camera count must be >= 1, got {count}")
    if radius <= 0:
        raise ValueError(f"ring radius must be > 0, got {radius}")
    look_at = np.asarray(look_at, dtype=np.float64)
    width, height = image_size
    cameras = []
    for i in range(count):
        azimuth = 2.0 * math.pi * i / count
        offset = vec3(
            radius * math.cos(azimuth) * math.cos(elevation),
            radius * math.sin(azimuth) * math.cos(elevation),
            radius * math.sin(elevation),
        )
        position = look_at + offset
        rotation = look_at_rotation(position, look_at)
        cameras.append(
            CameraPose(position=position, rotation=rotation, fov_y=fov_y, width=width, height=height)
        )
    return cameras


def camera_rays(camera: CameraPose) -> RayMap:
    """One world-frame ray per pixel through the pixel center (pinhole model)."""
    h, w = camera.height, camera.width
    tan_half = math.tan(camera.fov_y / 2.0)
    aspect = w / h
    # Pixel centers at half-integers; +y up means row 0 maps to the top.
    cols = (np.arange(w, dtype=np.float64) + 0.5) / w   # in (0, 1)
    rows = (np.arange(h, dtype=np.float64) + 0.5) / h
    x = (2.0 * cols - 1.0) * tan_half * aspect
    y = (1.0 - 2.0 * rows) * tan_half
    xx, yy = np.meshgrid(x, y)
    dirs_cam = np.stack([xx, yy, -np.ones_like(xx)], axis=-1)
    dirs_world = dirs_cam @ camera.rotation.T
    dirs_world = normalize(dirs_world)
    origins = np.broadcast_to(camera.position, dirs_world.shape).copy()
    return RayMap(origins=origins, directions=dirs_world, frame="world")


def compute_raymap(camera: CameraPose, reference: CameraPose) -> RayMap:
    """Rays of ``camera`` re-expressed in ``reference``'s camera frame.

    This is the relative-pose conditioning signal consumed by multi-view
    generators: origins and directions are mapped through the inverse of the
    reference pose.
    """
    rays = camera_rays(camera)
    r_inv = reference.rotation.T
    origins = (rays.origins - reference.position) @ r_inv.T
    directions = rays.directions @ r_inv.T
    return RayMap(origins=origins, directions=directions, frame="reference")


def raymap_to_world(raymap: RayMap, reference: CameraPose) -> RayMap:
    """Inverse of :func:`compute_raymap`."""
    origins = raymap.origins @ reference.rotation.T + reference.position
    directions = raymap.directions @ reference.rotation.T
    return RayMap(origins=origins, directions=directions, frame="world")


def ray_aabb_intersect(
    origins: np.ndarray, directions: np.ndarray, box: Aabb
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slab test for rays against one box.

    Returns (hit, t_near, t_far) with t clamped to >= 0; vectorized over
    leading dimensions of (..., 3) inputs.
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions
        t0 = (box.min - origins) * inv
        t1 = (box.max - origins) * inv
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    # Parallel rays: slab bounds become +-inf from the division; a NaN appears
    # only when the origin sits exactly on a slab plane, treat as inside.
    lo = np.where(np.isnan(lo), -np.inf, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    t_near = np.max(lo, axis=-1)
    t_far = np.min(hi, axis=-1)
    t_near = np.maximum(t_near, 0.0)
    hit = t_near < t_far
    return hit, t_near, t_far


def write_cameras_json(cameras: list[CameraPose], path: str | Path) -> None:
    payload = {"cameras": [c.to_dict() for c in cameras]}
    Path(path).write_text(json.dumps(payload, indent=2))


def read_cameras_json(path: str | Path) -> list[CameraPose]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: malformed camera JSON: {e}") from e
    if "cameras" not in payload:
        raise ValueError(f"{path}: missing 'cameras' field")
    return [CameraPose.from_dict(d) for d in payload["cameras"]]
