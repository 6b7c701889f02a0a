"""Analytic multi-view rendering: posed RGB/depth/normal/mask images on a
white background, plus the preprocessing ops applied between generation
stages (segmentation with padding, depth-gradient supervision normals)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import images
from ..geometry import CameraPose, camera_rays, normalize
from .sdf import DirectionalLight, SdfAsset, sphere_trace_batch

LUMA = np.array([0.299, 0.587, 0.114])


class EmptyForegroundError(ValueError):
    pass


@dataclass
class OracleView:
    """One posed view: rgb in [0,1], Euclidean depth (+inf on background),
    world-frame unit normals, boolean foreground mask."""

    camera: CameraPose
    rgb: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        h, w = self.camera.height, self.camera.width
        if self.rgb.shape != (h, w, 3):
            raise ValueError(f"rgb shape {self.rgb.shape} != ({h}, {w}, 3)")
        if self.depth.shape != (h, w) or self.mask.shape != (h, w):
            raise ValueError("depth/mask shape mismatch")
        if self.normal.shape != (h, w, 3):
            raise ValueError("normal shape mismatch")


def render_view(
    asset: SdfAsset,
    camera: CameraPose,
    lights: list[DirectionalLight],
    max_t: float = 100.0,
) -> OracleView:
    """Sphere-trace every pixel; Lambertian shading on the foreground,
    pure white (1,1,1) with infinite depth on the background.

    RGB is quantized to 8-bit levels so datasets round-trip losslessly
    through PNG.
    """
    rays = camera_rays(camera)
    h, w = rays.height, rays.width
    hit, t, points, normals = sphere_trace_batch(
        asset, rays.origins.reshape(-1, 3), rays.directions.reshape(-1, 3), max_t
    )
    rgb = np.ones((h * w, 3), dtype=np.float64)
    depth = np.full(h * w, np.inf, dtype=np.float64)
    if hit.any():
        albedo = asset.albedo_at(points[hit])
        shade = np.zeros(hit.sum())
        for light in lights:
            shade = shade + light.intensity * np.maximum(0.0, normals[hit] @ light.direction)
        rgb[hit] = np.clip(albedo * shade[:, None], 0.0, 1.0)
        depth[hit] = t[hit]
    # Quantize through uint8 exactly as dataset I/O does, so PNG round-trips
    # reproduce the in-memory buffers bitwise.
    rgb = images.uint8_to_float_rgb(images.float_rgb_to_uint8(rgb))
    normal_img = np.zeros((h * w, 3), dtype=np.float64)
    normal_img[hit] = normals[hit]
    return OracleView(
        camera=camera,
        rgb=rgb.reshape(h, w, 3),
        depth=depth.reshape(h, w).astype(np.float32),
        normal=normal_img.reshape(h, w, 3).astype(np.float32),
        mask=hit.reshape(h, w),
    )


def depth_to_normals(view: OracleView) -> np.ndarray:
    """Surface normals from depth gradients (the supervision signal).

    Each foreground pixel is unprojected to a world point via the pinhole
    model; the normal is the normalized cross product of the point-map
    derivatives along the image axes, oriented to face the camera.  Central
    differences where both neighbors are foreground, one-sided at silhouette
    or image borders, zero where no valid neighbor pair exists.
    """
    rays = camera_rays(view.camera)
    h, w = rays.height, rays.width
    mask = view.mask
    depth = view.depth.astype(np.float64)
    points = rays.origins + depth[..., None] * rays.directions
    points[~mask] = np.nan

    def axis_diff(shift_axis: int) -> tuple[np.ndarray, np.ndarray]:
        plus = np.full_like(points, np.nan)
        minus = np.full_like(points, np.nan)
        if shift_axis == 1:  # along u (columns)
            plus[:, :-1] = points[:, 1:]
            minus[:, 1:] = points[:, :-1]
        else:  # along v (rows)
            plus[:-1, :] = points[1:, :]
            minus[1:, :] = points[:-1, :]
        ok_p = np.isfinite(plus).all(axis=-1)
        ok_m = np.isfinite(minus).all(axis=-1)
        diff = np.zeros_like(points)
        both = ok_p & ok_m
        diff[both] = (plus[both] - minus[both]) * 0.5
        only_p = ok_p & ~ok_m & mask
        diff[only_p] = plus[only_p] - points[only_p]
        only_m = ok_m & ~ok_p & mask
        diff[only_m] = points[only_m] - minus[only_m]
        valid = both | only_p | only_m
        return diff, valid

    dpdu, ok_u = axis_diff(1)
    dpdv, ok_v = axis_diff(0)
    valid = mask & ok_u & ok_v
    n = np.cross(dpdu, dpdv)
    norms = np.linalg.norm(n, axis=-1)
    valid &= norms > 1e-12
    out = np.zeros((h, w, 3), dtype=np.float64)
    out[valid] = n[valid] / norms[valid][:, None]
    # Face the camera: n . view_dir < 0.
    flip = (np.sum(out * rays.directions, axis=-1) > 0) & valid
    out[flip] = -out[flip]
    return out


def perturb_supervision(normals: np.ndarray, noise_deg: float, seed: int) -> np.ndarray:
    """Rotate each nonzero normal by a half-normal angle (scale ``noise_deg``)
    about a random axis in its tangent plane, so the angular deviation equals
    the drawn angle exactly.  Deterministic per seed."""
    if noise_deg < 0:
        raise ValueError(f"noise_deg must be >= 0, got {noise_deg}")
    normals = np.asarray(normals, dtype=np.float64)
    if noise_deg == 0:
        return normals.copy()
    flat = normals.reshape(-1, 3)
    fg = np.linalg.norm(flat, axis=-1) > 0.5
    out = flat.copy()
    rng = np.random.default_rng(seed)
    n_fg = int(fg.sum())
    if n_fg == 0:
        return normals.copy()
    theta = np.abs(rng.normal(0.0, math.radians(noise_deg), size=n_fg))
    rand = rng.normal(size=(n_fg, 3))
    n = flat[fg]
    axis = np.cross(n, rand)
    bad = np.linalg.norm(axis, axis=-1) < 1e-12
    if bad.any():
        axis[bad] = np.cross(n[bad], n[bad] + [1.0, 0.0, 0.0] + rng.normal(size=3) * 0.1)
    axis = normalize(axis)
    rotated = n * np.cos(theta)[:, None] + np.cross(axis, n) * np.sin(theta)[:, None]
    out[fg] = normalize(rotated)
    return out.reshape(normals.shape)


def segment_and_pad(rgb: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Foreground segmentation against a near-white background, then recanvas
    to a centered square with 20% padding on each side of the object box.

    Foreground = luminance < threshold OR rgb distance from white (scaled to
    [0,1]) > threshold / 2.  Returns (rgb_out, mask_out).
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.size == 0:
        raise ValueError(f"expected nonempty (H, W, 3) image, got shape {rgb.shape}")
    lum = rgb @ LUMA
    chroma = np.linalg.norm(rgb - 1.0, axis=-1) / math.sqrt(3.0)
    fg = (lum < threshold) | (chroma > threshold / 2.0)
    if not fg.any():
        raise EmptyForegroundError("no foreground pixel below the white-background threshold")
    rows = np.nonzero(fg.any(axis=1))[0]
    cols = np.nonzero(fg.any(axis=0))[0]
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1
    bh, bw = r1 - r0, c1 - c0
    side = math.ceil(1.4 * max(bh, bw))
    out = np.ones((side, side, 3), dtype=rgb.dtype)
    mask_out = np.zeros((side, side), dtype=bool)
    oy = (side - bh) // 2
    ox = (side - bw) // 2
    box_fg = fg[r0:r1, c0:c1]
    region = out[oy : oy + bh, ox : ox + bw]
    region[box_fg] = rgb[r0:r1, c0:c1][box_fg]
    mask_out[oy : oy + bh, ox : ox + bw] = box_fg
    return out, mask_out
