"""Rasterization-based vertex color refinement.

The rasterizer is a per-triangle scanline with a z-buffer and
perspective-correct barycentrics.  Shading is flat Lambertian per triangle;
pixel color is the interpolated vertex albedo times the triangle shade, so
the render is linear in the vertex colors and color refinement needs no
geometry gradients.
"""

from __future__ import annotations

import math

import numpy as np

from ..geometry import CameraPose
from .metrics import ssim
from .ops import vertex_normals
from .types import TriangleMesh


def _project(camera: CameraPose, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Screen (col, row) coordinates and positive view depth per point."""
    cam = (points - camera.position) @ camera.rotation
    depth = -cam[:, 2]
    tan_half = math.tan(camera.fov_y / 2.0)
    aspect = camera.width / camera.height
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc_x = cam[:, 0] / depth / (tan_half * aspect)
        ndc_y = cam[:, 1] / depth / tan_half
    col = (ndc_x + 1.0) * camera.width / 2.0 - 0.5
    row = (1.0 - ndc_y) * camera.height / 2.0 - 0.5
    return np.stack([col, row], axis=1), depth


def rasterize_mesh(mesh: TriangleMesh, camera: CameraPose) -> dict:
    """Z-buffered coverage: per pixel the triangle id (-1 = background) and
    perspective-correct barycentric coordinates."""
    h, w = camera.height, camera.width
    tri_id = np.full((h, w), -1, dtype=np.int64)
    bary = np.zeros((h, w, 3))
    zbuf = np.full((h, w), np.inf)
    screen, depth = _project(camera, mesh.vertices)
    for ti, tri in enumerate(mesh.triangles):
        d = depth[tri]
        if np.any(d <= 1e-9):
            continue
        p = screen[tri]
        area = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        if abs(area) < 1e-12:
            continue
        c0 = max(0, int(math.ceil(p[:, 0].min() - 0.5)))
        c1 = min(w - 1, int(math.floor(p[:, 0].max() + 0.5)))
        r0 = max(0, int(math.ceil(p[:, 1].min() - 0.5)))
        r1 = min(h - 1, int(math.floor(p[:, 1].max() + 0.5)))
        if c0 > c1 or r0 > r1:
            continue
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        cc, rr = np.meshgrid(cols, rows)
        # Edge functions give signed areas; normalize to barycentrics.
        def edge(ax, ay, bx, by):
            return (bx - ax) * (rr - ay) - (by - ay) * (cc - ax)

        w0 = edge(p[1, 0], p[1, 1], p[2, 0], p[2, 1])
        w1 = edge(p[2, 0], p[2, 1], p[0, 0], p[0, 1])
        w2 = edge(p[0, 0], p[0, 1], p[1, 0], p[1, 1])
        if area < 0:
            w0, w1, w2, a = -w0, -w1, -w2, -area
        else:
            a = area
        cover = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not cover.any():
            continue
        b = np.stack([w0, w1, w2], axis=-1) / a
        # Perspective correction via 1/depth interpolation.
        inv_d = 1.0 / d
        denom = b @ inv_d
        z = 1.0 / denom
        closer = cover & (z < zbuf[rr, cc])
        if not closer.any():
            continue
        bp = b * inv_d[None, None, :] / denom[..., None]
        sel_r = rr[closer]
        sel_c = cc[closer]
        zbuf[sel_r, sel_c] = z[closer]
        tri_id[sel_r, sel_c] = ti
        bary[sel_r, sel_c] = bp[closer]
    return {"tri_id": tri_id, "bary": bary, "depth": zbuf}


def _triangle_shades(mesh: TriangleMesh, lights) -> np.ndarray:
    normals, _ = mesh.triangle_normals_areas()
    shade = np.zeros(mesh.n_triangles)
    for light in lights:
        shade += light.intensity * np.maximum(0.0, normals @ light.direction)
    return np.clip(shade, 0.0, 1.0)


def render_mesh_image(mesh: TriangleMesh, camera: CameraPose, lights,
                      raster: dict | None = None) -> np.ndarray:
    """Flat-Lambertian render on a white background."""
    if raster is None:
        raster = rasterize_mesh(mesh, camera)
    if mesh.vertex_colors is None:
        raise ValueError("mesh has no vertex colors to render")
    shade = _triangle_shades(mesh, lights)
    img = np.ones((camera.height, camera.width, 3))
    covered = raster["tri_id"] >= 0
    tri = raster["tri_id"][covered]
    b = raster["bary"][covered]
    corner_colors = mesh.vertex_colors[mesh.triangles[tri]]  # (P, 3, 3)
    albedo = np.einsum("pk,pkc->pc", b, corner_colors)
    img[covered] = np.clip(albedo * shade[tri][:, None], 0.0, 1.0)
    return img


def refine_colors(
    mesh: TriangleMesh,
    dataset,
    iters: int = 20,
) -> tuple[TriangleMesh, list[tuple[int, float, float]]]:
    """Diagonally preconditioned gradient descent on vertex colors.

    Minimizes the MSE between flat-Lambertian renders (dataset lights) and
    dataset RGB over pixels that are foreground in both; geometry is
    untouched.  Returns the recolored mesh and a (iter, mse, ssim) trace,
    SSIM averaged across views.
    """
    if not dataset.views:
        raise ValueError("refine_colors needs a nonempty dataset")
    colors = (mesh.vertex_colors if mesh.vertex_colors is not None
              else np.full((mesh.n_vertices, 3), 0.5)).copy()
    work = TriangleMesh(mesh.vertices, mesh.triangles, colors,
                        mesh.vertex_normals if mesh.vertex_normals is not None
                        else vertex_normals(mesh))
    shade = _triangle_shades(work, dataset.lights)
    rasters = [rasterize_mesh(work, v.camera) for v in dataset.views]

    # Flatten per-view coverage into one linear system: pixel = shade * B @ colors.
    vidx, weights, targets, shades = [], [], [], []
    for view, raster in zip(dataset.views, rasters):
        covered = (raster["tri_id"] >= 0) & view.mask
        tri = raster["tri_id"][covered]
        b = raster["bary"][covered]
        vidx.append(work.triangles[tri])             # (P, 3) vertex ids
        weights.append(b)                            # (P, 3) barycentric
        shades.append(shade[tri])                    # (P,)
        targets.append(np.asarray(view.rgb, dtype=np.float64)[covered])
    if not any(len(v) for v in vidx):
        return work, []
    vidx = np.concatenate(vidx)
    weights = np.concatenate(weights)
    shades = np.concatenate(shades)
    targets = np.concatenate(targets)
    npix = len(targets)

    # Diagonal of the Gauss-Newton Hessian for preconditioning.
    diag = np.zeros(mesh.n_vertices)
    contrib = (weights * shades[:, None]) ** 2
    for corner in range(3):
        diag += np.bincount(vidx[:, corner], weights=contrib[:, corner],
                            minlength=mesh.n_vertices)
    diag = np.maximum(diag * 2.0 / npix, 1e-12)

    trace = []
    for it in range(iters):
        albedo = np.einsum("pk,pkc->pc", weights, colors[vidx])
        pred = albedo * shades[:, None]
        resid = pred - targets
        mse = float(np.mean(resid**2))
        grad = np.zeros_like(colors)
        coeff = (2.0 / (npix * 3)) * resid * shades[:, None]
        for corner in range(3):
            for ch in range(3):
                grad[:, ch] += np.bincount(
                    vidx[:, corner], weights=coeff[:, ch] * weights[:, corner],
                    minlength=mesh.n_vertices,
                )
        colors -= grad / (diag[:, None] / 3.0)
        np.clip(colors, 0.0, 1.0, out=colors)
        work.vertex_colors = colors
        ssims = [
            ssim(render_mesh_image(work, v.camera, dataset.lights, raster=r), v.rgb)
            for v, r in zip(dataset.views, rasters)
        ]
        trace.append((it, mse, float(np.mean(ssims))))
    return work, trace
