"""Ray-traced scene previews.

A median-split BVH accelerates ray-triangle queries; with pruning disabled at
the leaf kernel level, the BVH path returns bitwise-identical images to the
exhaustive render, which is the correctness oracle used in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraPose, camera_rays
from ..mesh.types import TriangleMesh

LEAF_SIZE = 8


@dataclass
class _Soup:
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normals: np.ndarray
    corner_colors: np.ndarray  # (T, 3 corners, 3 channels)


def _build_soup(meshes: list[TriangleMesh]) -> _Soup:
    v0s, e1s, e2s, cols = [], [], [], []
    for mesh in meshes:
        v = mesh.vertices
        t = mesh.triangles
        colors = mesh.vertex_colors if mesh.vertex_colors is not None else np.full(
            (mesh.n_vertices, 3), 0.7
        )
        v0s.append(v[t[:, 0]])
        e1s.append(v[t[:, 1]] - v[t[:, 0]])
        e2s.append(v[t[:, 2]] - v[t[:, 0]])
        cols.append(colors[t])
    v0 = np.concatenate(v0s)
    e1 = np.concatenate(e1s)
    e2 = np.concatenate(e2s)
    n = np.cross(e1, e2)
    mag = np.linalg.norm(n, axis=-1, keepdims=True)
    n = n / np.where(mag == 0, 1.0, mag)
    return _Soup(v0=v0, e1=e1, e2=e2, normals=n, corner_colors=np.concatenate(cols))


def _intersect(o, d, v0, e1, e2):
    """Moller-Trumbore for all (ray, triangle) pairs of the given subsets.

    o, d: (R, 3); v0/e1/e2: (T, 3).  Returns t, u, v, valid of shape (R, T).
    """
    pvec = np.cross(d[:, None, :], e2[None, :, :])
    det = np.einsum("rtk,tk->rt", pvec, e1)
    valid = np.abs(det) > 1e-12
    inv = np.where(valid, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    tvec = o[:, None, :] - v0[None, :, :]
    u = np.einsum("rtk,rtk->rt", tvec, pvec) * inv
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("rtk,rk->rt", qvec, d) * inv
    t = np.einsum("rtk,tk->rt", qvec, e2) * inv
    valid &= (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-9)
    return t, u, v, valid


def _update_best(best, ray_idx, t, u, v, valid, tri_ids):
    """Lexicographic (t, triangle id) minimum; associative, so traversal
    order cannot change the result."""
    bt, bi, bu, bv = best
    masked_t = np.where(valid, t, np.inf)
    masked_i = np.where(valid, tri_ids[None, :], np.iinfo(np.int64).max)
    order = np.lexsort((masked_i, masked_t), axis=1)
    first = order[:, 0]
    rows = np.arange(t.shape[0])
    cand_t = masked_t[rows, first]
    cand_i = masked_i[rows, first]
    cand_u = u[rows, first]
    cand_v = v[rows, first]
    improve = (cand_t < bt[ray_idx]) | ((cand_t == bt[ray_idx]) & (cand_i < bi[ray_idx]))
    sel = ray_idx[improve]
    bt[sel] = cand_t[improve]
    bi[sel] = cand_i[improve]
    bu[sel] = cand_u[improve]
    bv[sel] = cand_v[improve]


class Bvh:
    """Median-split BVH over triangle centroids (deterministic build)."""

    def __init__(self, soup: _Soup):
        self.soup = soup
        t_count = len(soup.v0)
        centroids = soup.v0 + (soup.e1 + soup.e2) / 3.0
        tri_min = np.minimum(np.minimum(soup.v0, soup.v0 + soup.e1), soup.v0 + soup.e2)
        tri_max = np.maximum(np.maximum(soup.v0, soup.v0 + soup.e1), soup.v0 + soup.e2)
        self.nodes: list[tuple] = []  # (lo, hi, left, right, start, count)
        self.order = np.arange(t_count)

        def build(start: int, end: int) -> int:
            idx = self.order[start:end]
            lo = tri_min[idx].min(axis=0)
            hi = tri_max[idx].max(axis=0)
            node_id = len(self.nodes)
            self.nodes.append(None)
            if end - start <= LEAF_SIZE:
                self.nodes[node_id] = (lo, hi, -1, -1, start, end - start)
                return node_id
            axis = int(np.argmax(hi - lo))
            keys = centroids[idx, axis]
            local = np.argsort(keys, kind="stable")
            self.order[start:end] = idx[local]
            mid = start + (end - start) // 2
            left = build(start, mid)
            right = build(mid, end)
            self.nodes[node_id] = (lo, hi, left, right, -1, -1)
            return node_id

        build(0, t_count)

    def trace(self, origins: np.ndarray, dirs: np.ndarray):
        r = len(origins)
        best = (
            np.full(r, np.inf),
            np.full(r, np.iinfo(np.int64).max, dtype=np.int64),
            np.zeros(r),
            np.zeros(r),
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_d = 1.0 / dirs
        inv_d = np.where(np.isfinite(inv_d), inv_d, np.inf)

        def visit(node_id: int, ray_idx: np.ndarray):
            lo, hi, left, right, start, count = self.nodes[node_id]
            o = origins[ray_idx]
            inv = inv_d[ray_idx]
            t0 = (lo - o) * inv
            t1 = (hi - o) * inv
            near = np.nanmax(np.minimum(t0, t1), axis=1)
            far = np.nanmin(np.maximum(t0, t1), axis=1)
            near = np.maximum(near, 0.0)
            # Prune rays that already found a closer hit than the box.
            alive = (near <= far) & (near <= best[0][ray_idx])
            if not alive.any():
                return
            sub = ray_idx[alive]
            if left < 0:
                tri_ids = self.order[start : start + count]
                t, u, v, valid = _intersect(
                    origins[sub], dirs[sub],
                    self.soup.v0[tri_ids], self.soup.e1[tri_ids], self.soup.e2[tri_ids],
                )
                _update_best(best, sub, t, u, v, valid, tri_ids)
            else:
                visit(left, sub)
                visit(right, sub)

        visit(0, np.arange(r))
        return best


def brute_force_trace(soup: _Soup, origins: np.ndarray, dirs: np.ndarray, chunk: int = 512):
    r = len(origins)
    best = (
        np.full(r, np.inf),
        np.full(r, np.iinfo(np.int64).max, dtype=np.int64),
        np.zeros(r),
        np.zeros(r),
    )
    ray_idx = np.arange(r)
    for start in range(0, len(soup.v0), chunk):
        tri_ids = np.arange(start, min(start + chunk, len(soup.v0)))
        t, u, v, valid = _intersect(
            origins, dirs, soup.v0[tri_ids], soup.e1[tri_ids], soup.e2[tri_ids]
        )
        _update_best(best, ray_idx, t, u, v, valid, tri_ids)
    return best


def _shade(soup: _Soup, best, dirs, lights) -> np.ndarray:
    bt, bi, bu, bv = best
    hit = np.isfinite(bt)
    img = np.ones((len(bt), 3))
    if not hit.any():
        return img
    tri = bi[hit]
    u = bu[hit]
    v = bv[hit]
    w = 1.0 - u - v
    corners = soup.corner_colors[tri]  # (P, 3, 3)
    albedo = w[:, None] * corners[:, 0] + u[:, None] * corners[:, 1] + v[:, None] * corners[:, 2]
    normals = soup.normals[tri]
    # Double-sided shading: flip the normal toward the viewer.
    facing = np.sum(normals * dirs[hit], axis=1)
    normals = np.where(facing[:, None] > 0, -normals, normals)
    shade = np.zeros(len(tri))
    for light in lights:
        shade += light.intensity * np.maximum(0.0, normals @ light.direction)
    img[hit] = np.clip(albedo * np.clip(shade, 0.0, 1.0)[:, None], 0.0, 1.0)
    return img


def preview_render(
    scene,
    camera: CameraPose,
    lights,
    use_bvh: bool = True,
) -> np.ndarray:
    """Ray-traced preview of an assembled scene, white background."""
    meshes = scene.world_meshes() if hasattr(scene, "world_meshes") else list(scene)
    soup = _build_soup(meshes)
    rays = camera_rays(camera)
    o = rays.origins.reshape(-1, 3)
    d = rays.directions.reshape(-1, 3)
    if use_bvh:
        best = Bvh(soup).trace(o, d)
    else:
        best = brute_force_trace(soup, o, d)
    img = _shade(soup, best, d, lights)
    return img.reshape(camera.height, camera.width, 3)
