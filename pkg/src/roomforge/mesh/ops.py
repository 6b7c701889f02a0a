"""Mesh cleanup and color baking: speckle removal, Laplacian smoothing,
vertex normals, and field-color sampling."""

from __future__ import annotations

import numpy as np

from ..field.grid import VoxelField, field_sample
from ..geometry import normalize
from .types import EmptyMeshError, TriangleMesh


def connected_components(mesh: TriangleMesh) -> np.ndarray:
    """Component label per triangle (components connect through shared vertices)."""
    parent = np.arange(mesh.n_vertices)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for tri in mesh.triangles:
        a = find(tri[0])
        b = find(tri[1])
        c = find(tri[2])
        parent[b] = a
        parent[c] = a
    roots = np.array([find(v) for v in mesh.triangles[:, 0]])
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def largest_component(mesh: TriangleMesh, min_component_fraction: float = 0.1) -> TriangleMesh:
    """Drop components smaller than the fraction of the largest one's
    triangle count; ties at the threshold are kept."""
    if mesh.n_triangles == 0:
        raise EmptyMeshError("cannot clean an empty mesh")
    labels = connected_components(mesh)
    counts = np.bincount(labels)
    threshold = min_component_fraction * counts.max()
    keep_labels = np.nonzero(counts >= threshold)[0]
    keep = np.isin(labels, keep_labels)
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return TriangleMesh(
        vertices=mesh.vertices[used],
        triangles=remap[tris],
        vertex_colors=None if mesh.vertex_colors is None else mesh.vertex_colors[used],
        vertex_normals=None if mesh.vertex_normals is None else mesh.vertex_normals[used],
    )


def _adjacency(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Undirected unique edges as (src, dst) index arrays, both directions."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    e = np.unique(e, axis=0)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    return src, dst


def laplacian_smooth(mesh: TriangleMesh, iters: int = 5, lam: float = 0.5) -> TriangleMesh:
    """iters rounds of v <- v + lam * (neighbor centroid - v); topology unchanged."""
    if not (0 < lam <= 1):
        raise ValueError("lambda must be in (0, 1]")
    v = mesh.vertices.copy()
    if iters == 0 or mesh.n_triangles == 0:
        return TriangleMesh(v, mesh.triangles.copy(), mesh.vertex_colors, mesh.vertex_normals)
    src, dst = _adjacency(mesh)
    degree = np.bincount(src, minlength=len(v)).astype(np.float64)
    degree[degree == 0] = 1.0
    for _ in range(iters):
        centroid = np.zeros_like(v)
        for axis in range(3):
            centroid[:, axis] = np.bincount(src, weights=v[dst, axis], minlength=len(v))
        centroid /= degree[:, None]
        moved = degree > 0
        v[moved] += lam * (centroid[moved] - v[moved])
    return TriangleMesh(v, mesh.triangles.copy(), mesh.vertex_colors, mesh.vertex_normals)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident triangle normals, unit length."""
    tn, areas = mesh.triangle_normals_areas()
    weighted = tn * areas[:, None]
    out = np.zeros_like(mesh.vertices)
    for corner in range(3):
        idx = mesh.triangles[:, corner]
        for axis in range(3):
            out[:, axis] += np.bincount(idx, weights=weighted[:, axis], minlength=len(out))
    return normalize(out)


def bake_vertex_colors(mesh: TriangleMesh, field: VoxelField) -> TriangleMesh:
    """Vertex color = field color sampled half a voxel inward along the
    vertex normal (avoids reading the empty exterior); clamped to [0, 1]."""
    normals = mesh.vertex_normals if mesh.vertex_normals is not None else vertex_normals(mesh)
    offset = 0.5 * float(np.min(field.cell_size))
    sample_at = mesh.vertices - offset * normals
    _, rgb = field_sample(field, sample_at)
    return TriangleMesh(
        vertices=mesh.vertices.copy(),
        triangles=mesh.triangles.copy(),
        vertex_colors=np.clip(rgb, 0.0, 1.0),
        vertex_normals=normals,
    )
