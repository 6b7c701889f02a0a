"""Indexed triangle mesh with optional per-vertex colors and normals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyMeshError(ValueError):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray                 # (V, 3) float64
    triangles: np.ndarray                # (T, 3) int
    vertex_colors: np.ndarray | None = None   # (V, 3) in [0, 1]
    vertex_normals: np.ndarray | None = None  # (V, 3) unit

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle indices out of range")
        if self.vertex_colors is not None:
            self.vertex_colors = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
            if len(self.vertex_colors) != len(self.vertices):
                raise ValueError("vertex_colors length must match vertices")
        if self.vertex_normals is not None:
            self.vertex_normals = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
            if len(self.vertex_normals) != len(self.vertices):
                raise ValueError("vertex_normals length must match vertices")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_normals_areas(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit normals and areas per triangle (degenerate: zero normal)."""
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        cross = np.cross(b - a, c - a)
        norms = np.linalg.norm(cross, axis=-1)
        areas = norms / 2.0
        unit = np.zeros_like(cross)
        ok = norms > 1e-18
        unit[ok] = cross[ok] / norms[ok][:, None]
        return unit, areas

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise EmptyMeshError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, scale: float = 1.0, yaw: float = 0.0,
                    translation: np.ndarray | None = None) -> "TriangleMesh":
        """Apply yaw (about +z), then uniform scale, then translation."""
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        v = (self.vertices @ rot.T) * scale
        if translation is not None:
            v = v + translation
        normals = self.vertex_normals @ rot.T if self.vertex_normals is not None else None
        return TriangleMesh(
            vertices=v,
            triangles=self.triangles.copy(),
            vertex_colors=None if self.vertex_colors is None else self.vertex_colors.copy(),
            vertex_normals=normals,
        )
