from .types import EmptyMeshError, TriangleMesh
from .marching import marching_cubes
from .ops import bake_vertex_colors, laplacian_smooth, largest_component, vertex_normals
from .metrics import ssim
from .refine import rasterize_mesh, refine_colors, render_mesh_image
from .io import MeshFormatError, import_mesh, export_mesh

__all__ = [
    "TriangleMesh",
    "EmptyMeshError",
    "marching_cubes",
    "largest_component",
    "laplacian_smooth",
    "bake_vertex_colors",
    "vertex_normals",
    "ssim",
    "refine_colors",
    "rasterize_mesh",
    "render_mesh_image",
    "export_mesh",
    "import_mesh",
    "MeshFormatError",
]
