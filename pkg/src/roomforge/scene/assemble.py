"""Scene assembly: fit meshes into slots, build floor/wall geometry, check
collisions, export/import whole scenes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh.io import read_gltf, write_gltf, yaw_to_quaternion, export_obj
from ..mesh.types import TriangleMesh
from .floorplan import FloorPlan, PlacementSlot, point_in_polygon

FLOOR_COLOR = (0.82, 0.80, 0.76)
WALL_COLOR = (0.93, 0.92, 0.90)


class AssemblyError(RuntimeError):
    pass


class UnfillableSlotError(AssemblyError):
    pass


class DegenerateAssetError(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    scale: float
    yaw: float
    translation: np.ndarray


@dataclass
class PlacedAsset:
    slot_id: str
    mesh: TriangleMesh
    placement: Placement

    def world_mesh(self) -> TriangleMesh:
        return self.mesh.transformed(
            scale=self.placement.scale,
            yaw=self.placement.yaw,
            translation=self.placement.translation,
        )

    def world_aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.world_mesh().aabb()


@dataclass
class SceneGraph:
    plan: FloorPlan
    floor: TriangleMesh
    walls: TriangleMesh
    assets: list[PlacedAsset] = field(default_factory=list)

    def world_meshes(self) -> list[TriangleMesh]:
        return [self.floor, self.walls] + [a.world_mesh() for a in self.assets]


def fit_to_slot(mesh: TriangleMesh, slot: PlacementSlot) -> Placement:
    """Uniform scale + yaw + translation putting the mesh inside the slot box.

    Scale is the min extent ratio after yaw; the scaled mesh's AABB bottom
    center lands on the slot anchor.
    """
    rotated = mesh.transformed(yaw=slot.yaw)
    lo, hi = rotated.aabb()
    size = hi - lo
    if np.any(size < 1e-9):
        raise DegenerateAssetError(f"mesh extent {size} is degenerate")
    scale = float(np.min(slot.extent / size))
    center = (lo + hi) / 2.0
    bottom_center = np.array([center[0], center[1], lo[2]]) * scale
    translation = slot.position - bottom_center
    return Placement(scale=scale, yaw=slot.yaw, translation=translation)


def _ear_clip(polygon: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping."""
    indices = list(range(len(polygon)))
    tris = []
    guard = 0
    while len(indices) > 3 and guard < 10000:
        guard += 1
        n = len(indices)
        clipped = False
        for k in range(n):
            i0, i1, i2 = indices[(k - 1) % n], indices[k], indices[(k + 1) % n]
            a, b, c = polygon[i0], polygon[i1], polygon[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-12:
                continue  # reflex or degenerate corner
            ear = True
            for j in indices:
                if j in (i0, i1, i2):
                    continue
                p = polygon[j]
                # Inside-triangle test via signed areas.
                d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
                d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
                if d1 >= -1e-12 and d2 >= -1e-12 and d3 >= -1e-12:
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                indices.pop(k)
                clipped = True
                break
        if not clipped:
            raise AssemblyError("ear clipping failed; polygon may be degenerate")
    tris.append(tuple(indices))
    return tris


def build_floor_mesh(plan: FloorPlan) -> TriangleMesh:
    poly = plan.floor_polygon
    verts = np.column_stack([poly, np.zeros(len(poly))])
    tris = np.array(_ear_clip(poly), dtype=np.int64)
    colors = np.tile(FLOOR_COLOR, (len(verts), 1))
    return TriangleMesh(vertices=verts, triangles=tris, vertex_colors=colors)


def build_wall_mesh(plan: FloorPlan) -> TriangleMesh:
    poly = plan.floor_polygon
    h = plan.wall_height
    verts = []
    tris = []
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        base = len(verts)
        verts.extend([
            [a[0], a[1], 0.0], [b[0], b[1], 0.0],
            [b[0], b[1], h], [a[0], a[1], h],
        ])
        # Inward-facing: the polygon is CCW so the interior lies left of a->b.
        tris.append((base, base + 1, base + 2))
        tris.append((base, base + 2, base + 3))
    colors = np.tile(WALL_COLOR, (len(verts), 1))
    return TriangleMesh(vertices=np.array(verts), triangles=np.array(tris, dtype=np.int64),
                        vertex_colors=colors)


def _aabbs_overlap(lo_a, hi_a, lo_b, hi_b, eps: float = 1e-9) -> bool:
    return bool(np.all(lo_a < hi_b - eps) and np.all(lo_b < hi_a - eps))


def check_collisions(scene: SceneGraph) -> list[dict]:
    """Pairwise AABB overlaps among placed assets plus wall containment.

    Returns violation records {"a": slot_id, "b": slot_id | "wall"}; empty
    list means the layout is valid.
    """
    violations = []
    boxes = [(a.slot_id, *a.world_aabb()) for a in scene.assets]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if _aabbs_overlap(boxes[i][1], boxes[i][2], boxes[j][1], boxes[j][2]):
                violations.append({"a": boxes[i][0], "b": boxes[j][0]})
    poly = scene.plan.floor_polygon
    for slot_id, lo, hi in boxes:
        corners = [
            (lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1]),
        ]
        if not all(point_in_polygon(np.array(c), poly) for c in corners):
            violations.append({"a": slot_id, "b": "wall"})
    return violations


def assemble_scene(
    plan: FloorPlan,
    assets: dict[str, list[TriangleMesh]],
    seed: int = 0,
) -> SceneGraph:
    """Fill every slot with a seeded-random candidate of its category.

    Raises UnfillableSlotError when a category has no candidates and
    AssemblyError when the resulting layout has collisions.
    """
    rng = np.random.default_rng(seed)
    scene = SceneGraph(plan=plan, floor=build_floor_mesh(plan), walls=build_wall_mesh(plan))
    for slot in plan.slots:
        candidates = assets.get(slot.category, [])
        if not candidates:
            raise UnfillableSlotError(
                f"slot {slot.id!r} wants category {slot.category!r} but no assets match"
            )
        mesh = candidates[int(rng.integers(0, len(candidates)))]
        placement = fit_to_slot(mesh, slot)
        scene.assets.append(PlacedAsset(slot_id=slot.id, mesh=mesh, placement=placement))
    violations = check_collisions(scene)
    if violations:
        raise AssemblyError(f"assembled scene has collisions: {violations}")
    return scene


def export_scene(scene: SceneGraph, path, fmt: str | None = None) -> None:
    """Write glTF (nodes with TRS transforms, shared meshes instanced once) or
    a merged OBJ with transforms baked in."""
    from pathlib import Path

    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "gltf":
        meshes = [scene.floor, scene.walls]
        nodes = [
            {"mesh": 0, "name": "floor"},
            {"mesh": 1, "name": "walls"},
        ]
        mesh_index: dict[int, int] = {}
        for asset in scene.assets:
            key = id(asset.mesh)
            if key not in mesh_index:
                meshes.append(asset.mesh)
                mesh_index[key] = len(meshes) - 1
            nodes.append(
                {
                    "mesh": mesh_index[key],
                    "name": asset.slot_id,
                    "translation": [float(v) for v in asset.placement.translation],
                    "rotation": yaw_to_quaternion(asset.placement.yaw),
                    "scale": [asset.placement.scale] * 3,
                }
            )
        write_gltf(path, meshes, nodes)
    elif fmt == "obj":
        merged_v = []
        merged_t = []
        merged_c = []
        offset = 0
        for mesh in scene.world_meshes():
            merged_v.append(mesh.vertices)
            merged_t.append(mesh.triangles + offset)
            colors = mesh.vertex_colors if mesh.vertex_colors is not None else np.full(
                (mesh.n_vertices, 3), 0.7
            )
            merged_c.append(colors)
            offset += mesh.n_vertices
        merged = TriangleMesh(
            vertices=np.concatenate(merged_v),
            triangles=np.concatenate(merged_t),
            vertex_colors=np.concatenate(merged_c),
        )
        export_obj(merged, path)
    else:
        raise ValueError(f"unsupported scene format {fmt!r}")


def import_scene(path) -> list[TriangleMesh]:
    """Read a scene glTF back as world-space meshes (transforms applied)."""
    meshes, nodes = read_gltf(path)
    out = []
    for node in nodes:
        mesh = meshes[node["mesh"]]
        scale = node.get("scale", [1.0, 1.0, 1.0])[0]
        quat = node.get("rotation", [0.0, 0.0, 0.0, 1.0])
        yaw = 2.0 * np.arctan2(quat[2], quat[3])
        translation = np.array(node.get("translation", [0.0, 0.0, 0.0]))
        out.append(mesh.transformed(scale=scale, yaw=yaw, translation=translation))
    return out
