"""Mesh file I/O: OBJ with per-vertex colors (xyzrgb extension) and glTF 2.0
with COLOR_0, self-contained via a base64 data-URI buffer."""

from __future__ import annotations

import base64
import json
import math
from pathlib import Path

import numpy as np

from .types import TriangleMesh

FLOAT = 5126   # glTF componentType float32
UINT32 = 5125


class MeshFormatError(ValueError):
    pass


def export_obj(mesh: TriangleMesh, path: str | Path) -> None:
    lines = []
    colors = mesh.vertex_colors
    for i, v in enumerate(mesh.vertices):
        if colors is not None:
            c = colors[i]
            lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g} {c[0]:.6f} {c[1]:.6f} {c[2]:.6f}")
        else:
            lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def import_obj(path: str | Path) -> TriangleMesh:
    verts, colors, tris = [], [], []
    has_color = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            vals = [float(x) for x in parts[1:]]
            if len(vals) not in (3, 6):
                raise MeshFormatError(f"{path}:{lineno}: vertex needs 3 or 6 floats")
            verts.append(vals[:3])
            if len(vals) == 6:
                has_color = True
                colors.append(vals[3:])
            else:
                colors.append([1.0, 1.0, 1.0])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) != 3:
                raise MeshFormatError(f"{path}:{lineno}: only triangle faces supported")
            tris.append(idx)
    return TriangleMesh(
        vertices=np.array(verts, dtype=np.float64).reshape(-1, 3),
        triangles=np.array(tris, dtype=np.int64).reshape(-1, 3),
        vertex_colors=np.array(colors, dtype=np.float64) if has_color else None,
    )


def _accessor(buffers: list, data: bytes, component: int, count: int, kind: str,
              minmax: tuple | None = None) -> dict:
    offset = sum(len(b) for b in buffers)
    pad = (-offset) % 4
    if pad:
        buffers.append(b"\x00" * pad)
        offset += pad
    buffers.append(data)
    acc = {
        "bufferView": None,  # filled by caller with view index
        "componentType": component,
        "count": count,
        "type": kind,
        "_offset": offset,
        "_length": len(data),
    }
    if minmax is not None:
        acc["min"], acc["max"] = minmax
    return acc


def build_gltf(meshes: list[TriangleMesh], nodes: list[dict]) -> dict:
    """Assemble a glTF 2.0 document with one buffer holding all meshes.

    ``nodes`` entries: {"mesh": index, "name": str, "translation": [3],
    "rotation": [4 quaternion xyzw], "scale": [3]} (transform keys optional).
    """
    chunks: list[bytes] = []
    accessors: list[dict] = []
    gltf_meshes = []
    for mesh in meshes:
        pos = mesh.vertices.astype("<f4")
        acc_pos = _accessor(
            chunks, pos.tobytes(), FLOAT, len(pos), "VEC3",
            ([float(x) for x in pos.min(axis=0)], [float(x) for x in pos.max(axis=0)]),
        )
        accessors.append(acc_pos)
        pos_idx = len(accessors) - 1
        attributes = {"POSITION": pos_idx}
        if mesh.vertex_colors is not None:
            col = np.clip(mesh.vertex_colors, 0.0, 1.0).astype("<f4")
            accessors.append(_accessor(chunks, col.tobytes(), FLOAT, len(col), "VEC3"))
            attributes["COLOR_0"] = len(accessors) - 1
        idx = mesh.triangles.astype("<u4")
        accessors.append(_accessor(chunks, idx.tobytes(), UINT32, idx.size, "SCALAR"))
        gltf_meshes.append(
            {"primitives": [{"attributes": attributes, "indices": len(accessors) - 1, "mode": 4}]}
        )
    blob = b"".join(chunks)
    views = []
    for acc in accessors:
        views.append({"buffer": 0, "byteOffset": acc.pop("_offset"), "byteLength": acc.pop("_length")})
        acc["bufferView"] = len(views) - 1
    out_nodes = []
    for node in nodes:
        entry = {"mesh": node["mesh"]}
        for key in ("name", "translation", "rotation", "scale"):
            if key in node:
                entry[key] = node[key]
        out_nodes.append(entry)
    return {
        "asset": {"version": "2.0", "generator": "roomforge"},
        "scene": 0,
        "scenes": [{"nodes": list(range(len(out_nodes)))}],
        "nodes": out_nodes,
        "meshes": gltf_meshes,
        "accessors": accessors,
        "bufferViews": views,
        "buffers": [
            {
                "byteLength": len(blob),
                "uri": "data:application/octet-stream;base64," + base64.b64encode(blob).decode(),
            }
        ],
    }


def write_gltf(path: str | Path, meshes: list[TriangleMesh], nodes: list[dict]) -> None:
    Path(path).write_text(json.dumps(build_gltf(meshes, nodes), indent=1))


def _read_accessor(doc: dict, blob: bytes, index: int) -> np.ndarray:
    acc = doc["accessors"][index]
    view = doc["bufferViews"][acc["bufferView"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    n_comp = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}[acc["type"]]
    dtype = {FLOAT: "<f4", UINT32: "<u4", 5123: "<u2"}[acc["componentType"]]
    count = acc["count"] * n_comp
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
    return data.reshape(acc["count"], n_comp) if n_comp > 1 else data


def read_gltf(path: str | Path) -> tuple[list[TriangleMesh], list[dict]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MeshFormatError(f"{path}: malformed glTF JSON: {e}") from e
    uri = doc["buffers"][0]["uri"]
    prefix = "data:application/octet-stream;base64,"
    if uri.startswith(prefix):
        blob = base64.b64decode(uri[len(prefix):])
    else:
        blob = (path.parent / uri).read_bytes()
    meshes = []
    for m in doc["meshes"]:
        prim = m["primitives"][0]
        verts = _read_accessor(doc, blob, prim["attributes"]["POSITION"]).astype(np.float64)
        tris = np.asarray(_read_accessor(doc, blob, prim["indices"]), dtype=np.int64).reshape(-1, 3)
        colors = None
        if "COLOR_0" in prim["attributes"]:
            colors = _read_accessor(doc, blob, prim["attributes"]["COLOR_0"]).astype(np.float64)
        meshes.append(TriangleMesh(vertices=verts, triangles=tris, vertex_colors=colors))
    return meshes, doc.get("nodes", [])


def yaw_to_quaternion(yaw: float) -> list[float]:
    """Quaternion (x, y, z, w) for a rotation about +z."""
    return [0.0, 0.0, math.sin(yaw / 2.0), math.cos(yaw / 2.0)]


def export_mesh(mesh: TriangleMesh, path: str | Path, fmt: str | None = None) -> None:
    """Write OBJ (ASCII xyzrgb) or glTF; format inferred from the suffix when
    not given."""
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "obj":
        export_obj(mesh, path)
    elif fmt == "gltf":
        write_gltf(path, [mesh], [{"mesh": 0, "name": "mesh"}])
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r}")


def import_mesh(path: str | Path) -> TriangleMesh:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower()
    if fmt == "obj":
        return import_obj(path)
    if fmt == "gltf":
        meshes, _ = read_gltf(path)
        return meshes[0]
    raise MeshFormatError(f"unsupported mesh format {fmt!r}")
