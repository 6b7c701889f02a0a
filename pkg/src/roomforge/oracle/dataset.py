"""Multi-view dataset container and its on-disk layout.

Directory layout:
    views/NNNN.rgb.png      8-bit RGB
    views/NNNN.depth.pfm    float32, +inf on background
    views/NNNN.normal.pfm   float32 world-frame unit normals
    views/NNNN.mask.png     8-bit grayscale, 0/255
    cameras.json            camera list (geometry schema)
    meta.json               seed, asset AABB, light list
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import images
from ..geometry import Aabb, read_cameras_json, write_cameras_json
from .render import OracleView
from .sdf import DirectionalLight


class DatasetParseError(ValueError):
    pass


@dataclass
class Dataset:
    views: list
    asset_aabb: Aabb
    seed: int
    lights: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.views) < 2:
            raise ValueError(f"dataset needs >= 2 views, got {len(self.views)}")
        h, w = self.views[0].camera.height, self.views[0].camera.width
        for v in self.views:
            if (v.camera.height, v.camera.width) != (h, w):
                raise ValueError("all views must share image dimensions")

    @property
    def image_size(self) -> tuple[int, int]:
        return self.views[0].camera.height, self.views[0].camera.width


def write_dataset(dataset: Dataset, directory: str | Path) -> None:
    directory = Path(directory)
    views_dir = directory / "views"
    views_dir.mkdir(parents=True, exist_ok=True)
    for i, view in enumerate(dataset.views):
        stem = f"{i:04d}"
        images.write_png(views_dir / f"{stem}.rgb.png", images.float_rgb_to_uint8(view.rgb))
        images.write_pfm(views_dir / f"{stem}.depth.pfm", view.depth)
        images.write_pfm(views_dir / f"{stem}.normal.pfm", view.normal)
        images.write_png(
            views_dir / f"{stem}.mask.png", (view.mask * np.uint8(255)).astype(np.uint8)
        )
    write_cameras_json([v.camera for v in dataset.views], directory / "cameras.json")
    meta = {
        "seed": int(dataset.seed),
        "asset_aabb": {
            "min": [float(v) for v in dataset.asset_aabb.min],
            "max": [float(v) for v in dataset.asset_aabb.max],
        },
        "lights": [l.to_dict() for l in dataset.lights],
        "view_count": len(dataset.views),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))


def _require(meta: dict, key: str, path: Path):
    if key not in meta:
        raise DatasetParseError(f"{path}: missing field '{key}'")
    return meta[key]


def read_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise DatasetParseError(f"{meta_path}: file not found")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"{meta_path}: malformed JSON: {e}") from e
    cam_path = directory / "cameras.json"
    if not cam_path.exists():
        raise DatasetParseError(f"{cam_path}: file not found")
    cameras = read_cameras_json(cam_path)
    aabb_raw = _require(meta, "asset_aabb", meta_path)
    aabb = Aabb(
        np.array(aabb_raw["min"], dtype=np.float64),
        np.array(aabb_raw["max"], dtype=np.float64),
    )
    lights = [DirectionalLight.from_dict(d) for d in meta.get("lights", [])]
    views = []
    for i, camera in enumerate(cameras):
        stem = directory / "views" / f"{i:04d}"
        for suffix in (".rgb.png", ".depth.pfm", ".normal.pfm", ".mask.png"):
            if not Path(str(stem) + suffix).exists():
                raise DatasetParseError(f"{stem}{suffix}: file not found")
        rgb = images.uint8_to_float_rgb(images.read_png(Path(str(stem) + ".rgb.png")))
        depth = images.read_pfm(Path(str(stem) + ".depth.pfm"))
        normal = images.read_pfm(Path(str(stem) + ".normal.pfm"))
        mask = images.read_png(Path(str(stem) + ".mask.png")) > 127
        views.append(OracleView(camera=camera, rgb=rgb, depth=depth, normal=normal, mask=mask))
    return Dataset(views=views, asset_aabb=aabb, seed=int(_require(meta, "seed", meta_path)), lights=lights)
