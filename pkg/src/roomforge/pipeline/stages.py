"""Stage orchestration: prompts -> views -> train -> mesh -> assemble ->
preview, with a content-hash manifest so unchanged stages never rerun.

Each stage derives its seeds as hash(global_seed, stage, index), declares the
artifacts it depends on, and records input/output hashes plus wall time in
``out/manifest.json`` (written atomically)."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..field.grid import VoxelField, load_checkpoint, save_checkpoint
from ..field.trainer import TrainConfig, train
from ..geometry import generate_camera_ring, vec3
from ..mesh import (
    bake_vertex_colors,
    export_mesh,
    import_mesh,
    laplacian_smooth,
    largest_component,
    marching_cubes,
    refine_colors,
)
from ..oracle import Dataset, DirectionalLight, read_dataset, render_view, write_dataset
from ..prompts import (
    HeuristicEvaluator,
    RemoteEvaluator,
    enumerate_prompts,
    load_categories_toml,
    load_templates_toml,
    rank_and_export,
    read_prompt_csv,
    score_prompts,
)
from ..scene import assemble_scene, import_scene, load_floorplan, preview_render
from .archetypes import albedo_for, archetype_for, build_archetype
from .config import PipelineConfig, write_train_config_toml

STAGES = ["prompts", "views", "train", "mesh", "assemble", "preview"]

DEMO_LIGHTS = [
    DirectionalLight(vec3(0.3, 0.2, 0.9)),
    DirectionalLight(vec3(-0.5, -0.3, 0.6), 0.5),
    DirectionalLight(vec3(0.6, -0.6, 0.4), 0.4),
]


class StageError(RuntimeError):
    pass


class DependencyError(StageError):
    pass


def derive_seed(global_seed: int, stage: str, index: int) -> int:
    digest = hashlib.sha256(f"{global_seed}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(root: Path) -> dict[str, str]:
    """Content hashes of every file under root (or the single file)."""
    root = Path(root)
    if root.is_file():
        return {root.name: _sha256_file(root)}
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = _sha256_file(p)
    return out


class Manifest:
    def __init__(self, path: Path):
        self.path = path
        if path.exists():
            self.data = json.loads(path.read_text())
        else:
            self.data = {"version": __version__, "stages": {}}

    def save(self) -> None:
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2))
        os.replace(tmp, self.path)

    def record(self, stage: str, **entry) -> None:
        entry["order"] = STAGES.index(stage)
        self.data["stages"][stage] = entry
        self.save()

    def get(self, stage: str) -> dict | None:
        return self.data["stages"].get(stage)


def _stage_dirs(config: PipelineConfig) -> dict[str, Path]:
    out = Path(config.output_dir)
    return {name: out / name for name in STAGES}


def _check_dependency(manifest: Manifest, stage: str, artifact_dir: Path) -> dict[str, str]:
    """The artifacts a stage consumes must exist and match their recorded
    hashes; otherwise the producing stage must be rerun first."""
    entry = manifest.get(stage)
    if entry is None or entry.get("status") not in ("done", "skipped"):
        raise DependencyError(f"stage {stage!r} has not produced outputs yet")
    if entry.get("status") == "skipped":
        return {}
    recorded = entry.get("outputs", {})
    for rel, digest in recorded.items():
        p = artifact_dir / rel
        if not p.exists():
            raise DependencyError(f"missing artifact from stage {stage!r}: {p}")
        if _sha256_file(p) != digest:
            raise DependencyError(f"artifact changed since stage {stage!r} ran: {p}")
    return recorded


def _selection(config: PipelineConfig, prompts_dir: Path) -> list[dict]:
    """Per floor-plan category, the best-ranked prompt whose Object matches."""
    rows = read_prompt_csv(prompts_dir / "prompts.csv")
    plan = load_floorplan(config.floorplan_path)
    categories = []
    for slot in plan.slots:
        if slot.category not in categories:
            categories.append(slot.category)
    selected = []
    for category in categories[: config.asset_count] if config.asset_count else []:
        match = next(
            (r for r in rows if r["object"].lower() == category.lower() and r["rank"]),
            None,
        )
        if match is None:
            raise StageError(
                f"no ranked prompt produced an object matching slot category {category!r}"
            )
        selected.append(
            {
                "category": category,
                "prompt": match["prompt"],
                "object": match["object"],
                "color": match["color"],
                "archetype": archetype_for(match["object"]),
            }
        )
    return selected


# ---------------------------------------------------------------- stages


def _run_prompts(config: PipelineConfig, dirs: dict) -> None:
    out = dirs["prompts"]
    out.mkdir(parents=True, exist_ok=True)
    lists = load_categories_toml(config.categories_path)
    templates = load_templates_toml(config.templates_path)
    records = enumerate_prompts(lists, templates, config.max_prompts,
                                seed=derive_seed(config.seed, "prompts", 0))
    if config.evaluator_endpoint:
        evaluator = RemoteEvaluator(config.evaluator_endpoint)
    else:
        evaluator = HeuristicEvaluator()
    score_prompts(records, evaluator)
    rank_and_export(records, out / "prompts.csv")


def _run_views(config: PipelineConfig, dirs: dict) -> None:
    out = dirs["views"]
    out.mkdir(parents=True, exist_ok=True)
    selected = _selection(config, dirs["prompts"])
    (out / "selection.json").write_text(json.dumps(selected, indent=2))
    for i, item in enumerate(selected):
        seed = derive_seed(config.seed, "views", i)
        asset = build_archetype(item["archetype"], seed, albedo_for(item["color"]))
        cameras = generate_camera_ring(
            config.view_count,
            config.ring_radius,
            math.radians(config.ring_elevation_deg),
            vec3(0, 0, 0),
            (config.image_size, config.image_size),
            math.radians(config.fov_deg),
        )
        views = [render_view(asset, cam, DEMO_LIGHTS) for cam in cameras]
        dataset = Dataset(views=views, asset_aabb=asset.bounds(), seed=seed, lights=DEMO_LIGHTS)
        write_dataset(dataset, out / item["category"])


def _run_train(config: PipelineConfig, dirs: dict) -> None:
    out = dirs["train"]
    out.mkdir(parents=True, exist_ok=True)
    selected = json.loads((dirs["views"] / "selection.json").read_text())
    write_train_config_toml(config, out / "train_config.toml")
    for i, item in enumerate(selected):
        dataset = read_dataset(dirs["views"] / item["category"])
        tc = TrainConfig(**{**config.train.__dict__, "seed": derive_seed(config.seed, "train", i)})
        result = train(dataset, config.weights, tc, resolution=config.resolution)
        save_checkpoint(result["field"], out / f"{item['category']}.ckpt", tc.steps)
        trace_lines = ["step,photo,sparsity,orientation,smoothness,normal_supervision,total"]
        for step, rep in result["trace"]:
            trace_lines.append(
                f"{step},{rep.photo},{rep.sparsity},{rep.orientation},"
                f"{rep.smoothness},{rep.normal_supervision},{rep.total}"
            )
        (out / f"{item['category']}.trace.csv").write_text("\n".join(trace_lines) + "\n")


def _run_mesh(config: PipelineConfig, dirs: dict) -> None:
    out = dirs["mesh"]
    out.mkdir(parents=True, exist_ok=True)
    selected = json.loads((dirs["views"] / "selection.json").read_text())
    for item in selected:
        field, _ = load_checkpoint(dirs["train"] / f"{item['category']}.ckpt")
        mesh = marching_cubes(field, config.extract)
        mesh = largest_component(mesh, config.extract.min_component_fraction)
        mesh = laplacian_smooth(mesh, config.extract.smooth_iters, config.extract.smooth_lambda)
        mesh = bake_vertex_colors(mesh, field)
        if config.refine_iters > 0:
            dataset = read_dataset(dirs["views"] / item["category"])
            mesh, trace = refine_colors(mesh, dataset, iters=config.refine_iters)
            lines = ["iter,mse,ssim"] + [f"{i},{m},{s}" for i, m, s in trace]
            (out / f"{item['category']}.refine.csv").write_text("\n".join(lines) + "\n")
        export_mesh(mesh, out / f"{item['category']}.obj")
        export_mesh(mesh, out / f"{item['category']}.gltf")


def _run_assemble(config: PipelineConfig, dirs: dict) -> None:
    out = dirs["assemble"]
    out.mkdir(parents=True, exist_ok=True)
    selected = json.loads((dirs["views"] / "selection.json").read_text())
    plan = load_floorplan(config.floorplan_path)
    assets = {
        item["category"]: [import_mesh(dirs["mesh"] / f"{item['category']}.gltf")]
        for item in selected
    }
    scene = assemble_scene(plan, assets, seed=derive_seed(config.seed, "assemble", 0))
    from ..scene.assemble import export_scene

    export_scene(scene, out / "scene.gltf")
    export_scene(scene, out / "scene.obj")


def _run_preview(config: PipelineConfig, dirs: dict) -> None:
    from .. import images
    from ..geometry import CameraPose, look_at_rotation

    out = dirs["preview"]
    out.mkdir(parents=True, exist_ok=True)
    meshes = import_scene(dirs["assemble"] / "scene.gltf")
    plan = load_floorplan(config.floorplan_path)
    poly = plan.floor_polygon
    center = np.array([*poly.mean(axis=0), plan.wall_height * 0.35])
    span = float(max(poly.max(axis=0) - poly.min(axis=0)))
    for k in range(config.preview_count):
        angle = 2 * math.pi * k / max(1, config.preview_count) + 0.4
        pos = center + np.array(
            [span * 0.85 * math.cos(angle), span * 0.85 * math.sin(angle), plan.wall_height * 0.9]
        )
        camera = CameraPose(
            position=pos,
            rotation=look_at_rotation(pos, center),
            fov_y=math.radians(60),
            width=config.preview_size,
            height=config.preview_size,
        )
        img = preview_render(meshes, camera, DEMO_LIGHTS)
        images.write_png(out / f"view_{k:02d}.png", images.float_rgb_to_uint8(img))


_RUNNERS = {
    "prompts": _run_prompts,
    "views": _run_views,
    "train": _run_train,
    "mesh": _run_mesh,
    "assemble": _run_assemble,
    "preview": _run_preview,
}

_DEPS = {
    "prompts": [],
    "views": ["prompts"],
    "train": ["views"],
    "mesh": ["train", "views"],
    "assemble": ["mesh", "views"],
    "preview": ["assemble"],
}

# Stages that do per-asset work; they skip when asset_count is 0.
_NEEDS_ASSETS = {"views", "train", "mesh", "assemble", "preview"}


def _input_hash(config: PipelineConfig, stage: str, manifest: Manifest) -> str:
    h = hashlib.sha256()
    h.update(config.content_hash().encode())
    h.update(stage.encode())
    for dep in _DEPS[stage]:
        entry = manifest.get(dep)
        outputs = entry.get("outputs", {}) if entry else {}
        h.update(json.dumps(outputs, sort_keys=True).encode())
    return h.hexdigest()


def run_stage(stage: str, config: PipelineConfig, manifest: Manifest | None = None) -> dict:
    """Execute one stage (or reuse its cached outputs).  Returns the manifest
    entry."""
    if stage not in STAGES:
        raise StageError(f"unknown stage {stage!r}; expected one of {STAGES}")
    out_root = Path(config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    if manifest is None:
        manifest = Manifest(out_root / "manifest.json")
    dirs = _stage_dirs(config)

    for dep in _DEPS[stage]:
        _check_dependency(manifest, dep, dirs[dep])

    if stage in _NEEDS_ASSETS and config.asset_count == 0:
        entry = {"status": "skipped", "note": "no assets requested (asset_count = 0)",
                 "outputs": {}, "wall_s": 0.0}
        manifest.record(stage, **entry)
        return entry

    input_hash = _input_hash(config, stage, manifest)
    previous = manifest.get(stage)
    if previous and previous.get("status") == "done" and previous.get("input_hash") == input_hash:
        outputs = previous.get("outputs", {})
        if all((dirs[stage] / rel).exists() and _sha256_file(dirs[stage] / rel) == digest
               for rel, digest in outputs.items()):
            entry = dict(previous)
            entry["cached"] = True
            manifest.record(stage, **entry)
            return entry

    start = time.time()
    try:
        _RUNNERS[stage](config, dirs)
    except (DependencyError, StageError):
        raise
    except Exception as e:
        manifest.record(stage, status="failed", error=f"{type(e).__name__}: {e}",
                        input_hash=input_hash, outputs={}, wall_s=time.time() - start)
        raise StageError(f"stage {stage!r} failed: {e}") from e
    entry = {
        "status": "done",
        "input_hash": input_hash,
        "outputs": _hash_tree(dirs[stage]),
        "wall_s": round(time.time() - start, 3),
        "cached": False,
    }
    manifest.record(stage, **entry)
    return entry


def run_pipeline(config: PipelineConfig) -> Manifest:
    """All six stages in order; the first failure aborts with partial
    progress recorded."""
    config.validate_files()
    out_root = Path(config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_root / "manifest.json")
    for stage in STAGES:
        run_stage(stage, config, manifest)
    return manifest
