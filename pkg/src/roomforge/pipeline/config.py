"""Pipeline configuration: one TOML file drives all six stages.

Relative paths are resolved against the config file's directory.  The
categories/templates paths fall back to the packaged defaults when omitted.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..field.trainer import LossWeights, TrainConfig
from ..mesh.marching import ExtractionConfig

PROMPT_DATA = Path(__file__).parent.parent / "prompts" / "data"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    categories_path: Path
    templates_path: Path
    floorplan_path: Path
    output_dir: Path
    seed: int = 0
    asset_count: int = 3
    max_prompts: int = 200
    evaluator_endpoint: str | None = None
    # views stage
    view_count: int = 32
    image_size: int = 96
    ring_radius: float = 4.0
    ring_elevation_deg: float = 25.0
    fov_deg: float = 40.0
    # train stage
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    resolution: int = 64
    # mesh stage
    extract: ExtractionConfig = field(default_factory=ExtractionConfig)
    refine_iters: int = 10
    # preview stage
    preview_size: int = 160
    preview_count: int = 2

    def validate_files(self) -> None:
        for label, p in (
            ("categories", self.categories_path),
            ("templates", self.templates_path),
            ("floorplan", self.floorplan_path),
        ):
            if not Path(p).exists():
                raise ConfigError(f"{label} file not found: {p}")

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for key, value in sorted(self.__dict__.items()):
            if key == "output_dir":
                continue
            h.update(f"{key}={value!r};".encode())
        return h.hexdigest()


def _pick(table: dict, dc_obj, fields: list[str]):
    for name in fields:
        if name in table:
            setattr(dc_obj, name, type(getattr(dc_obj, name))(table[name]))


def load_config(path: str | Path, seed: int | None = None,
                output: str | Path | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: malformed TOML: {e}") from e
    base = path.parent

    def resolve(p: str | None, default: Path | None = None) -> Path:
        if p is None:
            if default is None:
                raise ConfigError(f"{path}: missing required path")
            return default
        q = Path(p)
        return q if q.is_absolute() else (base / q).resolve()

    paths = data.get("paths", {})
    pipe = data.get("pipeline", {})
    cfg = PipelineConfig(
        categories_path=resolve(paths.get("categories"), PROMPT_DATA / "categories.toml"),
        templates_path=resolve(paths.get("templates"), PROMPT_DATA / "templates.toml"),
        floorplan_path=resolve(paths.get("floorplan")),
        output_dir=Path(output) if output else resolve(paths.get("output", "out")),
        seed=int(pipe.get("seed", 0)),
        asset_count=int(pipe.get("asset_count", 3)),
        max_prompts=int(pipe.get("max_prompts", 200)),
        evaluator_endpoint=pipe.get("evaluator_endpoint"),
    )
    if seed is not None:
        cfg.seed = seed

    views = data.get("views", {})
    cfg.view_count = int(views.get("count", cfg.view_count))
    cfg.image_size = int(views.get("image_size", cfg.image_size))
    cfg.ring_radius = float(views.get("radius", cfg.ring_radius))
    cfg.ring_elevation_deg = float(views.get("elevation_deg", cfg.ring_elevation_deg))
    cfg.fov_deg = float(views.get("fov_deg", cfg.fov_deg))

    train = data.get("train", {})
    cfg.resolution = int(train.pop("resolution", cfg.resolution))
    _pick(train, cfg.train, [
        "steps", "rays_per_batch", "samples_per_ray", "learning_rate",
        "beta1", "beta2", "eps", "supervision_noise_deg", "near", "far", "dtype",
    ])
    _pick(data.get("loss_weights", {}), cfg.weights, [
        "photo", "sparsity", "orientation", "smoothness", "normal_supervision", "eps_d",
    ])
    extract = data.get("extract", {})
    cfg.refine_iters = int(extract.pop("refine_iters", cfg.refine_iters))
    _pick(extract, cfg.extract, ["iso", "smooth_iters", "smooth_lambda", "min_component_fraction"])
    if "grid_resolution" in extract:
        cfg.extract.grid_resolution = int(extract["grid_resolution"])

    preview = data.get("preview", {})
    cfg.preview_size = int(preview.get("image_size", cfg.preview_size))
    cfg.preview_count = int(preview.get("count", cfg.preview_count))
    return cfg


def write_train_config_toml(cfg: PipelineConfig, path: str | Path) -> None:
    """Record the effective training configuration next to checkpoints."""
    t, w = cfg.train, cfg.weights
    lines = [
        "[train]",
        f"steps = {t.steps}",
        f"rays_per_batch = {t.rays_per_batch}",
        f"samples_per_ray = {t.samples_per_ray}",
        f"learning_rate = {t.learning_rate}",
        f"beta1 = {t.beta1}",
        f"beta2 = {t.beta2}",
        f"eps = {t.eps}",
        f"seed = {t.seed}",
        f"supervision_noise_deg = {t.supervision_noise_deg}",
        f"near = {t.near}",
        f"far = {t.far}",
        f'dtype = "{t.dtype}"',
        f"resolution = {cfg.resolution}",
        "",
        "[loss_weights]",
        f"photo = {w.photo}",
        f"sparsity = {w.sparsity}",
        f"orientation = {w.orientation}",
        f"smoothness = {w.smoothness}",
        f"normal_supervision = {w.normal_supervision}",
        f"eps_d = {w.eps_d}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")
