from .config import ConfigError, PipelineConfig, load_config
from .stages import DependencyError, StageError, STAGES, run_pipeline, run_stage

__all__ = [
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "run_stage",
    "run_pipeline",
    "STAGES",
    "StageError",
    "DependencyError",
]
