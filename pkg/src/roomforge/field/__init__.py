from .grid import VoxelField, density_normal, density_normals, field_sample, load_checkpoint, save_checkpoint
from .volume import VolumeSample, render_image, render_ray, render_rays
from .losses import (
    normal_supervision_loss,
    orientation_loss,
    smoothness_loss,
    sparsity_loss,
)
from .trainer import (
    DivergedError,
    LossReport,
    LossWeights,
    TrainConfig,
    TrainState,
    train,
    train_step,
)

__all__ = [
    "VoxelField",
    "density_normal",
    "density_normals",
    "field_sample",
    "save_checkpoint",
    "load_checkpoint",
    "VolumeSample",
    "render_ray",
    "render_rays",
    "render_image",
    "sparsity_loss",
    "orientation_loss",
    "smoothness_loss",
    "normal_supervision_loss",
    "LossWeights",
    "LossReport",
    "TrainConfig",
    "TrainState",
    "DivergedError",
    "train",
    "train_step",
]
