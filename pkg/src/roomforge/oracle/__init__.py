from .sdf import DirectionalLight, Primitive, SdfAsset, sdf_eval, sphere_trace, sphere_trace_batch
from .render import (
    EmptyForegroundError,
    OracleView,
    depth_to_normals,
    perturb_supervision,
    render_view,
    segment_and_pad,
)
from .dataset import Dataset, DatasetParseError, read_dataset, write_dataset

__all__ = [
    "DirectionalLight",
    "Primitive",
    "SdfAsset",
    "sdf_eval",
    "sphere_trace",
    "sphere_trace_batch",
    "EmptyForegroundError",
    "OracleView",
    "depth_to_normals",
    "perturb_supervision",
    "render_view",
    "segment_and_pad",
    "Dataset",
    "DatasetParseError",
    "read_dataset",
    "write_dataset",
]
