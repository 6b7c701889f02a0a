from .floorplan import FloorPlan, FloorPlanError, PlacementSlot, load_floorplan
from .assemble import (
    AssemblyError,
    PlacedAsset,
    SceneGraph,
    UnfillableSlotError,
    assemble_scene,
    check_collisions,
    export_scene,
    fit_to_slot,
    import_scene,
)
from .preview import preview_render

__all__ = [
    "PlacementSlot",
    "FloorPlan",
    "FloorPlanError",
    "load_floorplan",
    "fit_to_slot",
    "check_collisions",
    "assemble_scene",
    "export_scene",
    "import_scene",
    "SceneGraph",
    "PlacedAsset",
    "AssemblyError",
    "UnfillableSlotError",
    "preview_render",
]
