"""Floor plans: a simple CCW polygon, wall height, and annotated placement
slots.

JSON schema:
    {"name": s, "floor_polygon": [[x, y], ...], "wall_height": h,
     "slots": [{"id": s, "category": s, "position": [x, y, z],
                "yaw": r, "extent": [x, y, z]}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FloorPlanError(ValueError):
    pass


@dataclass(frozen=True)
class PlacementSlot:
    id: str
    category: str
    position: np.ndarray  # floor anchor (bottom center of the allowed box)
    yaw: float
    extent: np.ndarray    # allowed box dimensions

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "extent", np.asarray(self.extent, dtype=np.float64))
        if np.any(self.extent <= 0):
            raise FloorPlanError(f"slot {self.id!r}: extent must be positive, got {self.extent}")

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """World AABB of the allowed placement volume."""
        half = self.extent / 2.0
        lo = self.position - [half[0], half[1], 0.0]
        hi = self.position + [half[0], half[1], self.extent[2]]
        return lo, hi


def polygon_area(points: np.ndarray) -> float:
    """Signed area (positive = counter-clockwise)."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_in_polygon(point: np.ndarray, polygon: np.ndarray) -> bool:
    """Even-odd rule; boundary points count as inside."""
    x, y = float(point[0]), float(point[1])
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        # On-segment check.
        if (
            min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12
            and min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12
            and abs((x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)) < 1e-9
        ):
            return True
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            if x < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def _segments_cross(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    o1, o2 = orient(a1, a2, b1), orient(a1, a2, b2)
    o3, o4 = orient(b1, b2, a1), orient(b1, b2, a2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def polygon_is_simple(points: np.ndarray) -> bool:
    n = len(points)
    for i in range(n):
        a1, a2 = points[i], points[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a1, a2, points[j], points[(j + 1) % n]):
                return False
    return True


@dataclass
class FloorPlan:
    name: str
    floor_polygon: np.ndarray  # (N, 2), CCW
    wall_height: float
    slots: list[PlacementSlot]

    def __post_init__(self):
        self.floor_polygon = np.asarray(self.floor_polygon, dtype=np.float64).reshape(-1, 2)
        if len(self.floor_polygon) < 3:
            raise FloorPlanError(f"plan {self.name!r}: polygon needs >= 3 points")
        if not polygon_is_simple(self.floor_polygon):
            raise FloorPlanError(f"plan {self.name!r}: floor polygon self-intersects")
        if polygon_area(self.floor_polygon) <= 0:
            raise FloorPlanError(f"plan {self.name!r}: floor polygon must be counter-clockwise")
        if self.wall_height <= 0:
            raise FloorPlanError(f"plan {self.name!r}: wall height must be positive")
        ids = set()
        for slot in self.slots:
            if slot.id in ids:
                raise FloorPlanError(f"duplicate slot id {slot.id!r}")
            ids.add(slot.id)
            if not point_in_polygon(slot.position[:2], self.floor_polygon):
                raise FloorPlanError(
                    f"slot {slot.id!r} anchored at {slot.position[:2].tolist()} "
                    "lies outside the floor polygon"
                )

    def slot_by_id(self, slot_id: str) -> PlacementSlot:
        for slot in self.slots:
            if slot.id == slot_id:
                return slot
        raise KeyError(slot_id)


def load_floorplan(path: str | Path) -> FloorPlan:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FloorPlanError(f"{path}: malformed JSON: {e}") from e
    try:
        slots = [
            PlacementSlot(
                id=s["id"],
                category=s["category"],
                position=np.array(s["position"], dtype=np.float64),
                yaw=float(s.get("yaw", 0.0)),
                extent=np.array(s["extent"], dtype=np.float64),
            )
            for s in data.get("slots", [])
        ]
        return FloorPlan(
            name=data.get("name", path.stem),
            floor_polygon=np.array(data["floor_polygon"], dtype=np.float64),
            wall_height=float(data["wall_height"]),
            slots=slots,
        )
    except KeyError as e:
        raise FloorPlanError(f"{path}: missing field {e}") from e


def save_floorplan(plan: FloorPlan, path: str | Path) -> None:
    data = {
        "name": plan.name,
        "floor_polygon": plan.floor_polygon.tolist(),
        "wall_height": plan.wall_height,
        "slots": [
            {
                "id": s.id,
                "category": s.category,
                "position": s.position.tolist(),
                "yaw": s.yaw,
                "extent": s.extent.tolist(),
            }
            for s in plan.slots
        ],
    }
    Path(path).write_text(json.dumps(data, indent=2))
