"""Keyword-to-geometry mapping for the oracle stage.

The text-to-geometry step of the real system is generative; here an explicit
shipped map decides which procedural SDF archetype stands in for each object
word, and a color-name map picks the albedo.  Both are data, not inference.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..geometry import vec3
from ..oracle.sdf import Primitive, SdfAsset

DATA = Path(__file__).parent / "data"

with open(DATA / "archetypes.json") as f:
    _MAPS = json.load(f)

KEYWORD_TO_ARCHETYPE: dict[str, str] = _MAPS["keywords"]
COLOR_NAMES: dict[str, list[float]] = _MAPS["colors"]
DEFAULT_ALBEDO = (0.7, 0.65, 0.6)


def albedo_for(color_name: str) -> tuple:
    key = color_name.strip().lower()
    return tuple(COLOR_NAMES.get(key, DEFAULT_ALBEDO))


def archetype_for(object_name: str) -> str:
    key = object_name.strip().lower()
    return KEYWORD_TO_ARCHETYPE.get(key, "box")


def _dim(rng: np.random.Generator, base: float, jitter: float = 0.1) -> float:
    return float(base * (1.0 + rng.uniform(-jitter, jitter)))


def build_archetype(kind: str, seed: int, albedo: tuple = DEFAULT_ALBEDO) -> SdfAsset:
    """Procedural SDF asset of the named archetype, seeded size jitter."""
    rng = np.random.default_rng(seed)
    dark = tuple(max(0.05, c * 0.55) for c in albedo)
    if kind == "sphere":
        return SdfAsset(primitives=(
            Primitive("sphere", (_dim(rng, 0.5),), albedo=albedo),
        ))
    if kind == "chair":
        seat_h = _dim(rng, 0.05)
        seat = Primitive("box", (0.3, 0.3, seat_h), translation=vec3(0, 0, 0.0), albedo=albedo)
        back = Primitive("box", (0.3, 0.04, 0.3), translation=vec3(0, -0.26, 0.3), albedo=albedo)
        legs = [
            Primitive("cylinder", (0.035, 0.2), translation=vec3(sx * 0.24, sy * 0.24, -0.25),
                      albedo=dark)
            for sx in (-1, 1) for sy in (-1, 1)
        ]
        return SdfAsset(primitives=(seat, back, *legs))
    if kind == "table":
        top = Primitive("box", (0.45, 0.3, 0.035), translation=vec3(0, 0, 0.2), albedo=albedo)
        legs = [
            Primitive("box", (0.035, 0.035, 0.22), translation=vec3(sx * 0.4, sy * 0.25, -0.05),
                      albedo=dark)
            for sx in (-1, 1) for sy in (-1, 1)
        ]
        return SdfAsset(primitives=(top, *legs))
    if kind == "vase":
        body = Primitive("sphere", (_dim(rng, 0.3),), translation=vec3(0, 0, -0.15), albedo=albedo)
        neck = Primitive("cylinder", (0.1, 0.25), translation=vec3(0, 0, 0.2), albedo=albedo)
        lip = Primitive("torus", (0.12, 0.035), translation=vec3(0, 0, 0.42), albedo=dark)
        return SdfAsset(primitives=(body, neck, lip), combine="smooth", smooth_k=0.08)
    if kind == "lamp":
        base = Primitive("cylinder", (0.22, 0.03), translation=vec3(0, 0, -0.55), albedo=dark)
        pole = Primitive("cylinder", (0.03, 0.45), translation=vec3(0, 0, -0.08), albedo=dark)
        shade = Primitive("sphere", (_dim(rng, 0.22),), translation=vec3(0, 0, 0.45), albedo=albedo)
        return SdfAsset(primitives=(base, pole, shade))
    if kind == "stool":
        seat = Primitive("cylinder", (0.26, 0.05), translation=vec3(0, 0, 0.1), albedo=albedo)
        legs = [
            Primitive(
                "cylinder", (0.03, 0.22),
                translation=vec3(0.18 * np.cos(a), 0.18 * np.sin(a), -0.18),
                albedo=dark,
            )
            for a in (0.0, 2.094, 4.189)
        ]
        return SdfAsset(primitives=(seat, *legs))
    if kind == "blob":
        pot = Primitive("cylinder", (0.22, 0.16), translation=vec3(0, 0, -0.4), albedo=dark)
        lobes = [
            Primitive(
                "sphere", (_dim(rng, 0.18),),
                translation=vec3(rng.uniform(-0.14, 0.14), rng.uniform(-0.14, 0.14),
                                 0.0 + 0.22 * i),
                albedo=albedo,
            )
            for i in range(3)
        ]
        return SdfAsset(primitives=(pot, *lobes), combine="smooth", smooth_k=0.1)
    if kind == "clock":
        face = Primitive("cylinder", (0.34, 0.05), rotation=_rot_x90(), albedo=albedo)
        rim = Primitive("torus", (0.34, 0.04), rotation=_rot_x90(), albedo=dark)
        return SdfAsset(primitives=(face, rim))
    # box archetype: generic solid
    return SdfAsset(primitives=(
        Primitive("box", (_dim(rng, 0.35), _dim(rng, 0.25), _dim(rng, 0.22)), albedo=albedo),
    ))


def _rot_x90() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
