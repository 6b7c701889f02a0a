"""Category lists, prompt templates, and template instantiation.

Prompts always end with the contextual-precision suffix (isolated object on
a white background, centered) since downstream stages assume exactly that
framing.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PLACEHOLDERS = ("Object", "Color", "Material", "High-level Theme")
CONTEXT_SUFFIX = " in an empty white background and in the middle."

_PLACEHOLDER_RE = re.compile(r"\[([^\[\]]+)\]")


class EmptyCategoryError(ValueError):
    pass


class UnfilledPlaceholderError(KeyError):
    pass


@dataclass
class CategoryLists:
    objects: list[str]
    materials: list[str]
    colors: list[str]
    themes: list[str]

    def as_dict(self) -> dict[str, list[str]]:
        return {
            "Object": self.objects,
            "Material": self.materials,
            "Color": self.colors,
            "High-level Theme": self.themes,
        }


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    id: str = "t0"

    def __post_init__(self):
        names = self.placeholders()
        if not names:
            raise ValueError(f"template {self.id!r} has no placeholders")
        unknown = [n for n in names if n not in PLACEHOLDERS]
        if unknown:
            raise ValueError(f"template {self.id!r} uses unknown placeholders {unknown}")

    def placeholders(self) -> list[str]:
        seen = []
        for name in _PLACEHOLDER_RE.findall(self.text):
            if name not in seen:
                seen.append(name)
        return seen


@dataclass
class PromptRecord:
    prompt: str
    slots: dict[str, str]
    template_id: str = ""
    coherence: float | None = None
    specificity: float | None = None
    creativity: float | None = None
    final_score: float | None = None
    explanation: str = ""
    failed: bool = False

    def scored(self) -> bool:
        return self.final_score is not None and not self.failed

    def apply_scores(self, coherence: float, specificity: float, creativity: float,
                     explanation: str) -> None:
        for name, value in (("coherence", coherence), ("specificity", specificity),
                            ("creativity", creativity)):
            if not (1.0 <= value <= 10.0):
                raise ValueError(f"{name} score {value} outside [1, 10]")
        self.coherence = coherence
        self.specificity = specificity
        self.creativity = creativity
        self.final_score = round((coherence + specificity + creativity) / 3.0, 1)
        self.explanation = explanation
        self.failed = False


def _clean_list(name: str, values: list[str]) -> list[str]:
    out: list[str] = []
    seen = set()
    for value in values:
        v = value.strip()
        if not v:
            continue
        key = v.lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(v)
    if not out:
        raise EmptyCategoryError(f"category {name!r} is empty after cleaning")
    return out


def dedupe_validate(lists: CategoryLists) -> CategoryLists:
    """Trim whitespace, drop empties, remove case-insensitive duplicates
    (first occurrence wins)."""
    return CategoryLists(
        objects=_clean_list("objects", lists.objects),
        materials=_clean_list("materials", lists.materials),
        colors=_clean_list("colors", lists.colors),
        themes=_clean_list("themes", lists.themes),
    )


def instantiate(template: PromptTemplate, slots: dict[str, str]) -> str:
    """Fill every placeholder and append the contextual-precision suffix."""
    def fill(match: re.Match) -> str:
        name = match.group(1)
        if name not in slots:
            raise UnfilledPlaceholderError(f"no value for placeholder [{name}]")
        return slots[name]

    text = _PLACEHOLDER_RE.sub(fill, template.text).strip()
    if not text.endswith(CONTEXT_SUFFIX.strip()):
        text = text.rstrip(".") + CONTEXT_SUFFIX
    return text


def load_categories_toml(path: str | Path) -> CategoryLists:
    with open(path, "rb") as f:
        data = tomllib.load(f)
    try:
        return dedupe_validate(
            CategoryLists(
                objects=list(data["objects"]),
                materials=list(data["materials"]),
                colors=list(data["colors"]),
                themes=list(data["themes"]),
            )
        )
    except KeyError as e:
        raise ValueError(f"{path}: missing category table {e}") from e


def load_templates_toml(path: str | Path) -> list[PromptTemplate]:
    with open(path, "rb") as f:
        data = tomllib.load(f)
    templates = data.get("templates")
    if not templates:
        raise ValueError(f"{path}: no [[templates]] entries")
    return [PromptTemplate(text=t["text"], id=t.get("id", f"t{i}")) for i, t in enumerate(templates)]
