"""Prompt scoring backends.

HeuristicEvaluator is the shipped deterministic judge: coherence from an
object/material plausibility table, specificity from slot coverage,
creativity from value rarity within the batch.  RemoteEvaluator posts
role-tagged messages to a JSON endpoint so a hosted model can do the judging
instead; both return the same score shape.
"""

from __future__ import annotations

import json
import math
import os
import sys
import urllib.request
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .records import PLACEHOLDERS, PromptRecord

TOKEN_ENV_VAR = "ROOMFORGE_LLM_TOKEN"
DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class EvaluatorScores:
    coherence: float
    specificity: float
    creativity: float
    explanation: str


class HeuristicEvaluator:
    """Deterministic stand-in for an LLM judge.

    Subscores land on the 1-10 integer scale:
      coherence   -- object x material plausibility matrix (unknown pair: 5)
      specificity -- ceil(1 + 9 * filled_slots / 4)
      creativity  -- rarity of the chosen values within the scored batch
    """

    def __init__(self, compatibility_path: str | Path | None = None):
        path = Path(compatibility_path or DATA_DIR / "compatibility.toml")
        with open(path, "rb") as f:
            data = tomllib.load(f)
        self.matrix: dict[tuple[str, str], int] = {}
        for obj, row in data.get("coherence", {}).items():
            for material, score in row.items():
                self.matrix[(obj.lower(), material.lower())] = int(score)

    def _coherence(self, slots: dict[str, str]) -> tuple[float, str]:
        obj = slots.get("Object", "").lower()
        mat = slots.get("Material", "").lower()
        if not obj or not mat:
            return 5.0, "no object/material pairing to judge"
        score = self.matrix.get((obj, mat))
        if score is None:
            return 5.0, f"unknown pairing {obj}/{mat}"
        verdict = "plausible" if score >= 6 else "questionable"
        return float(score), f"{mat} {obj} is {verdict}"

    @staticmethod
    def _specificity(slots: dict[str, str]) -> float:
        filled = sum(1 for p in PLACEHOLDERS if slots.get(p))
        return float(min(10, math.ceil(1 + 9 * filled / len(PLACEHOLDERS))))

    @staticmethod
    def _creativity(slots: dict[str, str], value_counts: dict[str, int], total: int) -> float:
        if total <= 1 or not slots:
            return 5.0
        freqs = [value_counts.get(v, 1) / total for v in slots.values()]
        rarity = 1.0 - sum(freqs) / len(freqs)
        return float(min(10, max(1, round(1 + 9 * rarity))))

    def score_batch(self, records: list[PromptRecord]) -> list[EvaluatorScores]:
        value_counts: dict[str, int] = {}
        for rec in records:
            for v in rec.slots.values():
                value_counts[v] = value_counts.get(v, 0) + 1
        total = max(1, len(records))
        out = []
        for rec in records:
            coherence, why = self._coherence(rec.slots)
            out.append(
                EvaluatorScores(
                    coherence=coherence,
                    specificity=self._specificity(rec.slots),
                    creativity=self._creativity(rec.slots, value_counts, total),
                    explanation=why,
                )
            )
        return out

    def score(self, record: PromptRecord) -> EvaluatorScores:
        return self.score_batch([record])[0]


class RemoteEvaluatorError(RuntimeError):
    pass


class RemoteEvaluator:
    """LLM-service client: POSTs {"messages": [{role, content}, ...]} and
    expects {"text": "..."} whose text contains a JSON object with the three
    subscores and an explanation."""

    SYSTEM = (
        "You judge text prompts for 3D asset generation. Reply with JSON: "
        '{"coherence": 1-10, "specificity": 1-10, "creativity": 1-10, '
        '"explanation": "..."}'
    )

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.token = token if token is not None else os.environ.get(TOKEN_ENV_VAR, "")
        self.timeout = timeout

    def score(self, record: PromptRecord) -> EvaluatorScores:
        payload = {
            "messages": [
                {"role": "system", "content": self.SYSTEM},
                {"role": "user", "content": f"Score this prompt: {record.prompt}"},
            ]
        }
        req = urllib.request.Request(
            self.endpoint,
            data=json.dumps(payload).encode(),
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {self.token}"} if self.token else {}),
            },
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            body = json.loads(resp.read())
        text = body.get("text", "")
        start, end = text.find("{"), text.rfind("}")
        if start < 0 or end <= start:
            raise RemoteEvaluatorError(f"no JSON object in response text: {text[:200]!r}")
        try:
            scores = json.loads(text[start : end + 1])
            return EvaluatorScores(
                coherence=float(scores["coherence"]),
                specificity=float(scores["specificity"]),
                creativity=float(scores["creativity"]),
                explanation=str(scores.get("explanation", "")),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as e:
            raise RemoteEvaluatorError(f"malformed score payload: {e}") from e

    def score_batch(self, records: list[PromptRecord]) -> list[EvaluatorScores]:
        return [self.score(r) for r in records]
