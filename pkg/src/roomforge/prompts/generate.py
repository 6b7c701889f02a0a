"""Prompt enumeration, scoring, ranking, and CSV export."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .records import CategoryLists, PromptRecord, PromptTemplate, instantiate

CSV_COLUMNS = [
    "rank", "prompt", "object", "material", "color", "theme",
    "coherence", "specificity", "creativity", "final_score", "explanation",
]


def _template_spaces(lists: CategoryLists, templates: list[PromptTemplate]):
    """Per template: the placeholder names it uses and their value lists."""
    by_name = lists.as_dict()
    spaces = []
    for template in templates:
        names = template.placeholders()
        values = [by_name[n] for n in names]
        size = 1
        for v in values:
            size *= len(v)
        spaces.append((template, names, values, size))
    return spaces


def enumerate_prompts(
    lists: CategoryLists,
    templates: list[PromptTemplate],
    max_count: int,
    seed: int,
) -> list[PromptRecord]:
    """Uniform sampling without replacement over the combined cross product
    of every template with the slot values it references.

    Deterministic per seed; duplicate prompt strings are dropped (first kept).
    """
    if max_count <= 0:
        raise ValueError(f"max_count must be positive, got {max_count}")
    if not templates:
        raise ValueError("need at least one template")
    spaces = _template_spaces(lists, templates)
    total = sum(size for _, _, _, size in spaces)
    rng = np.random.default_rng(seed)
    take = min(max_count, total)
    chosen = rng.choice(total, size=take, replace=False) if take < total else rng.permutation(total)

    records = []
    seen = set()
    for flat in chosen:
        idx = int(flat)
        for template, names, values, size in spaces:
            if idx >= size:
                idx -= size
                continue
            slots = {}
            for name, vals in zip(reversed(names), reversed(values)):
                idx, pos = divmod(idx, len(vals))
                slots[name] = vals[pos]
            slots = {n: slots[n] for n in names}
            prompt = instantiate(template, slots)
            if prompt not in seen:
                seen.add(prompt)
                records.append(PromptRecord(prompt=prompt, slots=slots, template_id=template.id))
            break
    return records


def score_prompts(records: list[PromptRecord], evaluator, retries: int = 3) -> list[PromptRecord]:
    """Attach subscores and the rounded-mean final score to each record.

    Evaluator failures are retried up to ``retries`` times, then the record
    is flagged failed (kept in output, excluded from ranking).
    """
    try:
        batch = evaluator.score_batch(records)
        for record, scores in zip(records, batch):
            record.apply_scores(scores.coherence, scores.specificity, scores.creativity,
                                scores.explanation)
        return records
    except Exception:
        pass  # fall back to per-record scoring with retries
    for record in records:
        last_error = None
        for _ in range(retries):
            try:
                s = evaluator.score(record)
                record.apply_scores(s.coherence, s.specificity, s.creativity, s.explanation)
                last_error = None
                break
            except Exception as e:  # noqa: BLE001 - evaluator backends vary
                last_error = e
        if last_error is not None:
            record.failed = True
            record.explanation = f"scoring failed: {last_error}"
    return records


def rank_and_export(records: list[PromptRecord], path: str | Path) -> list[PromptRecord]:
    """Write the ranked CSV (descending final score, ties by prompt text).

    Failed records follow the ranked ones with empty score fields.  Returns
    the ranked records.
    """
    scored = [r for r in records if r.scored()]
    failed = [r for r in records if not r.scored()]
    ranked = sorted(scored, key=lambda r: (-r.final_score, r.prompt))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for rank, r in enumerate(ranked, 1):
            writer.writerow([
                rank, r.prompt,
                r.slots.get("Object", ""), r.slots.get("Material", ""),
                r.slots.get("Color", ""), r.slots.get("High-level Theme", ""),
                r.coherence, r.specificity, r.creativity, r.final_score,
                r.explanation,
            ])
        for r in failed:
            writer.writerow([
                "", r.prompt,
                r.slots.get("Object", ""), r.slots.get("Material", ""),
                r.slots.get("Color", ""), r.slots.get("High-level Theme", ""),
                "", "", "", "", r.explanation,
            ])
    return ranked


def read_prompt_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
