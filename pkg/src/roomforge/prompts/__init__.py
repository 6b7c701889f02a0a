from .records import (
    CategoryLists,
    EmptyCategoryError,
    PromptRecord,
    PromptTemplate,
    UnfilledPlaceholderError,
    dedupe_validate,
    instantiate,
    load_categories_toml,
    load_templates_toml,
)
from .evaluators import EvaluatorScores, HeuristicEvaluator, RemoteEvaluator
from .generate import enumerate_prompts, rank_and_export, read_prompt_csv, score_prompts

__all__ = [
    "CategoryLists",
    "PromptTemplate",
    "PromptRecord",
    "EmptyCategoryError",
    "UnfilledPlaceholderError",
    "dedupe_validate",
    "instantiate",
    "load_categories_toml",
    "load_templates_toml",
    "EvaluatorScores",
    "HeuristicEvaluator",
    "RemoteEvaluator",
    "enumerate_prompts",
    "score_prompts",
    "rank_and_export",
    "read_prompt_csv",
]
