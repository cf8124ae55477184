"""Run configuration shared by the library pipeline and the CLI.

A JSON config file supplies defaults; explicit CLI flags override
per-key. Nested sections map onto FilterConfig and GroundingConfig.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .filtering import FilterConfig
from .lm import GroundingConfig

__all__ = ["RunConfig", "OBJECTIVES", "SCORER_KINDS"]

OBJECTIVES = ("accuracy", "f1_macro")
SCORER_KINDS = ("ngram", "external")


@dataclass
class RunConfig:
    k_candidates: int = 10
    remove_stopwords: bool = False
    stem: bool = False
    filter: FilterConfig = field(default_factory=FilterConfig)
    no_filter: bool = False
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    scorer_kind: str = "ngram"
    bridge_address: str | None = None
    bridge_command: str | None = None
    objective: str = "accuracy"
    cv_folds: int = 4
    seed: int | None = None
    threshold: float | None = None
    ground_per_fold: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.k_candidates < 1:
            raise ValueError("k_candidates must be >= 1")
        if self.scorer_kind not in SCORER_KINDS:
            raise ValueError(f"scorer_kind must be one of {SCORER_KINDS}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.cv_folds < 0:
            raise ValueError("cv_folds must be >= 0")
        if self.threshold is not None and self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def effective_filter(self) -> FilterConfig:
        return FilterConfig.disabled() if self.no_filter else self.filter

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "filter" in kwargs and not isinstance(kwargs["filter"], FilterConfig):
            kwargs["filter"] = FilterConfig.from_dict(kwargs["filter"])
        if "grounding" in kwargs and not isinstance(kwargs["grounding"], GroundingConfig):
            kwargs["grounding"] = GroundingConfig(**kwargs["grounding"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "k_candidates": self.k_candidates,
            "remove_stopwords": self.remove_stopwords,
            "stem": self.stem,
            "filter": self.filter.to_dict(),
            "no_filter": self.no_filter,
            "grounding": {
                "epochs": self.grounding.epochs,
                "learning_rate": self.grounding.learning_rate,
                "ngram_order": self.grounding.ngram_order,
                "smoothing": self.grounding.smoothing,
                "add_k": self.grounding.add_k,
            },
            "scorer_kind": self.scorer_kind,
            "bridge_address": self.bridge_address,
            "bridge_command": self.bridge_command,
            "objective": self.objective,
            "cv_folds": self.cv_folds,
            "seed": self.seed,
            "threshold": self.threshold,
            "ground_per_fold": self.ground_per_fold,
            "jobs": self.jobs,
        }

    def merged_with(self, overrides: dict) -> "RunConfig":
        """New config with the given keys replaced. Nested dicts merge shallowly."""
        base = self.to_dict()
        for key, value in overrides.items():
            if key in ("filter", "grounding") and isinstance(value, dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        return RunConfig.from_dict(base)
