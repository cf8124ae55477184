"""Rule-based evidence filtering.

Scored candidates pass through four rules before the final top-3
selection:

  R1  quotes attributed to low-credibility sources (meme, social media post)
  R2  quotes or statements by the claim's own speaker
  R3  candidates identical to the claim (direct quotation of the claim)
  R4  reciprocal questions, which neither support nor contradict

Rules apply in that order and the first match wins; every rejection is
recorded for audit. Disabling all rules yields the plain top-3, which is
the "before filtering" ablation path.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data import Claim, normalize_text
from .retrieval import ScoredCandidate, _TOKEN_RE

__all__ = [
    "FilterConfig",
    "EvidenceSet",
    "ALL_RULES",
    "DEFAULT_LOW_CREDIBILITY_PATTERNS",
    "filter_candidates",
    "aggregate_evidence",
    "audit_records",
]

ALL_RULES = ("R1", "R2", "R3", "R4")

# Editable default pattern list; matched against normalized candidate text.
DEFAULT_LOW_CREDIBILITY_PATTERNS = (
    "social media post",
    "facebook post",
    "internet meme",
    "viral post",
    "forwarded message",
    "whatsapp message",
    "tweet claims",
)

_ATTRIBUTION_VERBS = ("said", "says", "stated", "claimed", "tweeted")
_TRAILING_CLOSERS = "\"')]’” \t\n"


@dataclass(frozen=True)
class FilterConfig:
    """Configuration for the candidate filter."""

    low_credibility_patterns: tuple[str, ...] = DEFAULT_LOW_CREDIBILITY_PATTERNS
    identical_similarity_threshold: float = 1.0
    enable_rules: frozenset = frozenset(ALL_RULES)

    def __post_init__(self):
        object.__setattr__(self, "low_credibility_patterns", tuple(self.low_credibility_patterns))
        object.__setattr__(self, "enable_rules", frozenset(self.enable_rules))
        unknown = self.enable_rules - set(ALL_RULES)
        if unknown:
            raise ValueError(f"unknown filter rules: {sorted(unknown)}")
        if not 0.0 < self.identical_similarity_threshold <= 1.0:
            raise ValueError("identical_similarity_threshold must be in (0, 1]")
        if "R1" in self.enable_rules and not self.low_credibility_patterns:
            raise ValueError("R1 enabled but low_credibility_patterns is empty")

    @classmethod
    def disabled(cls) -> "FilterConfig":
        """All rules off: candidates pass straight to top-3 selection."""
        return cls(enable_rules=frozenset())

    @classmethod
    def from_json(cls, path: str | Path) -> "FilterConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "FilterConfig":
        kwargs = {}
        if "low_credibility_patterns" in raw:
            kwargs["low_credibility_patterns"] = tuple(raw["low_credibility_patterns"])
        if "identical_similarity_threshold" in raw:
            kwargs["identical_similarity_threshold"] = float(raw["identical_similarity_threshold"])
        if "enable_rules" in raw:
            kwargs["enable_rules"] = frozenset(raw["enable_rules"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "low_credibility_patterns": list(self.low_credibility_patterns),
            "identical_similarity_threshold": self.identical_similarity_threshold,
            "enable_rules": sorted(self.enable_rules),
        }


@dataclass(frozen=True)
class EvidenceSet:
    """The filtered evidence for one claim plus the rejection audit."""

    claim_id: str
    evidence: tuple[ScoredCandidate, ...]
    rejected: tuple[tuple[ScoredCandidate, str], ...] = field(default_factory=tuple)


def _is_question(text: str) -> bool:
    return text.rstrip(_TRAILING_CLOSERS).endswith("?")


def _matches_low_credibility(candidate_norm: str, patterns: tuple[str, ...]) -> bool:
    return any(normalize_text(p) in candidate_norm for p in patterns)


def _attributed_to_speaker(candidate: ScoredCandidate, candidate_norm: str, speaker_norm: str) -> bool:
    if candidate.sentence.speaker is not None and normalize_text(candidate.sentence.speaker) == speaker_norm:
        return True
    pattern = re.escape(speaker_norm) + r"\s+(?:" + "|".join(_ATTRIBUTION_VERBS) + r")\b"
    return re.search(pattern, candidate_norm) is not None


def _token_jaccard(a: str, b: str) -> float:
    sa, sb = set(_TOKEN_RE.findall(a)), set(_TOKEN_RE.findall(b))
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def _rejection_rule(claim: Claim, candidate: ScoredCandidate, cfg: FilterConfig,
                    claim_norm: str, speaker_norm: str | None) -> str | None:
    candidate_norm = normalize_text(candidate.sentence.text)
    if "R1" in cfg.enable_rules and _matches_low_credibility(candidate_norm, cfg.low_credibility_patterns):
        return "R1"
    if "R2" in cfg.enable_rules and speaker_norm and _attributed_to_speaker(candidate, candidate_norm, speaker_norm):
        return "R2"
    if "R3" in cfg.enable_rules:
        if cfg.identical_similarity_threshold >= 1.0:
            identical = candidate_norm == claim_norm
        else:
            identical = _token_jaccard(candidate_norm, claim_norm) >= cfg.identical_similarity_threshold
        if identical:
            return "R3"
    if "R4" in cfg.enable_rules and _is_question(candidate.sentence.text):
        return "R4"
    return None


def filter_candidates(claim: Claim, candidates: list[ScoredCandidate],
                      cfg: FilterConfig | None = None, top_n: int = 3) -> EvidenceSet:
    """Apply the filter rules and keep the top-n survivors by score.

    Candidates must arrive sorted descending by score. Zero survivors is
    not an error; downstream treats an empty set as "no evidence". The
    operation is pure and idempotent: filtering the survivors again
    changes nothing.
    """
    if cfg is None:
        cfg = FilterConfig()
    for earlier, later in zip(candidates, candidates[1:]):
        if later.score > earlier.score:
            raise ValueError("candidates must be sorted descending by score")
    claim_norm = normalize_text(claim.text)
    speaker_norm = normalize_text(claim.speaker) if claim.speaker else None

    survivors: list[ScoredCandidate] = []
    rejected: list[tuple[ScoredCandidate, str]] = []
    for candidate in candidates:
        rule = _rejection_rule(claim, candidate, cfg, claim_norm, speaker_norm)
        if rule is None:
            survivors.append(candidate)
        else:
            rejected.append((candidate, rule))
    return EvidenceSet(
        claim_id=claim.id,
        evidence=tuple(survivors[:top_n]),
        rejected=tuple(rejected),
    )


def aggregate_evidence(sets: list[EvidenceSet]) -> list[str]:
    """Aggregate each claim's evidence texts into one grounding corpus.

    Claim-major order, rank order within a claim, exact duplicates kept
    once (first occurrence). Raises if every set is empty: there is
    nothing to ground on.
    """
    seen: set[str] = set()
    texts: list[str] = []
    for evidence_set in sets:
        for candidate in evidence_set.evidence:
            text = candidate.sentence.text
            if text not in seen:
                seen.add(text)
                texts.append(text)
    if not texts:
        raise ValueError("all evidence sets are empty; nothing to ground on")
    return texts


def audit_records(sets: list[EvidenceSet]) -> list[dict]:
    """Flatten rejections to JSONL-ready records."""
    return [
        {"claim_id": s.claim_id, "evidence_text": cand.sentence.text, "rejected_by": rule}
        for s in sets
        for cand, rule in s.rejected
    ]
