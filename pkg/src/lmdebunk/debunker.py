"""Threshold calibration and the end-to-end debunking pipeline.

A claim is predicted False exactly when its perplexity under the
evidence-grounded model strictly exceeds the threshold; at the
threshold it stays True. Calibration only ever sees perplexities and
gold labels, never the evidence, so grounding stays unsupervised.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .data import Claim, SentenceUnit, SourceDocument, segment_sentences
from .filtering import EvidenceSet, aggregate_evidence, filter_candidates
from .metrics import MetricBundle, compute_metrics
from .retrieval import TfidfSentenceRetriever

__all__ = [
    "Verdict",
    "CalibrationResult",
    "FoldResult",
    "CrossValidationResult",
    "PipelineResult",
    "classify",
    "search_threshold",
    "cross_validate",
    "PerplexityDebunker",
    "run_pipeline",
]

logger = logging.getLogger(__name__)

_METRIC_KEYS = ("accuracy", "f1_false", "f1_true", "f1_macro")


@dataclass(frozen=True)
class Verdict:
    claim_id: str
    ppl: float
    threshold: float
    predicted: bool
    gold: bool | None = None
    fold: int | None = None
    no_evidence: bool = False

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "ppl": self.ppl,
            "threshold": self.threshold,
            "predicted": self.predicted,
            "gold": self.gold,
            "fold": self.fold,
            "no_evidence": self.no_evidence,
        }


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    objective: str
    objective_value: float
    metrics: MetricBundle


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    threshold: float
    metrics: MetricBundle
    test_indices: tuple[int, ...]


@dataclass(frozen=True)
class CrossValidationResult:
    k: int
    seed: int
    objective: str
    folds: tuple[FoldResult, ...]
    averaged: dict[str, float]
    fold_assignments: dict[str, int] = field(default_factory=dict)


def classify(ppl: float, threshold: float) -> bool:
    """Predicted label: False iff perplexity strictly exceeds the threshold."""
    return ppl <= threshold


def _objective_value(bundle: MetricBundle, objective: str) -> float:
    if objective == "accuracy":
        return bundle.accuracy
    if objective == "f1_macro":
        return bundle.f1_macro
    raise ValueError(f"unknown objective: {objective}")


def _check_both_classes(gold: Sequence[bool], context: str) -> None:
    if all(gold):
        raise ValueError(f"{context}: gold labels contain no False claims")
    if not any(gold):
        raise ValueError(f"{context}: gold labels contain no True claims")


def search_threshold(ppls: Sequence[float], gold: Sequence[bool],
                     objective: str = "accuracy") -> CalibrationResult:
    """Pick the threshold maximizing the objective; ties take the smaller.

    Candidates are the midpoints between consecutive distinct
    perplexities plus one point below the minimum and one above the
    maximum, which covers every achievable confusion split. The smaller
    tie winner is the stricter debunker: fewer missed false claims.
    """
    if len(ppls) != len(gold):
        raise ValueError(f"ppls and gold lengths differ: {len(ppls)} vs {len(gold)}")
    if not ppls:
        raise ValueError("cannot calibrate on zero items")
    _check_both_classes(gold, "search_threshold")

    distinct = sorted(set(float(p) for p in ppls))
    if len(distinct) == 1:
        warnings.warn(
            "all perplexities are identical; threshold search is degenerate",
            stacklevel=2,
        )
        th = distinct[0]
        pred = [classify(p, th) for p in ppls]
        bundle = compute_metrics(gold, pred)
        return CalibrationResult(th, objective, _objective_value(bundle, objective), bundle)

    candidates = [distinct[0] / 2.0]
    candidates += [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    candidates.append(distinct[-1] + 1.0)

    best: CalibrationResult | None = None
    for th in candidates:
        pred = [classify(p, th) for p in ppls]
        bundle = compute_metrics(gold, pred)
        value = _objective_value(bundle, objective)
        if best is None or value > best.objective_value:
            best = CalibrationResult(th, objective, value, bundle)
    return best


def _split_folds(gold: Sequence[bool], k: int, seed: int):
    n_false = sum(1 for g in gold if not g)
    n_true = len(gold) - n_false
    if min(n_false, n_true) < k:
        raise ValueError(
            f"each class needs at least k={k} members "
            f"(have {n_false} False, {n_true} True); use a smaller k"
        )
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return splitter.split(np.zeros(len(gold)), np.asarray(gold))


def _averaged(folds: Sequence[FoldResult]) -> dict[str, float]:
    return {
        key: sum(getattr(f.metrics, key) for f in folds) / len(folds)
        for key in _METRIC_KEYS
    }


def _assignments(folds: Sequence[FoldResult], claim_ids: Sequence[str] | None) -> dict[str, int]:
    if claim_ids is None:
        return {}
    return {
        claim_ids[i]: f.fold_index
        for f in folds
        for i in f.test_indices
    }


def cross_validate(ppls: Sequence[float], gold: Sequence[bool], k: int, seed: int,
                   objective: str = "accuracy",
                   claim_ids: Sequence[str] | None = None) -> CrossValidationResult:
    """Stratified k-fold: calibrate on k-1 folds, evaluate on the held-out one.

    Deterministic for a given seed. Averaged metrics are the unweighted
    mean over folds, so they estimate performance, not an averaged
    optimal threshold.
    """
    if len(ppls) != len(gold):
        raise ValueError(f"ppls and gold lengths differ: {len(ppls)} vs {len(gold)}")
    if claim_ids is not None and len(claim_ids) != len(gold):
        raise ValueError("claim_ids length must match gold")
    if k < 2:
        raise ValueError("k must be >= 2; a single fold leaves nothing held out")
    _check_both_classes(gold, "cross_validate")

    ppls = [float(p) for p in ppls]
    gold = [bool(g) for g in gold]
    folds: list[FoldResult] = []
    for fold_index, (train_idx, test_idx) in enumerate(_split_folds(gold, k, seed)):
        train_gold = [gold[i] for i in train_idx]
        test_gold = [gold[i] for i in test_idx]
        _check_both_classes(train_gold, f"fold {fold_index} train split")
        _check_both_classes(test_gold, f"fold {fold_index} test split")
        calibration = search_threshold([ppls[i] for i in train_idx], train_gold, objective)
        pred = [classify(ppls[i], calibration.threshold) for i in test_idx]
        folds.append(FoldResult(
            fold_index=fold_index,
            threshold=calibration.threshold,
            metrics=compute_metrics(test_gold, pred),
            test_indices=tuple(int(i) for i in test_idx),
        ))
    return CrossValidationResult(
        k=k, seed=seed, objective=objective, folds=tuple(folds),
        averaged=_averaged(folds), fold_assignments=_assignments(folds, claim_ids),
    )


@dataclass
class PipelineResult:
    verdicts: list[Verdict]
    ppls: list[float]
    threshold: float
    evidence_sets: list[EvidenceSet]
    grounding_texts: list[str]
    calibration: CalibrationResult | None = None
    cv: CrossValidationResult | None = None
    metrics: MetricBundle | None = None
    scorer: object | None = None
    sentences: list[SentenceUnit] = field(default_factory=list)
    perplexity_unit: str = "word"


class PerplexityDebunker(BaseEstimator):
    """End-to-end estimator: retrieve evidence, ground, score, threshold.

    fit() is unsupervised: it indexes the corpus, selects evidence for
    each training claim, and grounds the scorer on that evidence alone.
    calibrate() is the only supervised step and touches nothing but
    perplexities and labels. predict() applies the threshold.
    """

    def __init__(self, k_candidates: int = 10, remove_stopwords: bool = False,
                 stem: bool = False, filter_config=None, grounding_config=None,
                 scorer=None, threshold: float | None = None, jobs: int = 1):
        self.k_candidates = k_candidates
        self.remove_stopwords = remove_stopwords
        self.stem = stem
        self.filter_config = filter_config
        self.grounding_config = grounding_config
        self.scorer = scorer
        self.threshold = threshold
        self.jobs = jobs

    def _filter_config(self):
        from .filtering import FilterConfig
        return self.filter_config if self.filter_config is not None else FilterConfig()

    def _grounding_config(self):
        from .lm import GroundingConfig
        return self.grounding_config if self.grounding_config is not None else GroundingConfig()

    def fit(self, claims: list[Claim], corpus: list[SourceDocument] | None = None,
            sentences: list[SentenceUnit] | None = None) -> "PerplexityDebunker":
        if sentences is None:
            if corpus is None:
                raise ValueError("fit needs either corpus documents or pre-segmented sentences")
            sentences = [s for doc in corpus for s in segment_sentences(doc)]
        self.retriever_ = TfidfSentenceRetriever(
            k=self.k_candidates,
            remove_stopwords=self.remove_stopwords,
            stem=self.stem,
        ).fit(sentences)
        cfg = self._filter_config()
        self.evidence_sets_ = [
            filter_candidates(claim, self.retriever_.top_candidates(claim), cfg)
            for claim in claims
        ]
        self.grounding_texts_ = aggregate_evidence(self.evidence_sets_)
        self.scorer_ = self.scorer if self.scorer is not None else self._grounding_config().make_scorer()
        self.scorer_.reset()
        self.scorer_.ground(self.grounding_texts_)
        return self

    def decision_function(self, claims: list[Claim]) -> list[float]:
        """Perplexity per claim; higher means more likely false."""
        check_is_fitted(self, "scorer_")
        return _score_texts(self.scorer_, [c.text for c in claims], self.jobs)

    def calibrate(self, claims: list[Claim], objective: str = "accuracy",
                  cv_folds: int = 0, seed: int | None = None) -> "PerplexityDebunker":
        """Search the verdict threshold on labeled claims."""
        check_is_fitted(self, "scorer_")
        labeled = [c for c in claims if c.label is not None]
        if not labeled:
            raise ValueError("calibrate needs at least one labeled claim")
        ppls = self.decision_function(labeled)
        gold = [bool(c.label) for c in labeled]
        if cv_folds >= 2:
            if seed is None:
                raise ValueError("cross-validated calibration requires a seed")
            self.cv_result_ = cross_validate(ppls, gold, cv_folds, seed, objective,
                                             claim_ids=[c.id for c in labeled])
        self.calibration_ = search_threshold(ppls, gold, objective)
        self.threshold_ = self.calibration_.threshold
        return self

    def _effective_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        check_is_fitted(self, "threshold_")
        return self.threshold_

    def predict(self, claims: list[Claim]) -> list[bool]:
        th = self._effective_threshold()
        return [classify(p, th) for p in self.decision_function(claims)]

    def verdicts(self, claims: list[Claim]) -> list[Verdict]:
        th = self._effective_threshold()
        return [
            Verdict(claim_id=c.id, ppl=p, threshold=th,
                    predicted=classify(p, th), gold=c.label)
            for c, p in zip(claims, self.decision_function(claims))
        ]


def _map_maybe_parallel(fn, items: list, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _score_texts(scorer, texts: list[str], jobs: int) -> list[float]:
    return _map_maybe_parallel(scorer.score, texts, jobs)


def _cross_validate_grounded(claims: list[Claim], evidence_sets: list[EvidenceSet],
                             scorer, cfg: RunConfig) -> CrossValidationResult:
    """Stricter variant: reground on each fold's train evidence only."""
    gold = [bool(c.label) for c in claims]
    _check_both_classes(gold, "cross_validate")
    folds: list[FoldResult] = []
    for fold_index, (train_idx, test_idx) in enumerate(_split_folds(gold, cfg.cv_folds, cfg.seed)):
        train_gold = [gold[i] for i in train_idx]
        test_gold = [gold[i] for i in test_idx]
        _check_both_classes(train_gold, f"fold {fold_index} train split")
        _check_both_classes(test_gold, f"fold {fold_index} test split")
        fold_evidence = aggregate_evidence([evidence_sets[i] for i in train_idx])
        scorer.reset()
        scorer.ground(fold_evidence)
        train_ppls = _score_texts(scorer, [claims[i].text for i in train_idx], cfg.jobs)
        test_ppls = _score_texts(scorer, [claims[i].text for i in test_idx], cfg.jobs)
        calibration = search_threshold(train_ppls, train_gold, cfg.objective)
        pred = [classify(p, calibration.threshold) for p in test_ppls]
        folds.append(FoldResult(
            fold_index=fold_index,
            threshold=calibration.threshold,
            metrics=compute_metrics(test_gold, pred),
            test_indices=tuple(int(i) for i in test_idx),
        ))
    return CrossValidationResult(
        k=cfg.cv_folds, seed=cfg.seed, objective=cfg.objective, folds=tuple(folds),
        averaged=_averaged(folds),
        fold_assignments=_assignments(folds, [c.id for c in claims]),
    )


def run_pipeline(claims: list[Claim], corpus: list[SourceDocument], cfg: RunConfig,
                 scorer=None, threshold: float | None = None) -> PipelineResult:
    """Retrieve, filter, ground, score, calibrate, and judge every claim.

    Grounding sees evidence sentences only. With labels and cv_folds >= 2
    the reported cross-validation metrics are the honest estimate; the
    final threshold for the verdict list is then searched on all labeled
    claims at once. Claims whose evidence set came back empty are still
    scored and their verdicts say so.
    """
    if not claims:
        raise ValueError("no claims to process")
    if not corpus:
        raise ValueError("no corpus documents to retrieve from")
    if threshold is None:
        threshold = cfg.threshold

    sentences = [s for doc in corpus for s in segment_sentences(doc)]
    retriever = TfidfSentenceRetriever(
        k=cfg.k_candidates, remove_stopwords=cfg.remove_stopwords, stem=cfg.stem,
    ).fit(sentences)
    filter_cfg = cfg.effective_filter()
    evidence_sets = _map_maybe_parallel(
        lambda claim: filter_candidates(claim, retriever.top_candidates(claim), filter_cfg),
        claims, cfg.jobs,
    )
    grounding_texts = aggregate_evidence(evidence_sets)

    if scorer is None:
        scorer = cfg.grounding.make_scorer()
    scorer.reset()
    scorer.ground(grounding_texts)

    labeled_idx = [i for i, c in enumerate(claims) if c.label is not None]

    cv = None
    if threshold is None and cfg.cv_folds >= 2 and labeled_idx:
        if cfg.seed is None:
            raise ValueError("cross-validated calibration requires a seed")
        labeled_claims = [claims[i] for i in labeled_idx]
        if cfg.ground_per_fold:
            cv = _cross_validate_grounded(labeled_claims,
                                          [evidence_sets[i] for i in labeled_idx],
                                          scorer, cfg)
            # Restore the full grounding for the final verdicts.
            scorer.reset()
            scorer.ground(grounding_texts)
        else:
            labeled_ppls = _score_texts(scorer, [c.text for c in labeled_claims], cfg.jobs)
            cv = cross_validate(labeled_ppls, [bool(c.label) for c in labeled_claims],
                                cfg.cv_folds, cfg.seed, cfg.objective,
                                claim_ids=[c.id for c in labeled_claims])

    ppls = _score_texts(scorer, [c.text for c in claims], cfg.jobs)

    calibration = None
    if threshold is None:
        if not labeled_idx:
            raise ValueError("no labeled claims to calibrate on; pass an explicit threshold")
        calibration = search_threshold(
            [ppls[i] for i in labeled_idx],
            [bool(claims[i].label) for i in labeled_idx],
            cfg.objective,
        )
        threshold = calibration.threshold

    metrics = None
    if labeled_idx:
        metrics = compute_metrics(
            [bool(claims[i].label) for i in labeled_idx],
            [classify(ppls[i], threshold) for i in labeled_idx],
        )

    fold_of = cv.fold_assignments if cv is not None else {}
    verdicts = [
        Verdict(claim_id=c.id, ppl=p, threshold=threshold,
                predicted=classify(p, threshold), gold=c.label,
                fold=fold_of.get(c.id),
                no_evidence=not es.evidence)
        for c, p, es in zip(claims, ppls, evidence_sets)
    ]
    return PipelineResult(
        verdicts=verdicts,
        ppls=ppls,
        threshold=threshold,
        evidence_sets=evidence_sets,
        grounding_texts=grounding_texts,
        calibration=calibration,
        cv=cv,
        metrics=metrics,
        scorer=scorer,
        sentences=sentences,
        perplexity_unit=getattr(scorer, "unit_", "word"),
    )
