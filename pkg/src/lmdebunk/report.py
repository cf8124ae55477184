"""Run artifacts: report files, sweep tables, and the filtering ablation.

Everything written here is byte-deterministic for a fixed config and
seed: no timestamps, sorted JSON keys, and stable float formatting.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .data import Claim, SourceDocument
from .debunker import PipelineResult, run_pipeline
from .filtering import audit_records
from .metrics import threshold_sweep

__all__ = [
    "AblationArm",
    "AblationResult",
    "ablation_filtering",
    "emit_report",
    "REPORT_SCHEMA_VERSION",
]

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AblationArm:
    label: str
    f1_macro: float
    accuracy: float
    threshold: float
    n_grounding_texts: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "f1_macro": self.f1_macro,
            "accuracy": self.accuracy,
            "threshold": self.threshold,
            "n_grounding_texts": self.n_grounding_texts,
        }


@dataclass(frozen=True)
class AblationResult:
    before: AblationArm
    after: AblationArm

    @property
    def f1_macro_gain(self) -> float:
        return self.after.f1_macro - self.before.f1_macro

    def to_dict(self) -> dict:
        return {
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "f1_macro_gain": self.f1_macro_gain,
        }


def _headline(result: PipelineResult, label: str) -> AblationArm:
    if result.cv is not None:
        f1, acc = result.cv.averaged["f1_macro"], result.cv.averaged["accuracy"]
    elif result.metrics is not None:
        f1, acc = result.metrics.f1_macro, result.metrics.accuracy
    else:
        raise ValueError("ablation needs labeled claims")
    return AblationArm(
        label=label,
        f1_macro=f1,
        accuracy=acc,
        threshold=result.threshold,
        n_grounding_texts=len(result.grounding_texts),
    )


def ablation_filtering(claims: list[Claim], corpus: list[SourceDocument],
                       cfg: RunConfig, scorer=None) -> AblationResult:
    """Run the pipeline with rules off (before) and on (after).

    Both arms share every other setting, so the difference isolates the
    contribution of evidence filtering.
    """
    before = run_pipeline(claims, corpus, cfg.merged_with({"no_filter": True}), scorer=scorer)
    after = run_pipeline(claims, corpus, cfg.merged_with({"no_filter": False}), scorer=scorer)
    return AblationResult(
        before=_headline(before, "no_filter"),
        after=_headline(after, "filtered"),
    )


def _labeled(result: PipelineResult) -> tuple[list[float], list[bool]]:
    pairs = [(v.ppl, v.gold) for v in result.verdicts if v.gold is not None]
    return [p for p, _ in pairs], [g for _, g in pairs]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def _cv_dict(result: PipelineResult) -> dict | None:
    if result.cv is None:
        return None
    return {
        "k": result.cv.k,
        "seed": result.cv.seed,
        "objective": result.cv.objective,
        "averaged": result.cv.averaged,
        "folds": [
            {
                "fold_index": f.fold_index,
                "threshold": f.threshold,
                "metrics": f.metrics.to_dict(),
                "test_indices": list(f.test_indices),
            }
            for f in result.cv.folds
        ],
    }


def emit_report(result: PipelineResult, cfg: RunConfig, out_dir: str | Path,
                ablation: AblationResult | None = None,
                dataset_paths: dict[str, str | Path] | None = None) -> dict[str, Path]:
    """Write report.json, report.md, verdicts.jsonl, audit and sweep files.

    Returns the paths written, keyed by artifact name.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    gold_counts = {"false": 0, "true": 0, "unlabeled": 0}
    pred_counts = {"false": 0, "true": 0}
    for v in result.verdicts:
        if v.gold is None:
            gold_counts["unlabeled"] += 1
        else:
            gold_counts["true" if v.gold else "false"] += 1
        pred_counts["true" if v.predicted else "false"] += 1

    rejection_counts: dict[str, int] = {}
    for es in result.evidence_sets:
        for _, rule in es.rejected:
            rejection_counts[rule] = rejection_counts.get(rule, 0) + 1

    checksums = None
    if dataset_paths:
        checksums = {name: _sha256(Path(p)) for name, p in sorted(dataset_paths.items())}

    payload = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "dataset_checksums": checksums,
        "n_claims": len(result.verdicts),
        "gold_counts": gold_counts,
        "predicted_counts": pred_counts,
        "n_grounding_texts": len(result.grounding_texts),
        "n_sentences_indexed": len(result.sentences),
        "perplexity_unit": result.perplexity_unit,
        "rejection_counts": dict(sorted(rejection_counts.items())),
        "threshold": result.threshold,
        "calibration": None if result.calibration is None else {
            "threshold": result.calibration.threshold,
            "objective": result.calibration.objective,
            "objective_value": result.calibration.objective_value,
            "metrics": result.calibration.metrics.to_dict(),
        },
        "cv": _cv_dict(result),
        "metrics": None if result.metrics is None else result.metrics.to_dict(),
        "ablation": None if ablation is None else ablation.to_dict(),
    }
    paths["report_json"] = out / "report.json"
    _write_json(paths["report_json"], payload)

    paths["verdicts"] = out / "verdicts.jsonl"
    with open(paths["verdicts"], "w", encoding="utf-8") as fh:
        for v in result.verdicts:
            fh.write(json.dumps(v.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")

    paths["audit"] = out / "evidence_audit.jsonl"
    with open(paths["audit"], "w", encoding="utf-8") as fh:
        for record in audit_records(result.evidence_sets):
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    ppls, gold = _labeled(result)
    if gold:
        points = threshold_sweep(ppls, gold)
        paths["sweep"] = out / "sweep.csv"
        with open(paths["sweep"], "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fn", "fp", "accuracy", "f1_macro", "f1_binary"])
            for pt in points:
                writer.writerow([pt.threshold, pt.fn, pt.fp,
                                 pt.accuracy, pt.f1_macro, pt.f1_false])

    paths["report_md"] = out / "report.md"
    with open(paths["report_md"], "w", encoding="utf-8") as fh:
        fh.write(_render_markdown(payload))
    return paths


def _render_markdown(payload: dict) -> str:
    lines = ["# Debunking run report", ""]
    lines.append(f"- claims: {payload['n_claims']} "
                 f"(false {payload['gold_counts']['false']}, "
                 f"true {payload['gold_counts']['true']}, "
                 f"unlabeled {payload['gold_counts']['unlabeled']})")
    lines.append(f"- sentences indexed: {payload['n_sentences_indexed']}")
    lines.append(f"- grounding texts: {payload['n_grounding_texts']}")
    lines.append(f"- perplexity unit: {payload['perplexity_unit']}")
    lines.append(f"- verdict threshold: {payload['threshold']}")
    if payload["rejection_counts"]:
        parts = ", ".join(f"{rule} {count}" for rule, count in payload["rejection_counts"].items())
        lines.append(f"- filter rejections: {parts}")
    lines.append("")
    if payload["metrics"] is not None:
        m = payload["metrics"]
        lines += [
            "## Metrics at the final threshold",
            "",
            "| accuracy | F1 (False) | F1 (True) | F1 macro |",
            "| --- | --- | --- | --- |",
            f"| {m['accuracy']:.4f} | {m['f1_false']:.4f} | {m['f1_true']:.4f} | {m['f1_macro']:.4f} |",
            "",
        ]
    if payload["cv"] is not None:
        cv = payload["cv"]
        lines += [
            f"## Cross-validation (k={cv['k']}, seed={cv['seed']}, objective={cv['objective']})",
            "",
            "| fold | threshold | accuracy | F1 macro |",
            "| --- | --- | --- | --- |",
        ]
        for f in cv["folds"]:
            lines.append(f"| {f['fold_index']} | {f['threshold']:.4f} "
                         f"| {f['metrics']['accuracy']:.4f} | {f['metrics']['f1_macro']:.4f} |")
        avg = cv["averaged"]
        lines.append(f"| mean | | {avg['accuracy']:.4f} | {avg['f1_macro']:.4f} |")
        lines.append("")
    if payload["ablation"] is not None:
        ab = payload["ablation"]
        lines += [
            "## Filtering ablation",
            "",
            "| arm | F1 macro | accuracy | grounding texts |",
            "| --- | --- | --- | --- |",
            f"| {ab['before']['label']} | {ab['before']['f1_macro']:.4f} "
            f"| {ab['before']['accuracy']:.4f} | {ab['before']['n_grounding_texts']} |",
            f"| {ab['after']['label']} | {ab['after']['f1_macro']:.4f} "
            f"| {ab['after']['accuracy']:.4f} | {ab['after']['n_grounding_texts']} |",
            f"\nF1 macro gain from filtering: {ab['f1_macro_gain']:+.4f}",
            "",
        ]
    return "\n".join(lines)
