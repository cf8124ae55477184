"""Command-line interface.

Stages are separate subcommands so intermediate artifacts (indexes,
evidence files, grounded models, scores) can be inspected and reused.
Exit codes: 1 usage, 2 data or config problem, 3 bridge failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bridge_client import BRIDGE_ENV_VAR, BridgeError, ExternalScorer
from .config import OBJECTIVES, SCORER_KINDS, RunConfig
from .data import (
    Claim,
    DataError,
    label_counts,
    load_claims,
    load_corpus,
    segment_sentences,
    write_claims,
    write_corpus,
)
from .debunker import cross_validate, run_pipeline, search_threshold
from .filtering import FilterConfig, filter_candidates
from .lm import SMOOTHING_MODES, NgramScorer
from .report import ablation_filtering, emit_report, _render_markdown
from .retrieval import TfidfSentenceRetriever

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this CLI reserves 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    # Defaults are None so a config file can fill unset flags.
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON run config; explicit flags override it")
    parser.add_argument("--k-candidates", type=int, default=None)
    parser.add_argument("--remove-stopwords", action="store_true", default=None)
    parser.add_argument("--stem", action="store_true", default=None)
    parser.add_argument("--no-filter", action="store_true", default=None,
                        help="disable all filter rules; take the plain top-3")
    parser.add_argument("--filter-config", type=Path, default=None,
                        help="JSON file with filter rule settings")
    parser.add_argument("--ngram-order", type=int, default=None)
    parser.add_argument("--smoothing", choices=SMOOTHING_MODES, default=None)
    parser.add_argument("--add-k", type=float, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--objective", choices=OBJECTIVES, default=None)
    parser.add_argument("--cv-folds", type=int, default=None)
    parser.add_argument("--ground-per-fold", action="store_true", default=None)
    parser.add_argument("--jobs", type=int, default=None)


def _add_scorer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scorer", choices=SCORER_KINDS, default=None,
                        help="in-process n-gram model, or an external bridge")
    parser.add_argument("--bridge-command", default=None,
                        help="launch this command and speak the line protocol on its stdio")
    parser.add_argument("--bridge-address", default=None,
                        help=f"connect to a bridge at host:port (default: ${BRIDGE_ENV_VAR})")


def build_runconfig(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides: dict = {}
    for key in ("k_candidates", "remove_stopwords", "stem", "no_filter",
                "objective", "cv_folds", "ground_per_fold", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    grounding: dict = {}
    for key in ("ngram_order", "smoothing", "add_k", "epochs", "learning_rate"):
        value = getattr(args, key, None)
        if value is not None:
            grounding[key] = value
    if grounding:
        overrides["grounding"] = grounding
    if getattr(args, "filter_config", None) is not None:
        overrides["filter"] = FilterConfig.from_json(args.filter_config).to_dict()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    for key in ("scorer", "bridge_command", "bridge_address"):
        value = getattr(args, key, None)
        if value is not None:
            overrides["scorer_kind" if key == "scorer" else key] = value
    # A bridge flag implies the external scorer unless stated otherwise.
    if "scorer_kind" not in overrides and (
            overrides.get("bridge_command") or overrides.get("bridge_address")):
        overrides["scorer_kind"] = "external"
    return cfg.merged_with(overrides)


@contextlib.contextmanager
def _closing(scorer):
    """Close bridge transports (and their subprocesses) on the way out."""
    try:
        yield scorer
    finally:
        close = getattr(scorer, "close", None)
        if close is not None:
            close()


def make_scorer(cfg: RunConfig):
    """In-process n-gram scorer unless the config selects the bridge."""
    if cfg.scorer_kind == "ngram":
        return cfg.grounding.make_scorer()
    if cfg.bridge_command and cfg.bridge_address:
        raise ValueError("pass either --bridge-command or --bridge-address, not both")
    return ExternalScorer(
        command=cfg.bridge_command,
        address=cfg.bridge_address,
        epochs=cfg.grounding.epochs,
        learning_rate=cfg.grounding.learning_rate,
    )


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True, ensure_ascii=False))


def cmd_ingest(args) -> int:
    wrote_something = False
    if args.claims:
        claims = load_claims(args.claims, format=args.format)
        if args.out:
            write_claims(claims, args.out)
        _print_json({"claims": label_counts(claims)})
        wrote_something = True
    if args.corpus:
        corpus = load_corpus(args.corpus)
        if args.corpus_out:
            write_corpus(corpus, args.corpus_out)
        _print_json({"documents": len(corpus)})
        wrote_something = True
    if not wrote_something:
        raise ValueError("nothing to ingest: pass --claims and/or --corpus")
    return 0


def cmd_index_build(args) -> int:
    corpus = load_corpus(args.corpus)
    sentences = [s for doc in corpus for s in segment_sentences(doc)]
    retriever = TfidfSentenceRetriever(
        k=args.k if args.k is not None else 10,
        remove_stopwords=bool(args.remove_stopwords),
        stem=bool(args.stem),
    ).fit(sentences)
    retriever.save(args.out)
    _print_json({"sentences_indexed": retriever.n_indexed_,
                 "vocabulary": len(retriever.vocabulary_), "index": str(args.out)})
    return 0


def cmd_index_query(args) -> int:
    retriever = TfidfSentenceRetriever.load(args.index)
    for cand in retriever.top_candidates(args.text, k=args.k):
        _print_json({
            "doc_id": cand.sentence.doc_id,
            "sent_index": cand.sentence.sent_index,
            "text": cand.sentence.text,
            "score": cand.score,
        })
    return 0


def cmd_retrieve(args) -> int:
    cfg = build_runconfig(args)
    claims = load_claims(args.claims)
    corpus = load_corpus(args.corpus)
    sentences = [s for doc in corpus for s in segment_sentences(doc)]
    retriever = TfidfSentenceRetriever(
        k=cfg.k_candidates, remove_stopwords=cfg.remove_stopwords, stem=cfg.stem,
    ).fit(sentences)
    filter_cfg = cfg.effective_filter()
    with open(args.out, "w", encoding="utf-8") as fh:
        for claim in claims:
            es = filter_candidates(claim, retriever.top_candidates(claim), filter_cfg)
            fh.write(json.dumps({
                "claim_id": es.claim_id,
                "evidence": [
                    {"doc_id": c.sentence.doc_id, "sent_index": c.sentence.sent_index,
                     "text": c.sentence.text, "score": c.score}
                    for c in es.evidence
                ],
                "rejected": [
                    {"text": c.sentence.text, "rule": rule} for c, rule in es.rejected
                ],
            }, sort_keys=True, ensure_ascii=False) + "\n")
    _print_json({"claims": len(claims), "evidence_file": str(args.out)})
    return 0


def _read_evidence_texts(path: Path) -> list[str]:
    """Evidence file from the retrieve stage, or plain one-text-per-line."""
    texts: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                record = json.loads(line)
                found = [e["text"] for e in record.get("evidence", [])]
            else:
                found = [line]
            for text in found:
                if text not in seen:
                    seen.add(text)
                    texts.append(text)
    if not texts:
        raise DataError("no evidence texts found", path=str(path))
    return texts


def cmd_ground(args) -> int:
    cfg = build_runconfig(args)
    texts = _read_evidence_texts(args.evidence)
    with _closing(make_scorer(cfg)) as scorer:
        scorer.ground(texts)
        if isinstance(scorer, NgramScorer):
            if args.model_out:
                scorer.save(args.model_out)
                _print_json({"grounding_texts": len(texts), "model": str(args.model_out)})
            else:
                raise ValueError("--model-out is required for the in-process scorer")
        else:
            _print_json({"grounding_texts": len(texts), "bridge": True})
    return 0


def cmd_score(args) -> int:
    if args.model:
        scorer = NgramScorer.load(args.model)
    else:
        cfg = build_runconfig(args)
        scorer = make_scorer(cfg)
        if isinstance(scorer, NgramScorer):
            raise ValueError(
                "scorer not grounded: pass --model with a grounded model file, "
                "or select a bridge"
            )
    with _closing(scorer):
        if args.text is not None:
            _print_json({"ppl": scorer.score(args.text)})
            return 0
        if not args.claims:
            raise ValueError("pass --text or --claims")
        claims = load_claims(args.claims)
        out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
        try:
            for claim in claims:
                record = {"claim_id": claim.id, "ppl": scorer.score(claim.text)}
                out.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        finally:
            if out is not sys.stdout:
                out.close()
    return 0


def cmd_calibrate(args) -> int:
    claims = {c.id: c for c in load_claims(args.claims)}
    ppls: list[float] = []
    gold: list[bool] = []
    with open(args.scores, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            claim = claims.get(record.get("claim_id"))
            if claim is None:
                raise DataError(f"score references unknown claim id: {record.get('claim_id')!r}",
                                path=str(args.scores), line=lineno)
            if claim.label is None:
                continue
            ppls.append(float(record["ppl"]))
            gold.append(bool(claim.label))
    objective = args.objective or "accuracy"
    result = search_threshold(ppls, gold, objective)
    payload = {
        "threshold": result.threshold,
        "objective": result.objective,
        "objective_value": result.objective_value,
        "metrics": result.metrics.to_dict(),
        "cv": None,
    }
    cv_folds = args.cv_folds if args.cv_folds is not None else 0
    if cv_folds >= 2:
        cv = cross_validate(ppls, gold, cv_folds, args.seed, objective)
        payload["cv"] = {
            "k": cv.k, "seed": cv.seed, "objective": cv.objective,
            "averaged": cv.averaged,
            "fold_thresholds": [f.threshold for f in cv.folds],
        }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
    _print_json(payload)
    return 0


def cmd_evaluate(args) -> int:
    cfg = build_runconfig(args)
    claims = load_claims(args.claims)
    corpus = load_corpus(args.corpus)
    with _closing(make_scorer(cfg)) as scorer:
        result = run_pipeline(claims, corpus, cfg, scorer=scorer, threshold=args.threshold)
        ablation = None
        if args.with_ablation:
            ablation = ablation_filtering(claims, corpus, cfg, scorer=scorer)
    paths = emit_report(result, cfg, args.out_dir, ablation=ablation,
                        dataset_paths={"claims": args.claims, "corpus": args.corpus})
    if isinstance(result.scorer, NgramScorer):
        model_path = Path(args.out_dir) / "model.json"
        result.scorer.save(model_path)
        paths["model"] = model_path
    _print_json({
        "threshold": result.threshold,
        "metrics": None if result.metrics is None else result.metrics.to_dict(),
        "cv_averaged": None if result.cv is None else result.cv.averaged,
        "artifacts": {name: str(p) for name, p in sorted(paths.items())},
    })
    return 0


def cmd_ablate(args) -> int:
    cfg = build_runconfig(args)
    claims = load_claims(args.claims)
    corpus = load_corpus(args.corpus)
    with _closing(make_scorer(cfg)) as scorer:
        result = ablation_filtering(claims, corpus, cfg, scorer=scorer)
    payload = result.to_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
    _print_json(payload)
    return 0


def cmd_report(args) -> int:
    report_path = Path(args.run_dir) / "report.json"
    with open(report_path, encoding="utf-8") as fh:
        payload = json.load(fh)
    md_path = Path(args.run_dir) / "report.md"
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write(_render_markdown(payload))
    _print_json({"report_md": str(md_path)})
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lmdebunk",
                     description="Debunk claims by perplexity under an evidence-grounded LM.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="normalize claims and corpus files")
    p.add_argument("--claims", type=Path)
    p.add_argument("--format", choices=("jsonl", "tsv"), default=None)
    p.add_argument("--out", type=Path)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--corpus-out", type=Path)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("index", help="build or query a sentence index")
    index_sub = p.add_subparsers(dest="index_command", required=True, parser_class=_Parser)
    pb = index_sub.add_parser("build")
    pb.add_argument("--corpus", type=Path, required=True)
    pb.add_argument("--out", type=Path, required=True)
    pb.add_argument("--k", type=int, default=None)
    pb.add_argument("--remove-stopwords", action="store_true", default=None)
    pb.add_argument("--stem", action="store_true", default=None)
    pb.set_defaults(handler=cmd_index_build)
    pq = index_sub.add_parser("query")
    pq.add_argument("--index", type=Path, required=True)
    pq.add_argument("--text", required=True)
    pq.add_argument("--k", type=int, default=None)
    pq.set_defaults(handler=cmd_index_query)

    p = sub.add_parser("retrieve", help="select filtered evidence per claim")
    p.add_argument("--claims", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.add_argument("--k", dest="k_candidates", type=int, default=None,
                   help="alias for --k-candidates")
    p.set_defaults(handler=cmd_retrieve)

    p = sub.add_parser("ground", help="fit a scorer on evidence texts")
    p.add_argument("--evidence", type=Path, required=True)
    p.add_argument("--model-out", type=Path)
    _add_config_flags(p)
    _add_scorer_flags(p)
    p.set_defaults(handler=cmd_ground)

    p = sub.add_parser("score", help="perplexity of a text or of claims")
    p.add_argument("--model", type=Path)
    p.add_argument("--text")
    p.add_argument("--claims", type=Path)
    p.add_argument("--out", type=Path)
    _add_config_flags(p)
    _add_scorer_flags(p)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("calibrate", help="search the verdict threshold on scored claims")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--claims", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cv-folds", "--k", type=int, default=None, dest="cv_folds")
    p.add_argument("--objective", choices=OBJECTIVES, default=None)
    p.add_argument("--out", type=Path)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("evaluate", help="run the full pipeline and write a report")
    p.add_argument("--claims", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("lmdebunk_run"))
    p.add_argument("--threshold", type=float, default=None,
                   help="skip calibration and judge at this threshold")
    p.add_argument("--with-ablation", action="store_true")
    _add_config_flags(p)
    p.add_argument("--k", dest="cv_folds", type=int, default=None,
                   help="alias for --cv-folds")
    _add_scorer_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="compare the pipeline with and without filtering")
    p.add_argument("--claims", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path)
    _add_config_flags(p)
    _add_scorer_flags(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("report", help="re-render report.md from report.json")
    p.add_argument("--run-dir", type=Path, required=True)
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except DataError as exc:
        print(f"lmdebunk: data error: {exc}", file=sys.stderr)
        return 2
    except BridgeError as exc:
        print(f"lmdebunk: bridge error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"lmdebunk: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
