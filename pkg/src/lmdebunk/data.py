"""Domain types and dataset ingestion.

Claims and source documents arrive as JSONL (claims also as TSV). Loading
validates records eagerly and reports the offending line; collections are
plain immutable dataclass instances, safe to share across threads.

Rating-scale labels are collapsed to binary at ingestion so everything
downstream deals only with true/false.
"""

from __future__ import annotations

import json
import string
import unicodedata
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "Claim",
    "SourceDocument",
    "SentenceUnit",
    "DataError",
    "RAW_LABEL_TO_BINARY",
    "SOURCE_KINDS",
    "collapse_label",
    "normalize_text",
    "load_claims",
    "write_claims",
    "load_corpus",
    "write_corpus",
    "segment_sentences",
    "label_counts",
]


class DataError(ValueError):
    """Raised for malformed or inconsistent input data.

    Carries the source path and 1-based line number when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Claim:
    """A candidate statement to be verified."""

    id: str
    text: str
    label: bool | None = None  # True = truthful claim, False = false claim
    speaker: str | None = None
    domain_tag: str | None = None


@dataclass(frozen=True)
class SourceDocument:
    """A document from which evidence sentences are drawn."""

    doc_id: str
    text: str
    source_kind: str = "unknown"
    speaker: str | None = None


@dataclass(frozen=True)
class SentenceUnit:
    """One segmented sentence of a source document.

    (doc_id, sent_index) identifies the sentence; speaker is inherited
    from the document unless locally attributed.
    """

    doc_id: str
    sent_index: int
    text: str
    speaker: str | None = None


SOURCE_KINDS = frozenset({"scholarly", "news", "web", "unknown"})

# Rating-scale labels collapse to binary: the three strongest "fake"
# ratings map to False, the rest to True. Plain "true"/"false" pass through.
RAW_LABEL_TO_BINARY: dict[str, bool] = {
    "pants-fire": False,
    "false": False,
    "barely-true": False,
    "half-true": True,
    "mostly-true": True,
    "true": True,
}

_PUNCT_EDGE = string.punctuation + "‘’“”«»"


def normalize_text(text: str) -> str:
    """Canonical form used for matching: NFC, lowercase, collapsed
    whitespace, surrounding punctuation stripped.

    Stored text is never modified; call this on demand.
    """
    text = unicodedata.normalize("NFC", text).casefold()
    text = " ".join(text.split())
    return text.strip(_PUNCT_EDGE + " ")


def collapse_label(raw: str, *, path: str | None = None, line: int | None = None) -> bool:
    key = " ".join(raw.strip().casefold().replace("_", "-").split()).replace(" ", "-")
    try:
        return RAW_LABEL_TO_BINARY[key]
    except KeyError:
        raise DataError(f"unknown label {raw!r}", path=path, line=line) from None


def _require(condition: bool, message: str, path: str, line: int) -> None:
    if not condition:
        raise DataError(message, path=path, line=line)


def _claim_from_record(record: dict, path: str, line: int) -> Claim:
    _require(isinstance(record.get("id"), str) and record["id"] != "", "missing or empty 'id'", path, line)
    _require(isinstance(record.get("claim"), str), "missing 'claim'", path, line)
    text = record["claim"]
    _require(" ".join(text.split()) != "", "claim text empty after whitespace normalization", path, line)
    raw_label = record.get("label")
    label = None
    if raw_label is not None:
        _require(isinstance(raw_label, str), "'label' must be a string or null", path, line)
        label = collapse_label(raw_label, path=path, line=line)
    return Claim(
        id=record["id"],
        text=text,
        label=label,
        speaker=record.get("speaker") or None,
        domain_tag=record.get("domain") or None,
    )


def load_claims(path: str | Path, format: str | None = None) -> list[Claim]:
    """Load claims from a JSONL or TSV file.

    JSONL records: {"id", "claim", "label", "speaker", "domain"}.
    TSV columns (header required): id, label, claim, speaker.
    Rating-scale labels are collapsed to binary; ids must be unique.
    """
    path = Path(path)
    if format is None:
        format = "tsv" if path.suffix.lower() == ".tsv" else "jsonl"
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unsupported claims format {format!r}")
    loader = _load_claims_tsv if format == "tsv" else _load_claims_jsonl
    claims = loader(path)
    seen: set[str] = set()
    for claim in claims:
        if claim.id in seen:
            raise DataError(f"duplicate claim id {claim.id!r}", path=str(path))
        seen.add(claim.id)
    return claims


def _load_claims_jsonl(path: Path) -> list[Claim]:
    claims = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON ({exc.msg})", path=str(path), line=lineno) from None
            _require(isinstance(record, dict), "record must be a JSON object", str(path), lineno)
            claims.append(_claim_from_record(record, str(path), lineno))
    return claims


_TSV_COLUMNS = ["id", "label", "claim", "speaker"]


def _load_claims_tsv(path: Path) -> list[Claim]:
    claims = []
    with open(path, encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        header = [h.strip() for h in header_line.rstrip("\n").split("\t")]
        if header != _TSV_COLUMNS:
            raise DataError(
                f"TSV header must be {_TSV_COLUMNS}, got {header}", path=str(path), line=1
            )
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            fields = raw.rstrip("\n").split("\t")
            _require(len(fields) == len(_TSV_COLUMNS), f"expected {len(_TSV_COLUMNS)} columns, got {len(fields)}", str(path), lineno)
            record = {
                "id": fields[0],
                "label": fields[1] or None,
                "claim": fields[2],
                "speaker": fields[3] or None,
            }
            claims.append(_claim_from_record(record, str(path), lineno))
    return claims


def write_claims(claims: list[Claim], path: str | Path) -> None:
    """Serialize claims to JSONL; load_claims(write_claims(x)) is identity."""
    with open(path, "w", encoding="utf-8") as fh:
        for claim in claims:
            record = {
                "id": claim.id,
                "claim": claim.text,
                "label": None if claim.label is None else ("true" if claim.label else "false"),
                "speaker": claim.speaker,
                "domain": claim.domain_tag,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> list[SourceDocument]:
    """Load source documents from a JSONL file.

    Records: {"doc_id", "text", "source_kind", "speaker"}; source_kind
    defaults to "unknown" when absent or null.
    """
    path = Path(path)
    docs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON ({exc.msg})", path=str(path), line=lineno) from None
            _require(isinstance(record, dict), "record must be a JSON object", str(path), lineno)
            _require(isinstance(record.get("doc_id"), str) and record["doc_id"] != "", "missing or empty 'doc_id'", str(path), lineno)
            _require(isinstance(record.get("text"), str) and record["text"].strip() != "", "missing or empty 'text'", str(path), lineno)
            kind = record.get("source_kind") or "unknown"
            _require(kind in SOURCE_KINDS, f"source_kind must be one of {sorted(SOURCE_KINDS)}, got {kind!r}", str(path), lineno)
            doc = SourceDocument(
                doc_id=record["doc_id"],
                text=record["text"],
                source_kind=kind,
                speaker=record.get("speaker") or None,
            )
            if doc.doc_id in seen:
                raise DataError(f"duplicate doc_id {doc.doc_id!r}", path=str(path), line=lineno)
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs


def write_corpus(docs: list[SourceDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "doc_id": doc.doc_id,
                "text": doc.text,
                "source_kind": doc.source_kind,
                "speaker": doc.speaker,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# Words whose trailing period is not a sentence boundary. Two-part
# abbreviations ("et al.") are covered by their final part.
ABBREVIATIONS = frozenset({
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "rev.",
    "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "fig.", "no.", "vol.",
    "u.s.", "u.k.", "u.n.", "approx.", "dept.", "inc.", "corp.",
})

_TERMINALS = ".!?"
_CLOSERS = "\"')]’”"
_OPENERS = "\"'([‘“"


def _ends_with_abbreviation(text: str) -> bool:
    tail = text.rstrip()
    cut = max(tail.rfind(" "), tail.rfind("\t"), tail.rfind("\n"))
    word = tail[cut + 1 :].casefold()
    return word in ABBREVIATIONS


def segment_sentences(doc: SourceDocument) -> list[SentenceUnit]:
    """Split a document into sentences.

    Boundary rule: a run of {. ! ?} (plus closing quotes/brackets)
    followed by whitespace and a capital letter, except after a known
    abbreviation. Degenerate text yields a single sentence. Concatenating
    the output reproduces the input modulo whitespace.
    """
    text = doc.text
    if not text.strip():
        raise ValueError(f"document {doc.doc_id!r} has empty text")
    spans: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINALS:
            j = i + 1
            while j < n and text[j] in _TERMINALS + _CLOSERS:
                j += 1
            k = j
            while k < n and text[k].isspace():
                k += 1
            if k > j:  # whitespace follows the terminal run
                m = k
                while m < n and text[m] in _OPENERS:
                    m += 1
                if m < n and text[m].isupper():
                    if not (text[i] == "." and _ends_with_abbreviation(text[:j])):
                        spans.append(text[start:j])
                        start = k
                        i = k
                        continue
            i = j
        else:
            i += 1
    if text[start:].strip():
        spans.append(text[start:])
    return [
        SentenceUnit(doc_id=doc.doc_id, sent_index=idx, text=span.strip(), speaker=doc.speaker)
        for idx, span in enumerate(spans)
    ]


def label_counts(claims: list[Claim]) -> dict[str, int]:
    """Count claims by collapsed label: {"false": n, "true": n, "unlabeled": n}."""
    counts = {"false": 0, "true": 0, "unlabeled": 0}
    for claim in claims:
        if claim.label is None:
            counts["unlabeled"] += 1
        else:
            counts["true" if claim.label else "false"] += 1
    return counts
