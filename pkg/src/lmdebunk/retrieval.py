"""TF-IDF sentence retrieval.

An inverted index over corpus sentences scores evidence candidates by
cosine similarity of TF-IDF vectors. The variant is pinned for
reproducibility: raw term frequency, smoothed idf
``ln((1 + N) / (1 + df)) + 1`` with N the indexed sentence count, and
L2-normalized vectors.

TF-IDF statistics are computed over sentences, the retrieval unit, not
over whole documents.

Any scorer exposing ``top_candidates(text, k)`` can stand in for this
one; the downstream filter only needs scored sentences.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import Claim, SentenceUnit, normalize_text

__all__ = [
    "ScoredCandidate",
    "TfidfSentenceRetriever",
    "tokenize_for_retrieval",
    "build_index",
    "top_candidates",
]

INDEX_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Small fixed stop-word list; removal is off by default.
STOPWORDS = frozenset(
    "a an and are as at be by for from has have in is it its of on or that "
    "the this to was were will with".split()
)


def _naive_stem(token: str) -> str:
    # crude suffix stripping, exposed for ablation only
    for suffix in ("ing", "ed", "es", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def tokenize_for_retrieval(text: str, remove_stopwords: bool = False, stem: bool = False) -> list[str]:
    """Lowercased alphanumeric runs of the normalized text."""
    tokens = _TOKEN_RE.findall(normalize_text(text))
    if remove_stopwords:
        tokens = [t for t in tokens if t not in STOPWORDS]
    if stem:
        tokens = [_naive_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class ScoredCandidate:
    """An evidence candidate with its cosine relevancy score in [0, 1]."""

    sentence: SentenceUnit
    score: float


class TfidfSentenceRetriever(BaseEstimator):
    """Inverted-index TF-IDF retriever over corpus sentences.

    Parameters
    ----------
    k : int
        Default number of candidates returned per query.
    remove_stopwords, stem : bool
        Tokenization ablation flags, both off by default.

    After ``fit`` the index is immutable; queries are safe to run in
    parallel across claims.
    """

    def __init__(self, k: int = 10, remove_stopwords: bool = False, stem: bool = False):
        self.k = k
        self.remove_stopwords = remove_stopwords
        self.stem = stem

    def _tokenize(self, text: str) -> list[str]:
        return tokenize_for_retrieval(text, self.remove_stopwords, self.stem)

    def fit(self, sentences: list[SentenceUnit], y=None):
        """Build the index. Sentences with no tokens are not indexed."""
        if not sentences:
            raise ValueError("cannot build an index over an empty sentence list")
        indexed: list[SentenceUnit] = []
        token_counts: list[Counter] = []
        for sentence in sentences:
            counts = Counter(self._tokenize(sentence.text))
            if counts:
                indexed.append(sentence)
                token_counts.append(counts)
        if not indexed:
            raise ValueError("no sentence produced any tokens; nothing to index")

        vocabulary: dict[str, int] = {}
        df: list[int] = []
        for counts in token_counts:
            for term in counts:
                tid = vocabulary.setdefault(term, len(vocabulary))
                if tid == len(df):
                    df.append(0)
                df[tid] += 1

        n = len(indexed)
        idf = [math.log((1 + n) / (1 + d)) + 1.0 for d in df]

        postings: dict[int, list[tuple[int, int]]] = {tid: [] for tid in range(len(vocabulary))}
        norms: list[float] = []
        for row, counts in enumerate(token_counts):
            sq = 0.0
            for term, tf in counts.items():
                tid = vocabulary[term]
                postings[tid].append((row, tf))
                sq += (tf * idf[tid]) ** 2
            norms.append(math.sqrt(sq))

        self.vocabulary_ = vocabulary
        self.idf_ = idf
        self.postings_ = postings
        self.sentence_norms_ = norms
        self.sentences_ = list(indexed)
        self.n_indexed_ = n
        return self

    def top_candidates(self, claim: Claim | str, k: int | None = None) -> list[ScoredCandidate]:
        """Top-k sentences by cosine similarity, descending.

        Exactly min(k, number of sentences with nonzero score) candidates
        are returned; ties break by (doc_id, sent_index) ascending. A
        query sharing no vocabulary with the corpus yields an empty list.
        """
        check_is_fitted(self, "vocabulary_")
        if k is None:
            k = self.k
        if k <= 0:
            raise ValueError("k must be positive")
        text = claim.text if isinstance(claim, Claim) else claim
        counts = Counter(self._tokenize(text))
        weights: dict[int, float] = {}
        for term, tf in counts.items():
            tid = self.vocabulary_.get(term)
            if tid is not None:
                weights[tid] = tf * self.idf_[tid]
        if not weights:
            return []
        query_norm = math.sqrt(sum(w * w for w in weights.values()))

        scores: dict[int, float] = {}
        for tid, w_query in weights.items():
            idf = self.idf_[tid]
            for row, tf in self.postings_[tid]:
                scores[row] = scores.get(row, 0.0) + w_query * tf * idf
        ranked = sorted(
            ((row, dot) for row, dot in scores.items() if dot > 0.0),
            key=lambda item: (
                -item[1] / (query_norm * self.sentence_norms_[item[0]]),
                self.sentences_[item[0]].doc_id,
                self.sentences_[item[0]].sent_index,
            ),
        )
        return [
            ScoredCandidate(
                sentence=self.sentences_[row],
                score=dot / (query_norm * self.sentence_norms_[row]),
            )
            for row, dot in ranked[:k]
        ]

    def transform(self, texts: list[str]) -> list[list[ScoredCandidate]]:
        """Batch query: one candidate list per input text."""
        return [self.top_candidates(text) for text in texts]

    def save(self, path: str | Path) -> None:
        """Persist the fitted index as versioned JSON.

        Field order: format_version, params, vocabulary, idf, postings,
        sentence_norms, sentences.
        """
        check_is_fitted(self, "vocabulary_")
        payload = {
            "format_version": INDEX_FORMAT_VERSION,
            "params": self.get_params(),
            "vocabulary": self.vocabulary_,
            "idf": self.idf_,
            "postings": {str(tid): rows for tid, rows in self.postings_.items()},
            "sentence_norms": self.sentence_norms_,
            "sentences": [
                {
                    "doc_id": s.doc_id,
                    "sent_index": s.sent_index,
                    "text": s.text,
                    "speaker": s.speaker,
                }
                for s in self.sentences_
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "TfidfSentenceRetriever":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise ValueError(f"unsupported index format_version {version!r}")
        retriever = cls(**payload["params"])
        retriever.vocabulary_ = payload["vocabulary"]
        retriever.idf_ = payload["idf"]
        retriever.postings_ = {int(tid): [tuple(row) for row in rows] for tid, rows in payload["postings"].items()}
        retriever.sentence_norms_ = payload["sentence_norms"]
        retriever.sentences_ = [SentenceUnit(**record) for record in payload["sentences"]]
        retriever.n_indexed_ = len(retriever.sentences_)
        return retriever


def build_index(sentences: list[SentenceUnit], **params) -> TfidfSentenceRetriever:
    """Build a TF-IDF index over the given sentences."""
    return TfidfSentenceRetriever(**params).fit(sentences)


def top_candidates(index: TfidfSentenceRetriever, claim: Claim | str, k: int = 10) -> list[ScoredCandidate]:
    """Query a built index for the top-k evidence candidates of a claim."""
    return index.top_candidates(claim, k=k)
