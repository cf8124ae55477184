"""Token-level language models and perplexity.

The scorer contract has three operations: ground(texts) fits the model
to evidence, score(text) returns perplexity, reset() drops the fitted
state. The in-process implementation is an interpolated Kneser-Ney
n-gram model; a uniform model serves as the no-knowledge baseline.

Perplexity is the geometric mean of inverse token probabilities,

    PPL(x) = (prod_i 1/p(x_i | x_0..x_{i-1}))^(1/n)
           = exp(-(1/n) sum_i log p(x_i | ...)),

with n counting real tokens only. Sentence-start padding is conditioned
on but never predicted, and there is no end-of-sequence token. Both
routes are exposed; the log form is the one used everywhere because the
literal product under- or overflows on long sequences.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

__all__ = [
    "BOS_TOKEN",
    "UNK_TOKEN",
    "EPOCH_CHOICES",
    "SMOOTHING_MODES",
    "tokenize",
    "sequence_log_prob",
    "perplexity_from_probs",
    "perplexity_from_log_probs",
    "Scorer",
    "GroundingConfig",
    "NgramScorer",
    "UniformScorer",
]

logger = logging.getLogger(__name__)

# Padding and unknown symbols. The tokenizer emits non-space punctuation
# as single-character tokens, so neither string can collide with a real
# token.
BOS_TOKEN = "<s>"
UNK_TOKEN = "<unk>"

EPOCH_CHOICES = (1, 2, 3, 5, 10, 20)
SMOOTHING_MODES = ("kneser_ney", "add_k")

# Word tokens keep internal hyphens and apostrophes ("covid-19",
# "don't"); any other non-space character stands alone.
_LM_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*|[^\sa-z0-9]")

_KEY_SEP = "\x1f"
_MODEL_FORMAT_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word and punctuation tokens."""
    tokens = _LM_TOKEN_RE.findall(text.casefold())
    if not tokens:
        raise ValueError(f"text has no tokens: {text!r}")
    return tokens


def sequence_log_prob(log_probs: Iterable[float]) -> float:
    """Sum of per-token natural-log probabilities."""
    return sum(log_probs)


def perplexity_from_probs(probs: Iterable[float]) -> float:
    """Literal product form of perplexity.

    Reference arithmetic only; prefer perplexity_from_log_probs for real
    sequences.
    """
    probs = list(probs)
    if not probs:
        raise ValueError("empty probability sequence")
    for p in probs:
        if not 0.0 < p <= 1.0:
            raise ValueError(f"probability out of (0, 1]: {p}")
    return math.prod(1.0 / p for p in probs) ** (1.0 / len(probs))


def perplexity_from_log_probs(log_probs: Iterable[float]) -> float:
    """Stable log-space form of perplexity."""
    log_probs = list(log_probs)
    if not log_probs:
        raise ValueError("empty log-probability sequence")
    return math.exp(-sequence_log_prob(log_probs) / len(log_probs))


@runtime_checkable
class Scorer(Protocol):
    """Contract shared by in-process and external scorers."""

    def ground(self, texts: list[str]) -> None: ...

    def score(self, text: str) -> float: ...

    def reset(self) -> None: ...


@dataclass(frozen=True)
class GroundingConfig:
    """Grounding hyperparameters.

    epochs and learning_rate matter only to scorers that train by
    gradient descent; the n-gram scorer records them and ignores them,
    which keeps one config shape across scorer backends.
    """

    epochs: int = 5
    learning_rate: float = 5e-5
    ngram_order: int = 3
    smoothing: str = "kneser_ney"
    add_k: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.epochs not in EPOCH_CHOICES:
            logger.info("epochs=%d is outside the usual grid %s", self.epochs, EPOCH_CHOICES)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")
        if self.add_k <= 0:
            raise ValueError("add_k must be positive")

    def make_scorer(self) -> "NgramScorer":
        return NgramScorer(
            ngram_order=self.ngram_order,
            smoothing=self.smoothing,
            add_k=self.add_k,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
        )


class NgramScorer(BaseEstimator):
    """Count-based n-gram scorer with Kneser-Ney or add-k smoothing.

    Kneser-Ney interpolates absolute discounting down to a uniform base
    over the vocabulary plus one unknown type. The highest order uses raw
    counts; lower orders use continuation counts (distinct preceding
    types, with the start symbol counting as a preceder). The discount is
    a fixed constant rather than estimated from count-of-counts so that
    small fixtures stay hand-checkable and grounding stays deterministic.

    add_k applies (c + k) / (c(h) + k * V) at the full order only, which
    collapses to 1/V for an unseen history.
    """

    def __init__(self, ngram_order: int = 3, smoothing: str = "kneser_ney",
                 kn_discount: float = 0.75, add_k: float = 0.1,
                 epochs: int = 5, learning_rate: float = 5e-5):
        self.ngram_order = ngram_order
        self.smoothing = smoothing
        self.kn_discount = kn_discount
        self.add_k = add_k
        self.epochs = epochs
        self.learning_rate = learning_rate

    def _validate_params_strict(self):
        if self.ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")
        if not 0.0 < self.kn_discount < 1.0:
            raise ValueError("kn_discount must be in (0, 1)")
        if self.add_k <= 0:
            raise ValueError("add_k must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.epochs not in EPOCH_CHOICES:
            logger.info("epochs=%d is outside the usual grid %s", self.epochs, EPOCH_CHOICES)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def fit(self, texts: list[str]) -> "NgramScorer":
        """Count n-grams over the given texts. Refitting starts fresh."""
        self._validate_params_strict()
        texts = list(texts)
        if not texts:
            raise ValueError("cannot ground on an empty text list")
        n = self.ngram_order
        raw: dict[int, dict[tuple, dict[str, int]]] = {k: {} for k in range(1, n + 1)}
        for text in texts:
            tokens = tokenize(text)
            padded = [BOS_TOKEN] * (n - 1) + tokens
            for i in range(len(tokens)):
                pos = i + n - 1
                word = padded[pos]
                for k in range(1, n + 1):
                    history = tuple(padded[pos - k + 1:pos])
                    by_word = raw[k].setdefault(history, {})
                    by_word[word] = by_word.get(word, 0) + 1
        self.raw_counts_ = raw
        self._build_tables()
        self.n_grounding_texts_ = len(texts)
        self.unit_ = "word"
        return self

    # Scorer protocol.
    def ground(self, texts: list[str]) -> None:
        self.fit(texts)

    def reset(self) -> None:
        """Drop counts; the scorer must be grounded again before scoring."""
        for attr in ("raw_counts_", "vocab_", "vocab_size_", "_high", "_cont",
                     "n_grounding_texts_", "unit_"):
            if hasattr(self, attr):
                delattr(self, attr)

    def _build_tables(self):
        """Derive the per-level probability tables from raw counts."""
        n = self.ngram_order
        self.vocab_ = set()
        for by_word in self.raw_counts_[1].values():
            self.vocab_.update(by_word)
        # One reserved unknown type shares the base distribution.
        self.vocab_size_ = len(self.vocab_) + 1

        high = self.raw_counts_[n]
        self._high = (
            high,
            {h: sum(ws.values()) for h, ws in high.items()},
            {h: len(ws) for h, ws in high.items()},
        )
        self._cont = {}
        for k in range(1, n):
            preceders: dict[tuple, dict[str, set]] = {}
            for history, by_word in self.raw_counts_[k + 1].items():
                v, h = history[0], history[1:]
                for w in by_word:
                    preceders.setdefault(h, {}).setdefault(w, set()).add(v)
            counts = {h: {w: len(vs) for w, vs in ws.items()} for h, ws in preceders.items()}
            self._cont[k] = (
                counts,
                {h: sum(ws.values()) for h, ws in counts.items()},
                {h: len(ws) for h, ws in counts.items()},
            )

    def _prob_kn(self, level: int, history: tuple, word: str) -> float:
        if level == 0:
            return 1.0 / self.vocab_size_
        counts, totals, types = self._high if level == self.ngram_order else self._cont[level]
        total = totals.get(history, 0)
        if total == 0:
            return self._prob_kn(level - 1, history[1:], word)
        c = counts.get(history, {}).get(word, 0)
        d = self.kn_discount
        lower = self._prob_kn(level - 1, history[1:], word)
        return max(c - d, 0.0) / total + d * types[history] / total * lower

    def _prob_add_k(self, history: tuple, word: str) -> float:
        counts, totals, _ = self._high
        c = counts.get(history, {}).get(word, 0)
        total = totals.get(history, 0)
        k = self.add_k
        return (c + k) / (total + k * self.vocab_size_)

    def conditional_prob(self, history: tuple, word: str) -> float:
        """p(word | history) with history already mapped and padded."""
        check_is_fitted(self, "vocab_")
        if self.smoothing == "kneser_ney":
            return self._prob_kn(self.ngram_order, history, word)
        return self._prob_add_k(history, word)

    def token_log_probs(self, text: str) -> list[float]:
        """Per-token log probabilities under the grounded model."""
        check_is_fitted(self, "vocab_")
        tokens = tokenize(text)
        n = self.ngram_order
        mapped = [t if t in self.vocab_ else UNK_TOKEN for t in tokens]
        padded = [BOS_TOKEN] * (n - 1) + mapped
        out = []
        for i in range(len(mapped)):
            pos = i + n - 1
            history = tuple(padded[pos - n + 1:pos])
            out.append(math.log(self.conditional_prob(history, padded[pos])))
        return out

    def score(self, text: str) -> float:
        """Perplexity of text under the grounded model."""
        return perplexity_from_log_probs(self.token_log_probs(text))

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "vocab_")
        payload = {
            "format_version": _MODEL_FORMAT_VERSION,
            "params": self.get_params(),
            "raw_counts": {
                str(k): {_KEY_SEP.join(h): ws for h, ws in level.items()}
                for k, level in self.raw_counts_.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "NgramScorer":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != _MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version: {version}")
        scorer = cls(**payload["params"])
        scorer.raw_counts_ = {
            int(k): {
                tuple(h.split(_KEY_SEP)) if h else (): dict(ws)
                for h, ws in level.items()
            }
            for k, level in payload["raw_counts"].items()
        }
        scorer._build_tables()
        scorer.n_grounding_texts_ = payload.get("n_grounding_texts", 0)
        scorer.unit_ = "word"
        return scorer


class UniformScorer(BaseEstimator):
    """Assigns every token probability 1/vocab_size.

    The perplexity of any text is the vocabulary size, which makes this
    the no-knowledge baseline: grounding is what moves a scorer away
    from it.
    """

    def __init__(self, vocab_size: int = 2):
        self.vocab_size = vocab_size

    def ground(self, texts: list[str]) -> None:
        # Nothing to learn; kept so the scorer contract holds.
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")

    def reset(self) -> None:
        pass

    def token_log_probs(self, text: str) -> list[float]:
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        return [-math.log(self.vocab_size)] * len(tokenize(text))

    def score(self, text: str) -> float:
        return perplexity_from_log_probs(self.token_log_probs(text))
