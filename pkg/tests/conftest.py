"""Shared builders for synthetic claims, corpora, and datasets."""

from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

from lmdebunk import Claim, SentenceUnit, SourceDocument

DATA_DIR = Path(__file__).parent / "data"
FAKE_BRIDGE = [sys.executable, str(Path(__file__).parent / "fake_bridge.py")]

# Topic grid for the separation dataset. Each topic yields one true
# claim whose words appear in its evidence document and one false claim
# whose key entity is swapped for words the corpus never contains.
TOPICS = [
    ("solar panels", "generate electricity from sunlight", "moon crystals"),
    ("honey bees", "pollinate flowering crops", "granite slabs"),
    ("wind turbines", "convert moving air into power", "frozen syrup"),
    ("rain gauges", "measure daily rainfall totals", "whale songs"),
    ("cargo ships", "carry freight across oceans", "paper clouds"),
    ("steam engines", "burn fuel to drive pistons", "silent shadows"),
    ("oak forests", "shelter nesting birds in spring", "neon vapors"),
    ("city buses", "move commuters along fixed routes", "velvet rivers"),
    ("glass lenses", "focus light onto a single point", "rubber thunder"),
    ("water filters", "remove sediment from drinking water", "candy smoke"),
]


def make_sentences(texts: list[str], doc_id: str = "doc") -> list[SentenceUnit]:
    return [SentenceUnit(doc_id=doc_id, sent_index=i, text=t) for i, t in enumerate(texts)]


def topic_document(index: int, subject: str, predicate: str) -> SourceDocument:
    text = (
        f"{subject.capitalize()} {predicate} under most conditions. "
        f"Researchers report that {subject} {predicate} in repeated trials. "
        f"Field observations confirm that {subject} {predicate} year after year. "
        f"A survey of operators found that {subject} {predicate} reliably."
    )
    return SourceDocument(doc_id=f"topic-{index:02d}", text=text, source_kind="news")


def separation_dataset() -> tuple[list[Claim], list[SourceDocument]]:
    """20 claims over 10 topics: 10 true, 10 false with unseen entities."""
    claims: list[Claim] = []
    corpus: list[SourceDocument] = []
    for i, (subject, predicate, swap) in enumerate(TOPICS):
        corpus.append(topic_document(i, subject, predicate))
        claims.append(Claim(
            id=f"true-{i:02d}",
            text=f"{subject.capitalize()} {predicate}.",
            label=True,
        ))
        head, _, _ = predicate.partition(" from ") if " from " in predicate else (predicate, "", "")
        claims.append(Claim(
            id=f"false-{i:02d}",
            text=f"{subject.capitalize()} {head} from {swap}.",
            label=False,
        ))
    return claims, corpus


def ablation_dataset() -> tuple[list[Claim], list[SourceDocument]]:
    """Separation dataset whose corpus quotes each false claim verbatim.

    Without filtering, the quoted falsehoods reach the grounding set and
    collapse the perplexity gap; the identical-sentence rule removes
    them, so filtering visibly improves the headline metrics.
    """
    claims, corpus = separation_dataset()
    by_id = {c.id: c for c in claims}
    poisoned = [
        SourceDocument(
            doc_id=doc.doc_id,
            text=doc.text + " " + by_id[f"false-{i:02d}"].text,
            source_kind=doc.source_kind,
        )
        for i, doc in enumerate(corpus)
    ]
    return claims, poisoned


def grounding_corpus(n: int = 100, seed: int = 11) -> list[str]:
    """Synthetic declarative sentences with a stable word order."""
    rng = random.Random(seed)
    determiners = ["the", "every", "one", "each"]
    adjectives = ["tall", "narrow", "quiet", "weathered", "painted", "old"]
    nouns = ["tower", "bridge", "market", "garden", "harbor", "mill", "archive"]
    verbs = ["overlooks", "borders", "shelters", "predates", "supplies", "faces"]
    objects = ["the river", "the square", "the valley", "the old walls",
               "the north road", "the fishing docks"]
    sentences = []
    for _ in range(n):
        sentences.append(
            f"{rng.choice(determiners)} {rng.choice(adjectives)} "
            f"{rng.choice(nouns)} {rng.choice(verbs)} {rng.choice(objects)}."
        )
    return sentences


@pytest.fixture
def sep_dataset():
    return separation_dataset()


@pytest.fixture
def small_sentences():
    return make_sentences([
        "The harbor master logs every arriving ship.",
        "Ships arriving at night wait for the morning tide.",
        "The morning tide lifts even the heaviest barges.",
        "Barges carry grain from the upstream mills.",
        "The upstream mills grind grain all winter.",
    ])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo acceptance verdict lines after the test summary.

    The acceptance tests print their verdicts to the real stdout, but
    pytest's fd-level capture swallows those writes unless -s is given.
    Replaying them through the terminal reporter keeps one visible
    pass/fail line per checked property in the default output.
    """
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance verdicts")
    for line in verdicts:
        terminalreporter.write_line(line)
