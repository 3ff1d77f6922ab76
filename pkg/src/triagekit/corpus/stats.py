"""Descriptive corpus statistics and the referral-bounce cross-tabulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .types import Acceptance, Corpus, Instance, NUM_TEAMS, TeamLabel

PERCENTILES = (25, 50, 75, 90)


def _whitespace_tokens(text: str) -> int:
    return len(text.split())


def instance_token_length(instance: Instance, count_fn: Callable[[str], int] = _whitespace_tokens) -> int:
    return sum(count_fn(doc.text) for doc in instance.documents)


@dataclass
class DistributionSummary:
    mean: float
    percentiles: dict[int, float]

    def as_dict(self) -> dict:
        return {"mean": self.mean, **{f"p{k}": v for k, v in self.percentiles.items()}}


@dataclass
class CorpusStats:
    n_instances: int
    n_documents: int
    per_document: DistributionSummary
    per_instance: DistributionSummary
    median_by_acceptance: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "n_documents": self.n_documents,
            "per_document": self.per_document.as_dict(),
            "per_instance": self.per_instance.as_dict(),
            "median_by_acceptance": self.median_by_acceptance,
        }


def _summarise(values: np.ndarray) -> DistributionSummary:
    return DistributionSummary(
        mean=float(values.mean()),
        percentiles={p: float(np.percentile(values, p)) for p in PERCENTILES},
    )


def corpus_stats(
    corpus: Corpus, count_fn: Callable[[str], int] = _whitespace_tokens
) -> CorpusStats:
    """Token-count summaries per document and per instance.

    ``count_fn`` defaults to whitespace token counting, which coincides with
    the word-level tokenizer's token count; pass ``lambda t: len(tok.encode(t))``
    to measure under a trained tokenizer instead.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    doc_counts = np.array(
        [count_fn(d.text) for inst in corpus for d in inst.documents], dtype=float
    )
    inst_counts = np.array(
        [instance_token_length(inst, count_fn) for inst in corpus], dtype=float
    )
    if doc_counts.size == 0:
        raise ValueError("corpus contains no documents")

    by_acceptance = {}
    for status in (Acceptance.ACCEPTED, Acceptance.NOT_ACCEPTED):
        lengths = [
            instance_token_length(i, count_fn)
            for i in corpus
            if i.acceptance == status
        ]
        if lengths:
            by_acceptance[status.value] = float(np.median(lengths))

    return CorpusStats(
        n_instances=len(corpus),
        n_documents=int(doc_counts.size),
        per_document=_summarise(doc_counts),
        per_instance=_summarise(inst_counts),
        median_by_acceptance=by_acceptance,
    )


NO_ONWARD = "no_onward"


def bounce_matrix(corpus: Corpus, window_days: int = 30) -> np.ndarray:
    """First-to-second referral transition probabilities.

    Cell (A, B) estimates P(next referral within ``window_days`` goes to team
    B | first referral went to team A); the extra final column holds the
    "no onward referral" mass. Every row sums to 1; teams never observed as a
    first referral get all mass in the no-onward column. Only first->second
    transitions are counted for patients with 3+ referrals.
    """
    counts = np.zeros((NUM_TEAMS, NUM_TEAMS + 1))
    for patient_id, inst_ids in corpus.registry.items():
        insts = sorted(
            (corpus.get(i) for i in inst_ids), key=lambda x: (x.referral_date, x.instance_id)
        )
        first = insts[0]
        if first.referred_team is None:
            continue
        row = int(first.referred_team)
        onward = None
        if len(insts) > 1:
            second = insts[1]
            gap = (second.referral_date - first.referral_date).days
            if 0 < gap <= window_days and second.referred_team is not None:
                onward = int(second.referred_team)
        if onward is None:
            counts[row, NUM_TEAMS] += 1
        else:
            counts[row, onward] += 1

    table = np.zeros_like(counts)
    for a in range(NUM_TEAMS):
        total = counts[a].sum()
        if total == 0:
            table[a, NUM_TEAMS] = 1.0
        else:
            table[a] = counts[a] / total
    return table


def bounce_matrix_labels() -> list[str]:
    return [t.name for t in TeamLabel] + [NO_ONWARD]
