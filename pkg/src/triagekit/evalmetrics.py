"""Classification metrics, length-stratified analysis, confusion matrices,
and inference-speed benchmarking."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .corpus.types import NUM_TEAMS, TeamLabel


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    per_class: dict[str, ClassMetrics]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                name: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for name, m in self.per_class.items()
            },
        }


def _as_ints(values: Sequence) -> list[int]:
    return [int(v) for v in values]


def confusion_matrix(predictions: Sequence, gold: Sequence) -> np.ndarray:
    """Count table with cell (i, j) = #(gold = i, predicted = j)."""
    preds, golds = _as_ints(predictions), _as_ints(gold)
    if len(preds) != len(golds):
        raise ValueError("predictions and gold must have equal length")
    table = np.zeros((NUM_TEAMS, NUM_TEAMS), dtype=np.int64)
    for g, p in zip(golds, preds):
        if not (0 <= g < NUM_TEAMS and 0 <= p < NUM_TEAMS):
            raise ValueError(f"label out of range: gold={g} pred={p}")
        table[g, p] += 1
    return table


def compute_metrics(predictions: Sequence, gold: Sequence) -> MetricsReport:
    """Accuracy plus per-class and macro precision/recall/F1.

    Per-class values use the 0-convention when a denominator is zero. Macro
    averages are unweighted means over classes present in gold or predictions;
    classes absent from both are excluded. Micro and weighted averages are
    also reported for completeness.
    """
    preds, golds = _as_ints(predictions), _as_ints(gold)
    if not preds or len(preds) != len(golds):
        raise ValueError("predictions and gold must be non-empty and equal length")
    table = confusion_matrix(preds, golds)

    per_class: dict[str, ClassMetrics] = {}
    precisions, recalls, f1s, weights = [], [], [], []
    for team in TeamLabel:
        t = int(team)
        tp = table[t, t]
        support = int(table[t].sum())
        predicted = int(table[:, t].sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        per_class[team.name] = ClassMetrics(
            precision=precision, recall=recall, f1=f1, support=support
        )
        if support or predicted:
            precisions.append(precision)
            recalls.append(recall)
            f1s.append(f1)
            weights.append(support)

    total = len(golds)
    accuracy = float(np.trace(table)) / total
    weight_total = sum(weights)
    return MetricsReport(
        accuracy=accuracy,
        macro_precision=float(np.mean(precisions)) if precisions else 0.0,
        macro_recall=float(np.mean(recalls)) if recalls else 0.0,
        macro_f1=float(np.mean(f1s)) if f1s else 0.0,
        micro_f1=accuracy,  # single-label multi-class: micro F1 == accuracy
        weighted_f1=(
            float(np.dot(f1s, weights) / weight_total) if weight_total else 0.0
        ),
        per_class=per_class,
    )


def macro_f1(predictions: Sequence, gold: Sequence) -> float:
    return compute_metrics(predictions, gold).macro_f1


# --- length strata ---------------------------------------------------------

@dataclass(frozen=True)
class LengthStratum:
    name: str
    lower: int          # exclusive
    upper: int | None   # inclusive; None = unbounded

    def contains(self, length: int) -> bool:
        return length > self.lower and (self.upper is None or length <= self.upper)


LENGTH_STRATA = (
    LengthStratum("short", 0, 128),
    LengthStratum("medium", 128, 512),
    LengthStratum("long", 512, 4096),
    LengthStratum("extra_long", 4096, None),
)


def stratum_for(length: int) -> LengthStratum:
    for stratum in LENGTH_STRATA:
        if stratum.contains(length):
            return stratum
    raise ValueError(f"length {length} not coverable (must be positive)")


def stratified_f1(
    predictions: Sequence, gold: Sequence, lengths: Sequence[int]
) -> dict[str, dict]:
    """Macro F1 within each instance-length stratum; empty strata omitted."""
    if not (len(predictions) == len(gold) == len(lengths)):
        raise ValueError("predictions, gold, and lengths must have equal length")
    buckets: dict[str, list[int]] = {s.name: [] for s in LENGTH_STRATA}
    for idx, length in enumerate(lengths):
        if length <= 0:
            raise ValueError("instance token lengths must be positive")
        buckets[stratum_for(int(length)).name].append(idx)
    result = {}
    for stratum in LENGTH_STRATA:
        idxs = buckets[stratum.name]
        if not idxs:
            continue
        preds = [predictions[i] for i in idxs]
        golds = [gold[i] for i in idxs]
        result[stratum.name] = {
            "f1": macro_f1(preds, golds),
            "count": len(idxs),
        }
    return result


# --- inference-speed benchmark ------------------------------------------------

@dataclass
class BenchResult:
    strategy: str
    n_instances: int
    repetitions: int
    total_seconds: list[float]
    mean_seconds: float
    sd_seconds: float
    per_instance_mean: float

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "n_instances": self.n_instances,
            "repetitions": self.repetitions,
            "total_seconds": self.total_seconds,
            "mean_seconds": self.mean_seconds,
            "sd_seconds": self.sd_seconds,
            "per_instance_mean": self.per_instance_mean,
        }


def bench_inference(
    infer_fn: Callable,
    instances: Sequence,
    strategy: str = "",
    repetitions: int = 3,
    timer: Callable[[], float] = time.perf_counter,
) -> BenchResult:
    """Wall-clock the end-to-end inference path over an instance set.

    Runs one warm-up pass, then ``repetitions`` timed passes, pinned to a
    single torch thread for comparability. ``timer`` is injectable so tests
    can use a deterministic clock.
    """
    if not instances:
        raise ValueError("need at least one instance to benchmark")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        infer_fn(instances[0])  # warm-up
        totals = []
        for _ in range(repetitions):
            start = timer()
            for inst in instances:
                infer_fn(inst)
            totals.append(timer() - start)
    finally:
        torch.set_num_threads(prev_threads)
    mean = float(np.mean(totals))
    sd = float(np.std(totals, ddof=1)) if repetitions > 1 else 0.0
    return BenchResult(
        strategy=strategy,
        n_instances=len(instances),
        repetitions=repetitions,
        total_seconds=[float(t) for t in totals],
        mean_seconds=mean,
        sd_seconds=sd,
        per_instance_mean=mean / len(instances),
    )
