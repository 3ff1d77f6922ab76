"""Report rendering: aligned text tables, CSV, and matplotlib figures.

Every CLI report path writes machine-readable output (JSON/CSV) and, next to
it, rendered figures so runs can be inspected without replotting.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .corpus.types import TeamLabel
from .evalmetrics import BenchResult, LENGTH_STRATA, MetricsReport

TEAM_COLORS = {
    "ED": "#c44e52",
    "ID": "#8172b2",
    "OA": "#55a868",
    "EIP": "#4c72b0",
    "PN": "#ccb974",
}


# --- text tables ---------------------------------------------------------------

def metrics_table(reports: dict[str, MetricsReport]) -> str:
    """Aligned classification-metrics table, one row per strategy."""
    header = f"{'Approach':<16}{'Accuracy':>10}{'F1':>8}{'Precision':>11}{'Recall':>8}"
    lines = [header, "-" * len(header)]
    for name, rep in reports.items():
        lines.append(
            f"{name:<16}{rep.accuracy:>10.3f}{rep.macro_f1:>8.3f}"
            f"{rep.macro_precision:>11.3f}{rep.macro_recall:>8.3f}"
        )
    return "\n".join(lines)


def stratified_table(strata: dict[str, dict[str, dict]]) -> str:
    """Stratified-F1 table: rows are strategies, columns are length strata."""
    names = [s.name for s in LENGTH_STRATA]
    header = f"{'Approach':<16}" + "".join(f"{n:>12}" for n in names)
    lines = [header, "-" * len(header)]
    for strategy, buckets in strata.items():
        cells = []
        for n in names:
            cells.append(f"{buckets[n]['f1']:>12.3f}" if n in buckets else f"{'-':>12}")
        lines.append(f"{strategy:<16}" + "".join(cells))
    return "\n".join(lines)


def bench_table(results: list[BenchResult]) -> str:
    header = (
        f"{'Approach':<16}{'Instances':>10}{'Mean s':>10}{'SD':>9}{'s/inst':>10}"
    )
    lines = [header, "-" * len(header)]
    for r in results:
        lines.append(
            f"{r.strategy:<16}{r.n_instances:>10}{r.mean_seconds:>10.3f}"
            f"{r.sd_seconds:>9.3f}{r.per_instance_mean:>10.4f}"
        )
    return "\n".join(lines)


# --- CSV -------------------------------------------------------------------------

def write_stratified_csv(strata: dict[str, dict[str, dict]], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "stratum", "f1", "count"])
        for strategy, buckets in strata.items():
            for stratum in LENGTH_STRATA:
                if stratum.name in buckets:
                    b = buckets[stratum.name]
                    writer.writerow([strategy, stratum.name, f"{b['f1']:.6f}", b["count"]])


def write_bench_csv(results: list[BenchResult], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "n_instances", "repetitions", "mean_seconds", "sd_seconds",
             "per_instance_mean"]
        )
        for r in results:
            writer.writerow(
                [r.strategy, r.n_instances, r.repetitions, f"{r.mean_seconds:.6f}",
                 f"{r.sd_seconds:.6f}", f"{r.per_instance_mean:.6f}"]
            )


# --- figures ---------------------------------------------------------------------

def fig_stratified_f1(strata: dict[str, dict[str, dict]], path: str | Path) -> None:
    """Grouped bars of macro F1 per length stratum, one group per stratum."""
    names = [s.name for s in LENGTH_STRATA]
    strategies = list(strata)
    x = np.arange(len(names))
    width = 0.8 / max(1, len(strategies))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for k, strategy in enumerate(strategies):
        ys = [strata[strategy].get(n, {}).get("f1", np.nan) for n in names]
        ax.bar(x + k * width, ys, width, label=strategy)
    ax.set_xticks(x + width * (len(strategies) - 1) / 2)
    ax.set_xticklabels(names)
    ax.set_ylabel("macro F1")
    ax.set_xlabel("instance token-length stratum")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def fig_confusion(matrix: np.ndarray, path: str | Path, title: str = "") -> None:
    names = [t.name for t in TeamLabel]
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(names)), names)
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    if title:
        ax.set_title(title)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            ax.text(j, i, str(int(matrix[i, j])), ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)


def fig_bench(results: list[BenchResult], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r.strategy for r in results]
    means = [r.per_instance_mean for r in results]
    errs = [r.sd_seconds / max(1, r.n_instances) for r in results]
    ax.bar(names, means, yerr=errs, capsize=4, color="#4c72b0")
    ax.set_ylabel("seconds per instance")
    ax.set_title("inference speed (mean over repetitions)")
    fig.tight_layout()
    _save(fig, path)


def fig_projection(
    points: list[dict],
    path: str | Path,
    query_xy: tuple[float, float] | None = None,
    title: str = "",
) -> None:
    """Scatter of the embedding map, colored by team; the query instance is
    drawn as a red cross."""
    fig, ax = plt.subplots(figsize=(6, 5))
    by_team: dict[str, list[tuple[float, float]]] = {}
    for p in points:
        by_team.setdefault(p["label"] or "unlabelled", []).append((p["x"], p["y"]))
    for team, xy in sorted(by_team.items()):
        arr = np.array(xy)
        ax.scatter(
            arr[:, 0], arr[:, 1], s=10, alpha=0.7,
            color=TEAM_COLORS.get(team, "#999999"), label=team,
        )
    if query_xy is not None:
        ax.scatter([query_xy[0]], [query_xy[1]], marker="x", s=120, color="red",
                   linewidths=2.5, label="query", zorder=5)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, markerscale=1.5)
    fig.tight_layout()
    _save(fig, path)


def fig_training_history(history: list, path: str | Path) -> None:
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = [h.epoch for h in history]
    ax1.plot(epochs, [h.mean_loss for h in history], "o-", color="#4c72b0", label="loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean loss", color="#4c72b0")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [h.eval_f1 for h in history], "s-", color="#55a868", label="eval F1")
    ax2.set_ylabel("eval macro F1", color="#55a868")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    _save(fig, path)


def _save(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
