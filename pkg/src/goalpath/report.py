"""Figure rendering for evaluation reports.

Writes PNG files next to the CSV/JSON output: the process-outcome
distribution of generated vs ground-truth sequences and a histogram of
per-episode edit distances.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless: render straight to files

import matplotlib.pyplot as plt

from .evaluation import EpisodeRow, EvalReport
from .event_log import EventLog


def outcome_figure(
    report: EvalReport, test_log: EventLog | None, path: str | Path
) -> None:
    """Bar chart of outcome frequencies; ground-truth bars added when a
    test log is supplied."""
    gen = report.outcome_distribution
    gt: dict[str, float] = {}
    if test_log is not None and len(test_log):
        for t in test_log.traces:
            label = test_log.vocab.label_of(t.activities[-1])
            gt[label] = gt.get(label, 0) + 1
        gt = {k: v / len(test_log) for k, v in gt.items()}
    labels = sorted(set(gen) | set(gt))
    xs = range(len(labels))
    width = 0.38 if gt else 0.7

    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(labels) + 2), 3.4))
    ax.bar(
        [x - (width / 2 if gt else 0) for x in xs],
        [gen.get(l, 0.0) for l in labels],
        width,
        label="recommended",
        color="#2c7fb8",
    )
    if gt:
        ax.bar(
            [x + width / 2 for x in xs],
            [gt.get(l, 0.0) for l in labels],
            width,
            label="ground truth",
            color="#c2a5cf",
        )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("fraction of cases")
    ax.set_title("Process outcome distribution")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def dl_histogram_figure(rows: list[EpisodeRow], path: str | Path) -> None:
    values = [r.dl for r in rows]
    hi = max(values) if values else 0
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.hist(values, bins=range(0, hi + 2), color="#41ab5d", edgecolor="white")
    ax.set_xlabel("Damerau-Levenshtein distance to ground truth")
    ax.set_ylabel("episodes")
    ax.set_title("Edit-distance distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(
    report: EvalReport,
    rows: list[EpisodeRow],
    test_log: EventLog | None,
    outdir: str | Path,
) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "outcome_distribution.png", outdir / "dl_histogram.png"]
    outcome_figure(report, test_log, paths[0])
    dl_histogram_figure(rows, paths[1])
    return paths
