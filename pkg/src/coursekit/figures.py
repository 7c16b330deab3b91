"""Render analytics and report statistics to figure files.

The computation modules stay pure and emit JSON; this module turns those
JSON-ready structures into matplotlib figures next to the delimited output
when the CLI is asked for them.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIG_SIZE = (6.0, 4.0)
DPI = 150

plt.rcParams.update(
    {
        "figure.figsize": FIG_SIZE,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "font.size": 10,
    }
)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def fragment_length_figure(points: Sequence[Sequence[float]], path: Path) -> Path:
    fig, ax = plt.subplots()
    if points:
        ranks, lengths = zip(*points)
        ax.plot(ranks, lengths, marker="o")
    ax.set_xlabel("fragment rank within summary")
    ax.set_ylabel("mean fragment length (tokens)")
    ax.set_title("Extractive fragment length by rank")
    return _save(fig, path)


def ordering_curves_figure(curves: Mapping[str, Sequence[Sequence[float]]], path: Path) -> Path:
    fig, ax = plt.subplots()
    for strategy, points in curves.items():
        deciles = [d for d, _ in points]
        values = [v for _, v in points]
        ax.plot(deciles, values, marker=".", label=strategy.lower())
    ax.set_xlabel("note decile read")
    ax.set_ylabel("fraction of reference ESGs covered")
    ax.set_ylim(0, 1.05)
    ax.set_title("Note-ordering coverage")
    ax.legend()
    return _save(fig, path)


def lead_bias_figure(histogram: Sequence[float], path: Path) -> Path:
    fig, ax = plt.subplots()
    bins = np.arange(1, len(histogram) + 1)
    ax.bar(bins, histogram, width=0.8)
    ax.set_xlabel("position decile within note")
    ax.set_ylabel("share of reference-covered mentions")
    ax.set_title("Lead bias")
    return _save(fig, path)


def frequency_salience_figure(points: Sequence[Sequence[float]], path: Path) -> Path:
    fig, ax = plt.subplots()
    if points:
        counts, probabilities = zip(*points)
        ax.plot(counts, probabilities, marker="o")
    ax.set_xlabel("source mentions per ESG")
    ax.set_ylabel("P(salient)")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title("Mention frequency vs salience")
    return _save(fig, path)


def error_rate_figure(points: Sequence[Sequence[float]], path: Path) -> Path:
    fig, ax = plt.subplots()
    if points:
        positions, rates = zip(*points)
        ax.plot(positions, rates, marker="o")
    ax.set_xlabel("sentence position")
    ax.set_ylabel("mean SE error fraction")
    ax.set_title("Error rate by summary position")
    return _save(fig, path)


def transition_matrix_figure(matrix: Sequence[Sequence[float]], labels: Sequence[str], path: Path) -> Path:
    data = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    image = ax.imshow(data, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            ax.text(j, i, f"{data[i, j]:.2f}", ha="center", va="center", fontsize=9)
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title("Semantic-type transitions")
    ax.grid(False)
    return _save(fig, path)


def oracle_report_figure(report: Mapping[str, Mapping[str, Mapping[str, float]]], path: Path) -> Path:
    strategies = sorted(report)
    r1 = [report[s]["rouge1"]["f1"] for s in strategies]
    r2 = [report[s]["rouge2"]["f1"] for s in strategies]
    x = np.arange(len(strategies))
    fig, ax = plt.subplots()
    ax.bar(x - 0.2, r1, width=0.4, label="ROUGE-1 F1")
    ax.bar(x + 0.2, r2, width=0.4, label="ROUGE-2 F1")
    ax.set_xticks(x, strategies, rotation=30, ha="right")
    ax.set_ylabel("F1")
    ax.set_title("Extractive strategies")
    ax.legend()
    return _save(fig, path)


def render_analytics_figures(analytics: Mapping, directory: str | Path) -> list[Path]:
    """Render every available statistic from an analytics report dict."""
    directory = Path(directory)
    written = []
    if analytics.get("fragment_length_by_rank"):
        written.append(
            fragment_length_figure(
                analytics["fragment_length_by_rank"], directory / "fragment_length_by_rank.png"
            )
        )
    if analytics.get("mean_ordering_curves"):
        written.append(
            ordering_curves_figure(
                analytics["mean_ordering_curves"], directory / "ordering_curves.png"
            )
        )
    if analytics.get("lead_bias_histogram"):
        written.append(
            lead_bias_figure(analytics["lead_bias_histogram"], directory / "lead_bias.png")
        )
    if analytics.get("frequency_salience_curve"):
        written.append(
            frequency_salience_figure(
                analytics["frequency_salience_curve"], directory / "frequency_salience.png"
            )
        )
    if analytics.get("transition_matrix"):
        written.append(
            transition_matrix_figure(
                analytics["transition_matrix"],
                analytics.get("transition_labels", ("PROBLEM", "TREATMENT", "TEST")),
                directory / "transition_matrix.png",
            )
        )
    if analytics.get("error_rate_by_position"):
        written.append(
            error_rate_figure(
                analytics["error_rate_by_position"], directory / "error_rate_by_position.png"
            )
        )
    return written
