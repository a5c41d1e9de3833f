"""Report writers: delimited tables plus rendered figures.

Every evaluation path emits a fixed-schema TSV and a matching matplotlib
figure into the output directory, so experiment results can be both
machine-diffed and eyeballed.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvaluationReport


def _ensure_dir(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def write_report(report: EvaluationReport, out_dir: str,
                 name: str = "report") -> tuple[str, str]:
    """Write `<name>.tsv` and a rates bar chart `<name>.png`; returns paths."""
    _ensure_dir(out_dir)
    tsv_path = os.path.join(out_dir, f"{name}.tsv")
    with open(tsv_path, "w") as fh:
        fh.write(EvaluationReport.TSV_HEADER + "\n")
        fh.write(report.as_tsv() + "\n")

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    labels = ["accuracy", "false pos.", "false neg."]
    values = [report.accuracy, report.false_positive_rate,
              report.false_negative_rate]
    bars = ax.bar(labels, values, color=["#2a7", "#c55", "#c95"])
    for bar, value in zip(bars, values):
        ax.annotate(f"{100 * value:.1f}%",
                    (bar.get_x() + bar.get_width() / 2, value),
                    ha="center", va="bottom", fontsize=9)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("rate")
    ax.set_title(f"{report.regime} regime: {report.tested} edges tested, "
                 f"{report.abstained} abstained")
    fig.tight_layout()
    png_path = os.path.join(out_dir, f"{name}.png")
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return tsv_path, png_path


def write_sweep(rows: list[tuple[int, int, EvaluationReport]], out_dir: str,
                name: str = "sweep") -> tuple[str, str]:
    """Write the (p, q) accuracy grid as TSV plus accuracy-vs-q curves."""
    _ensure_dir(out_dir)
    tsv_path = os.path.join(out_dir, f"{name}.tsv")
    with open(tsv_path, "w") as fh:
        fh.write("p\tq\t" + EvaluationReport.TSV_HEADER + "\n")
        for p, q, rep in rows:
            fh.write(f"{p}\t{q}\t" + rep.as_tsv() + "\n")

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    by_p: dict[int, list[tuple[int, float]]] = {}
    for p, q, rep in rows:
        by_p.setdefault(p, []).append((q, rep.accuracy))
    for p, series in sorted(by_p.items()):
        series.sort()
        ax.plot([q for q, _ in series], [a for _, a in series],
                marker="o", label=f"p={p}")
    ax.set_xlabel("q (gate threshold)")
    ax.set_ylabel("accuracy")
    ax.set_title("prediction accuracy across (p, q)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    png_path = os.path.join(out_dir, f"{name}.png")
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return tsv_path, png_path


def write_train_log(logs, out_dir: str, name: str = "train_log") -> str:
    from .trainer import TRAIN_LOG_COLUMNS

    _ensure_dir(out_dir)
    path = os.path.join(out_dir, f"{name}.tsv")
    with open(path, "w") as fh:
        fh.write(TRAIN_LOG_COLUMNS + "\n")
        for rec in logs:
            fh.write(rec.as_tsv() + "\n")
    return path
