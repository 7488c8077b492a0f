"""Benchmark report rendering: text table, CSV, and figure files."""

from __future__ import annotations

import csv
from pathlib import Path

from .classify import Dimension
from .metrics import BenchmarkReport


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


_CLOSED_COLS = [
    ("n", "N"), ("n_mcq", "MCQ-N"), ("mcq_accuracy", "MCQ-Acc"),
    ("n_tf", "TF-N"), ("tf.accuracy", "TF-Acc"), ("tf.precision", "TF-P"),
    ("tf.recall", "TF-R"), ("tf.f1", "TF-F1"), ("unparseable", "Unparsed"),
]

_OPEN_COLS = [
    ("n", "N"), ("relevancy", "Relevancy"), ("faithfulness", "Faithfulness"),
    ("entity_recall", "EntityRecall"), ("correctness", "Correctness"),
]


def _cell(row: dict, key: str):
    cur = row
    for part in key.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def _rows(report: BenchmarkReport) -> list[tuple[str, dict]]:
    ordered = [(d.label, report.per_dimension[d.label])
               for d in Dimension if d.label in report.per_dimension]
    ordered.append(("All", report.overall))
    return ordered


def render_text_table(report: BenchmarkReport) -> str:
    cols = _CLOSED_COLS if report.mode == "closed" else _OPEN_COLS
    header = ["Dimension"] + [h for _, h in cols]
    body = [[name] + [_fmt(_cell(row, key)) for key, _ in cols]
            for name, row in _rows(report)]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    sep = "-+-".join("-" * w for w in widths)
    lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths)), sep]
    lines += [" | ".join(c.ljust(w) for c, w in zip(line, widths)) for line in body]
    return "\n".join(lines) + "\n"


def write_csv(report: BenchmarkReport, path: str | Path) -> None:
    cols = _CLOSED_COLS if report.mode == "closed" else _OPEN_COLS
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension"] + [key for key, _ in cols])
        for name, row in _rows(report):
            writer.writerow([name] + ["" if _cell(row, key) is None else _cell(row, key)
                                      for key, _ in cols])


def render_figures(report: BenchmarkReport, out_dir: str | Path) -> list[Path]:
    """One PNG per metric group, rendered headlessly."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [(name, row) for name, row in _rows(report) if name != "All"]
    names = [name for name, _ in rows]
    paths = []

    if report.mode == "closed":
        series = [("mcq_accuracy", "MCQ accuracy"), ("tf.accuracy", "TF accuracy")]
    else:
        series = [("relevancy", "Answer relevancy"), ("faithfulness", "Faithfulness"),
                  ("entity_recall", "Entity recall"), ("correctness", "Correctness")]

    fig, ax = plt.subplots(figsize=(9, 4.5), dpi=120)
    width = 0.8 / len(series)
    for si, (key, label) in enumerate(series):
        xs = [i + si * width for i in range(len(rows))]
        ys = [_cell(row, key) or 0.0 for _, row in rows]
        ax.bar(xs, ys, width=width, label=label)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(rows))])
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"{report.mode} benchmark by dimension")
    ax.legend()
    fig.tight_layout()
    path = out_dir / f"report_{report.mode}.png"
    fig.savefig(path)
    plt.close(fig)
    paths.append(path)
    return paths
