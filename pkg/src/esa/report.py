"""Report rendering: comparison tables and matplotlib figures.

Every report path writes figures next to the delimited output, so a finished
run directory carries metrics.json / metrics.csv / comparison.csv plus PNG
charts, and an attention export carries the CSV plus its bar chart.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import SUBSETS

_SUBSET_LABELS = {"dbpedia": "DBpedia", "lmdb": "LinkedMDB", "all": "ALL"}


def load_reference_tables():
    """Published benchmark results for the side-by-side comparison."""
    with resources.files("esa.data").joinpath("reference_tables.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def comparison_rows(report, reference):
    """Flat rows of published constants next to this run's numbers."""
    rows = []
    for metric in ("f_measure", "map"):
        for subset in SUBSETS:
            for k in report.ks:
                published = reference[metric][subset][str(k)]
                for system in sorted(published):
                    rows.append(
                        {"metric": metric, "subset": subset, "k": k, "system": system,
                         "value": published[system], "source": "published"}
                    )
                for system in sorted(report.results):
                    rows.append(
                        {"metric": metric, "subset": subset, "k": k, "system": system,
                         "value": report.value(system, metric, subset, k), "source": "this_run"}
                    )
    return rows


def write_comparison_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "subset", "k", "system", "value", "source"])
        for r in rows:
            value = "" if r["value"] is None else f"{r['value']:.17g}"
            writer.writerow([r["metric"], r["subset"], r["k"], r["system"], value, r["source"]])


def metrics_figure(report, reference, metric, path):
    """Grouped bars per subset and k: published systems plus this run."""
    published_systems = sorted(reference[metric]["all"]["5"])
    run_systems = sorted(report.results)
    ks = report.ks
    labels = [f"{_SUBSET_LABELS[s]} k={k}" for s in SUBSETS for k in ks]

    series = []
    for system in published_systems:
        series.append((f"{system} (published)", [reference[metric][s][str(k)].get(system) for s in SUBSETS for k in ks]))
    for system in run_systems:
        series.append((f"{system} (this run)", [report.value(system, metric, s, k) for s in SUBSETS for k in ks]))

    x = np.arange(len(labels), dtype=float)
    width = 0.9 / len(series)
    fig, ax = plt.subplots(figsize=(11, 4.5))
    for i, (name, values) in enumerate(series):
        vals = [v if v is not None else 0.0 for v in values]
        ax.bar(x + (i - len(series) / 2) * width, vals, width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(metric.replace("_", "-"))
    ax.set_ylim(0, 1)
    ax.legend(fontsize=6, ncol=2)
    ax.set_title(f"{metric.replace('_', '-')} by subset and summary size")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def attention_figure(entity_id, gold_alpha, machine_alpha, path):
    """Side-by-side bars of the gold and machine attention vectors."""
    n = len(gold_alpha)
    x = np.arange(n, dtype=float)
    fig, ax = plt.subplots(figsize=(max(6, n * 0.35), 3.8))
    ax.bar(x - 0.2, gold_alpha, 0.4, label="gold")
    ax.bar(x + 0.2, machine_alpha, 0.4, label="machine")
    ax.set_xlabel("triple index")
    ax.set_ylabel("attention weight")
    ax.set_title(f"entity {entity_id}")
    ax.set_xticks(x)
    ax.set_xticklabels([str(i) for i in range(n)], fontsize=7)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_metrics_outputs(report, out_dir, reference=None):
    """metrics.json + metrics.csv + comparison.csv + one figure per metric."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "metrics.json")
    report.write_csv(out / "metrics.csv")
    if reference is None:
        reference = load_reference_tables()
    write_comparison_csv(out / "comparison.csv", comparison_rows(report, reference))
    for metric in ("f_measure", "map"):
        metrics_figure(report, reference, metric, out / f"{metric}.png")
    return out / "metrics.json"
