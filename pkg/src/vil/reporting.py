"""Dataset reports: delimited per-category stats plus rendered figures.

The report directory gets a stats.tsv with one row per category, a
long-tail histogram of real training counts, and an expected-vs-actual
budget compliance chart when a virtual split is supplied.
"""

from __future__ import annotations

import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import music
from .dataio import FrequencyTable, Manifest
from .errors import InvalidInputError

TSV_COLUMNS = (
    "c_a", "c_o", "interaction", "object",
    "real_count", "rare", "budget", "virtual_count",
)


def category_rows(real_manifest: Manifest, freq: Optional[FrequencyTable] = None,
                  virtual_manifest: Optional[Manifest] = None,
                  budgets: Optional[dict] = None) -> list:
    """One dict per category, sorted by (c_a, c_o).

    Budgets and virtual counts are filled with zeros when the
    corresponding inputs are absent, so the same rows feed every output.
    """
    if freq is None:
        freq = FrequencyTable.from_manifest(real_manifest)
    vocab = real_manifest.vocab
    virtual_counts = {}
    if virtual_manifest is not None:
        for ann in virtual_manifest.annotations:
            key = (ann.c_a, ann.c_o)
            virtual_counts[key] = virtual_counts.get(key, 0) + 1
    rows = []
    for cat in freq.categories():
        c_a, c_o = cat
        if not (0 <= c_a < vocab.n_interactions and 0 <= c_o < vocab.n_objects):
            raise InvalidInputError(f"category {cat} outside the vocabulary")
        rows.append({
            "c_a": c_a,
            "c_o": c_o,
            "interaction": vocab.interactions[c_a],
            "object": vocab.objects[c_o],
            "real_count": freq.counts[cat],
            "rare": freq.rare[cat],
            "budget": int(budgets.get(cat, 0)) if budgets else 0,
            "virtual_count": virtual_counts.get(cat, 0),
        })
    return rows


def write_stats_tsv(path, rows: list):
    """Tab-separated stats, one category per line, fixed column order."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(TSV_COLUMNS) + "\n")
        for row in rows:
            values = []
            for col in TSV_COLUMNS:
                v = row[col]
                if isinstance(v, bool):
                    v = int(v)
                values.append(str(v))
            f.write("\t".join(values) + "\n")


def render_longtail(path, rows: list, rare_cutoff: int = 10):
    """Bar chart of real counts sorted descending, rare cutoff marked."""
    ordered = sorted(rows, key=lambda r: (-r["real_count"], r["c_a"], r["c_o"]))
    counts = [r["real_count"] for r in ordered]
    labels = [f'{r["interaction"]}/{r["object"]}' for r in ordered]
    colors = ["#d62728" if r["rare"] else "#1f77b4" for r in ordered]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.4 * len(ordered)), 4.0))
    ax.bar(range(len(counts)), counts, color=colors)
    ax.axhline(rare_cutoff, color="gray", linestyle="--", linewidth=1,
               label=f"rare cutoff ({rare_cutoff})")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=75, ha="right", fontsize=7)
    ax.set_ylabel("training instances")
    ax.set_title("category frequency (descending)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_budget_compliance(path, rows: list):
    """Expected vs achieved virtual counts, grouped bars per category."""
    ordered = sorted(rows, key=lambda r: (r["c_a"], r["c_o"]))
    labels = [f'{r["interaction"]}/{r["object"]}' for r in ordered]
    expected = [r["budget"] for r in ordered]
    actual = [r["virtual_count"] for r in ordered]
    x = range(len(ordered))
    width = 0.4
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(ordered)), 4.0))
    ax.bar([i - width / 2 for i in x], expected, width, label="budget",
           color="#9edae5")
    ax.bar([i + width / 2 for i in x], actual, width, label="generated",
           color="#2ca02c")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=75, ha="right", fontsize=7)
    ax.set_ylabel("virtual images")
    ax.set_title("generation budget compliance")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_report(out_dir, real_manifest: Manifest,
                 virtual_manifest: Optional[Manifest] = None,
                 dataset_mode: Optional[str] = None,
                 budgets: Optional[dict] = None,
                 rare_cutoff: int = 10) -> dict:
    """Write the full report; returns {name: path} for every artifact."""
    os.makedirs(out_dir, exist_ok=True)
    freq = FrequencyTable.from_manifest(real_manifest, rare_below=rare_cutoff)
    if budgets is None and dataset_mode is not None:
        budgets = music.generation_budget(freq, dataset_mode)
    rows = category_rows(real_manifest, freq, virtual_manifest, budgets)
    paths = {
        "stats": os.path.join(out_dir, "stats.tsv"),
        "longtail": os.path.join(out_dir, "longtail.png"),
        "budget": os.path.join(out_dir, "budget_compliance.png"),
    }
    write_stats_tsv(paths["stats"], rows)
    render_longtail(paths["longtail"], rows, rare_cutoff=rare_cutoff)
    render_budget_compliance(paths["budget"], rows)
    return paths
