"""Gold attention vectors from per-user gold summaries.

Each user's selected triples bump a per-triple counter; normalizing the
counter vector gives the supervision target the ranker trains against.
With five users the counts total 25 in top-5 mode, 50 in top-10 mode and 75
in the combined mode (which also lets a single triple reach counts above 5).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

MODES = (5, 10, "both")

_MODE_LIMITS = {5: (5, 25), 10: (5, 50), "both": (10, 75)}


class ZeroTotalCount(ValueError):
    """All counts zero: the benchmark data cannot be normalized."""


@dataclass(frozen=True)
class GoldAttention:
    entity_id: str
    k: object  # 5, 10 or "both"
    counts: np.ndarray
    alpha_bar: np.ndarray

    @staticmethod
    def from_counts(entity_id, k, counts):
        """Normalize a raw count vector (counts_i / sum(counts))."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a non-empty vector")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        total = int(counts.sum())
        if total == 0:
            raise ZeroTotalCount(f"entity {entity_id}: all selection counts are zero")
        alpha = counts / float(total)
        alpha.setflags(write=False)
        counts.setflags(write=False)
        return GoldAttention(entity_id=str(entity_id), k=k, counts=counts, alpha_bar=alpha)


def build_gold_attention(description, ground_truth, k):
    """Count each user's selections over the entity's triples and normalize.

    `k` selects which gold lists contribute: 5, 10, or "both" (summing the
    top-5 and top-10 counts). Validates the five-annotator structure: per-mode
    count caps and totals of 25 / 50 / 75.
    """
    if k not in MODES:
        raise ValueError(f"k must be one of {MODES}, got {k!r}")
    n = len(description.triples)
    counts = np.zeros(n, dtype=np.int64)
    if k in (5, "both"):
        _accumulate(counts, ground_truth.per_user_top5, n, description.entity_id)
    if k in (10, "both"):
        _accumulate(counts, ground_truth.per_user_top10, n, description.entity_id)

    cap, total = _MODE_LIMITS[k]
    if counts.max(initial=0) > cap:
        raise ValueError(f"entity {description.entity_id}: a triple was counted more than {cap} times")
    if int(counts.sum()) != total:
        raise ValueError(
            f"entity {description.entity_id}: counts total {int(counts.sum())}, expected {total} for k={k}"
        )
    return GoldAttention.from_counts(description.entity_id, k, counts)


def _accumulate(counts, user_sets, n, entity_id):
    for selected in user_sets:
        for idx in selected:
            if not (0 <= idx < n):
                raise IndexError(f"entity {entity_id}: gold index {idx} out of range (n={n})")
            counts[idx] += 1


def write_gold_csv(path, rows):
    """Dump gold vectors as (entity_id, triple_index, count, alpha_bar) rows.

    `rows` is an iterable of GoldAttention.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity_id", "triple_index", "count", "alpha_bar"])
        for gold in rows:
            for i, (c, a) in enumerate(zip(gold.counts, gold.alpha_bar)):
                writer.writerow([gold.entity_id, i, int(c), f"{a:.17g}"])
