"""Ground truth, privacy scores, retrieval timing, and load accounting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .adversary import Prediction
from .core import Cid, PeerId


@dataclass(frozen=True)
class GroundTruth:
    """One interest per honest requester, fixed before the request phase."""

    interests: dict[PeerId, Cid]


def precision_recall(prediction: Prediction, truth: GroundTruth):
    """Fraction of correct links over predicted links (precision, None when
    nothing was predicted) and over the requester population (recall)."""
    population = set(truth.interests)
    stray = (set(prediction.links) | prediction.abstained) - population
    if stray:
        raise ValueError(f"prediction references non-requesters: {sorted(stray)}")
    missing = population - set(prediction.links) - prediction.abstained
    if missing:
        raise ValueError(f"prediction does not cover: {sorted(missing)}")
    correct = sum(1 for peer, cid in prediction.links.items()
                  if truth.interests[peer] == cid)
    precision = correct / len(prediction.links) if prediction.links else None
    recall = correct / len(population) if population else 0.0
    return precision, recall


@dataclass
class RunMetrics:
    n_requesters: int
    precision: float | None = None
    recall: float | None = None
    ttfb_ms: dict[PeerId, float] = field(default_factory=dict)
    unresolved: set[PeerId] = field(default_factory=set)
    walk_lengths: list[int] = field(default_factory=list)
    msg_counts: dict[str, int] = field(default_factory=dict)
    bytes_by_variant: dict[str, int] = field(default_factory=dict)
    bytes_total: int = 0

    @property
    def resolved_fraction(self) -> float:
        if not self.n_requesters:
            return 1.0
        return len(self.ttfb_ms) / self.n_requesters

    @property
    def msgs_total(self) -> int:
        return sum(self.msg_counts.values())

    def ttfb_stats(self):
        """(mean, median, p95) over resolved requests, or Nones."""
        if not self.ttfb_ms:
            return None, None, None
        values = np.fromiter(self.ttfb_ms.values(), dtype=float)
        return (float(values.mean()), float(np.median(values)),
                float(np.percentile(values, 95)))

    @property
    def mean_walk_hops(self) -> float | None:
        if not self.walk_lengths:
            return None
        return sum(self.walk_lengths) / len(self.walk_lengths)


def _stats(values) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return {"n": 0}
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(np.median(arr)),
        "std": float(arr.std(ddof=0)),
        "p5": float(np.percentile(arr, 5)),
        "p95": float(np.percentile(arr, 95)),
    }


def aggregate(runs: list[RunMetrics]) -> dict:
    """Cross-run summary: per-run precision/recall distributions, pooled
    per-request retrieval times, resolved fraction, and the pooled
    walk-length histogram."""
    if not runs:
        raise ValueError("need at least one run")
    pooled_ttfb = [v for r in runs for v in r.ttfb_ms.values()]
    histogram = Counter()
    for r in runs:
        histogram.update(r.walk_lengths)
    return {
        "runs": len(runs),
        "precision": _stats([r.precision for r in runs]),
        "recall": _stats([r.recall for r in runs]),
        "ttfb_ms": _stats(pooled_ttfb),
        "resolved_fraction": _stats([r.resolved_fraction for r in runs]),
        "mean_walk_hops": _stats([r.mean_walk_hops for r in runs]),
        "walk_length_histogram": {str(k): histogram[k] for k in sorted(histogram)},
        "msgs_total": sum(r.msgs_total for r in runs),
        "bytes_total": sum(r.bytes_total for r in runs),
    }
