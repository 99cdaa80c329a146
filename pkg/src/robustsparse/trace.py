"""Per-iteration trace records emitted by the filtering estimators.

A trace sink is any callable accepting IterationTrace; the harness installs a
collector that, given the ground-truth mask, counts how many removed rows were
genuine outliers.  Records render to one structured text line each.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class IterationTrace:
    """What one filtering iteration did.

    removed_rows holds indices into the original sample matrix handed to the
    estimator, so mask-based accounting stays valid across shrinking subsets.
    """

    algorithm: str
    iteration: int
    branch: str  # "certificate" | "linear" | "quadratic" | "tail" | "matrix" | "fallback"
    n_before: int
    n_after: int
    removed_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    lam: float | None = None
    frobenius: float | None = None
    threshold: float | None = None
    extra: dict = field(default_factory=dict)

    def to_line(self) -> str:
        fields = {
            "alg": self.algorithm,
            "iter": self.iteration,
            "branch": self.branch,
            "n_before": self.n_before,
            "n_after": self.n_after,
            "removed": self.n_before - self.n_after,
            "lambda": _fmt(self.lam),
            "frobenius": _fmt(self.frobenius),
            "T": _fmt(self.threshold),
        }
        fields.update({k: _fmt(v) for k, v in self.extra.items()})
        return " ".join(f"{k}={v}" for k, v in fields.items())


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class TraceCollector:
    """Accumulates records; with a mask, tallies removals by ground-truth class."""

    def __init__(self, inlier_mask: np.ndarray | None = None):
        self.records: list[IterationTrace] = []
        self.inlier_mask = None if inlier_mask is None else np.asarray(inlier_mask, dtype=bool)

    def __call__(self, record: IterationTrace) -> None:
        if self.inlier_mask is not None and record.removed_rows.size:
            removed_mask = self.inlier_mask[record.removed_rows]
            record.extra.setdefault("removed_inliers", int(removed_mask.sum()))
            record.extra.setdefault("removed_outliers", int((~removed_mask).sum()))
        self.records.append(record)

    def filter_records(self) -> list[IterationTrace]:
        """Records of iterations that actually cut points."""
        return [r for r in self.records if r.n_after < r.n_before]

    def lines(self) -> list[str]:
        return [r.to_line() for r in self.records]
