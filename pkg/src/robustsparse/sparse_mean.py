"""Robust sparse mean estimation by iterative spectral filtering.

One iteration: form the sample moments, pick the entry set U where the
deviation of the covariance from identity concentrates, and either

* certify -- the restricted deviation has small Frobenius norm, so the
  hard-thresholded sample mean is already accurate; or
* linear filter -- the restricted deviation has a large top eigenvalue, so
  projections onto its eigenvector expose outliers beyond a data-driven tail
  threshold; or
* quadratic filter -- remaining structure is spread across U, so a centered
  quadratic statistic separates the outliers instead.

The outer loop repeats on the retained subset until the certificate fires.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NoThresholdError
from .trace import IterationTrace

__all__ = [
    "RsmConfig",
    "FilterOutcome",
    "rsm_iteration",
    "rsm_estimate",
    "quad_poly",
    "find_linear_threshold",
    "find_quadratic_threshold",
    "guarded_log_inv",
]


def guarded_log_inv(eps: float) -> float:
    """log(1/eps) floored at 1 so thresholds stay sane for eps >= 1/e (or 0)."""
    if eps <= 0:
        return 1.0
    return max(math.log(1.0 / eps), 1.0)


@dataclass(frozen=True)
class RsmConfig:
    """Sparsity, corruption level, and the constants the analysis leaves free.

    c_frob scales the certificate threshold c_frob * eps * log(1/eps);
    c_eig scales the eigenvalue test c_eig * eps * sqrt(log(1/eps)).
    max_iterations of None means 2N, the proved iteration bound.
    """

    k: int
    eps: float
    tau: float = 0.1
    c_frob: float = 4.0
    c_eig: float = 4.0
    max_iterations: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 1/2)")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.c_frob <= 0 or self.c_eig <= 0:
            raise ValueError("threshold multipliers must be positive")


@dataclass(frozen=True)
class FilterOutcome:
    """Either a final k-sparse estimate or a strictly smaller retained subset.

    retained holds positions into the matrix passed to rsm_iteration.
    Diagnostics carry the certificate norm, eigenvalue, chosen threshold, and
    which branch ran.
    """

    branch: str  # "certificate" | "linear" | "quadratic"
    estimate: np.ndarray | None = None
    retained: np.ndarray | None = None
    frobenius: float = 0.0
    lam: float | None = None
    threshold: float | None = None
    mean_quad_stat: float | None = None
    entry_set: linalg.EntrySet | None = None

    @property
    def is_estimate(self) -> bool:
        return self.estimate is not None


def quad_poly(x: np.ndarray, mu_tilde: np.ndarray, B: np.ndarray) -> float | np.ndarray:
    """The normalized quadratic filter statistic
    ((x - mu)^T B (x - mu) - tr B) / ||B||_F for a symmetric restricted B.

    Accepts a single vector or an N x d matrix of rows.  Only the coordinates
    B touches enter the computation.
    """
    B = np.asarray(B, dtype=float)
    fro = float(np.linalg.norm(B))
    if fro == 0.0:
        raise ValueError("restricted matrix is zero; statistic undefined")
    rows = np.flatnonzero(np.any(B != 0, axis=1))
    Bsub = B[np.ix_(rows, rows)]
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xc = (np.atleast_2d(x) - np.asarray(mu_tilde, dtype=float))[:, rows]
    vals = (np.einsum("ni,ij,nj->n", xc, Bsub, xc) - np.trace(Bsub)) / fro
    return float(vals[0]) if single else vals


def _linear_rhs(t: np.ndarray, eps: float, k: int, n: int, d: int, tau: float) -> np.ndarray:
    """Tail budget for the linear filter: 9 erfc(T/sqrt 2) + 3 eps^2/(T^2 L)."""
    inner = max(k * math.log(max(n * d / tau, math.e)), math.e)
    log_term = max(math.log(inner), 1.0)
    t = np.asarray(t, dtype=float)
    return 9.0 * linalg.erfc(t / math.sqrt(2.0)) + 3.0 * eps**2 / (t**2 * log_term)


def _quadratic_rhs(t: np.ndarray, eps: float) -> np.ndarray:
    """Tail budget for the quadratic filter: 9 exp(-T/4) + 3 eps^2/(T ln^2 T)."""
    t = np.asarray(t, dtype=float)
    return 9.0 * np.exp(-t / 4.0) + 3.0 * eps**2 / (t * np.log(t) ** 2)


def find_linear_threshold(
    scores: np.ndarray,
    delta_l: float,
    eps: float,
    k: int,
    n: int,
    d: int,
    tau: float,
) -> float | None:
    """Smallest T > 0 on the candidate grid whose empirical exceedance at
    T + delta_l meets the tail budget, or None.

    Candidates sit just below each distinct score (exceedance fractions only
    change there), so retaining scores <= T + delta_l always removes the
    boundary points and strictly shrinks the set.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return None
    values = np.unique(scores)  # ascending, distinct
    frac = _exceedance_fractions(scores, values)
    cand = np.nextafter(values, -np.inf) - delta_l
    ok = cand > 0
    if not ok.any():
        return None
    rhs = _linear_rhs(cand[ok], eps, k, n, d, tau)
    good = frac[ok] >= rhs
    if not good.any():
        return None
    return float(cand[ok][np.argmax(good)])


def _exceedance_fractions(scores: np.ndarray, values: np.ndarray) -> np.ndarray:
    """fractions[i] = fraction of scores >= values[i]."""
    sorted_scores = np.sort(scores)
    exceed = scores.size - np.searchsorted(sorted_scores, values, side="left")
    return exceed / scores.size


def find_quadratic_threshold(scores: np.ndarray, eps: float) -> float | None:
    """Smallest T > 6 on the candidate grid with exceedance meeting the
    quadratic tail budget, or None.  Same grid convention as the linear search.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return None
    values = np.unique(scores)
    frac = _exceedance_fractions(scores, values)
    cand = np.nextafter(values, -np.inf)
    ok = cand > 6.0
    if not ok.any():
        return None
    rhs = _quadratic_rhs(cand[ok], eps)
    good = frac[ok] >= rhs
    if not good.any():
        return None
    return float(cand[ok][np.argmax(good)])


def rsm_iteration(S: np.ndarray, cfg: RsmConfig, allow_quadratic: bool = True) -> FilterOutcome:
    """One certificate / linear-filter / quadratic-filter pass over S.

    With allow_quadratic=False the quadratic branch is disabled: when the
    eigenvalue test fails the truncated sample mean is returned instead
    (the linear-only estimator used as a baseline).
    """
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if d < cfg.k:
        raise ValueError("dimension smaller than sparsity")

    mu, cov = linalg.empirical_moments(S)
    dev = cov - np.eye(d)
    U = linalg.top_entry_set(dev, cfg.k)
    restricted = linalg.restrict(dev, U)
    fro = float(np.linalg.norm(restricted))

    log_inv = guarded_log_inv(cfg.eps)
    if fro <= cfg.c_frob * cfg.eps * log_inv:
        return FilterOutcome(
            branch="certificate",
            estimate=linalg.hard_threshold(mu, cfg.k),
            frobenius=fro,
            entry_set=U,
        )

    rows = U.row_indices()
    lam, v_sub = linalg.top_eigenpair(linalg.restrict_principal(dev, rows))
    v_star = np.zeros(d)
    v_star[rows] = v_sub

    if lam >= cfg.c_eig * cfg.eps * math.sqrt(log_inv):
        delta_l = 3.0 * math.sqrt(max(cfg.eps * lam, 0.0))
        scores = np.abs((S - mu) @ v_star)
        T = find_linear_threshold(scores, delta_l, cfg.eps, cfg.k, n, d, cfg.tau)
        if T is None:
            raise NoThresholdError(
                "linear filter fired but no valid threshold exists",
                diagnostics={"lambda": lam, "frobenius": fro, "delta_l": delta_l, "n": n},
            )
        retained = np.flatnonzero(scores <= T + delta_l)
        return FilterOutcome(
            branch="linear", retained=retained, frobenius=fro, lam=lam, threshold=T, entry_set=U
        )

    if not allow_quadratic:
        return FilterOutcome(
            branch="certificate",
            estimate=linalg.hard_threshold(mu, cfg.k),
            frobenius=fro,
            lam=lam,
            entry_set=U,
        )

    pvals = quad_poly(S, mu, restricted)
    scores = np.abs(pvals)
    T = find_quadratic_threshold(scores, cfg.eps)
    if T is None:
        raise NoThresholdError(
            "quadratic filter reached but no valid threshold exists",
            diagnostics={"lambda": lam, "frobenius": fro, "n": n},
        )
    retained = np.flatnonzero(scores <= T)
    return FilterOutcome(
        branch="quadratic",
        retained=retained,
        frobenius=fro,
        lam=lam,
        threshold=T,
        mean_quad_stat=float(np.mean(pvals)),
        entry_set=U,
    )


def rsm_estimate(
    S: np.ndarray,
    cfg: RsmConfig,
    allow_quadratic: bool = True,
    trace=None,
    algorithm_name: str = "rme_sp",
) -> np.ndarray:
    """Run the filter to convergence and return the k-sparse mean estimate.

    Each filtering round strictly shrinks the sample set.  If the iteration
    cap (default 2N) is hit, or a fired filter cannot place a threshold --
    which on adequately sized clean-ish data means there is nothing left to
    cut -- the current truncated sample mean is returned with a warning
    rather than raising, so harness runs always produce an estimate.
    """
    S = np.asarray(S, dtype=float)
    n0 = S.shape[0]
    cap = cfg.max_iterations if cfg.max_iterations is not None else 2 * n0
    live = np.arange(n0)

    for it in range(cap):
        try:
            out = rsm_iteration(S[live], cfg, allow_quadratic=allow_quadratic)
        except NoThresholdError as err:
            estimate = linalg.hard_threshold(S[live].mean(axis=0), cfg.k)
            warnings.warn(f"filter fired with no admissible threshold; returning current mean ({err})")
            _emit(trace, algorithm_name, it, "fallback", live, live, diag=err.diagnostics)
            return estimate
        if out.is_estimate:
            _emit(trace, algorithm_name, it, out.branch, live, live, outcome=out)
            return out.estimate
        kept = live[out.retained]
        if kept.size >= live.size:
            raise AssertionError("filter returned without shrinking the sample set")
        _emit(trace, algorithm_name, it, out.branch, live, kept, outcome=out)
        live = kept
        if live.size < 2:
            break

    warnings.warn("iteration cap reached; returning truncated mean of current subset")
    return linalg.hard_threshold(S[live].mean(axis=0), cfg.k)


def _emit(trace, name, iteration, branch, before, after, outcome: FilterOutcome | None = None, diag=None):
    if trace is None:
        return
    removed = np.setdiff1d(before, after, assume_unique=True)
    extra = {}
    if outcome is not None:
        if outcome.mean_quad_stat is not None:
            extra["mean_quad_stat"] = outcome.mean_quad_stat
    if diag:
        extra.update(diag)
    trace(
        IterationTrace(
            algorithm=name,
            iteration=iteration,
            branch=branch,
            n_before=before.size,
            n_after=after.size,
            removed_rows=removed,
            lam=None if outcome is None else outcome.lam,
            frobenius=None if outcome is None else outcome.frobenius,
            threshold=None if outcome is None else outcome.threshold,
            extra=extra,
        )
    )
