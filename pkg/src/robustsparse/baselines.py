"""Comparison estimators: oracle, naive pruning, RANSAC, dense filtering,
linear-only sparse filtering, and dense robust PCA.

Every baseline except the oracle reads only the sample matrix of the dataset
it receives; the oracle is the single code path allowed to consult the
ground-truth inlier mask.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import linalg
from .contamination import CorruptedDataset
from .seeds import stream
from .sparse_mean import (
    RsmConfig,
    find_linear_threshold,
    guarded_log_inv,
    rsm_estimate,
)

__all__ = [
    "oracle_mean",
    "naive_prune_mean",
    "ransac_mean",
    "ransac_ball_radius",
    "dense_filter_mean",
    "linear_only_sparse_mean",
    "dense_robust_pca",
    "sparsify_then_error",
]


def oracle_mean(data: CorruptedDataset, k: int) -> np.ndarray:
    """Truncated mean of the ground-truth inliers (mask-reading reference point)."""
    inliers = data.samples[data.inlier_mask]
    if inliers.shape[0] == 0:
        raise ValueError("no inliers in mask")
    return linalg.hard_threshold(inliers.mean(axis=0), k)


def naive_prune_mean(data: CorruptedDataset, k: int, prune_c: float = 3.0) -> np.ndarray:
    """Drop rows with any coordinate further than prune_c * sqrt(log(N d))
    from the coordinatewise median, then return the truncated mean.

    If everything is pruned, falls back to the truncated coordinatewise median.
    """
    x = data.samples
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two samples")
    med = np.median(x, axis=0)
    cut = prune_c * math.sqrt(math.log(n * d))
    keep = np.all(np.abs(x - med) <= cut, axis=1)
    if not keep.any():
        return linalg.hard_threshold(med, k)
    return linalg.hard_threshold(x[keep].mean(axis=0), k)


def ransac_ball_radius(d: int) -> float:
    """Radius sqrt(d + sqrt(d)) of the scoring ball around a candidate mean."""
    return math.sqrt(d + math.sqrt(d))


def ransac_mean(data: CorruptedDataset, k: int, candidates: int = 50, seed: int = 0) -> np.ndarray:
    """Best half-sample mean, scored by how many points fall within the
    sqrt(d + sqrt(d)) ball around it; ties go to the first candidate."""
    x = data.samples
    n, d = x.shape
    if n < 4:
        raise ValueError("need at least four samples")
    rng = stream(seed, "ransac", n, d, candidates)
    radius_sq = ransac_ball_radius(d) ** 2

    best_mean, best_score = None, -1
    for _ in range(candidates):
        rows = rng.choice(n, size=n // 2, replace=False)
        cand = x[rows].mean(axis=0)
        dist_sq = ((x - cand) ** 2).sum(axis=1)
        score = int((dist_sq <= radius_sq).sum())
        if score > best_score:
            best_mean, best_score = cand, score
    return linalg.hard_threshold(best_mean, k)


def dense_filter_mean(data: CorruptedDataset, eps: float, cfg: RsmConfig) -> np.ndarray:
    """Full-coordinate specialization of the linear filter (the dense robust
    mean baseline): certify on the spectral norm of the covariance deviation,
    otherwise cut the projection tail and repeat.

    Exhausting the iteration cap or failing to place a threshold returns the
    current sample mean with a warning; the harness sparsifies afterwards.
    """
    x = np.asarray(data.samples, dtype=float)
    n0, d = x.shape
    if n0 < 2:
        raise ValueError("need at least two samples")
    cap = cfg.max_iterations if cfg.max_iterations is not None else 2 * n0
    log_inv = guarded_log_inv(eps)

    for _ in range(cap):
        mu, cov = linalg.empirical_moments(x)
        lam, v = linalg.top_eigenpair(cov - np.eye(d))
        if lam <= cfg.c_frob * eps * log_inv:
            return mu
        delta_l = 3.0 * math.sqrt(max(eps * lam, 0.0))
        scores = np.abs((x - mu) @ v)
        T = find_linear_threshold(scores, delta_l, eps, d, x.shape[0], d, cfg.tau)
        if T is None:
            warnings.warn("dense filter found no admissible threshold; returning current mean")
            return mu
        keep = scores <= T + delta_l
        if keep.all():
            return mu
        x = x[keep]
        if x.shape[0] < 2:
            break
    warnings.warn("dense filter iteration cap reached; returning current mean")
    return x.mean(axis=0)


def linear_only_sparse_mean(data: CorruptedDataset, cfg: RsmConfig) -> np.ndarray:
    """The sparse filter with its quadratic branch disabled: when the
    eigenvalue test fails, the truncated sample mean is returned as is."""
    return rsm_estimate(data.samples, cfg, allow_quadratic=False, algorithm_name="rme_sp_l")


_IQR_TO_SIGMA = 1.3489795003921634  # interquartile range of the standard normal


def dense_robust_pca(
    data: CorruptedDataset,
    eps: float,
    cfg=None,
    ratio_c: float = 0.3,
    tau: float = 0.1,
    max_iterations: int | None = None,
) -> tuple[np.ndarray, float]:
    """Dense robust PCA baseline: along the top empirical eigenvector,
    estimate the standard deviation robustly (normalized IQR); if the top
    eigenvalue is consistent with it, stop, else cut the projection tail.

    Returns (direction, spike strength estimate).  Degenerate covariance
    returns (e_0, 0) with a warning.
    """
    x = np.asarray(data.samples, dtype=float)
    n0, d = x.shape
    if n0 < 2:
        raise ValueError("need at least two samples")
    cap = max_iterations if max_iterations is not None else 2 * n0
    log_inv = guarded_log_inv(eps)

    for _ in range(cap):
        _, cov = linalg.empirical_moments(x)
        if float(np.linalg.norm(cov)) == 0.0:
            warnings.warn("degenerate covariance; returning trivial direction")
            e0 = np.zeros(d)
            e0[0] = 1.0
            return e0, 0.0
        lam, u = linalg.top_eigenpair(cov)
        proj = x @ u
        q75, q25 = np.percentile(proj, [75, 25])
        sigma_hat = (q75 - q25) / _IQR_TO_SIGMA
        if sigma_hat <= 0:
            warnings.warn("degenerate projection spread; returning current direction")
            return u, max(lam - 1.0, 0.0)
        ratio = lam / sigma_hat**2
        if ratio < 1.0 + ratio_c * eps * log_inv:
            return u, max(lam - 1.0, 0.0)
        excess = max(ratio - 1.0, 0.0)
        delta_l = 3.0 * math.sqrt(eps * excess)
        scores = np.abs(proj - np.median(proj)) / sigma_hat
        T = find_linear_threshold(scores, delta_l, eps, d, x.shape[0], d, tau)
        if T is None:
            return u, max(lam - 1.0, 0.0)
        keep = scores <= T + delta_l
        if keep.all():
            return u, max(lam - 1.0, 0.0)
        x = x[keep]
        if x.shape[0] < 2:
            break
    warnings.warn("dense robust PCA iteration cap reached; returning current direction")
    _, cov = linalg.empirical_moments(x) if x.shape[0] >= 2 else (None, np.eye(d))
    lam, u = linalg.top_eigenpair(cov)
    return u, max(lam - 1.0, 0.0)


def sparsify_then_error(estimate: np.ndarray, truth: np.ndarray, k: int) -> float:
    """l2 distance to the truth after truncating the estimate to its k
    largest-magnitude coordinates."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must have the same dimension")
    return float(np.linalg.norm(linalg.hard_threshold(estimate, k) - truth))
