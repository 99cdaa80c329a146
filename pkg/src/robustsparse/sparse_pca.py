"""Robust sparse PCA over the flattened second-moment statistic.

Each sample x is lifted to gamma(x) = vec(x x^T - I).  One iteration selects
the entry set Q where the mean of gamma concentrates, compares the empirical
covariance of gamma restricted to Q against the exact gaussian fourth-moment
covariance implied by the current covariance guess, and either

* accepts -- the discrepancy's top eigenvalue is small, so the top
  eigenvector of the restricted mean matrix estimates the spike; or
* filters -- projections of gamma onto the discrepancy eigenvector, centered
  at their median, expose outliers beyond a data-driven tail threshold.

The outer loop feeds each accepted estimate back as the covariance guess,
shrinking the error parameter delta until it stabilizes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NoThresholdError
from .sparse_mean import guarded_log_inv
from .trace import IterationTrace

__all__ = [
    "RspcaConfig",
    "PcaOutcome",
    "gamma_vec",
    "select_Q",
    "gamma_cov_analytic",
    "rspca_iteration",
    "rspca_estimate",
    "subspace_error",
    "delta_fixed_point",
]


@dataclass(frozen=True)
class RspcaConfig:
    """Constants for the PCA filter and its bootstrap loop.

    c_pca scales the acceptance test lambda < c_pca * (delta + eps log^2(1/eps));
    c_tail scales the tail cut |score - median| <= c_tail * T + 3.
    max_filter_iterations of None resolves to 2*ceil(eps*N) + 50.
    """

    k: int
    eps: float
    c_pca: float = 4.0
    c_tail: float = 1.0
    c_boot: float = 1.0
    max_filter_iterations: int | None = None
    max_bootstrap_rounds: int = 10
    rho_upper: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 1/2)")
        if min(self.c_pca, self.c_tail, self.c_boot, self.rho_upper) <= 0:
            raise ValueError("constants must be positive")


@dataclass(frozen=True)
class PcaOutcome:
    """Either an accepted covariance estimate I + rho_hat w w^T or a retained subset."""

    branch: str  # "matrix" | "tail"
    w: np.ndarray | None = None
    rho_hat: float | None = None
    sigma_prime: np.ndarray | None = None
    retained: np.ndarray | None = None
    lam: float = 0.0
    entry_set: linalg.EntrySet | None = None
    threshold: float | None = None
    median: float | None = None

    @property
    def is_matrix(self) -> bool:
        return self.sigma_prime is not None


def gamma_vec(x: np.ndarray) -> np.ndarray:
    """Row-major flattening of x x^T - I."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    return (np.outer(x, x) - np.eye(d)).ravel()


def select_Q(mu_tilde_gamma: np.ndarray, k: int) -> linalg.EntrySet:
    """Entry set holding the k^2 largest-magnitude positions of the flattened
    mean, symmetrized.

    The flattened mean of gamma is symmetric up to floating error, so (i, j)
    and (j, i) effectively tie; both members are kept, giving |Q| <= 2k^2.
    """
    g = np.asarray(mu_tilde_gamma, dtype=float).ravel()
    d = math.isqrt(g.size)
    if d * d != g.size:
        raise ValueError("flattened input length is not a perfect square")
    flat = linalg.top_k_indices(g, min(k * k, g.size))
    pairs = set()
    for t in flat:
        i, j = divmod(int(t), d)
        pairs.add((i, j))
        pairs.add((j, i))
    return linalg.EntrySet(frozenset(pairs))


def gamma_cov_analytic(sigma: np.ndarray, Q) -> np.ndarray:
    """Exact covariance of gamma(x)_Q for x ~ N(0, sigma), via the gaussian
    fourth-moment identity Cov(x_i x_j, x_k x_l) = S_ik S_jl + S_il S_jk.

    Q is an EntrySet or an explicit sequence of (i, j) pairs; entries follow
    the set's sorted order or the sequence order respectively.  sigma must be
    symmetric PSD (minimum eigenvalue >= -1e-8).
    """
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, atol=1e-12):
        raise ValueError("sigma must be symmetric")
    if np.linalg.eigvalsh(sigma).min() < -1e-8:
        raise ValueError("sigma must be positive semidefinite")
    if isinstance(Q, linalg.EntrySet):
        rows, cols = Q.index_arrays()
    else:
        pairs = list(Q)
        rows = np.array([p[0] for p in pairs], dtype=np.intp)
        cols = np.array([p[1] for p in pairs], dtype=np.intp)
    # Cov[(i,j),(k,l)] = S[i,k] S[j,l] + S[i,l] S[j,k], assembled blockwise
    s_ik = sigma[np.ix_(rows, rows)]
    s_jl = sigma[np.ix_(cols, cols)]
    s_il = sigma[np.ix_(rows, cols)]
    s_jk = sigma[np.ix_(cols, rows)]
    cov = s_ik * s_jl + s_il * s_jk
    return (cov + cov.T) / 2.0


def _gamma_matrix(S: np.ndarray, Q: linalg.EntrySet) -> np.ndarray:
    """N x |Q| matrix of gamma(x)_Q rows, in Q.sorted_pairs() order."""
    rows, cols = Q.index_arrays()
    G = S[:, rows] * S[:, cols]
    G[:, rows == cols] -= 1.0
    return G


def _pca_rhs(t: np.ndarray, eps: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return eps / (t**2 * np.log(t) ** 2)


def find_tail_threshold(centered: np.ndarray, eps: float, c_tail: float) -> float | None:
    """Smallest T > log(1/eps) with strictly more than eps/(T^2 log^2 T) mass
    beyond c_tail * T + 3, or None.

    centered holds |gamma_Q(x) . v* - median| values; candidates sit just
    below each distinct value so the retained set always shrinks.
    """
    centered = np.asarray(centered, dtype=float)
    if centered.size == 0:
        return None
    values = np.unique(centered)
    sorted_vals = np.sort(centered)
    # strict exceedance: count of scores > value
    exceed = centered.size - np.searchsorted(sorted_vals, values, side="right")
    frac = exceed / centered.size
    cand = (np.nextafter(values, -np.inf) - 3.0) / c_tail
    t_min = max(guarded_log_inv(eps), 1.0)
    ok = cand > t_min
    # guard log(T)^2 -> 0 near T = 1 is moot since t_min >= 1 and cand > t_min
    if not ok.any():
        return None
    rhs = _pca_rhs(cand[ok], eps)
    good = frac[ok] > rhs
    if not good.any():
        return None
    return float(cand[ok][np.argmax(good)])


def rspca_iteration(
    S: np.ndarray,
    sigma_tilde: np.ndarray,
    eps: float,
    delta: float,
    cfg: RspcaConfig,
) -> PcaOutcome:
    """One accept-or-filter pass of the PCA filter against the guess sigma_tilde."""
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if delta <= 0:
        raise ValueError("delta must be positive")

    # mean of gamma(x) = vec(E[x x^T] - I); built from the d x d second moment
    second = S.T @ S / n
    second = (second + second.T) / 2.0
    mean_mat = second - np.eye(d)
    Q = select_Q(mean_mat.ravel(), cfg.k)

    G = _gamma_matrix(S, Q)
    mu_q = G.mean(axis=0)
    Gc = G - mu_q
    M_q = Gc.T @ Gc / n
    M_q = (M_q + M_q.T) / 2.0

    discrepancy = M_q - gamma_cov_analytic(sigma_tilde, Q)
    lam, v_star = linalg.top_eigenpair(discrepancy)

    log_inv = guarded_log_inv(eps)
    if lam < cfg.c_pca * (delta + eps * log_inv**2):
        w, rho_hat = _spike_from_mean(mean_mat, Q)
        sigma_prime = np.eye(d) + rho_hat * np.outer(w, w)
        return PcaOutcome(
            branch="matrix", w=w, rho_hat=rho_hat, sigma_prime=sigma_prime, lam=lam, entry_set=Q
        )

    scores = G @ v_star
    med = float(np.median(scores))
    centered = np.abs(scores - med)
    T = find_tail_threshold(centered, eps, cfg.c_tail)
    if T is None:
        raise NoThresholdError(
            "tail filter fired but no valid threshold exists",
            diagnostics={"lambda": lam, "delta": delta, "n": n, "q_size": len(Q)},
        )
    retained = np.flatnonzero(centered <= cfg.c_tail * T + 3.0)
    return PcaOutcome(
        branch="tail", retained=retained, lam=lam, entry_set=Q, threshold=T, median=med
    )


def _spike_from_mean(mean_mat: np.ndarray, Q: linalg.EntrySet) -> tuple[np.ndarray, float]:
    """Unit spike direction and strength from the restricted mean matrix.

    The restriction is symmetrized before the eigen solve to kill the
    row-major asymmetry floating error leaves behind; the strength is the top
    eigenvalue clamped at zero.
    """
    B = linalg.restrict(mean_mat, Q)
    B = (B + B.T) / 2.0
    rows = Q.row_indices()
    lam, w_sub = linalg.top_eigenpair(B[np.ix_(rows, rows)])
    w = np.zeros(mean_mat.shape[0])
    w[rows] = w_sub
    return w, max(float(lam), 0.0)


def rspca_estimate(
    S: np.ndarray,
    cfg: RspcaConfig,
    trace=None,
    tau: float | None = None,
    algorithm_name: str = "rspca",
) -> tuple[np.ndarray, float]:
    """Bootstrap loop returning (unit spike direction, spike strength).

    Round zero runs against the identity guess with delta = rho_upper; each
    accepted round feeds I + rho_hat w w^T back as the guess and shrinks
    delta <- c_boot (sqrt(eps delta) + eps log(1/eps)).  Stops when delta
    moves by less than 10% or after max_bootstrap_rounds.  tau is accepted
    for interface parity and only echoed into trace records.

    Filter rounds that cannot place a threshold, or that exhaust the filter
    iteration cap, fall back to accepting the current restricted-mean spike
    with a warning, so harness runs always produce an estimate.
    """
    S = np.asarray(S, dtype=float)
    n0 = S.shape[0]
    filter_cap = (
        cfg.max_filter_iterations
        if cfg.max_filter_iterations is not None
        else 2 * math.ceil(cfg.eps * n0) + 50
    )

    sigma_tilde = np.eye(S.shape[1])
    delta = cfg.rho_upper
    live = np.arange(n0)
    w, rho_hat = None, 0.0
    filters_used = 0

    for round_idx in range(cfg.max_bootstrap_rounds):
        out = None
        while True:
            try:
                out = rspca_iteration(S[live], sigma_tilde, cfg.eps, delta, cfg)
            except NoThresholdError as err:
                warnings.warn(f"PCA tail filter had no admissible threshold; accepting current spike ({err})")
                out = _fallback_matrix(S[live], cfg)
                _emit(trace, algorithm_name, round_idx, "fallback", live, live, out, tau)
                break
            if out.is_matrix:
                _emit(trace, algorithm_name, round_idx, "matrix", live, live, out, tau)
                break
            filters_used += 1
            kept = live[out.retained]
            if kept.size >= live.size:
                raise AssertionError("tail filter returned without shrinking the sample set")
            _emit(trace, algorithm_name, round_idx, "tail", live, kept, out, tau)
            live = kept
            if filters_used >= filter_cap or live.size < 2:
                warnings.warn("PCA filter iteration cap reached; accepting current spike")
                out = _fallback_matrix(S[live], cfg)
                _emit(trace, algorithm_name, round_idx, "fallback", live, live, out, tau)
                break

        w, rho_hat = out.w, out.rho_hat
        sigma_tilde = np.eye(S.shape[1]) + rho_hat * np.outer(w, w)
        new_delta = cfg.c_boot * (math.sqrt(cfg.eps * delta) + cfg.eps * guarded_log_inv(cfg.eps))
        if new_delta <= 0 or abs(new_delta - delta) < 0.1 * delta:
            delta = max(new_delta, 1e-12)
            break
        delta = max(new_delta, 1e-12)

    norm = np.linalg.norm(w)
    if norm > 0:
        w = w / norm
        idx = int(np.argmax(np.abs(w)))
        if w[idx] < 0:
            w = -w
    else:
        w = np.zeros(S.shape[1])
        w[0] = 1.0
    return w, float(rho_hat)


def _fallback_matrix(S: np.ndarray, cfg: RspcaConfig) -> PcaOutcome:
    d = S.shape[1]
    second = S.T @ S / S.shape[0]
    mean_mat = (second + second.T) / 2.0 - np.eye(d)
    Q = select_Q(mean_mat.ravel(), cfg.k)
    w, rho_hat = _spike_from_mean(mean_mat, Q)
    return PcaOutcome(
        branch="matrix", w=w, rho_hat=rho_hat,
        sigma_prime=np.eye(d) + rho_hat * np.outer(w, w), entry_set=Q,
    )


def _emit(trace, name, round_idx, branch, before, after, out: PcaOutcome, tau):
    if trace is None:
        return
    removed = np.setdiff1d(before, after, assume_unique=True)
    extra = {"round": round_idx, "q_size": None if out.entry_set is None else len(out.entry_set)}
    if out.median is not None:
        extra["median"] = out.median
    if tau is not None:
        extra["tau"] = tau
    trace(
        IterationTrace(
            algorithm=name,
            iteration=round_idx,
            branch=branch,
            n_before=before.size,
            n_after=after.size,
            removed_rows=removed,
            lam=out.lam,
            threshold=out.threshold,
            extra=extra,
        )
    )


def subspace_error(w: np.ndarray, v: np.ndarray) -> float:
    """|| w w^T - v v^T ||_F for unit vectors, via sqrt(2 - 2 (w.v)^2)."""
    align = float(np.clip(np.dot(w, v), -1.0, 1.0))
    return math.sqrt(max(2.0 - 2.0 * align**2, 0.0))


def delta_fixed_point(eps: float, c_boot: float = 1.0, rho_upper: float = 1.0, rounds: int = 200) -> float:
    """Limit of the bootstrap recursion delta <- c (sqrt(eps delta) + eps log(1/eps))."""
    delta = rho_upper
    for _ in range(rounds):
        new = c_boot * (math.sqrt(eps * delta) + eps * guarded_log_inv(eps))
        if abs(new - delta) < 1e-15:
            return new
        delta = new
    return delta
