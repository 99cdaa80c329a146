"""Dense linear-algebra primitives shared by the estimators.

Vectors and symmetric matrices are plain float64 ndarrays.  Entry sets
(symmetric subsets of matrix positions) get a small wrapper class because
every consumer relies on their transposition closure.

All routines are pure and deterministic: ties break toward the lowest index,
the power iteration starts from a fixed pseudo-random vector, and eigenvector
signs are normalized so the largest-magnitude component is positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc as _erfc

from .errors import ConvergenceError

__all__ = [
    "EntrySet",
    "hard_threshold",
    "top_k_indices",
    "top_entry_set",
    "restrict",
    "restrict_principal",
    "empirical_moments",
    "top_eigenpair",
    "erfc",
]


@dataclass(frozen=True)
class EntrySet:
    """A set of matrix index pairs closed under transposition.

    Used for the index sets on which second-moment structure concentrates:
    certificates and filters restrict matrices to these positions.
    """

    pairs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        pairs = frozenset((int(i), int(j)) for i, j in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        for i, j in pairs:
            if (j, i) not in pairs:
                raise ValueError(f"entry set not transposition-closed: ({i},{j}) without ({j},{i})")

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return (int(pair[0]), int(pair[1])) in self.pairs

    def __iter__(self):
        return iter(self.sorted_pairs())

    def sorted_pairs(self) -> list[tuple[int, int]]:
        """Deterministic iteration order (row-major)."""
        return sorted(self.pairs)

    def row_indices(self) -> np.ndarray:
        """Sorted coordinates appearing as a row index (the set U' of a set U)."""
        return np.array(sorted({i for i, _ in self.pairs}), dtype=np.intp)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(rows, cols) arrays in sorted_pairs order, for fancy indexing."""
        if not self.pairs:
            return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
        rows, cols = zip(*self.sorted_pairs())
        return np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)

    def mask(self, d: int) -> np.ndarray:
        """Dense boolean d x d membership mask."""
        m = np.zeros((d, d), dtype=bool)
        rows, cols = self.index_arrays()
        if rows.size and (rows.max() >= d or cols.max() >= d):
            raise ValueError("entry set index out of range for dimension %d" % d)
        m[rows, cols] = True
        return m


def top_k_indices(v: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest-magnitude entries, ties to the lowest index.

    k is clamped to len(v).  The stable argsort on negated magnitudes makes
    the tie rule explicit: equal magnitudes keep ascending index order.
    """
    v = np.asarray(v, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(int(k), v.size)
    order = np.argsort(-np.abs(v), kind="stable")
    return order[:k]


def hard_threshold(v: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries of v, zero the rest.

    Ties break toward the lowest index; k >= len(v) returns a copy of v.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    keep = top_k_indices(v, k)
    out[keep] = v[keep]
    return out


def top_entry_set(A: np.ndarray, k: int) -> EntrySet:
    """The k largest-magnitude diagonal entries of A plus the k^2 - k
    largest-magnitude off-diagonal entries, as a transposition-closed set.

    Off-diagonal entries are selected in symmetric pairs; both members of a
    pair count toward the k^2 - k budget.  Ties break toward the lowest
    (row, col) position.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValueError("A must be square")
    if k < 1:
        raise ValueError("k must be >= 1")

    diag_idx = top_k_indices(np.diag(A), min(k, d))
    pairs = {(int(i), int(i)) for i in diag_idx}

    n_off = min(k * k - k, d * d - d)
    n_pairs = n_off // 2
    if n_pairs > 0 and d > 1:
        iu, ju = np.triu_indices(d, k=1)
        vals = np.abs(A[iu, ju])
        order = np.argsort(-vals, kind="stable")[:n_pairs]
        for t in order:
            i, j = int(iu[t]), int(ju[t])
            pairs.add((i, j))
            pairs.add((j, i))
    return EntrySet(frozenset(pairs))


def restrict(M: np.ndarray, W: EntrySet) -> np.ndarray:
    """Zero every entry of M outside the entry set W (same d x d shape)."""
    M = np.asarray(M, dtype=float)
    out = np.zeros_like(M)
    rows, cols = W.index_arrays()
    if rows.size:
        if rows.max() >= M.shape[0] or cols.max() >= M.shape[1]:
            raise ValueError("entry set index out of range")
        out[rows, cols] = M[rows, cols]
    return out


def restrict_principal(M: np.ndarray, indices) -> np.ndarray:
    """The principal submatrix of M on the given sorted coordinate set."""
    M = np.asarray(M, dtype=float)
    idx = np.array(sorted(int(i) for i in np.asarray(indices, dtype=np.intp).ravel()), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= M.shape[0]):
        raise ValueError("index out of range")
    return M[np.ix_(idx, idx)]


def empirical_moments(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance of the rows of S, with 1/N normalization.

    The covariance averages centered outer products over the sample
    (population convention, not 1/(N-1)).  The result is symmetrized exactly.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] < 2:
        raise ValueError("need an N x d matrix with N >= 2")
    mean = S.mean(axis=0)
    Xc = S - mean
    cov = Xc.T @ Xc / S.shape[0]
    cov = (cov + cov.T) / 2.0
    return mean, cov


_POWER_TOL = 1e-10
_START_KEY = 0x9E3779B97F4A7C15  # fixed key for the deterministic start vector


def top_eigenpair(M: np.ndarray, tol: float = _POWER_TOL) -> tuple[float, np.ndarray]:
    """Algebraically largest eigenvalue of a symmetric matrix and a unit
    eigenvector, by shifted power iteration.

    The iteration runs on M + c*I with c = ||M||_F, which makes the top
    algebraic eigenvalue also the top eigenvalue in magnitude.  Stops when
    the residual ||Mv - (v^T M v) v|| drops below tol * max(1, ||M||_F);
    raises ConvergenceError if the cap of 10*n*log(n) + 1000 iterations is
    exhausted first.  The eigenvector sign is fixed so its largest-magnitude
    entry is positive.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("M must be square")
    if n == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")

    fro = float(np.linalg.norm(M))
    if fro == 0.0:
        v = np.zeros(n)
        v[0] = 1.0
        return 0.0, v

    shifted = M + fro * np.eye(n)
    scale = max(1.0, fro)
    rng = np.random.Generator(np.random.Philox(key=_START_KEY))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)

    cap = int(10 * n * math.log(max(n, 2))) + 1000
    for it in range(cap):
        w = shifted @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v is in the kernel of the shifted matrix; restart deterministically
            v = np.zeros(n)
            v[it % n] = 1.0
            continue
        v = w / nw
        rayleigh = float(v @ (shifted @ v))
        residual = float(np.linalg.norm(shifted @ v - rayleigh * v))
        if residual <= tol * scale:
            lam = float(v @ (M @ v))
            return lam, _fix_sign(v)
    raise ConvergenceError(
        f"power iteration did not converge in {cap} iterations "
        f"(n={n}, ||M||_F={fro:.3e}, residual={residual:.3e})"
    )


def _fix_sign(v: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def erfc(z):
    """Complementary error function; vectorized, absolute error well below 1e-12."""
    out = _erfc(z)
    return float(out) if np.isscalar(z) or np.asarray(z).ndim == 0 else out
