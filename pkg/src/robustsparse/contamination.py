"""Inlier models, corruption strategies, and dataset plumbing.

The adversary model: draw N clean samples, replace floor(eps*N) of them with
arbitrary points, hand the mixed set to the estimator.  Four concrete
replacement strategies are implemented (constant bias, linear hiding,
flipping, disjoint spike).  The ground-truth inlier mask travels with the
dataset for scoring, but estimators only ever receive the sample matrix;
the single sanctioned mask reader is the oracle baseline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeds import stream

__all__ = [
    "SparseMeanModel",
    "SpikedCovModel",
    "CorruptedDataset",
    "CorruptionSpec",
    "draw_inliers",
    "corrupt",
    "symmetric_difference_fraction",
    "save_dataset",
    "load_dataset",
]

CORRUPTION_KINDS = ("constant_bias", "linear_hiding", "flipping", "disjoint_spike")


@dataclass(frozen=True)
class SparseMeanModel:
    """Identity-covariance gaussian with a k-sparse mean."""

    d: int
    k: int
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.d,):
            raise ValueError("mu must have length d")
        if np.count_nonzero(mu) > self.k:
            raise ValueError("mu has more than k nonzero entries")
        object.__setattr__(self, "mu", mu)

    @property
    def kind(self) -> str:
        return "mean"

    def support(self) -> np.ndarray:
        nz = np.flatnonzero(self.mu)
        return nz if nz.size else np.arange(min(self.k, self.d))


@dataclass(frozen=True)
class SpikedCovModel:
    """Centered gaussian with covariance I + rho * v v^T, v a k-sparse unit vector."""

    d: int
    k: int
    rho: float
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (self.d,):
            raise ValueError("v must have length d")
        if np.count_nonzero(v) > self.k:
            raise ValueError("v has more than k nonzero entries")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("v must be unit norm")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "v", v)

    @property
    def kind(self) -> str:
        return "spiked"

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.v)


def uniform_sparse_unit(d: int, k: int, offset: int = 0) -> np.ndarray:
    """Unit vector with k equal entries starting at coordinate `offset`."""
    if offset + k > d:
        raise ValueError("support does not fit in dimension")
    v = np.zeros(d)
    v[offset : offset + k] = 1.0 / np.sqrt(k)
    return v


@dataclass(frozen=True)
class CorruptedDataset:
    """Sample matrix plus ground truth about which rows are genuine.

    The mask is bookkeeping for evaluation only.  floor(eps*N) entries are
    False after corruption; eps records the requested corruption fraction.
    """

    samples: np.ndarray
    inlier_mask: np.ndarray
    model: SparseMeanModel | SpikedCovModel
    eps: float

    def __post_init__(self):
        samples = np.ascontiguousarray(np.asarray(self.samples, dtype=float))
        mask = np.asarray(self.inlier_mask, dtype=bool)
        if samples.ndim != 2:
            raise ValueError("samples must be an N x d matrix")
        if mask.shape != (samples.shape[0],):
            raise ValueError("mask length must match sample count")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "inlier_mask", mask)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class CorruptionSpec:
    """Which corruption strategy to apply, with optional concrete parameters.

    Fields left as None are resolved from the dataset's generating model at
    corruption time:

    - constant_bias: replacement rows are fresh inliers plus `shift` on every
      coordinate (or exactly mu + shift when `absolute` is set).
    - linear_hiding: rows split evenly between N(1_S, I) and N(0, 2I - I_S);
      `support` defaults to the first k coordinates.
    - flipping: the floor(eps*N) rows with smallest direction-score are
      reflected along `direction` (default: unit mass on the model support).
    - disjoint_spike: rows from N(0, I + u u^T) where `spike` = u defaults to
      a unit vector on the k coordinates after the model support.
    """

    kind: str
    shift: float = 2.0
    absolute: bool = False
    support: np.ndarray | None = None
    direction: np.ndarray | None = None
    spike: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        for name in ("support", "direction", "spike"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val))


def draw_inliers(model, n: int, seed: int) -> CorruptedDataset:
    """Draw n i.i.d. samples from the inlier model; all rows marked genuine.

    The same (model, n, seed) triple is bit-reproducible.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream(seed, "inliers", model.kind, n, model.d)
    x = _draw_from_model(model, n, rng)
    return CorruptedDataset(x, np.ones(n, dtype=bool), model, 0.0)


def _draw_from_model(model, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, model.d))
    if isinstance(model, SparseMeanModel):
        return z + model.mu
    # spiked covariance: I + rho v v^T realized as z + sqrt(rho) * g * v
    g = rng.standard_normal(n)
    return z + np.sqrt(model.rho) * g[:, None] * model.v


def corrupt(data: CorruptedDataset, eps: float, spec: CorruptionSpec, seed: int) -> CorruptedDataset:
    """Replace exactly floor(eps * N) rows of the dataset per the strategy.

    Returns a new dataset; the input is untouched.  eps = 0 is an exact copy.
    """
    if not 0 <= eps < 0.5:
        raise ValueError("eps must lie in [0, 1/2)")
    n, d = data.n, data.d
    m = int(np.floor(eps * n))
    samples = data.samples.copy()
    mask = np.ones(n, dtype=bool)
    if m == 0:
        return CorruptedDataset(samples, mask, data.model, float(eps))

    rng = stream(seed, "corrupt", spec.kind, n, d)
    model = data.model

    if spec.kind == "flipping":
        v = _resolve_direction(spec, model)
        scores = samples @ v
        rows = np.argsort(scores, kind="stable")[:m]
        sel = samples[rows]
        samples[rows] = sel - 2.0 * (sel @ v)[:, None] * v
    else:
        rows = rng.choice(n, size=m, replace=False)
        rows.sort()
        if spec.kind == "constant_bias":
            if spec.absolute:
                mu = model.mu if isinstance(model, SparseMeanModel) else np.zeros(d)
                samples[rows] = mu + spec.shift
            else:
                fresh = _draw_from_model(model, m, rng)
                samples[rows] = fresh + spec.shift
        elif spec.kind == "linear_hiding":
            support = _resolve_support(spec, model)
            m1 = (m + 1) // 2  # odd counts: extra point to the mean-shifted type
            shifted = rng.standard_normal((m1, d))
            shifted[:, support] += 1.0
            var = np.full(d, 2.0)
            var[support] = 1.0
            inflated = rng.standard_normal((m - m1, d)) * np.sqrt(var)
            samples[rows] = np.vstack([shifted, inflated])
        elif spec.kind == "disjoint_spike":
            u = _resolve_spike(spec, model)
            z = rng.standard_normal((m, d))
            g = rng.standard_normal(m)
            samples[rows] = z + g[:, None] * u
    mask[rows] = False
    return CorruptedDataset(samples, mask, model, float(eps))


def _resolve_direction(spec: CorruptionSpec, model) -> np.ndarray:
    if spec.direction is not None:
        v = np.asarray(spec.direction, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0:
            raise ValueError("flip direction must be nonzero")
        return v / nv
    sup = model.support()
    v = np.zeros(model.d)
    v[sup] = 1.0 / np.sqrt(sup.size)
    return v


def _resolve_support(spec: CorruptionSpec, model) -> np.ndarray:
    if spec.support is not None:
        sup = np.asarray(spec.support, dtype=np.intp)
        if sup.size and (sup.min() < 0 or sup.max() >= model.d):
            raise ValueError("hiding support out of range")
        return sup
    return np.arange(min(model.k, model.d))


def _resolve_spike(spec: CorruptionSpec, model) -> np.ndarray:
    if spec.spike is not None:
        return np.asarray(spec.spike, dtype=float)
    k, d = model.k, model.d
    if 2 * k > d:
        raise ValueError("disjoint spike needs 2k <= d")
    sup = set(model.support().tolist())
    free = [i for i in range(d) if i not in sup][:k]
    u = np.zeros(d)
    u[free] = 1.0 / np.sqrt(k)
    return u


def symmetric_difference_fraction(s, g) -> float:
    """|S symdiff G| / |S| for two multisets of hashable items."""
    from collections import Counter

    cs, cg = Counter(s), Counter(g)
    if not cs:
        raise ValueError("first multiset is empty")
    keys = set(cs) | set(cg)
    sym = sum(abs(cs[k] - cg[k]) for k in keys)
    return sym / sum(cs.values())


# ---------------------------------------------------------------------------
# dataset container format: fixed little-endian header, row-major float64
# samples, packed inlier bits, plus a key = value sidecar with the model.

_MAGIC = b"RSDS"
_VERSION = 1
_MODEL_CODES = {"mean": 0, "spiked": 1}


def save_dataset(ds: CorruptedDataset, path) -> Path:
    """Write the binary container and its plain-text sidecar; returns the path."""
    path = Path(path)
    header = _MAGIC + struct.pack(
        "<IIQdB", _VERSION, ds.d, ds.n, float(ds.eps), _MODEL_CODES[ds.model.kind]
    )
    body = np.ascontiguousarray(ds.samples, dtype="<f8").tobytes()
    bits = np.packbits(ds.inlier_mask).tobytes()
    path.write_bytes(header + body + bits)

    lines = [
        f"model = {ds.model.kind}",
        f"d = {ds.d}",
        f"n = {ds.n}",
        f"k = {ds.model.k}",
        f"eps = {ds.eps!r}",
    ]
    if isinstance(ds.model, SparseMeanModel):
        lines.append("mu = " + ",".join(repr(x) for x in ds.model.mu))
    else:
        lines.append(f"rho = {ds.model.rho!r}")
        lines.append("v = " + ",".join(repr(x) for x in ds.model.v))
    sidecar_path(path).write_text("\n".join(lines) + "\n")
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".spec.txt")


def load_dataset(path) -> CorruptedDataset:
    """Read a dataset written by save_dataset (binary plus sidecar)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a dataset container")
    version, d, n, eps, code = struct.unpack("<IIQdB", raw[4 : 4 + 25])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    offset = 4 + 25
    nbytes = n * d * 8
    samples = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8").reshape(n, d).copy()
    bits = np.frombuffer(raw[offset + nbytes :], dtype=np.uint8)
    mask = np.unpackbits(bits, count=n).astype(bool)

    meta = {}
    for line in sidecar_path(path).read_text().splitlines():
        if "=" in line:
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
    k = int(meta["k"])
    if meta["model"] == "mean":
        mu = np.array([float(x) for x in meta["mu"].split(",")])
        model = SparseMeanModel(d, k, mu)
    else:
        v = np.array([float(x) for x in meta["v"].split(",")])
        model = SpikedCovModel(d, k, float(meta["rho"]), v)
    return CorruptedDataset(samples, mask, model, eps)
