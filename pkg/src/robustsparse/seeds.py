"""Deterministic, splittable random streams.

All randomness in the package flows through counter-based Philox generators
keyed by 64-bit integers.  Independent streams (per trial, per corruption
step, per candidate set) are derived by hashing a tuple of labels with
SHA-256, so the same (seed, labels) pair yields the same stream on every
platform, run, and thread count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(*parts) -> int:
    """Hash a tuple of labels (ints, floats, strings) into a 64-bit key.

    Floats are rendered with ``repr`` so the mapping is exact; do not pass
    objects whose ``repr`` is unstable.
    """
    text = "\x1f".join(_canon(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _canon(part) -> str:
    if isinstance(part, float):
        return repr(part)
    if isinstance(part, (int, np.integer)):
        return str(int(part))
    return str(part)


def stream(*parts) -> np.random.Generator:
    """A fresh Philox generator keyed by the hashed label tuple."""
    return np.random.Generator(np.random.Philox(key=derive_key(*parts)))
