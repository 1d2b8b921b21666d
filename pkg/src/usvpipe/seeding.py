"""Deterministic RNG derivation from structured entropy tuples."""
from __future__ import annotations

import numpy as np

_MASK = (1 << 63) - 1


def rng_for(*entropy: int) -> np.random.Generator:
    """A generator whose stream is a pure function of the entropy tuple."""
    return np.random.default_rng([int(e) & _MASK for e in entropy])
