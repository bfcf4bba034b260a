"""Space-filling sampling utilities."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

__all__ = ["latin_hypercube"]


def latin_hypercube(n: int, lower, upper, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube sample of ``n`` points in the box [lower, upper].

    Per dimension, exactly one point falls in each of the n equal strata.
    Deterministic for a given generator state.
    """
    if n < 1:
        raise ContractViolation("latin_hypercube needs n >= 1")
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape:
        raise ContractViolation("bound shapes differ")
    if np.any(lower >= upper):
        raise ContractViolation("lower bounds must be strictly below upper bounds")
    d = lower.size
    jitter = rng.random((n, d))
    out = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        out[:, j] = lower[j] + (strata + jitter[:, j]) / n * (upper[j] - lower[j])
    return out
