"""Benchmark problems: a univariate chain and a flash separation unit."""

from __future__ import annotations

from ..errors import ContractViolation
from .flash import FlashBenchmark
from .illustrative import IllustrativeBenchmark

__all__ = ["get_benchmark", "FlashBenchmark", "IllustrativeBenchmark"]

_REGISTRY = {
    "illustrative": IllustrativeBenchmark,
    "flash": FlashBenchmark,
}


def get_benchmark(name: str, **kwargs):
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ContractViolation(
            f"unknown benchmark {name!r}; choose from {sorted(_REGISTRY)}"
        ) from None
    return cls(**kwargs)
