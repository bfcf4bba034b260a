"""Trial and experiment-state records shared by the BO loop and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrialRecord", "ExperimentState"]


@dataclass
class TrialRecord:
    index: int
    u: np.ndarray
    measurements: dict
    x: np.ndarray | None
    y: np.ndarray | None
    objective: float | None
    feasible: bool
    imputed: bool
    gp_input: np.ndarray
    gp_label: np.ndarray
    provenance: str = "initial"  # "initial" | "bo" | "fallback"
    reconstruction_residual: float | None = None

    def to_dict(self):
        return {
            "index": self.index,
            "u": np.asarray(self.u, dtype=float).tolist(),
            "measurements": {k: float(v) for k, v in self.measurements.items()},
            "x": None if self.x is None else np.asarray(self.x, dtype=float).tolist(),
            "y": None if self.y is None else np.asarray(self.y, dtype=float).tolist(),
            "objective": None if self.objective is None else float(self.objective),
            "feasible": bool(self.feasible),
            "imputed": bool(self.imputed),
            "gp_input": np.asarray(self.gp_input, dtype=float).tolist(),
            "gp_label": np.asarray(self.gp_label, dtype=float).tolist(),
            "provenance": self.provenance,
            "reconstruction_residual": self.reconstruction_residual,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            index=int(d["index"]),
            u=np.asarray(d["u"], dtype=float),
            measurements=dict(d["measurements"]),
            x=None if d["x"] is None else np.asarray(d["x"], dtype=float),
            y=None if d["y"] is None else np.asarray(d["y"], dtype=float),
            objective=d["objective"],
            feasible=bool(d["feasible"]),
            imputed=bool(d["imputed"]),
            gp_input=np.asarray(d["gp_input"], dtype=float),
            gp_label=np.asarray(d["gp_label"], dtype=float),
            provenance=d.get("provenance", "initial"),
            reconstruction_residual=d.get("reconstruction_residual"),
        )


@dataclass
class ExperimentState:
    benchmark: str
    method: str
    seed: int
    records: list[TrialRecord] = field(default_factory=list)
    iteration: int = 0
    gp: object = None

    @property
    def incumbent(self) -> float:
        """Best feasible objective so far; +inf until a feasible trial exists."""
        best = np.inf
        for r in self.records:
            if r.feasible and r.objective is not None and r.objective < best:
                best = r.objective
        return best

    def incumbent_trace(self):
        """Incumbent after each trial, in trial order."""
        out = []
        best = np.inf
        for r in self.records:
            if r.feasible and r.objective is not None and r.objective < best:
                best = r.objective
            out.append(best)
        return out
