"""Univariate benchmark: Forrester objective chained through x + exp(x) = y
with oracle y = sin(u)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import lambertw

from .. import exprs
from ..errors import ContractViolation
from ..model import (
    GpBinding,
    HybridModel,
    MeasurementMap,
    ObjectiveSpec,
    ResidualSystem,
    VariableSpace,
)
from ..records import TrialRecord
from ..solver import solve_root

__all__ = ["forrester", "oracle", "objective_chain", "IllustrativeBenchmark"]

U_LOWER, U_UPPER = -2.0, 2.0
X_LOWER, X_UPPER = -8.0, 2.5


def forrester(x):
    """Standard Forrester benchmark function f(x) = (6x - 2)^2 sin(12x - 4)."""
    x = np.asarray(x, dtype=float)
    out = (6.0 * x - 2.0) ** 2 * np.sin(12.0 * x - 4.0)
    return float(out) if out.ndim == 0 else out


def oracle(u):
    """The unknown equation of this benchmark: y = sin(u)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < U_LOWER) or np.any(u > U_UPPER):
        raise ContractViolation("u outside [-2, 2]")
    out = np.sin(u)
    return float(out) if out.ndim == 0 else out


def _x_of_y(y):
    """Closed-form inverse of x + exp(x) = y via the Lambert W function."""
    y = np.asarray(y, dtype=float)
    out = np.real(y - lambertw(np.exp(y)))
    return float(out) if out.ndim == 0 else out


def objective_chain(u):
    """True objective as a function of u: solve x + exp(x) = sin(u), apply f."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    vals = np.array(
        [
            forrester(
                solve_root(
                    lambda x, yi=yi: np.array([x[0] + np.exp(x[0]) - yi]),
                    [0.0],
                    lower=[X_LOWER],
                    upper=[X_UPPER],
                )[0]
            )
            for yi in np.sin(u)
        ]
    )
    return float(vals[0]) if vals.size == 1 else vals


def build_model() -> HybridModel:
    u, x, y = exprs.Var("u"), exprs.Var("x"), exprs.Var("y")
    return HybridModel(
        name="illustrative",
        space=VariableSpace(
            decision_names=["u"],
            u_lower=[U_LOWER],
            u_upper=[U_UPPER],
            dependent_names=["x"],
            x_lower=[X_LOWER],
            x_upper=[X_UPPER],
            output_names=["y"],
        ),
        residuals=ResidualSystem([x + exprs.exp(x) - y]),
        objective=ObjectiveSpec((6.0 * x - 2.0) ** 2 * exprs.sin(12.0 * x - 4.0)),
        binding=GpBinding(regressors=["u"], transform="identity"),
        measurement=MeasurementMap(measured=["y"]),
    )


class IllustrativeBenchmark:
    name = "illustrative"
    gp_standardize_mask = [True]

    def __init__(self):
        self.model = build_model()

    @property
    def u_lower(self):
        return self.model.space.u_lower

    @property
    def u_upper(self):
        return self.model.space.u_upper

    def run_trial(self, index, u, rng, provenance="initial") -> TrialRecord:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = oracle(u[0])
        x = solve_root(
            lambda x_, y=y: np.array([x_[0] + np.exp(x_[0]) - y]),
            [0.0],
            lower=[X_LOWER],
            upper=[X_UPPER],
        )
        f = forrester(x[0])
        resid = abs(x[0] + np.exp(x[0]) - y)
        return TrialRecord(
            index=index,
            u=u,
            measurements={"y": y},
            x=x,
            y=np.array([y]),
            objective=f,
            feasible=True,
            imputed=False,
            gp_input=u.copy(),
            gp_label=np.array([y]),
            provenance=provenance,
            reconstruction_residual=resid,
        )

    def standard_bo_label(self, record: TrialRecord) -> float:
        return record.objective

    @lru_cache(maxsize=None)
    def _f_star(self, n_grid=1_000_000):
        u = np.linspace(U_LOWER, U_UPPER, n_grid)
        f = forrester(_x_of_y(np.sin(u)))
        i = int(np.argmin(f))
        lo = u[max(i - 1, 0)]
        hi = u[min(i + 1, n_grid - 1)]
        res = minimize_scalar(
            lambda v: forrester(_x_of_y(np.sin(v))),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return float(min(res.fun, f[i]))

    def reference_optimum(self) -> float:
        """Global minimum from a dense grid over u, refined locally."""
        return self._f_star()
