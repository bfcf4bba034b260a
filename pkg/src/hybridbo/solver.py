"""Local NLP solution, multistart driving, and root finding.

The local solver is an augmented Lagrangian outer loop with projected
quasi-Newton (L-BFGS-B) inner solves on the variable box. The penalty is
increased tenfold whenever an inner solve fails to cut the constraint
violation by a quarter; otherwise multipliers are updated with
lambda <- lambda + rho * g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ContractViolation, MultistartError, RootFindError
from .sampling import latin_hypercube

__all__ = [
    "NlpProblem",
    "LocalSolution",
    "solve_local",
    "multistart_solve",
    "solve_root",
    "latin_hypercube",
]

FEAS_TOL = 1e-8
OPT_TOL = 1e-6
MAX_OUTER = 200
MAX_INNER = 500


@dataclass
class NlpProblem:
    """Bound- and equality-constrained NLP in evaluator form.

    ``residuals``/``jacobian`` may be None for purely bound-constrained
    problems. ``blocks`` optionally records the block-sparsity layout as a
    list of (row_slice, col_indices) pairs; it is an optimization hint only.
    """

    n: int
    objective: callable
    gradient: callable
    lower: np.ndarray
    upper: np.ndarray
    residuals: callable = None
    jacobian: callable = None
    blocks: list = None

    def __post_init__(self):
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.n,)).copy()
        if np.any(self.lower > self.upper):
            raise ContractViolation("lower bound exceeds upper bound")

    def constraint_violation(self, x):
        if self.residuals is None:
            return 0.0
        c = np.asarray(self.residuals(x))
        return float(np.max(np.abs(c))) if c.size else 0.0


@dataclass
class LocalSolution:
    x: np.ndarray
    objective: float
    constraint_violation: float
    stationarity: float
    status: str  # "converged" | "max_iter" | "failed"
    n_outer: int
    violation_trace: list = field(default_factory=list)
    message: str = ""


def _projected_grad_norm(x, g, lower, upper):
    g = g.copy()
    g[(x <= lower + 1e-12) & (g > 0)] = 0.0
    g[(x >= upper - 1e-12) & (g < 0)] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


def solve_local(
    problem: NlpProblem,
    x0,
    feas_tol: float = FEAS_TOL,
    opt_tol: float = OPT_TOL,
    max_outer: int = MAX_OUTER,
    max_inner: int = MAX_INNER,
) -> LocalSolution:
    """Augmented Lagrangian solve from a single start (clipped into bounds)."""
    x = np.clip(np.asarray(x0, dtype=float), problem.lower, problem.upper)
    m = 0
    if problem.residuals is not None:
        m = np.asarray(problem.residuals(x)).size
    lam = np.zeros(m)
    rho = 10.0
    bounds = list(zip(problem.lower, problem.upper))
    trace: list[float] = []
    best_viol = np.inf

    def al_value_and_grad(z):
        f = problem.objective(z)
        g = problem.gradient(z)
        if m:
            c = problem.residuals(z)
            J = problem.jacobian(z)
            f = f + lam @ c + 0.5 * rho * float(c @ c)
            g = g + J.T @ (lam + rho * c)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            # reject the step: huge value, zero slope
            return 1e15, np.zeros_like(z)
        return f, g

    status = "max_iter"
    message = ""
    outer = 0
    for outer in range(1, max_outer + 1):
        res = minimize(
            al_value_and_grad,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_inner, "ftol": 1e-14, "gtol": 1e-9},
        )
        x = np.clip(res.x, problem.lower, problem.upper)
        if not np.all(np.isfinite(x)):
            status = "failed"
            message = "inner solve produced non-finite iterate"
            break
        if m:
            c = np.asarray(problem.residuals(x))
            J = problem.jacobian(x)
            viol = float(np.max(np.abs(c)))
        else:
            c = np.zeros(0)
            J = None
            viol = 0.0

        gl = problem.gradient(x) + (J.T @ (lam + rho * c) if m else 0.0)
        stat = _projected_grad_norm(x, np.asarray(gl), problem.lower, problem.upper)
        if viol <= feas_tol and stat <= opt_tol:
            if m:
                lam = lam + rho * c
            trace.append(viol)
            status = "converged"
            break
        if not m:
            # bound-constrained problem that the inner solver could not finish
            status = "failed" if res.status not in (0, 1) else "max_iter"
            message = str(res.message)
            break
        if viol <= max(feas_tol, 0.25 * best_viol):
            lam = lam + rho * c
            best_viol = min(best_viol, viol)
            trace.append(viol)
        else:
            rho = min(rho * 10.0, 1e12)
            if rho >= 1e12 and viol > feas_tol * 1e3:
                status = "failed"
                message = "penalty at cap without feasibility"
                break

    # final certificates by independent re-evaluation
    final_viol = problem.constraint_violation(x)
    if m:
        gl = problem.gradient(x) + problem.jacobian(x).T @ lam
    else:
        gl = problem.gradient(x)
    stat = _projected_grad_norm(x, np.asarray(gl), problem.lower, problem.upper)
    if status == "converged" and (final_viol > feas_tol or stat > 10 * opt_tol):
        status = "max_iter"
    return LocalSolution(
        x=x,
        objective=float(problem.objective(x)),
        constraint_violation=final_viol,
        stationarity=stat,
        status=status,
        n_outer=outer,
        violation_trace=trace,
        message=message,
    )


def multistart_solve(
    problem: NlpProblem,
    n_starts: int,
    bounds_sampler,
    rng: np.random.Generator,
    **solve_kwargs,
) -> LocalSolution:
    """Best converged solution over ``n_starts`` local solves.

    ``bounds_sampler(n, rng)`` must return the initial points. Ties are
    broken by objective, then constraint violation, then the point itself,
    so the result does not depend on evaluation order.
    """
    if n_starts < 1:
        raise ContractViolation("n_starts must be at least 1")
    starts = np.atleast_2d(np.asarray(bounds_sampler(n_starts, rng), dtype=float))
    solutions = [solve_local(problem, x0, **solve_kwargs) for x0 in starts]
    converged = [s for s in solutions if s.status == "converged"]
    if not converged:
        raise MultistartError(
            f"no converged start out of {n_starts}",
            statuses=[(s.status, s.constraint_violation, s.message) for s in solutions],
        )
    return min(
        converged,
        key=lambda s: (s.objective, s.constraint_violation, tuple(np.round(s.x, 12))),
    )


def _fd_jacobian(fun, x, r0):
    n = x.size
    J = np.empty((r0.size, n))
    for j in range(n):
        h = 1e-7 * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += h
        J[:, j] = (np.asarray(fun(xp)) - r0) / h
    return J


def solve_root(
    fun,
    x0,
    jac=None,
    tol: float = 1e-10,
    max_iter: int = 100,
    lower=None,
    upper=None,
    n_restarts: int = 10,
    rng: np.random.Generator = None,
) -> np.ndarray:
    """Damped Newton root of a square system; LHS restarts on failure.

    Returns x with ||fun(x)||_inf <= tol or raises RootFindError.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    has_box = lower is not None and upper is not None
    if has_box:
        lower = np.broadcast_to(np.asarray(lower, dtype=float), x0.shape)
        upper = np.broadcast_to(np.asarray(upper, dtype=float), x0.shape)

    def clip(x):
        return np.clip(x, lower, upper) if has_box else x

    def newton(x):
        x = clip(x.astype(float))
        r = np.atleast_1d(np.asarray(fun(x), dtype=float))
        if r.size != x.size:
            raise ContractViolation("root finding needs a square system")
        for _ in range(max_iter):
            rn = np.max(np.abs(r))
            if rn <= tol:
                return x
            J = jac(x) if jac is not None else _fd_jacobian(fun, x, r)
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            t = 1.0
            while t > 1e-14:
                xn = clip(x + t * step)
                rnew = np.atleast_1d(np.asarray(fun(xn), dtype=float))
                if np.all(np.isfinite(rnew)) and (
                    np.max(np.abs(rnew)) < rn * (1.0 - 1e-4 * t) or np.max(np.abs(rnew)) <= tol
                ):
                    x, r = xn, rnew
                    break
                t *= 0.5
            else:
                return None  # stalled line search
        return None

    result = newton(x0)
    if result is not None:
        return result
    if has_box and n_restarts > 0:
        local_rng = rng if rng is not None else np.random.default_rng(0)
        for guess in latin_hypercube(n_restarts, lower, upper, local_rng):
            result = newton(guess)
            if result is not None:
                return result
    raise RootFindError("no root found from any start")
