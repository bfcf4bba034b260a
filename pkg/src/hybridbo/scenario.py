"""SAA deterministic equivalent of the GP-constrained stochastic program.

Scenario draws are standard-normal samples of the reparameterization
variable. The default formulation eliminates the GP outputs by direct
substitution y_s = mean(x_s, u) + diag(std(x_s, u)) * xi_s, leaving
variables (u, x_1..x_S) and one residual block per scenario. An explicit
formulation that carries y_s as variables with equality constraints is
available for equivalence checking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import exprs
from .errors import ContractViolation
from .model import HybridModel
from .solver import NlpProblem

__all__ = [
    "ScenarioSet",
    "sample_scenarios",
    "ObjectiveKind",
    "ScenarioNlp",
    "build",
    "propagate_states",
    "acquisition_values",
    "DEFAULT_SCENARIOS",
    "DEFAULT_EPSILON",
    "DEFAULT_BETA",
]

DEFAULT_SCENARIOS = 25
DEFAULT_EPSILON = 1e-6
DEFAULT_BETA = 2.0


class ObjectiveKind(str, enum.Enum):
    MEAN = "mean"
    SAA_EI = "saa-ei"
    SMOOTH_EI_SQRT = "smooth-ei-sqrt"
    SMOOTH_EI_SOFTPLUS = "smooth-ei-softplus"
    SAA_LCB = "saa-lcb"


EI_KINDS = (ObjectiveKind.SAA_EI, ObjectiveKind.SMOOTH_EI_SQRT, ObjectiveKind.SMOOTH_EI_SOFTPLUS)


@dataclass(frozen=True)
class ScenarioSet:
    xi: np.ndarray  # (S, dim) standard-normal draws
    seed: object

    @property
    def count(self):
        return self.xi.shape[0]

    @property
    def dim(self):
        return self.xi.shape[1]


def sample_scenarios(count: int, dim: int, seed) -> ScenarioSet:
    """i.i.d. standard-normal scenario matrix, regenerable from the seed."""
    if count < 1:
        raise ContractViolation("scenario count must be at least 1")
    rng = np.random.default_rng(seed)
    return ScenarioSet(xi=rng.standard_normal((count, dim)), seed=seed)


def _scenario_terms(kind, f_s, incumbent, beta, epsilon):
    """Acquisition value and d value / d f_s for a scenario-objective vector."""
    S = f_s.size
    if kind == ObjectiveKind.MEAN:
        return float(np.mean(f_s)), np.full(S, 1.0 / S)
    if kind == ObjectiveKind.SAA_LCB:
        if S == 1:
            # degenerate subset (partially solved point): no spread estimate
            return float(f_s[0]), np.ones(1)
        mu = float(np.mean(f_s))
        dev = f_s - mu
        var = float(dev @ dev) / (S - 1)
        sig = np.sqrt(max(var, 1e-300))
        w = np.full(S, 1.0 / S) - beta * dev / ((S - 1) * sig)
        return mu - beta * sig, w
    t = f_s - incumbent
    if kind == ObjectiveKind.SAA_EI:
        return float(np.mean(np.minimum(0.0, t))), np.where(t < 0.0, 1.0 / S, 0.0)
    if kind == ObjectiveKind.SMOOTH_EI_SQRT:
        s = np.sqrt(t * t + epsilon)
        return float(np.mean(t - s)) / 2.0, (1.0 - t / s) / (2.0 * S)
    if kind == ObjectiveKind.SMOOTH_EI_SOFTPLUS:
        return float(np.mean(-np.logaddexp(0.0, -t))), expit(-t) / S
    raise ContractViolation(f"unknown objective kind {kind!r}")


class ScenarioNlp:
    """The built SAA NLP with a selectable acquisition objective."""

    def __init__(
        self,
        model: HybridModel,
        gp,
        scenarios: ScenarioSet,
        kind: ObjectiveKind,
        incumbent: float = None,
        beta: float = DEFAULT_BETA,
        epsilon: float = DEFAULT_EPSILON,
        eliminate_y: bool = True,
    ):
        kind = ObjectiveKind(kind)
        sp = model.space
        if scenarios.dim != sp.n_y:
            raise ContractViolation("scenario dimension must equal dim y")
        if kind in EI_KINDS and (incumbent is None or not np.isfinite(incumbent)):
            raise ContractViolation(f"{kind.value} requires a finite incumbent")
        if kind == ObjectiveKind.SAA_LCB and scenarios.count == 1:
            raise ContractViolation("saa-lcb needs at least two scenarios")
        if gp.output_dim != sp.n_y:
            raise ContractViolation("GP output dimension must equal dim y")

        self.model = model
        self.gp = gp
        self.scenarios = scenarios
        self.kind = kind
        self.incumbent = incumbent
        self.beta = beta
        self.epsilon = epsilon
        self.eliminate_y = eliminate_y

        self.S = scenarios.count
        self.n_u = sp.n_u
        self.n_x = sp.n_x
        self.n_y = sp.n_y
        self.n_var = self.n_u + self.S * self.n_x + (0 if eliminate_y else self.S * self.n_y)
        self.n_con = self.S * self.n_x + (0 if eliminate_y else self.S * self.n_y)

        names = sp.all_names()
        self._program = exprs.compile_program(
            [model.objective.expression] + list(model.residuals.expressions), names
        )
        # regressor index map: ("u", j) or ("x", j)
        self._reg_map = []
        for r in model.binding.regressors:
            if r in sp.decision_names:
                self._reg_map.append(("u", sp.decision_names.index(r)))
            else:
                self._reg_map.append(("x", sp.dependent_names.index(r)))
        self._cache_key = None
        self._cache = None

        lower = [sp.u_lower] + [sp.x_lower] * self.S
        upper = [sp.u_upper] + [sp.x_upper] * self.S
        if not eliminate_y:
            lower += [np.full(self.n_y, -np.inf)] * self.S
            upper += [np.full(self.n_y, np.inf)] * self.S
        self.lower = np.concatenate(lower)
        self.upper = np.concatenate(upper)
        self.blocks = [
            (
                slice(s * self.n_x, (s + 1) * self.n_x),
                list(range(self.n_u))
                + list(range(self.n_u + s * self.n_x, self.n_u + (s + 1) * self.n_x)),
            )
            for s in range(self.S)
        ]

    # ------------------------------------------------------------------

    def split(self, z):
        z = np.asarray(z, dtype=float)
        u = z[: self.n_u]
        X = z[self.n_u : self.n_u + self.S * self.n_x].reshape(self.S, self.n_x)
        if self.eliminate_y:
            return u, X, None
        Y = z[self.n_u + self.S * self.n_x :].reshape(self.S, self.n_y)
        return u, X, Y

    def _gp_terms(self, u, X):
        """GP output per scenario and its chain-rule pieces."""
        S = self.S
        R = np.empty((S, len(self._reg_map)))
        for k, (which, j) in enumerate(self._reg_map):
            R[:, k] = u[j] if which == "u" else X[:, j]
        mean, std, dmean, dstd = self.gp.posterior_eval_many(R)
        y_raw = mean + std * self.scenarios.xi
        dy_dr = dmean + self.scenarios.xi[:, :, None] * dstd  # (S, Q, n_r)
        if self.model.binding.transform == "exp":
            y = np.exp(y_raw)
            dy_dr = y[:, :, None] * dy_dr
        else:
            y = y_raw
        return y, dy_dr

    def _core(self, z):
        key = np.asarray(z, dtype=float).tobytes()
        if key == self._cache_key:
            return self._cache
        sp = self.model.space
        u, X, Y = self.split(z)
        S = self.S

        if self.eliminate_y:
            y, dy_dr = self._gp_terms(u, X)
        else:
            y = Y
            dy_dr = None

        env = {}
        for j, n in enumerate(sp.decision_names):
            env[n] = np.full(S, u[j])
        for j, n in enumerate(sp.dependent_names):
            env[n] = X[:, j]
        for q, n in enumerate(sp.output_names):
            env[n] = y[:, q]
        vals, grads = self._program(env)

        def chain(g):
            """Map per-name adjoint arrays to (d_du, d_dX[, d_dY]) blocks."""
            d_du = np.zeros((S, self.n_u))
            d_dX = np.zeros((S, self.n_x))
            d_dY = np.zeros((S, self.n_y)) if not self.eliminate_y else None
            for j, n in enumerate(sp.decision_names):
                if n in g:
                    d_du[:, j] += np.broadcast_to(g[n], (S,))
            for j, n in enumerate(sp.dependent_names):
                if n in g:
                    d_dX[:, j] += np.broadcast_to(g[n], (S,))
            for q, n in enumerate(sp.output_names):
                if n not in g:
                    continue
                gy = np.broadcast_to(g[n], (S,))
                if self.eliminate_y:
                    for k, (which, j) in enumerate(self._reg_map):
                        contrib = gy * dy_dr[:, q, k]
                        if which == "u":
                            d_du[:, j] += contrib
                        else:
                            d_dX[:, j] += contrib
                else:
                    d_dY[:, q] += gy
            return d_du, d_dX, d_dY

        f_s = np.broadcast_to(np.asarray(vals[0], dtype=float), (S,)).copy()
        df = chain(grads[0])
        g_vals = [np.broadcast_to(np.asarray(v, dtype=float), (S,)) for v in vals[1:]]
        g_chains = [chain(g) for g in grads[1:]]

        core = {
            "u": u,
            "X": X,
            "Y": Y,
            "y": y,
            "dy_dr": dy_dr,
            "f_s": f_s,
            "df": df,
            "g_vals": g_vals,
            "g_chains": g_chains,
        }
        self._cache_key = key
        self._cache = core
        return core

    # ------------------------------------------------------------------

    def scenario_objectives(self, z):
        return self._core(z)["f_s"].copy()

    def objective(self, z):
        value, _ = _scenario_terms(
            self.kind, self._core(z)["f_s"], self.incumbent, self.beta, self.epsilon
        )
        return value

    def gradient(self, z):
        core = self._core(z)
        _, w = _scenario_terms(self.kind, core["f_s"], self.incumbent, self.beta, self.epsilon)
        d_du, d_dX, d_dY = core["df"]
        g = np.zeros(self.n_var)
        g[: self.n_u] = w @ d_du
        g[self.n_u : self.n_u + self.S * self.n_x] = (w[:, None] * d_dX).ravel()
        if not self.eliminate_y:
            g[self.n_u + self.S * self.n_x :] = (w[:, None] * d_dY).ravel()
        return g

    def residuals(self, z):
        core = self._core(z)
        res = np.empty(self.n_con)
        block = np.column_stack(core["g_vals"])  # (S, n_x)
        res[: self.S * self.n_x] = block.ravel()
        if not self.eliminate_y:
            u, X, Y = core["u"], core["X"], core["Y"]
            y_sub, _ = self._gp_terms(u, X)
            res[self.S * self.n_x :] = (Y - y_sub).ravel()
        return res

    def jacobian(self, z):
        core = self._core(z)
        S, n_x, n_u = self.S, self.n_x, self.n_u
        J = np.zeros((self.n_con, self.n_var))
        for i, (d_du, d_dX, d_dY) in enumerate(core["g_chains"]):
            rows = i + n_x * np.arange(S)
            J[rows, :n_u] = d_du
            for s in range(S):
                J[rows[s], n_u + s * n_x : n_u + (s + 1) * n_x] = d_dX[s]
                if not self.eliminate_y:
                    off = n_u + S * n_x + s * self.n_y
                    J[rows[s], off : off + self.n_y] = d_dY[s]
        if not self.eliminate_y:
            u, X, _ = core["u"], core["X"], core["Y"]
            _, dy_dr = self._gp_terms(u, X)
            for s in range(S):
                for q in range(self.n_y):
                    row = S * n_x + s * self.n_y + q
                    J[row, n_u + S * n_x + s * self.n_y + q] = 1.0
                    for k, (which, j) in enumerate(self._reg_map):
                        val = -dy_dr[s, q, k]
                        if which == "u":
                            J[row, j] += val
                        else:
                            J[row, n_u + s * n_x + j] += val
        return J

    def as_nlp_problem(self) -> NlpProblem:
        return NlpProblem(
            n=self.n_var,
            objective=self.objective,
            gradient=self.gradient,
            lower=self.lower,
            upper=self.upper,
            residuals=self.residuals,
            jacobian=self.jacobian,
            blocks=self.blocks,
        )


def build(
    model: HybridModel,
    gp,
    scenarios: ScenarioSet,
    objective_kind,
    incumbent: float = None,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
    eliminate_y: bool = True,
) -> ScenarioNlp:
    """Construct the SAA NLP for a validated model and fitted GP."""
    return ScenarioNlp(
        model, gp, scenarios, objective_kind, incumbent, beta, epsilon, eliminate_y
    )


# ---------------------------------------------------------------------------
# batched state propagation (used for initial guesses and surface grids)


def propagate_states(
    model: HybridModel,
    gp,
    U: np.ndarray,
    Xi: np.ndarray,
    x0: np.ndarray = None,
    tol: float = 1e-10,
    max_iter: int = 60,
):
    """Solve g(x, y(u, x, xi), u) = 0 for each row of (U, Xi) in batch.

    Damped Newton vectorized over all rows; returns (X, converged_mask).
    Used to initialize scenario states from a decision guess and to
    evaluate acquisition surfaces on grids.
    """
    sp = model.space
    U = np.atleast_2d(np.asarray(U, dtype=float))
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    P = U.shape[0]
    n_x = sp.n_x
    program = exprs.compile_program(
        list(model.residuals.expressions), sp.all_names()
    )
    reg_map = []
    for r in model.binding.regressors:
        if r in sp.decision_names:
            reg_map.append(("u", sp.decision_names.index(r)))
        else:
            reg_map.append(("x", sp.dependent_names.index(r)))

    margin = 1e-9 * np.maximum(1.0, np.abs(sp.x_upper - sp.x_lower))
    lo = np.where(np.isfinite(sp.x_lower), sp.x_lower + margin, -np.inf)
    hi = np.where(np.isfinite(sp.x_upper), sp.x_upper - margin, np.inf)

    if x0 is None:
        mid = np.where(
            np.isfinite(sp.x_lower) & np.isfinite(sp.x_upper),
            0.5 * (sp.x_lower + sp.x_upper),
            0.0,
        )
        X = np.tile(mid, (P, 1))
    else:
        X = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
        if X.shape[0] == 1:
            X = np.tile(X, (P, 1))
    X = np.clip(X, lo, hi)

    def eval_rows(Xr, rows):
        m = rows.size
        R = np.empty((m, len(reg_map)))
        for k, (which, j) in enumerate(reg_map):
            R[:, k] = U[rows, j] if which == "u" else Xr[:, j]
        mean, std, dmean, dstd = gp.posterior_eval_many(R)
        xi = Xi[rows]
        y_raw = mean + std * xi
        dy_dr = dmean + xi[:, :, None] * dstd
        if model.binding.transform == "exp":
            y = np.exp(y_raw)
            dy_dr = y[:, :, None] * dy_dr
        else:
            y = y_raw
        env = {}
        for j, n in enumerate(sp.decision_names):
            env[n] = U[rows, j]
        for j, n in enumerate(sp.dependent_names):
            env[n] = Xr[:, j]
        for q, n in enumerate(sp.output_names):
            env[n] = y[:, q]
        vals, grads = program(env)
        res = np.column_stack([np.broadcast_to(v, (m,)) for v in vals])  # (m, n_x)
        J = np.zeros((m, n_x, n_x))
        for i, g in enumerate(grads):
            for j, n in enumerate(sp.dependent_names):
                if n in g:
                    J[:, i, j] += np.broadcast_to(g[n], (m,))
            for q, n in enumerate(sp.output_names):
                if n not in g:
                    continue
                gy = np.broadcast_to(g[n], (m,))
                for k, (which, j) in enumerate(reg_map):
                    if which == "x":
                        J[:, i, j] += gy * dy_dr[:, q, k]
        res = np.nan_to_num(res, nan=1e30, posinf=1e30, neginf=-1e30)
        return res, J

    all_rows = np.arange(P)
    res, J = eval_rows(X, all_rows)
    norm = np.max(np.abs(res), axis=1)
    dead = np.zeros(P, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero((norm > tol) & ~dead)
        if idx.size == 0:
            break
        Ja, ra = J[idx], res[idx]
        try:
            step = np.linalg.solve(Ja, -ra[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = np.stack(
                [np.linalg.lstsq(Ja[i], -ra[i], rcond=None)[0] for i in range(idx.size)]
            )
        remaining = np.arange(idx.size)
        t = np.ones(idx.size)
        for _half in range(30):
            rows = idx[remaining]
            trial = np.clip(X[rows] + t[remaining, None] * step[remaining], lo, hi)
            res_t, J_t = eval_rows(trial, rows)
            norm_t = np.max(np.abs(res_t), axis=1)
            good = norm_t < norm[rows] * (1 - 1e-6) + 1e-300
            acc = rows[good]
            X[acc] = trial[good]
            res[acc] = res_t[good]
            J[acc] = J_t[good]
            norm[acc] = norm_t[good]
            remaining = remaining[~good]
            if remaining.size == 0:
                break
            t[remaining] *= 0.5
        else:
            dead[idx[remaining]] = True
        if remaining.size:
            dead[idx[remaining]] = True
    converged = norm <= tol
    return X, converged


def acquisition_values(
    model: HybridModel,
    gp,
    scenarios: ScenarioSet,
    kind,
    U: np.ndarray,
    incumbent: float = None,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
):
    """Exact acquisition values at decision points (states solved per scenario).

    Scenario states that fail to solve contribute their no-improvement
    limit (the acquisition is computed over the solved subset; a fully
    unsolved point returns 0 for EI kinds and NaN otherwise).
    """
    kind = ObjectiveKind(kind)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    P = U.shape[0]
    S = scenarios.count
    sp = model.space
    U_rep = np.repeat(U, S, axis=0)
    Xi_rep = np.tile(scenarios.xi, (P, 1))
    X, ok = propagate_states(model, gp, U_rep, Xi_rep)
    program = exprs.compile_program([model.objective.expression], sp.all_names(), grads=False)

    # recompute y at solved states for the objective
    reg = []
    for r in model.binding.regressors:
        if r in sp.decision_names:
            reg.append(U_rep[:, sp.decision_names.index(r)])
        else:
            reg.append(X[:, sp.dependent_names.index(r)])
    mean, std, _, _ = gp.posterior_eval_many(np.column_stack(reg))
    y = mean + std * Xi_rep
    if model.binding.transform == "exp":
        y = np.exp(y)
    env = {}
    for j, n in enumerate(sp.decision_names):
        env[n] = U_rep[:, j]
    for j, n in enumerate(sp.dependent_names):
        env[n] = X[:, j]
    for q, n in enumerate(sp.output_names):
        env[n] = y[:, q]
    vals, _ = program(env)
    f = np.broadcast_to(np.asarray(vals[0], dtype=float), (P * S,)).reshape(P, S)
    ok = ok.reshape(P, S)

    out = np.empty(P)
    for p in range(P):
        f_s = f[p][ok[p]]
        if f_s.size == 0:
            out[p] = 0.0 if kind in EI_KINDS else np.nan
            continue
        value, _ = _scenario_terms(kind, f_s, incumbent, beta, epsilon)
        out[p] = value
    return out
