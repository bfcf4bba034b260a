"""Declarative hybrid model: decision/dependent variables, mechanistic
residuals, objective, GP binding, and measurement designation.

Residuals and objective are expression trees over named variables, which
gives analytic Jacobians and lets models round-trip through definition
files (schema documented in the cli module).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exprs
from .errors import ContractViolation, EvaluationError

__all__ = [
    "VariableSpace",
    "ResidualSystem",
    "ObjectiveSpec",
    "GpBinding",
    "MeasurementMap",
    "HybridModel",
    "ValidationReport",
    "validate",
    "evaluate",
    "model_to_file",
    "model_from_file",
]


@dataclass
class VariableSpace:
    decision_names: list[str]
    u_lower: np.ndarray
    u_upper: np.ndarray
    dependent_names: list[str]
    x_lower: np.ndarray
    x_upper: np.ndarray
    output_names: list[str]

    def __post_init__(self):
        self.u_lower = np.asarray(self.u_lower, dtype=float)
        self.u_upper = np.asarray(self.u_upper, dtype=float)
        self.x_lower = np.asarray(self.x_lower, dtype=float)
        self.x_upper = np.asarray(self.x_upper, dtype=float)

    @property
    def n_u(self):
        return len(self.decision_names)

    @property
    def n_x(self):
        return len(self.dependent_names)

    @property
    def n_y(self):
        return len(self.output_names)

    def all_names(self):
        return self.decision_names + self.dependent_names + self.output_names


@dataclass
class ResidualSystem:
    """Equality residuals g(x, y, u) as expression trees, one per component."""

    expressions: list[exprs.Expr]

    def evaluate(self, env):
        return np.array([exprs.evaluate(e, env) for e in self.expressions], dtype=float)

    def jacobian(self, env, names):
        """Analytic Jacobian rows via reverse-mode differentiation."""
        J = np.zeros((len(self.expressions), len(names)))
        for i, e in enumerate(self.expressions):
            _, g = exprs.value_and_grad(e, env, names)
            J[i] = [np.asarray(g[n]).reshape(()) for n in names]
        return J


@dataclass
class ObjectiveSpec:
    expression: exprs.Expr

    def evaluate(self, env):
        return float(exprs.evaluate(self.expression, env))

    def gradient(self, env, names):
        _, g = exprs.value_and_grad(self.expression, env, names)
        return np.array([np.asarray(g[n]).reshape(()) for n in names])


@dataclass
class GpBinding:
    """How the GP replaces the unknown equations.

    ``regressors`` is the ordered subset of decision/dependent variable
    names forming the GP inputs; ``transform`` maps the raw GP output to
    the model's y variable ("identity" or "exp").
    """

    regressors: list[str]
    transform: str = "identity"
    gp: object = None
    standardize_mask: list[bool] | None = None

    def __post_init__(self):
        if self.transform not in ("identity", "exp"):
            raise ContractViolation(f"unknown GP output transform {self.transform!r}")
        if not self.regressors:
            raise ContractViolation("GP binding needs at least one regressor")


@dataclass
class MeasurementMap:
    """Which dependent entries are measured; the rest are reconstructed."""

    measured: list[str]


@dataclass
class HybridModel:
    name: str
    space: VariableSpace
    residuals: ResidualSystem
    objective: ObjectiveSpec
    binding: GpBinding
    measurement: MeasurementMap


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self):
        return not self.issues


def validate(model: HybridModel) -> ValidationReport:
    """Structural checks; returns a report rather than raising."""
    issues = []
    sp = model.space
    names = sp.all_names()
    if len(set(names)) != len(names):
        issues.append("variable names are not unique")
    if sp.n_y < 1:
        issues.append("at least one unknown-equation output is required")
    if len(model.residuals.expressions) != sp.n_x:
        issues.append(
            f"underdetermined or overdetermined system: dim g = "
            f"{len(model.residuals.expressions)} but dim x = {sp.n_x}"
        )
    if np.any(sp.u_lower >= sp.u_upper):
        issues.append("decision bounds must satisfy lower < upper componentwise")
    known = set(names)
    for e in model.residuals.expressions + [model.objective.expression]:
        unknown = exprs.free_variables(e) - known
        if unknown:
            issues.append(f"expression references undeclared variables {sorted(unknown)}")
    for r in model.binding.regressors:
        if r not in sp.decision_names + sp.dependent_names:
            issues.append(f"GP regressor {r!r} is not a decision or dependent variable")
    if model.binding.gp is not None and model.binding.gp.output_dim != sp.n_y:
        issues.append("GP output dimension does not equal dim y")
    if len(model.measurement.measured) != sp.n_y:
        issues.append("measured-variable count must equal dim y (zero-DoF reconstruction)")
    for mname in model.measurement.measured:
        if mname not in sp.dependent_names + sp.output_names:
            issues.append(f"measured variable {mname!r} is not a dependent variable")
    return ValidationReport(issues)


def _env(model, u, x, y):
    sp = model.space
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if u.size != sp.n_u or x.size != sp.n_x or y.size != sp.n_y:
        raise ContractViolation("evaluate: dimension mismatch")
    env = dict(zip(sp.decision_names, u))
    env.update(zip(sp.dependent_names, x))
    env.update(zip(sp.output_names, y))
    return env


def evaluate(model: HybridModel, u, x, y):
    """Objective and residual vector at a point; raises on non-finite results."""
    env = _env(model, u, x, y)
    f = model.objective.evaluate(env)
    g = model.residuals.evaluate(env)
    if not np.isfinite(f):
        raise EvaluationError("objective is non-finite")
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise EvaluationError(f"residual component {bad} is non-finite")
    return f, g


def residual_jacobian(model: HybridModel, u, x, y, names=None):
    env = _env(model, u, x, y)
    if names is None:
        names = model.space.all_names()
    return model.residuals.jacobian(env, names)


# ---------------------------------------------------------------------------
# model definition files (plain hierarchical key-value text)


def _fmt_list(values):
    return ", ".join(str(v) for v in values)


def model_to_file(model: HybridModel, path):
    sp = model.space
    lines = [f"model.name = {model.name}"]
    for i, n in enumerate(sp.decision_names):
        lines.append(f"decision.{n}.lower = {float(sp.u_lower[i])!r}")
        lines.append(f"decision.{n}.upper = {float(sp.u_upper[i])!r}")
    for i, n in enumerate(sp.dependent_names):
        lines.append(f"dependent.{n}.lower = {float(sp.x_lower[i])!r}")
        lines.append(f"dependent.{n}.upper = {float(sp.x_upper[i])!r}")
    for n in sp.output_names:
        lines.append(f"output.{n} = unknown_equation")
    for i, e in enumerate(model.residuals.expressions):
        lines.append(f"residual.g{i + 1} = {exprs.format_expression(e)}")
    lines.append(f"objective.f = {exprs.format_expression(model.objective.expression)}")
    lines.append(f"gp.regressors = {_fmt_list(model.binding.regressors)}")
    lines.append(f"gp.transform = {model.binding.transform}")
    lines.append(f"measurement.measured = {_fmt_list(model.measurement.measured)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_keyvalue_file(path) -> dict[str, str]:
    """Parse 'dotted.key = value' lines; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractViolation(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def model_from_file(path) -> HybridModel:
    kv = parse_keyvalue_file(path)
    decisions, dependents, outputs = [], [], []
    for key in kv:
        parts = key.split(".")
        if parts[0] == "decision" and parts[2] == "lower":
            decisions.append(parts[1])
        elif parts[0] == "dependent" and parts[2] == "lower":
            dependents.append(parts[1])
        elif parts[0] == "output":
            outputs.append(parts[1])
    space = VariableSpace(
        decision_names=decisions,
        u_lower=[float(kv[f"decision.{n}.lower"]) for n in decisions],
        u_upper=[float(kv[f"decision.{n}.upper"]) for n in decisions],
        dependent_names=dependents,
        x_lower=[float(kv[f"dependent.{n}.lower"]) for n in dependents],
        x_upper=[float(kv[f"dependent.{n}.upper"]) for n in dependents],
        output_names=outputs,
    )
    residual_keys = sorted(
        (k for k in kv if k.startswith("residual.")),
        key=lambda k: int(k.split(".g")[1]),
    )
    residuals = ResidualSystem([exprs.parse_expression(kv[k]) for k in residual_keys])
    objective = ObjectiveSpec(exprs.parse_expression(kv["objective.f"]))
    binding = GpBinding(
        regressors=[s.strip() for s in kv["gp.regressors"].split(",")],
        transform=kv.get("gp.transform", "identity"),
    )
    measurement = MeasurementMap(
        measured=[s.strip() for s in kv["measurement.measured"].split(",")]
    )
    return HybridModel(
        name=kv.get("model.name", "unnamed"),
        space=space,
        residuals=residuals,
        objective=objective,
        binding=binding,
        measurement=measurement,
    )
