"""BO loop orchestration: hybrid SAA runs plus standard-BO and random baselines.

All randomness is keyed as ``default_rng([seed, tag, iteration])`` so any
iteration can be replayed in isolation; resuming from a checkpoint yields
the same trial sequence as an uninterrupted run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import scenario as sc
from .errors import ContractViolation, FitError, MultistartError
from .gp import GpPosterior, TrainingSet
from .records import ExperimentState, TrialRecord
from .sampling import latin_hypercube
from .solver import NlpProblem, multistart_solve

__all__ = [
    "LoopConfig",
    "METHODS",
    "initialize",
    "bo_iterate",
    "run_experiment",
    "regret",
    "analytic_ei",
]

# rng stream tags
_TAG_INIT = 0
_TAG_TRIAL = 1
_TAG_SCENARIO = 2
_TAG_STARTS = 3
_TAG_GP_FIT = 4
_TAG_RANDOM = 5

METHODS = (
    "hybrid-saa-ei",
    "hybrid-mean",
    "hybrid-lcb",
    "hybrid-smooth-ei-sqrt",
    "hybrid-smooth-ei-softplus",
    "standard-ei",
    "random",
)

_HYBRID_KINDS = {
    "hybrid-saa-ei": sc.ObjectiveKind.SAA_EI,
    "hybrid-mean": sc.ObjectiveKind.MEAN,
    "hybrid-lcb": sc.ObjectiveKind.SAA_LCB,
    "hybrid-smooth-ei-sqrt": sc.ObjectiveKind.SMOOTH_EI_SQRT,
    "hybrid-smooth-ei-softplus": sc.ObjectiveKind.SMOOTH_EI_SOFTPLUS,
}


@dataclass(frozen=True)
class LoopConfig:
    method: str
    n_init: int = 2
    iterations: int = 10
    scenarios: int = sc.DEFAULT_SCENARIOS
    n_starts: int = 100
    beta: float = sc.DEFAULT_BETA
    epsilon: float = sc.DEFAULT_EPSILON
    gp_fit_starts: int = 8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method {self.method!r}")
        if self.n_init < 1 or self.iterations < 0:
            raise ContractViolation("n_init must be >= 1 and iterations >= 0")
        if self.scenarios < 1 or self.n_starts < 1:
            raise ContractViolation("scenarios and n_starts must be positive")


def regret(f_prime: float, f_star: float) -> float:
    """Incumbent distance from the reference optimum; +inf if no incumbent."""
    if not np.isfinite(f_prime):
        return np.inf
    return float(f_prime) - float(f_star)


def initialize(benchmark, config: LoopConfig, seed: int) -> ExperimentState:
    """Run the space-filling initial design and record all trials."""
    state = ExperimentState(benchmark=benchmark.name, method=config.method, seed=seed)
    rng = np.random.default_rng([seed, _TAG_INIT])
    U = latin_hypercube(config.n_init, benchmark.u_lower, benchmark.u_upper, rng)
    for i, u in enumerate(U):
        trial_rng = np.random.default_rng([seed, _TAG_TRIAL, i])
        state.records.append(benchmark.run_trial(i, u, trial_rng, provenance="initial"))
    return state


def _fit_hybrid_gp(benchmark, state, config, iteration) -> GpPosterior:
    data = TrainingSet(
        np.array([r.gp_input for r in state.records]),
        np.array([r.gp_label for r in state.records]),
        standardize_mask=benchmark.gp_standardize_mask,
    )
    rng = np.random.default_rng([state.seed, _TAG_GP_FIT, iteration])
    return GpPosterior.fit(data, config.gp_fit_starts, rng)


def _fit_standard_gp(benchmark, state, config, iteration) -> GpPosterior:
    data = TrainingSet(
        np.array([np.asarray(r.u, dtype=float) for r in state.records]),
        np.array([[benchmark.standard_bo_label(r)] for r in state.records]),
    )
    rng = np.random.default_rng([state.seed, _TAG_GP_FIT, iteration])
    return GpPosterior.fit(data, config.gp_fit_starts, rng)


def _hybrid_suggest(benchmark, state, config, iteration):
    """Multistart solve of the SAA acquisition NLP; returns (u, provenance)."""
    gp = _fit_hybrid_gp(benchmark, state, config, iteration)
    state.gp = gp
    model = benchmark.model
    scen = sc.sample_scenarios(
        config.scenarios, model.space.n_y, [state.seed, _TAG_SCENARIO, iteration]
    )
    kind = _HYBRID_KINDS[config.method]
    incumbent = state.incumbent
    if kind in sc.EI_KINDS and not np.isfinite(incumbent):
        # no feasible trial yet: fall back to the greedy mean objective
        kind = sc.ObjectiveKind.MEAN
    nlp = sc.build(
        model,
        gp,
        scen,
        kind,
        incumbent=incumbent if np.isfinite(incumbent) else None,
        beta=config.beta,
        epsilon=config.epsilon,
    )

    start_rng = np.random.default_rng([state.seed, _TAG_STARTS, iteration])
    U_probe = latin_hypercube(
        config.n_starts, benchmark.u_lower, benchmark.u_upper, start_rng
    )
    S = scen.count
    U_rep = np.repeat(U_probe, S, axis=0)
    Xi_rep = np.tile(scen.xi, (config.n_starts, 1))
    X_all, _ = sc.propagate_states(model, gp, U_rep, Xi_rep)
    starts = np.hstack(
        [U_probe, X_all.reshape(config.n_starts, S * model.space.n_x)]
    )

    try:
        sol = multistart_solve(
            nlp.as_nlp_problem(), config.n_starts, lambda n, r: starts, start_rng
        )
        return sol.x[: model.space.n_u].copy(), "bo"
    except MultistartError:
        acq = sc.acquisition_values(
            model,
            gp,
            scen,
            kind,
            U_probe,
            incumbent=incumbent if np.isfinite(incumbent) else None,
            beta=config.beta,
            epsilon=config.epsilon,
        )
        acq = np.where(np.isfinite(acq), acq, np.inf)
        return U_probe[int(np.argmin(acq))].copy(), "fallback"


def analytic_ei(mu, sigma, incumbent):
    """Expected improvement for minimization: (f' - mu) Phi(z) + sigma phi(z)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = (incumbent - mu) / sigma
    return (incumbent - mu) * norm.cdf(z) + sigma * norm.pdf(z)


def _standard_suggest(benchmark, state, config, iteration):
    """Multistart maximization of the analytic EI on the decision box."""
    gp = _fit_standard_gp(benchmark, state, config, iteration)
    state.gp = gp
    labels = [benchmark.standard_bo_label(r) for r in state.records]
    incumbent = float(min(labels))
    n_u = len(benchmark.u_lower)

    def objective(u):
        mean, std, _, _ = gp.posterior_eval(u)
        return -float(analytic_ei(mean[0], std[0], incumbent))

    def gradient(u):
        mean, std, dmean, dstd = gp.posterior_eval(u)
        z = (incumbent - mean[0]) / std[0]
        # d EI = -dmu * Phi(z) + dsigma * phi(z)
        dei = -dmean[0] * norm.cdf(z) + dstd[0] * norm.pdf(z)
        return -dei

    problem = NlpProblem(
        n=n_u,
        objective=objective,
        gradient=gradient,
        lower=benchmark.u_lower,
        upper=benchmark.u_upper,
    )
    start_rng = np.random.default_rng([state.seed, _TAG_STARTS, iteration])
    try:
        sol = multistart_solve(
            problem,
            config.n_starts,
            lambda n, r: latin_hypercube(n, benchmark.u_lower, benchmark.u_upper, r),
            start_rng,
        )
        return sol.x.copy(), "bo"
    except MultistartError:
        probes = latin_hypercube(
            config.n_starts, benchmark.u_lower, benchmark.u_upper, start_rng
        )
        vals = [objective(u) for u in probes]
        return probes[int(np.argmin(vals))].copy(), "fallback"


def bo_iterate(benchmark, state: ExperimentState, config: LoopConfig) -> ExperimentState:
    """Run one acquisition-driven iteration and append exactly one trial."""
    iteration = state.iteration
    if config.method == "random":
        rng = np.random.default_rng([state.seed, _TAG_RANDOM, iteration])
        u = rng.uniform(benchmark.u_lower, benchmark.u_upper)
        provenance = "bo"
    elif config.method == "standard-ei":
        u, provenance = _standard_suggest(benchmark, state, config, iteration)
    else:
        u, provenance = _hybrid_suggest(benchmark, state, config, iteration)

    index = len(state.records)
    trial_rng = np.random.default_rng([state.seed, _TAG_TRIAL, index])
    state.records.append(benchmark.run_trial(index, u, trial_rng, provenance=provenance))
    state.iteration += 1
    return state


def run_experiment(
    benchmark, config: LoopConfig, seed: int, state: ExperimentState = None, on_iteration=None
) -> ExperimentState:
    """Full seeded run; pass a checkpointed ``state`` to resume."""
    if state is None:
        state = initialize(benchmark, config, seed)
        if on_iteration is not None:
            on_iteration(state)
    while state.iteration < config.iterations:
        bo_iterate(benchmark, state, config)
        if on_iteration is not None:
            on_iteration(state)
    return state
