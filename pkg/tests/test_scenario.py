import numpy as np
import pytest

from hybridbo import scenario
from hybridbo.errors import ContractViolation
from hybridbo.sampling import latin_hypercube
from hybridbo.scenario import (
    ObjectiveKind,
    ScenarioNlp,
    _scenario_terms,
    acquisition_values,
    propagate_states,
    sample_scenarios,
)
from hybridbo.solver import multistart_solve

EPS = scenario.DEFAULT_EPSILON


def test_sample_scenarios_shape_and_determinism():
    a = sample_scenarios(25, 1, [3, 2, 1])
    b = sample_scenarios(25, 1, [3, 2, 1])
    assert a.xi.shape == (25, 1)
    assert np.array_equal(a.xi, b.xi)
    assert not np.array_equal(a.xi, sample_scenarios(25, 1, [3, 2, 2]).xi)
    with pytest.raises(ContractViolation):
        sample_scenarios(0, 1, 0)


def test_saa_ei_hand_value():
    f_s = np.array([1.0, 2.0, -1.0, 0.0])
    val, w = _scenario_terms(ObjectiveKind.SAA_EI, f_s, 0.0, 2.0, EPS)
    assert val == pytest.approx(-0.25)
    assert np.array_equal(w, [0.0, 0.0, 0.25, 0.0])


def test_large_sample_moments():
    scen = sample_scenarios(100_000, 2, 0)
    assert np.max(np.abs(scen.xi.mean(axis=0))) <= 3.0 / np.sqrt(100_000)
    assert np.allclose(np.cov(scen.xi.T), np.eye(2), atol=0.02)


def test_saa_ei_zero_without_improvement():
    f_s = np.array([1.0, 2.0, 3.0])
    val, w = _scenario_terms(ObjectiveKind.SAA_EI, f_s, 0.5, 2.0, EPS)
    assert val == 0.0
    assert np.array_equal(w, np.zeros(3))


def test_saa_ei_monotone_in_incumbent():
    rng = np.random.default_rng(2)
    f_s = rng.normal(size=15)
    incs = np.linspace(-3, 3, 25)
    vals = [_scenario_terms(ObjectiveKind.SAA_EI, f_s, inc, 2.0, EPS)[0] for inc in incs]
    # lowering the incumbent weakly increases SAA-EI toward zero
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_saa_ei_never_positive():
    rng = np.random.default_rng(0)
    for _ in range(20):
        f_s = rng.normal(size=11)
        inc = rng.normal()
        val, _ = _scenario_terms(ObjectiveKind.SAA_EI, f_s, inc, 2.0, EPS)
        assert val <= 0.0


def test_smooth_kinds_at_the_kink():
    f_s = np.zeros(4)
    val, _ = _scenario_terms(ObjectiveKind.SMOOTH_EI_SQRT, f_s, 0.0, 2.0, EPS)
    assert val == pytest.approx(-np.sqrt(EPS) / 2.0)
    val, _ = _scenario_terms(ObjectiveKind.SMOOTH_EI_SOFTPLUS, f_s, 0.0, 2.0, EPS)
    assert val == pytest.approx(-np.log(2.0))


def test_smooth_sqrt_within_half_sqrt_eps_of_saa_ei():
    rng = np.random.default_rng(1)
    for _ in range(30):
        f_s = rng.normal(scale=3.0, size=25)
        inc = rng.normal()
        exact, _ = _scenario_terms(ObjectiveKind.SAA_EI, f_s, inc, 2.0, EPS)
        smooth, _ = _scenario_terms(ObjectiveKind.SMOOTH_EI_SQRT, f_s, inc, 2.0, EPS)
        assert smooth <= exact + 1e-15
        assert abs(smooth - exact) <= np.sqrt(EPS) / 2.0 + 1e-15


def test_lcb_with_zero_beta_equals_mean():
    f_s = np.array([0.3, -1.1, 2.0, 0.8, -0.4])
    lcb, _ = _scenario_terms(ObjectiveKind.SAA_LCB, f_s, None, 0.0, EPS)
    mean, _ = _scenario_terms(ObjectiveKind.MEAN, f_s, None, 0.0, EPS)
    assert lcb == pytest.approx(mean)


def test_lcb_matches_sample_statistics():
    f_s = np.array([1.0, 2.0, 3.0, 4.0])
    val, _ = _scenario_terms(ObjectiveKind.SAA_LCB, f_s, None, 2.0, EPS)
    assert val == pytest.approx(np.mean(f_s) - 2.0 * np.std(f_s, ddof=1))


@pytest.mark.parametrize(
    "kind",
    [
        ObjectiveKind.MEAN,
        ObjectiveKind.SAA_LCB,
        ObjectiveKind.SMOOTH_EI_SQRT,
        ObjectiveKind.SMOOTH_EI_SOFTPLUS,
    ],
)
def test_scenario_weights_match_finite_differences(kind):
    rng = np.random.default_rng(4)
    f_s = rng.normal(scale=2.0, size=9)
    inc = 0.371
    _, w = _scenario_terms(kind, f_s, inc, 2.0, EPS)
    h = 1e-6
    for s in range(9):
        fp, fm = f_s.copy(), f_s.copy()
        fp[s] += h
        fm[s] -= h
        vp, _ = _scenario_terms(kind, fp, inc, 2.0, EPS)
        vm, _ = _scenario_terms(kind, fm, inc, 2.0, EPS)
        assert w[s] == pytest.approx((vp - vm) / (2 * h), rel=1e-5, abs=1e-8)


# ---------------------------------------------------------------------------
# built NLPs on the univariate benchmark


def _nlp(illustrative, gp, kind, S=7, eliminate_y=True):
    scen = sample_scenarios(S, 1, [0, 2, 0])
    return ScenarioNlp(
        illustrative.model, gp, scen, kind, incumbent=0.5, eliminate_y=eliminate_y
    )


def _random_z(nlp, seed=5):
    rng = np.random.default_rng(seed)
    lo = np.where(np.isfinite(nlp.lower), nlp.lower, -2.0)
    hi = np.where(np.isfinite(nlp.upper), nlp.upper, 2.0)
    return rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))


@pytest.mark.parametrize("kind", list(ObjectiveKind))
def test_nlp_gradient_matches_finite_differences(kind, illustrative, illustrative_gp):
    gp, _ = illustrative_gp
    nlp = _nlp(illustrative, gp, kind)
    z = _random_z(nlp)
    g = nlp.gradient(z)
    h = 1e-6
    for j in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[j] += h
        zm[j] -= h
        fd = (nlp.objective(zp) - nlp.objective(zm)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=2e-4, abs=2e-6)


@pytest.mark.parametrize("eliminate_y", [True, False])
def test_nlp_jacobian_matches_finite_differences(eliminate_y, illustrative, illustrative_gp):
    gp, _ = illustrative_gp
    nlp = _nlp(illustrative, gp, ObjectiveKind.MEAN, S=4, eliminate_y=eliminate_y)
    z = _random_z(nlp, seed=9)
    J = nlp.jacobian(z)
    h = 1e-6
    for j in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[j] += h
        zm[j] -= h
        fd = (nlp.residuals(zp) - nlp.residuals(zm)) / (2 * h)
        assert np.allclose(J[:, j], fd, rtol=2e-4, atol=2e-6)


def test_explicit_formulation_is_equivalent(illustrative, illustrative_gp):
    gp, _ = illustrative_gp
    elim = _nlp(illustrative, gp, ObjectiveKind.MEAN, S=5, eliminate_y=True)
    expl = _nlp(illustrative, gp, ObjectiveKind.MEAN, S=5, eliminate_y=False)
    z = _random_z(elim, seed=11)
    core = elim._core(z)
    z_expl = np.concatenate([z, core["y"].ravel()])
    assert expl.objective(z_expl) == pytest.approx(elim.objective(z), abs=1e-12)
    res = expl.residuals(z_expl)
    assert np.allclose(res[: elim.n_con], elim.residuals(z), atol=1e-12)
    # substitution constraints hold exactly at the lifted point
    assert np.max(np.abs(res[elim.n_con :])) <= 1e-12


def test_single_mean_scenario_reduces_to_deterministic_problem(illustrative, illustrative_gp):
    # S = 1 with xi = 0 substitutes the posterior mean for the unknown output
    gp, _ = illustrative_gp
    scen = scenario.ScenarioSet(xi=np.zeros((1, 1)), seed=None)
    nlp = ScenarioNlp(illustrative.model, gp, scen, ObjectiveKind.MEAN)
    u, x = 0.6, -0.2
    mean, _, _, _ = gp.posterior_eval(np.array([u]))
    env = {"u": u, "x": x, "y": float(mean[0])}
    from hybridbo import exprs

    f_expect = exprs.evaluate(illustrative.model.objective.expression, env)
    g_expect = exprs.evaluate(illustrative.model.residuals.expressions[0], env)
    z = np.array([u, x])
    assert nlp.objective(z) == pytest.approx(float(f_expect), abs=1e-12)
    assert nlp.residuals(z)[0] == pytest.approx(float(g_expect), abs=1e-12)


def test_nlp_validation():
    import types

    fake_gp = types.SimpleNamespace(output_dim=1)
    from hybridbo.benchmarks import get_benchmark

    bench = get_benchmark("illustrative")
    scen2 = sample_scenarios(5, 2, 0)
    with pytest.raises(ContractViolation):
        ScenarioNlp(bench.model, fake_gp, scen2, ObjectiveKind.MEAN)
    scen = sample_scenarios(5, 1, 0)
    with pytest.raises(ContractViolation):
        ScenarioNlp(bench.model, fake_gp, scen, ObjectiveKind.SAA_EI, incumbent=None)
    with pytest.raises(ContractViolation):
        ScenarioNlp(bench.model, fake_gp, scen, ObjectiveKind.SAA_EI, incumbent=np.inf)
    with pytest.raises(ContractViolation):
        ScenarioNlp(
            bench.model, fake_gp, sample_scenarios(1, 1, 0), ObjectiveKind.SAA_LCB
        )


def test_propagate_states_solves_residuals(illustrative, illustrative_gp):
    gp, _ = illustrative_gp
    scen = sample_scenarios(6, 1, [0, 2, 0])
    U = np.linspace(-1.8, 1.8, 5)[:, None]
    U_rep = np.repeat(U, 6, axis=0)
    Xi_rep = np.tile(scen.xi, (5, 1))
    X, ok = propagate_states(illustrative.model, gp, U_rep, Xi_rep)
    assert np.all(ok)
    mean, std, _, _ = gp.posterior_eval_many(U_rep)
    y = mean + std * Xi_rep
    resid = X[:, 0] + np.exp(X[:, 0]) - y[:, 0]
    assert np.max(np.abs(resid)) <= 1e-9


def test_acquisition_values_match_nlp_objective(illustrative, illustrative_gp):
    gp, _ = illustrative_gp
    S = 6
    scen = sample_scenarios(S, 1, [0, 2, 0])
    for kind in [ObjectiveKind.MEAN, ObjectiveKind.SAA_EI, ObjectiveKind.SAA_LCB]:
        nlp = ScenarioNlp(illustrative.model, gp, scen, kind, incumbent=0.5)
        u = np.array([0.4])
        X, ok = propagate_states(
            illustrative.model, gp, np.tile(u, (S, 1)), scen.xi
        )
        assert np.all(ok)
        z = np.concatenate([u, X.ravel()])
        vals = acquisition_values(
            illustrative.model, gp, scen, kind, u[None, :], incumbent=0.5
        )
        assert vals[0] == pytest.approx(nlp.objective(z), abs=1e-8)


def test_acquisition_minimum_matches_dense_grid(illustrative, illustrative_gp):
    gp, _ = illustrative_gp
    S = 7
    scen = sample_scenarios(S, 1, [0, 2, 0])
    nlp = ScenarioNlp(illustrative.model, gp, scen, ObjectiveKind.MEAN)
    problem = nlp.as_nlp_problem()
    rng = np.random.default_rng(17)
    U0 = latin_hypercube(10, illustrative.u_lower, illustrative.u_upper, rng)
    X0, _ = propagate_states(
        illustrative.model, gp, np.repeat(U0, S, axis=0), np.tile(scen.xi, (10, 1))
    )
    starts = np.hstack([U0, X0.reshape(10, S)])
    sol = multistart_solve(problem, 10, lambda n, r: starts, rng)

    U_grid = np.linspace(-2.0, 2.0, 401)[:, None]
    grid_vals = acquisition_values(
        illustrative.model, gp, scen, ObjectiveKind.MEAN, U_grid
    )
    assert sol.objective <= np.nanmin(grid_vals) + 1e-6
