import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbo import exprs


def _sample_tree():
    x, y, z = exprs.Var("x"), exprs.Var("y"), exprs.Var("z")
    return (
        (6.0 * x - 2.0) ** 2 * exprs.sin(12.0 * x - 4.0)
        + exprs.exp(y / (1.0 + x * x))
        - exprs.log(2.0 + exprs.sqrt(z * z + 1.0))
        + exprs.log10(1.5 + z * z)
        - y / (x - 5.0)
    )


def _fd_grad(f, env, names, h=1e-6):
    out = {}
    for n in names:
        ep, em = dict(env), dict(env)
        ep[n] = env[n] + h
        em[n] = env[n] - h
        out[n] = (f(ep) - f(em)) / (2 * h)
    return out


def test_evaluate_matches_numpy():
    x = exprs.Var("x")
    e = (6.0 * x - 2.0) ** 2 * exprs.sin(12.0 * x - 4.0)
    for v in [-1.0, 0.0, 0.3, 2.0]:
        expect = (6 * v - 2) ** 2 * np.sin(12 * v - 4)
        assert exprs.evaluate(e, {"x": v}) == pytest.approx(expect, rel=1e-14)


def test_operator_overloads_and_reflected_forms():
    x = exprs.Var("x")
    env = {"x": 3.0}
    cases = [
        (1.0 + x, 4.0),
        (x + 1.0, 4.0),
        (1.0 - x, -2.0),
        (2.0 * x, 6.0),
        (x / 2.0, 1.5),
        (12.0 / x, 4.0),
        (x**2, 9.0),
        (2.0**x, 8.0),
        (-x, -3.0),
    ]
    for e, expect in cases:
        assert exprs.evaluate(e, env) == pytest.approx(expect)


@given(
    x=st.floats(-2, 2),
    y=st.floats(-2, 2),
    z=st.floats(-2, 2),
)
@settings(max_examples=50, deadline=None)
def test_reverse_mode_gradient_matches_finite_differences(x, y, z):
    e = _sample_tree()
    env = {"x": x, "y": y, "z": z}
    val, grad = exprs.value_and_grad(e, env, ["x", "y", "z"])
    fd = _fd_grad(lambda en: float(exprs.evaluate(e, en)), env, ["x", "y", "z"])
    scale = max(1.0, *(abs(v) for v in fd.values()))
    for n in ["x", "y", "z"]:
        assert abs(float(grad[n]) - fd[n]) / scale < 1e-5


def test_gradient_broadcasts_over_arrays():
    e = _sample_tree()
    env = {"x": np.linspace(-1, 1, 7), "y": 0.5, "z": np.linspace(0, 2, 7)}
    val, grad = exprs.value_and_grad(e, env, ["x", "y", "z"])
    assert np.shape(grad["x"]) == (7,)
    assert np.shape(grad["y"]) == ()  # summed over the broadcast axis
    for i in range(7):
        envi = {"x": env["x"][i], "y": 0.5, "z": env["z"][i]}
        _, gi = exprs.value_and_grad(e, envi, ["x"])
        assert float(grad["x"][i]) == pytest.approx(float(gi["x"]), rel=1e-10)


def test_compiled_program_matches_interpreter():
    e = _sample_tree()
    x2 = exprs.Var("x") * exprs.Var("y")
    prog = exprs.compile_program([e, x2], ["x", "y", "z"])
    env = {
        "x": np.linspace(-1, 1, 11),
        "y": np.linspace(0.1, 0.9, 11),
        "z": np.linspace(-2, 2, 11),
    }
    vals, grads = prog(env)
    ref = exprs.evaluate(e, env)
    assert np.allclose(vals[0], ref, rtol=1e-14)
    assert np.allclose(vals[1], env["x"] * env["y"], rtol=1e-14)
    _, g_ref = exprs.value_and_grad(e, {k: v.copy() for k, v in env.items()})
    for n in ["x", "y", "z"]:
        assert np.allclose(np.asarray(grads[0][n], dtype=float), g_ref[n], rtol=1e-12)
    assert np.allclose(grads[1]["x"], env["y"])


def test_compiled_program_unknown_variable():
    with pytest.raises(KeyError):
        exprs.compile_program([exprs.Var("q")], ["x"])


def test_shared_subexpression_gradient():
    # s appears twice; adjoints must accumulate
    x = exprs.Var("x")
    s = exprs.sin(x)
    e = s * s + 3.0 * s
    _, g = exprs.value_and_grad(e, {"x": 0.7}, ["x"])
    expect = (2 * np.sin(0.7) + 3.0) * np.cos(0.7)
    assert float(g["x"]) == pytest.approx(expect, rel=1e-12)


def test_parse_format_round_trip():
    texts = [
        "(6.0 * x - 2.0) ** 2 * sin(12.0 * x - 4.0)",
        "exp(x) + x",
        "log10(p) - a / (c + T)",
        "-(x) + sqrt(y)",
        "2.0 ** x / log(y)",
    ]
    for text in texts:
        e = exprs.parse_expression(text)
        e2 = exprs.parse_expression(exprs.format_expression(e))
        env = {n: 1.3 for n in exprs.free_variables(e)}
        assert exprs.evaluate(e2, env) == pytest.approx(exprs.evaluate(e, env), rel=1e-14)


def test_parse_rejects_unsupported_syntax():
    for bad in ["__import__('os')", "x @ y", "f(x)", "x if y else z", "'s'"]:
        with pytest.raises(ValueError):
            exprs.parse_expression(bad)


def test_free_variables():
    e = _sample_tree()
    assert exprs.free_variables(e) == {"x", "y", "z"}
    assert exprs.free_variables(exprs.Const(1.0)) == set()
