import csv
import json
import os

import numpy as np
import pytest

from hybridbo import cli, loop


def _read_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _strip_wall_ms(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return [",".join(line.split(",")[:-1]) for line in lines]


def _run(args):
    return cli.main([str(a) for a in args])


def test_run_zero_iterations_writes_initial_design(illustrative, tmp_path):
    cfg = loop.LoopConfig(method="random", n_init=4, iterations=0)
    cli.run_seed(illustrative, cfg, 0, str(tmp_path))
    rows = _read_csv(tmp_path / "illustrative_random_seed0.csv")
    assert len(rows) == 4
    assert all(r["iteration"] == "0" for r in rows)


def test_csv_layout_and_incumbent_column(illustrative, tmp_path):
    cfg = loop.LoopConfig(method="random", n_init=2, iterations=3)
    cli.run_seed(illustrative, cfg, 1, str(tmp_path))
    rows = _read_csv(tmp_path / "illustrative_random_seed1.csv")
    assert len(rows) == 5
    assert [r["iteration"] for r in rows] == ["0", "0", "1", "2", "3"]
    inc = [float(r["incumbent"]) for r in rows]
    assert all(b <= a for a, b in zip(inc, inc[1:]))
    f_star = illustrative.reference_optimum()
    for r in rows:
        assert float(r["regret"]) == pytest.approx(float(r["incumbent"]) - f_star)


def test_runs_are_byte_identical_modulo_wall_ms(illustrative, tmp_path):
    cfg = loop.LoopConfig(
        method="hybrid-saa-ei", n_init=2, iterations=2, scenarios=5, n_starts=5,
        gp_fit_starts=3,
    )
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    cli.run_seed(illustrative, cfg, 7, str(a))
    cli.run_seed(illustrative, cfg, 7, str(b))
    name = "illustrative_hybrid-saa-ei_seed7.csv"
    assert _strip_wall_ms(a / name) == _strip_wall_ms(b / name)


def test_resume_round_trip(illustrative, tmp_path):
    base = dict(method="hybrid-saa-ei", n_init=2, scenarios=5, n_starts=5, gp_fit_starts=3)
    part, full = tmp_path / "part", tmp_path / "full"
    part.mkdir()
    full.mkdir()
    cli.run_seed(illustrative, loop.LoopConfig(iterations=1, **base), 3, str(part))
    cli.run_seed(illustrative, loop.LoopConfig(iterations=3, **base), 3, str(part), resume=True)
    cli.run_seed(illustrative, loop.LoopConfig(iterations=3, **base), 3, str(full))
    name = "illustrative_hybrid-saa-ei_seed3.csv"
    assert _strip_wall_ms(part / name) == _strip_wall_ms(full / name)


def test_checkpoint_round_trip(illustrative, tmp_path):
    cfg = loop.LoopConfig(method="random", n_init=3, iterations=2)
    state = cli.run_seed(illustrative, cfg, 5, str(tmp_path))
    loaded = cli.load_checkpoint(tmp_path / "illustrative_random_seed5.json")
    assert loaded.iteration == state.iteration
    assert len(loaded.records) == len(state.records)
    assert np.array_equal(
        np.array([r.u for r in loaded.records]), np.array([r.u for r in state.records])
    )
    assert loaded.records[0].provenance == "initial"


def test_aggregate_single_seed_collapses_quantiles(illustrative, tmp_path):
    cfg = loop.LoopConfig(method="random", n_init=2, iterations=2)
    cli.run_seed(illustrative, cfg, 0, str(tmp_path))
    rows = cli.aggregate_files([str(tmp_path / "illustrative_random_seed0.csv")])
    assert [r[0] for r in rows] == [0, 1, 2]
    for _, mean, q05, q95, n in rows:
        assert mean == q05 == q95
        assert n == 1


def test_aggregate_known_values(tmp_path):
    # two seeds with regrets 1 and 100 at one iteration: mean log10 is 1
    for seed, reg in [(0, 1.0), (1, 100.0)]:
        path = tmp_path / f"x_seed{seed}.csv"
        path.write_text(
            "iteration,u1,objective,feasible,incumbent,regret,wall_ms\n"
            f"0,0.0,1.0,1,1.0,{reg},0.0\n"
        )
    rows = cli.aggregate_files([str(tmp_path / "x_seed0.csv"), str(tmp_path / "x_seed1.csv")])
    assert rows == [(0, 1.0, pytest.approx(0.1), pytest.approx(1.9), 2)]


def test_aggregate_clamps_zero_regret(tmp_path):
    path = tmp_path / "z_seed0.csv"
    path.write_text(
        "iteration,u1,objective,feasible,incumbent,regret,wall_ms\n0,0.0,1.0,1,1.0,0,0.0\n"
    )
    rows = cli.aggregate_files([str(path)])
    assert rows[0][1] == pytest.approx(np.log10(cli.LOG_CLAMP))


def test_aggregate_uses_last_row_per_iteration(tmp_path):
    # two initial trials share iteration 0; the later one carries the incumbent
    path = tmp_path / "y_seed0.csv"
    path.write_text(
        "iteration,u1,objective,feasible,incumbent,regret,wall_ms\n"
        "0,0.0,5.0,1,5.0,4.0,0.0\n"
        "0,0.1,2.0,1,2.0,1.0,0.0\n"
    )
    rows = cli.aggregate_files([str(path)])
    assert rows[0][1] == pytest.approx(0.0)


def test_cli_run_and_aggregate_and_plot(tmp_path):
    out = tmp_path / "runs"
    rc = _run(
        [
            "run", "--benchmark", "illustrative", "--method", "random",
            "--seeds", 0, 1, "--n-init", 2, "--iterations", 2, "--out", out,
        ]
    )
    assert rc == 0
    agg = tmp_path / "agg.csv"
    assert _run(["aggregate", "--dir", out, "--match", "random", "--out", agg]) == 0
    with open(agg) as fh:
        header = fh.readline().strip()
    assert header == "iteration,mean_log10_regret,q05,q95,n_seeds"
    svg = tmp_path / "agg.svg"
    assert _run(["plot", "--input", agg, "--out", svg]) == 0
    assert svg.read_text().lstrip().startswith("<?xml")
    trace_svg = tmp_path / "trace.svg"
    assert _run(
        ["plot", "--input", out / "illustrative_random_seed0.csv", "--out", trace_svg]
    ) == 0
    assert trace_svg.exists()


def test_cli_rejects_duplicate_seeds(tmp_path):
    rc = _run(
        [
            "run", "--benchmark", "illustrative", "--method", "random",
            "--seeds", 0, 0, "--iterations", 1, "--out", tmp_path,
        ]
    )
    assert rc == 2


def test_cli_surface_from_checkpoint(illustrative, tmp_path):
    cfg = loop.LoopConfig(
        method="hybrid-saa-ei", n_init=3, iterations=1, scenarios=5, n_starts=4,
        gp_fit_starts=3,
    )
    cli.run_seed(illustrative, cfg, 0, str(tmp_path))
    ckpt = tmp_path / "illustrative_hybrid-saa-ei_seed0.json"
    out = tmp_path / "surface.csv"
    rc = _run(
        [
            "surface", "--benchmark", "illustrative", "--checkpoint", ckpt,
            "--kind", "saa-ei", "--grid", 17, "--gp-fit-starts", 3, "--out", out,
        ]
    )
    assert rc == 0
    data = np.genfromtxt(out, delimiter=",", skip_header=1)
    assert data.shape == (17, 2)
    assert np.all(np.isfinite(data))
    assert np.all(data[:, 1] <= 1e-12)  # improvement objective is non-positive
    svg = tmp_path / "surface.svg"
    assert _run(["plot", "--input", out, "--out", svg]) == 0
    assert svg.exists()


def test_cli_surface_standard_kind(illustrative, tmp_path):
    cfg = loop.LoopConfig(method="standard-ei", n_init=3, iterations=0, gp_fit_starts=3)
    cli.run_seed(illustrative, cfg, 0, str(tmp_path))
    ckpt = tmp_path / "illustrative_standard-ei_seed0.json"
    out = tmp_path / "surface.csv"
    rc = _run(
        [
            "surface", "--benchmark", "illustrative", "--checkpoint", ckpt,
            "--kind", "standard-ei", "--grid", 9, "--gp-fit-starts", 3, "--out", out,
        ]
    )
    assert rc == 0
    data = np.genfromtxt(out, delimiter=",", skip_header=1)
    assert data.shape == (9, 2)
    assert np.all(data[:, 1] >= 0.0)  # analytic EI is non-negative


def test_cli_simulate(capsys):
    rc = _run(["simulate", "--benchmark", "illustrative", "--u", 0.5])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["feasible"] is True
    assert payload["gp_label"][0] == pytest.approx(np.sin(0.5))


def test_cli_fit_gp(capsys):
    rc = _run(
        ["fit-gp", "--benchmark", "illustrative", "--n-samples", 6, "--gp-fit-starts", 3]
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_samples"] == 6
    assert payload["max_interpolation_error"] < 1e-3


def test_fmt_round_trips_doubles():
    for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, np.pi]:
        assert float(cli._fmt(v)) == v
    assert cli._fmt(np.inf) == "inf"
    assert cli._fmt(np.nan) == "nan"
