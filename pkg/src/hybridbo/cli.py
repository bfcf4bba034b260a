"""Command-line experiment runner: run, aggregate, surface, plot, simulate, fit-gp.

Per-seed trial CSVs, JSON checkpoints with resume support, quantile
aggregation across seeds, acquisition-surface grids, and deterministic SVG
plots. All randomness flows from the configured seeds.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import loop, scenario as sc
from .benchmarks import get_benchmark
from .errors import ContractViolation, HybridBoError
from .gp import GpPosterior
from .records import ExperimentState, TrialRecord
from .sampling import latin_hypercube

__all__ = ["main", "run_seed", "aggregate_files", "write_surface"]

#: Regret of exactly zero is clamped to this value when taking logs for
#: aggregation and plotting; stored per-trial data is never clamped.
LOG_CLAMP = 1e-16


def _fmt(v) -> str:
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# checkpoints


def _state_to_dict(state: ExperimentState, config: loop.LoopConfig):
    return {
        "benchmark": state.benchmark,
        "method": state.method,
        "seed": state.seed,
        "iteration": state.iteration,
        "config": {
            "method": config.method,
            "n_init": config.n_init,
            "iterations": config.iterations,
            "scenarios": config.scenarios,
            "n_starts": config.n_starts,
            "beta": config.beta,
            "epsilon": config.epsilon,
            "gp_fit_starts": config.gp_fit_starts,
        },
        "records": [r.to_dict() for r in state.records],
        "gp": None if state.gp is None else state.gp.to_dict(),
    }


def _state_from_dict(payload) -> ExperimentState:
    state = ExperimentState(
        benchmark=payload["benchmark"],
        method=payload["method"],
        seed=int(payload["seed"]),
        iteration=int(payload["iteration"]),
    )
    state.records = [TrialRecord.from_dict(d) for d in payload["records"]]
    if payload.get("gp") is not None:
        state.gp = GpPosterior.from_dict(payload["gp"])
    return state


def save_checkpoint(path, state, config):
    _atomic_write(path, json.dumps(_state_to_dict(state, config), indent=1) + "\n")


def load_checkpoint(path) -> ExperimentState:
    with open(path, encoding="utf-8") as fh:
        return _state_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# run


def _trial_rows(state, config, f_star, wall_ms):
    """One CSV row per trial: initial trials at iteration 0, BO trial k at k."""
    rows = []
    best = np.inf
    for r in state.records:
        if r.feasible and r.objective is not None and r.objective < best:
            best = r.objective
        iteration = 0 if r.index < config.n_init else r.index - config.n_init + 1
        rows.append(
            [iteration]
            + [float(v) for v in np.atleast_1d(r.u)]
            + [
                np.nan if r.objective is None else float(r.objective),
                int(r.feasible),
                best,
                loop.regret(best, f_star),
                wall_ms.get(r.index, 0.0),
            ]
        )
    return rows


def run_seed(benchmark, config: loop.LoopConfig, seed: int, out_dir, resume=False):
    """Run (or resume) one seed; returns the final state.

    Writes ``<benchmark>_<method>_seed<seed>.csv`` and a matching JSON
    checkpoint after every iteration.
    """
    stem = f"{benchmark.name}_{config.method}_seed{seed}"
    csv_path = os.path.join(out_dir, stem + ".csv")
    ckpt_path = os.path.join(out_dir, stem + ".json")
    f_star = benchmark.reference_optimum()

    state = None
    if resume and os.path.exists(ckpt_path):
        state = load_checkpoint(ckpt_path)
        if state.seed != seed or state.method != config.method:
            raise ContractViolation(f"checkpoint {ckpt_path} does not match the config")

    wall_ms = {}
    n_u = len(benchmark.u_lower)
    header = (
        ["iteration"]
        + [f"u{i + 1}" for i in range(n_u)]
        + ["objective", "feasible", "incumbent", "regret", "wall_ms"]
    )

    def write_outputs(st):
        lines = [",".join(header)]
        for row in _trial_rows(st, config, f_star, wall_ms):
            lines.append(
                ",".join(str(v) if isinstance(v, int) else _fmt(v) for v in row)
            )
        _atomic_write(csv_path, "\n".join(lines) + "\n")
        save_checkpoint(ckpt_path, st, config)

    t_last = time.perf_counter()

    def on_iteration(st):
        nonlocal t_last
        now = time.perf_counter()
        for r in st.records:
            if r.index not in wall_ms:
                wall_ms[r.index] = (now - t_last) * 1e3
        t_last = now
        write_outputs(st)

    state = loop.run_experiment(benchmark, config, seed, state=state, on_iteration=on_iteration)
    write_outputs(state)
    return state


# ---------------------------------------------------------------------------
# aggregate


def aggregate_files(paths):
    """Per-iteration mean log10 regret and 5%/95% quantiles across seed CSVs."""
    per_iter = {}
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            last = {}
            for row in reader:
                last[int(row["iteration"])] = float(row["regret"])
        for it, reg in last.items():
            per_iter.setdefault(it, []).append(reg)
    rows = []
    for it in sorted(per_iter):
        logs = np.log10(np.maximum(np.asarray(per_iter[it]), LOG_CLAMP))
        rows.append(
            (
                it,
                float(np.mean(logs)),
                float(np.quantile(logs, 0.05)),
                float(np.quantile(logs, 0.95)),
                logs.size,
            )
        )
    return rows


def _write_aggregate(rows, out_path):
    lines = ["iteration,mean_log10_regret,q05,q95,n_seeds"]
    for it, mean, q05, q95, n in rows:
        lines.append(f"{it},{_fmt(mean)},{_fmt(q05)},{_fmt(q95)},{n}")
    _atomic_write(out_path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# surface


def write_surface(benchmark, state, kind, grid_shape, out_path, beta, epsilon,
                  gp_fit_starts=100):
    """Acquisition values on a decision-space grid at a checkpointed state.

    Renders the acquisition the next BO iteration would see: the GP is
    refit on the checkpointed records and the scenario draw matches that
    iteration. ``kind`` is a hybrid scenario objective or "standard-ei"
    (analytic EI on a GP trained on the penalized objective labels).
    Non-finite values are encoded as 0 so the CSV stays NaN-free.
    """
    lo = np.asarray(benchmark.u_lower, dtype=float)
    hi = np.asarray(benchmark.u_upper, dtype=float)
    axes = [np.linspace(lo[d], hi[d], grid_shape[d]) for d in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    U = np.column_stack([m.ravel() for m in mesh])

    if kind == "standard-ei":
        cfg = loop.LoopConfig(
            method="standard-ei", n_init=len(state.records), gp_fit_starts=gp_fit_starts
        )
        gp = loop._fit_standard_gp(benchmark, state, cfg, state.iteration)
        labels = [benchmark.standard_bo_label(r) for r in state.records]
        incumbent = float(min(labels))
        mean, std, _, _ = gp.posterior_eval_many(U)
        values = loop.analytic_ei(mean[:, 0], std[:, 0], incumbent)
    else:
        cfg = loop.LoopConfig(
            method="hybrid-saa-ei", n_init=len(state.records), gp_fit_starts=gp_fit_starts
        )
        gp = loop._fit_hybrid_gp(benchmark, state, cfg, state.iteration)
        scen = sc.sample_scenarios(
            sc.DEFAULT_SCENARIOS,
            benchmark.model.space.n_y,
            [state.seed, 2, state.iteration],
        )
        values = sc.acquisition_values(
            benchmark.model,
            gp,
            scen,
            kind,
            U,
            incumbent=state.incumbent if np.isfinite(state.incumbent) else None,
            beta=beta,
            epsilon=epsilon,
        )
    values = np.where(np.isfinite(values), values, 0.0)

    n_u = lo.size
    lines = [",".join([f"u{i + 1}" for i in range(n_u)] + ["value"])]
    for row, v in zip(U, values):
        lines.append(",".join(_fmt(x) for x in row) + "," + _fmt(v))
    _atomic_write(out_path, "\n".join(lines) + "\n")
    return values.reshape(grid_shape)


# ---------------------------------------------------------------------------
# plot


def _setup_matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "hybridbo"
    import matplotlib.pyplot as plt

    return plt


def _save_svg(fig, out_path):
    fig.savefig(out_path, format="svg", metadata={"Date": None})


def plot_file(in_path, out_path):
    """Render a CSV artifact as SVG: regret traces, quantile bands, or contours."""
    plt = _setup_matplotlib()
    with open(in_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.genfromtxt(in_path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    fig, ax = plt.subplots(figsize=(6, 4))
    if "mean_log10_regret" in header:
        it = data[:, 0]
        ax.plot(it, data[:, 1], label="mean log10 regret")
        ax.fill_between(it, data[:, 2], data[:, 3], alpha=0.3, label="5-95% band")
        ax.set_xlabel("iteration")
        ax.set_ylabel("log10 regret")
        ax.legend()
    elif header[-1] == "value" and header[0] == "u1" and len(header) == 3:
        u1 = np.unique(data[:, 0])
        u2 = np.unique(data[:, 1])
        Z = data[:, 2].reshape(u1.size, u2.size)
        ctr = ax.contourf(u1, u2, Z.T, levels=30)
        fig.colorbar(ctr, ax=ax)
        ax.set_xlabel("u1")
        ax.set_ylabel("u2")
    elif header[-1] == "value":
        ax.plot(data[:, 0], data[:, -1])
        ax.set_xlabel("u1")
        ax.set_ylabel("acquisition")
    else:
        it = data[:, 0] if data.size else np.array([])
        if data.size:
            reg = np.maximum(data[:, header.index("regret")], LOG_CLAMP)
            ax.semilogy(np.arange(reg.size), reg)
        ax.set_xlabel("trial")
        ax.set_ylabel("regret")
    _save_svg(fig, out_path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# argument parsing


def _add_run_parser(sub):
    p = sub.add_parser("run", help="run a seeded BO campaign")
    p.add_argument("--benchmark", required=True, choices=["illustrative", "flash"])
    p.add_argument("--method", required=True, choices=list(loop.METHODS))
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--n-init", type=int, default=2)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--scenarios", type=int, default=sc.DEFAULT_SCENARIOS)
    p.add_argument("--n-starts", type=int, default=100)
    p.add_argument("--beta", type=float, default=sc.DEFAULT_BETA)
    p.add_argument("--epsilon", type=float, default=sc.DEFAULT_EPSILON)
    p.add_argument("--gp-fit-starts", type=int, default=100)
    p.add_argument("--f-star-grid", type=int, nargs=2, default=None,
                   help="grid shape for the flash reference optimum")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")


def _get_benchmark(args):
    kwargs = {}
    if args.benchmark == "flash" and getattr(args, "f_star_grid", None):
        kwargs["f_star_grid"] = tuple(args.f_star_grid)
    return get_benchmark(args.benchmark, **kwargs)


def _cmd_run(args):
    if len(set(args.seeds)) != len(args.seeds):
        raise ContractViolation("seeds must be unique")
    config = loop.LoopConfig(
        method=args.method,
        n_init=args.n_init,
        iterations=args.iterations,
        scenarios=args.scenarios,
        n_starts=args.n_starts,
        beta=args.beta,
        epsilon=args.epsilon,
        gp_fit_starts=args.gp_fit_starts,
    )
    benchmark = _get_benchmark(args)
    os.makedirs(args.out, exist_ok=True)
    for seed in args.seeds:
        run_seed(benchmark, config, seed, args.out, resume=args.resume)
    return 0


def _cmd_aggregate(args):
    paths = sorted(
        os.path.join(args.dir, f)
        for f in os.listdir(args.dir)
        if f.endswith(".csv") and (args.match is None or args.match in f)
    )
    if not paths:
        raise ContractViolation(f"no CSV files found in {args.dir}")
    _write_aggregate(aggregate_files(paths), args.out)
    return 0


def _cmd_surface(args):
    benchmark = _get_benchmark(args)
    state = load_checkpoint(args.checkpoint)
    grid = args.grid if len(args.grid) > 1 else args.grid * len(benchmark.u_lower)
    write_surface(
        benchmark, state, args.kind, tuple(grid), args.out, args.beta, args.epsilon,
        gp_fit_starts=args.gp_fit_starts,
    )
    return 0


def _cmd_plot(args):
    plot_file(args.input, args.out)
    return 0


def _cmd_simulate(args):
    benchmark = _get_benchmark(args)
    rng = np.random.default_rng(args.seed)
    record = benchmark.run_trial(0, np.asarray(args.u, dtype=float), rng)
    print(json.dumps(record.to_dict(), indent=1))
    return 0


def _cmd_fit_gp(args):
    from .gp import TrainingSet

    benchmark = _get_benchmark(args)
    rng = np.random.default_rng([args.seed, 0])
    U = latin_hypercube(args.n_samples, benchmark.u_lower, benchmark.u_upper, rng)
    records = [
        benchmark.run_trial(i, u, np.random.default_rng([args.seed, 1, i]))
        for i, u in enumerate(U)
    ]
    data = TrainingSet(
        np.array([r.gp_input for r in records]),
        np.array([r.gp_label for r in records]),
        standardize_mask=benchmark.gp_standardize_mask,
    )
    gp = GpPosterior.fit(data, args.gp_fit_starts, np.random.default_rng([args.seed, 2]))
    mean, std, _, _ = gp.posterior_eval_many(data.inputs)
    report = {
        "n_samples": int(data.n),
        "hyperparams": [
            {
                "signal_variance": hp.signal_variance,
                "lengthscales": hp.lengthscales.tolist(),
                "noise_variance": hp.noise_variance,
            }
            for hp in gp.hyperparams
        ],
        "max_interpolation_error": float(np.max(np.abs(mean - data.labels))),
        "max_training_std": float(np.max(std)),
    }
    print(json.dumps(report, indent=1))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridbo", description="hybrid-model Bayesian optimization experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_parser(sub)

    p = sub.add_parser("aggregate", help="aggregate per-seed CSVs into quantiles")
    p.add_argument("--dir", required=True)
    p.add_argument("--match", default=None, help="substring filter on file names")
    p.add_argument("--out", required=True)

    p = sub.add_parser("surface", help="acquisition surface on a decision grid")
    p.add_argument("--benchmark", required=True, choices=["illustrative", "flash"])
    p.add_argument("--checkpoint", required=True)
    p.add_argument(
        "--kind",
        required=True,
        choices=[k.value for k in sc.ObjectiveKind] + ["standard-ei"],
    )
    p.add_argument("--grid", type=int, nargs="+", default=[200])
    p.add_argument("--gp-fit-starts", type=int, default=100)
    p.add_argument("--beta", type=float, default=sc.DEFAULT_BETA)
    p.add_argument("--epsilon", type=float, default=sc.DEFAULT_EPSILON)
    p.add_argument("--f-star-grid", type=int, nargs=2, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plot", help="render a CSV artifact as SVG")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="one-off oracle query")
    p.add_argument("--benchmark", required=True, choices=["illustrative", "flash"])
    p.add_argument("--u", type=float, nargs="+", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--f-star-grid", type=int, nargs=2, default=None)

    p = sub.add_parser("fit-gp", help="standalone GP fit diagnostics")
    p.add_argument("--benchmark", required=True, choices=["illustrative", "flash"])
    p.add_argument("--n-samples", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gp-fit-starts", type=int, default=20)
    p.add_argument("--f-star-grid", type=int, nargs=2, default=None)

    return parser


_COMMANDS = {
    "run": _cmd_run,
    "aggregate": _cmd_aggregate,
    "surface": _cmd_surface,
    "plot": _cmd_plot,
    "simulate": _cmd_simulate,
    "fit-gp": _cmd_fit_gp,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HybridBoError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
