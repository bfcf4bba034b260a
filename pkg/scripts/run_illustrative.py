"""Full campaign on the univariate benchmark.

25 seeds per method, 2 initial points, 10 BO iterations, 25 scenarios, 100
multistarts; aggregates per-method quantile traces and renders the regret
figure.
"""

import argparse
import os
import sys

from hybridbo.cli import main as cli

METHODS = ["hybrid-saa-ei", "standard-ei", "random"]


def run(out_dir, seeds, iterations, n_starts, resume):
    seed_args = [str(s) for s in range(seeds)]
    for method in METHODS:
        args = [
            "run",
            "--benchmark", "illustrative",
            "--method", method,
            "--seeds", *seed_args,
            "--n-init", "2",
            "--iterations", str(iterations),
            "--scenarios", "25",
            "--n-starts", str(n_starts),
            "--gp-fit-starts", "100",
            "--out", out_dir,
        ]
        if resume:
            args.append("--resume")
        if cli(args) != 0:
            return 1
    for method in METHODS:
        agg = os.path.join(out_dir, f"aggregate_{method}.csv")
        if cli(["aggregate", "--dir", out_dir, "--match", f"_{method}_", "--out", agg]) != 0:
            return 1
        cli(["plot", "--input", agg, "--out", agg.replace(".csv", ".svg")])
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/illustrative")
    ap.add_argument("--seeds", type=int, default=25)
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--n-starts", type=int, default=100)
    ap.add_argument("--resume", action="store_true")
    a = ap.parse_args()
    sys.exit(run(a.out, a.seeds, a.iterations, a.n_starts, a.resume))
