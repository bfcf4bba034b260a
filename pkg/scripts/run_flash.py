"""Full campaign on the flash separation benchmark.

8 seeds of the hybrid SAA-EI run (3 initial points, 8 BO iterations) against
25-iteration standard-BO and random baselines, plus the acquisition-surface
comparison at the first BO iteration of seed 0.
"""

import argparse
import os
import sys

from hybridbo.cli import main as cli


def run(out_dir, iterations_std, n_starts, resume):
    campaigns = [
        ("hybrid-saa-ei", list(range(8)), 8),
        ("standard-ei", list(range(25)), iterations_std),
        ("random", list(range(25)), iterations_std),
    ]
    for method, seeds, iterations in campaigns:
        args = [
            "run",
            "--benchmark", "flash",
            "--method", method,
            "--seeds", *[str(s) for s in seeds],
            "--n-init", "3",
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
    for method, _, _ in campaigns:
        agg = os.path.join(out_dir, f"aggregate_{method}.csv")
        if cli(["aggregate", "--dir", out_dir, "--match", f"_{method}_", "--out", agg]) != 0:
            return 1
        cli(["plot", "--input", agg, "--out", agg.replace(".csv", ".svg")])

    # surface comparison for seed 0: the hybrid SAA-EI surface after its
    # first BO trial against the standard-EI surface on the initial design
    surf_dir = os.path.join(out_dir, "surface")
    os.makedirs(surf_dir, exist_ok=True)
    for method, iterations in [("hybrid-saa-ei", 1), ("standard-ei", 0)]:
        cli([
            "run", "--benchmark", "flash", "--method", method,
            "--seeds", "0", "--n-init", "3", "--iterations", str(iterations),
            "--n-starts", str(n_starts), "--gp-fit-starts", "100",
            "--out", surf_dir, "--resume",
        ])
    for kind, ckpt_method in [("saa-ei", "hybrid-saa-ei"), ("standard-ei", "standard-ei")]:
        ckpt = os.path.join(surf_dir, f"flash_{ckpt_method}_seed0.json")
        out = os.path.join(surf_dir, f"surface_{kind}.csv")
        cli([
            "surface", "--benchmark", "flash", "--checkpoint", ckpt,
            "--kind", kind, "--grid", "200", "200", "--out", out,
        ])
        cli(["plot", "--input", out, "--out", out.replace(".csv", ".svg")])
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/flash")
    ap.add_argument("--iterations-std", type=int, default=25)
    ap.add_argument("--n-starts", type=int, default=100)
    ap.add_argument("--resume", action="store_true")
    a = ap.parse_args()
    sys.exit(run(a.out, a.iterations_std, a.n_starts, a.resume))
