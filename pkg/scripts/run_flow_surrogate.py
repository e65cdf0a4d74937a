#!/usr/bin/env python3
"""Surrogate flow pipeline: generate, train in flow mode, analyze.

Exercises the same path as a real vertically resolved solution matrix
(h column + profiles) without needing a PDE solver: the profiles come
from the Legendre family and h is an independent uniform column, so
the expected estimate is |S| + 1 with L0 pinned to h.
"""

import argparse
import sys
import tempfile

from idea.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degrees", default="3")
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--n-zeta", type=int, default=100)
    ap.add_argument("--l-init", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workdir", default=None)
    args = ap.parse_args()

    work = args.workdir or tempfile.mkdtemp(prefix="idea-flow-")
    data = f"{work}/flow.csv"
    steps = [
        ["generate", "--flow-surrogate", args.degrees, "--n", str(args.n),
         "--n-zeta", str(args.n_zeta), "--seed", str(args.seed), "-o", data],
        ["train", data, "-o", f"{work}/run", "--l-init", str(args.l_init),
         "--epochs", str(args.epochs), "--seed", str(args.seed),
         "--swe", "--n-zeta", str(args.n_zeta), "--verbose"],
    ]
    for argv in steps:
        rc = cli_main(argv)
        if rc != 0:
            return rc

    import json
    with open(f"{work}/run_report.json") as fh:
        d_tilde = json.load(fh)["d_tilde"]
    rc = cli_main(["analyze", "--checkpoint", f"{work}/run_ckpt_d{d_tilde}.json",
                   "--data", data, "--n-zeta", str(args.n_zeta),
                   "-o", f"{work}/analysis"])
    print(f"artifacts in {work}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
