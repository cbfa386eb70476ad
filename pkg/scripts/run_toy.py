"""Run both two-dimensional toy sweeps over several seeds and print their summaries.

    python3 scripts/run_toy.py --seeds 0 1 2 --out runs/toy
"""

import argparse
from pathlib import Path

from radialgan.evalkit.toy import reproduce_toy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--which", nargs="+", default=["shift_capacity", "gmm_samplesize"])
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", default="toy_out")
    args = p.parse_args()
    for which in args.which:
        summary = reproduce_toy(which, Path(args.out) / which, args.seeds, args.iterations)
        for run in summary["runs"]:
            if which == "shift_capacity":
                print(f"seed {run['seed']} {run['capacity']:>8} {run['source']:>9}  "
                      f"translation error {run['translation_error']:.3f}")
            else:
                print(f"seed {run['seed']} n={run['n']:<5} {run['source']:>9}  "
                      f"modes {run['modes_covered']}/{run['modes_total']}")


if __name__ == "__main__":
    main()
