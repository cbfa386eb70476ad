"""Run the synthetic transfer benchmark and print the per-method summary.

    python3 scripts/run_benchmark.py --domains 3 --repeats 10 --out runs/m3
    python3 scripts/run_benchmark.py --cap-multiple 8 --source-train-n 1200 --out runs/cap8
"""

import argparse
import time

from radialgan.evalkit.experiment import METHODS, benchmark_spec, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--domains", type=int, default=3)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--methods", nargs="+", default=["target_only", "radialgan"], choices=METHODS)
    p.add_argument("--cap-multiple", type=float, default=None, help="translated rows per target training row")
    p.add_argument("--source-train-n", type=int, default=None,
                   help="training rows for non-target domains (target keeps 300); implies target domain 0")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    args = p.parse_args()

    kw = {"methods": args.methods, "cap_multiple": args.cap_multiple, "seed": args.seed}
    if args.source_train_n is not None:
        kw["train_n"] = [300] + [args.source_train_n] * (args.domains - 1)
        kw["target_domains"] = [0]
    spec = benchmark_spec(args.domains, args.repeats, **kw)
    if args.iterations is not None:
        spec.train.iterations = args.iterations
    t = time.perf_counter()
    report = run_experiment(spec, jobs=args.jobs)
    print(f"{len(report.cells)} cells in {time.perf_counter() - t:.0f}s, leakage violations: "
          f"{report.leakage['violations']}")
    print(f"{'domain':>6} {'method':>16} {'AUC':>14} {'dAUC':>16} {'sign p':>8}")
    for row in report.summary:
        se = row["auc_se"] or 0.0
        dse = row["delta_auc_se"] or 0.0
        print(f"{row['domain']!s:>6} {row['method']:>16} {row['auc_mean']:.4f}±{se:.4f} "
              f"{row['delta_auc_mean']:+.4f}±{dse:.4f} {row['delta_auc_sign_test']['p_value']:8.3g}")
    ratios = [c["final"] / c["initial"] for c in report.cycle]
    if ratios:
        print(f"reconstruction error final/initial: max {max(ratios):.3f}")
    if args.out:
        report.write(args.out)


if __name__ == "__main__":
    main()
