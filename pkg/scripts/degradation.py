"""NB accuracy on clean vs metame-obfuscated malware over grouped experiments.

    python scripts/degradation.py --groups 10 --per-group 20 --out results/degradation.json
"""

import argparse
import time
from pathlib import Path

from malara.attack import metame_profile
from malara.evaluation import run_study, synthetic_source, write_group_csv, write_report
from malara.synthetic import default_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--groups", type=int, default=10)
    ap.add_argument("--per-group", type=int, default=20)
    ap.add_argument("--separation", type=float, default=0.085)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/degradation.json"))
    args = ap.parse_args()

    spec = default_scenario(args.separation)
    start = time.perf_counter()
    reports = run_study(synthetic_source(spec), profile=metame_profile(spec.feature_names), modes=("clean", "nb"),
                        groups=args.groups, per_group=args.per_group, seed=args.seed)
    elapsed = time.perf_counter() - start

    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_report(args.out, reports, {**vars(args), "out": str(args.out)})
    write_group_csv(args.out.with_suffix(".csv"), reports)
    clean, obf = reports["clean"].da, reports["nb"].da
    print(f"clean DA {clean:.4f}  obfuscated DA {obf:.4f}  drop {100 * (clean - obf):.1f} pp  ({elapsed:.1f} s)")
    for g, (a, b) in enumerate(zip(reports["clean"].group_series(), reports["nb"].group_series())):
        print(f"  group {g:2d}: {a:.3f} -> {b:.3f}")


if __name__ == "__main__":
    main()
