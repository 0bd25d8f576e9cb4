"""Paired NB vs AROA comparison on obfuscated test sets.

Accuracy under 0-1 utility (10 x 20 experiments by default), or mean realized
utility under the false-negative-averse matrix:

    python scripts/compare_nb_aroa.py --utility fn-averse --groups 4 --per-group 10
"""

import argparse
import time
from pathlib import Path

import numpy as np

from malara.aroa import AroaConfig, AttackerBeliefs
from malara.attack import METAME_OPCODES, AttackConfig, metame_profile
from malara.evaluation import compare_nb_aroa, synthetic_source, write_group_csv, write_report
from malara.model import FN_AVERSE, ZERO_ONE
from malara.synthetic import default_scenario

UTILITIES = {"zero-one": ZERO_ONE, "fn-averse": FN_AVERSE}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--utility", choices=UTILITIES, default="zero-one")
    ap.add_argument("--groups", type=int, default=10)
    ap.add_argument("--per-group", type=int, default=20)
    ap.add_argument("--L", type=int, default=700)
    ap.add_argument("--var", type=float, default=0.25)
    ap.add_argument("--max-attacks", type=int, default=20)
    ap.add_argument("--max-origins", type=int, default=300)
    ap.add_argument("--n-jobs", type=int, default=1, help="parallel experiments (needs joblib)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    spec = default_scenario()
    utility = UTILITIES[args.utility]
    targeted = tuple(spec.feature_names.index(name) for name in METAME_OPCODES)
    cfg = AroaConfig(AttackerBeliefs(args.var, args.L),
                     AttackConfig(args.max_attacks, args.max_origins, targeted, args.seed), utility)
    start = time.perf_counter()
    reports = compare_nb_aroa(synthetic_source(spec), metame_profile(spec.feature_names), utility, cfg,
                              groups=args.groups, per_group=args.per_group, seed=args.seed, n_jobs=args.n_jobs)
    elapsed = time.perf_counter() - start

    key = "da" if args.utility == "zero-one" else "mean_utility"
    nb, aroa = reports["nb"].group_series(key), reports["aroa"].group_series(key)
    for g, (a, b) in enumerate(zip(nb, aroa)):
        print(f"group {g:2d}: NB {a:+.3f}  AROA {b:+.3f}")
    print(f"{key}: NB {np.mean(nb):+.4f}  AROA {np.mean(aroa):+.4f}  "
          f"AROA ahead in {int(np.sum(aroa > nb))}/{args.groups} groups  ({elapsed:.0f} s)")

    out = args.out or Path(f"results/compare_{args.utility}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, reports, {**vars(args), "out": str(out), "aroa": cfg.to_dict(spec.feature_names)})
    write_group_csv(out.with_suffix(".csv"), reports)


if __name__ == "__main__":
    main()
