"""Which features the metame profile modifies, and how they evolve over repeated passes.

Prints the modification ranking over simulated clean/obfuscated pairs and the
per-feature change percentage after k successive obfuscation passes.
"""

import argparse

import numpy as np

from malara.attack import feature_trajectory, metame_profile, obfuscate, rank_modified_features
from malara.synthetic import default_scenario, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=100)
    ap.add_argument("--top", type=int, default=12)
    ap.add_argument("--k", type=int, default=100, help="successive passes for the trajectory")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = default_scenario(n_per_class=args.pairs)
    data = generate_synthetic(spec, args.seed)
    malware = data.X[data.is_malware]
    profile = metame_profile(spec.feature_names)
    obfuscated = obfuscate(malware, profile, args.seed)
    print(f"most modified features over {len(malware)} pairs:")
    for name, count in rank_modified_features(malware, obfuscated, spec.feature_names)[:args.top]:
        print(f"  {name:>24s} {count:4d}")

    traj = feature_trajectory(malware[0], profile, args.k, args.seed)
    changed = np.flatnonzero(traj[-1] > 0)
    print(f"\ncumulative change % after k passes (features that ever changed, k = {args.k}):")
    marks = sorted({0, args.k // 4, args.k // 2, args.k - 1})
    print(" " * 26 + "".join(f"{'k=' + str(t + 1):>8s}" for t in marks))
    for j in changed:
        print(f"  {spec.feature_names[j]:>24s}" + "".join(f"{traj[t, j]:8.1f}" for t in marks))


if __name__ == "__main__":
    main()
