"""NB accuracy against the number of top-ranked features kept."""

import argparse

from malara.evaluation import informativeness_ranking, split, topk_curve
from malara.synthetic import default_scenario, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratio", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = default_scenario()
    train, test = split(generate_synthetic(spec, args.seed), args.ratio, args.seed)
    ranking = informativeness_ranking(train)
    for k, da in enumerate(topk_curve(train, test, ranking), start=1):
        print(f"k={k:3d}  {spec.feature_names[ranking[k - 1]]:>24s}  DA {da:.4f}")


if __name__ == "__main__":
    main()
