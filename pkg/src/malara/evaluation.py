"""Experiment harness: splits, metrics, degradation and NB-vs-AROA studies.

Experiments are arranged in groups; every experiment draws its own data
split (or reuses a fixed one), obfuscates the malware of its test set and
classifies it. Seeds derive from (seed, group, experiment), so any group can
be rerun on its own and results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .aroa import AroaConfig, classify_aroa_batch
from .attack import ObfuscationProfile, obfuscate
from .model import ZERO_ONE, UtilityMatrix, as_malware_mask, classify_eq1, fit
from .synthetic import Dataset, SyntheticSpec, generate_synthetic

Source = Callable[[np.random.SeedSequence], tuple[Dataset, Dataset]]


def split(dataset: Dataset, ratio: float = 0.2, seed=0) -> tuple[Dataset, Dataset]:
    """Stratified train/test split holding out round(ratio * N_y) rows per class."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in ("M", "B"):
        idx = np.flatnonzero(dataset.y == label)
        n_test = int(round(ratio * idx.size))
        if n_test == 0 or n_test == idx.size:
            raise ValueError(f"class {label} too small to stratify ({idx.size} rows)")
        idx = rng.permutation(idx)
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return dataset.take(np.sort(np.concatenate(train_idx))), dataset.take(np.sort(np.concatenate(test_idx)))


@dataclass
class EvalReport:
    da: float
    fpr: float | None  # None when there are no benign rows
    fnr: float | None  # None when there are no malware rows
    mean_utility: float
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    groups: list[dict] = field(default_factory=list)
    config: dict | None = None

    def summary(self) -> dict:
        return {"da": self.da, "fpr": self.fpr, "fnr": self.fnr, "mean_utility": self.mean_utility}

    def to_dict(self) -> dict:
        out = {**self.summary(), "n": self.n,
               "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
               "groups": self.groups}
        if self.config is not None:
            out = {"config": self.config, **out}
        return out

    def group_series(self, key: str = "da") -> np.ndarray:
        return np.array([g[key] if g[key] is not None else np.nan for g in self.groups], dtype=float)


def compute_metrics(predictions: Sequence, truths: Sequence, u: UtilityMatrix = ZERO_ONE) -> EvalReport:
    """Detection accuracy, FPR, FNR and mean realized utility (malware = positive)."""
    pred_m = as_malware_mask(predictions)
    true_m = as_malware_mask(truths)
    if pred_m.size != true_m.size:
        raise ValueError("predictions and truths differ in length")
    if pred_m.size == 0:
        raise ValueError("empty input")
    tp = int(np.sum(pred_m & true_m))
    fp = int(np.sum(pred_m & ~true_m))
    tn = int(np.sum(~pred_m & ~true_m))
    fn = int(np.sum(~pred_m & true_m))
    n = pred_m.size
    utility = tp * u.mm + fp * u.mb + fn * u.bm + tn * u.bb
    return EvalReport(
        da=(tp + tn) / n,
        fpr=fp / (fp + tn) if fp + tn else None,
        fnr=fn / (fn + tp) if fn + tp else None,
        mean_utility=utility / n,
        n=n, tp=tp, fp=fp, tn=tn, fn=fn,
    )


def synthetic_source(spec: SyntheticSpec, ratio: float = 0.2) -> Source:
    """Fresh synthetic dataset per experiment, split with ``ratio`` held out."""

    def make(seq: np.random.SeedSequence):
        data_seed, split_seed = seq.spawn(2)
        return split(generate_synthetic(spec, data_seed), ratio, split_seed)

    return make


def fixed_source(train: Dataset, test: Dataset) -> Source:
    return lambda seq: (train, test)


def _experiment(source: Source, seq, profile, utility, aroa_cfg, alpha, modes):
    data_seq, obf_seq = np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key).spawn(2)
    train, test = source(data_seq)
    model = fit(train.X, train.y, alpha, train.feature_names)
    obfuscated = test.X.copy()
    if profile is not None:
        m = test.is_malware
        obfuscated[m] = obfuscate(test.X[m], profile, np.random.default_rng(obf_seq))
    preds = {}
    if "clean" in modes:
        preds["clean"] = classify_eq1(model, test.X, utility)
    if "nb" in modes:
        preds["nb"] = classify_eq1(model, obfuscated, utility)
    if "aroa" in modes:
        cfg = AroaConfig(aroa_cfg.beliefs, aroa_cfg.attack, utility)
        decisions = classify_aroa_batch(model, obfuscated, cfg, stream=tuple(seq.spawn_key))
        preds["aroa"] = np.array([str(d.label) for d in decisions])
    return test.y, preds


def run_study(
    source: Source,
    *,
    profile: ObfuscationProfile | None = None,
    utility: UtilityMatrix = ZERO_ONE,
    aroa_cfg: AroaConfig | None = None,
    modes: Sequence[str] = ("clean", "nb"),
    groups: int = 10,
    per_group: int = 100,
    alpha: float = 1.0,
    seed: int = 0,
    n_jobs: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> dict[str, EvalReport]:
    """Run ``groups * per_group`` experiments and pool them per classifier.

    ``modes`` picks classifiers: 'clean' (NB on the clean test set), 'nb' and
    'aroa' (both on the obfuscated test set). Each returned report carries
    per-group pooled metrics in ``groups``.
    """
    if "aroa" in modes and aroa_cfg is None:
        aroa_cfg = AroaConfig()
    if groups < 1 or per_group < 1:
        raise ValueError("groups and per_group must be >= 1")
    tasks = [np.random.SeedSequence(seed, spawn_key=(g, e)) for g in range(groups) for e in range(per_group)]
    args = (profile, utility, aroa_cfg, alpha, tuple(modes))
    if n_jobs == 1:
        results = []
        for i, seq in enumerate(tasks):
            results.append(_experiment(source, seq, *args))
            if progress:
                progress(i + 1, len(tasks))
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_experiment)(source, seq, *args) for seq in tasks)

    reports = {}
    for mode in modes:
        truths = [r[0] for r in results]
        preds = [r[1][mode] for r in results]
        overall = compute_metrics(np.concatenate(preds), np.concatenate(truths), utility)
        for g in range(groups):
            sl = slice(g * per_group, (g + 1) * per_group)
            group = compute_metrics(np.concatenate(preds[sl]), np.concatenate(truths[sl]), utility)
            overall.groups.append(group.summary())
        reports[mode] = overall
    return reports


def degradation_study(source: Source, profile: ObfuscationProfile, *, utility: UtilityMatrix = ZERO_ONE,
                      groups: int = 10, per_group: int = 100, alpha: float = 1.0, seed: int = 0,
                      n_jobs: int = 1) -> dict[str, EvalReport]:
    """NB trained on clean data, scored on clean vs obfuscated-malware test sets."""
    reports = run_study(source, profile=profile, utility=utility, modes=("clean", "nb"), groups=groups,
                        per_group=per_group, alpha=alpha, seed=seed, n_jobs=n_jobs)
    return {"clean": reports["clean"], "obfuscated": reports["nb"]}


def compare_nb_aroa(source: Source, profile: ObfuscationProfile | None, utility: UtilityMatrix,
                    aroa_cfg: AroaConfig, *, groups: int = 4, per_group: int = 10, alpha: float = 1.0,
                    seed: int = 0, n_jobs: int = 1) -> dict[str, EvalReport]:
    """Paired NB (adversary-unaware) and AROA reports on the same obfuscated test sets."""
    return run_study(source, profile=profile, utility=utility, aroa_cfg=aroa_cfg, modes=("nb", "aroa"),
                     groups=groups, per_group=per_group, alpha=alpha, seed=seed, n_jobs=n_jobs)


def topk_curve(train: Dataset, test: Dataset, ranking: Sequence[int], *, ks: Sequence[int] | None = None,
               alpha: float = 1.0, utility: UtilityMatrix = ZERO_ONE) -> list[float]:
    """DA of NB retrained on the top-k ranked features, for each k."""
    ranking = list(ranking)
    if sorted(ranking) != list(range(len(train.feature_names))):
        raise ValueError("ranking must be a permutation of the feature indices")
    ks = range(1, len(ranking) + 1) if ks is None else ks
    curve = []
    for k in ks:
        keep = ranking[:k]
        tr, te = train.restrict(keep), test.restrict(keep)
        model = fit(tr.X, tr.y, alpha, tr.feature_names)
        curve.append(compute_metrics(classify_eq1(model, te.X, utility), te.y, utility).da)
    return curve


def informativeness_ranking(train: Dataset, alpha: float = 1.0) -> list[int]:
    """Feature indices by decreasing |log odds ratio| of the fitted conditionals."""
    model = fit(train.X, train.y, alpha)
    tm, tb = model.theta_m, model.theta_b
    with np.errstate(divide="ignore"):
        score = np.abs(np.log(tm * (1 - tb)) - np.log(tb * (1 - tm)))
    return list(np.argsort(-score, kind="stable"))


def write_report(path, reports: dict[str, EvalReport], config: dict) -> str:
    from .features.table import atomic_write_text

    text = json.dumps({"config": config, **{k: v.to_dict() for k, v in reports.items()}}, indent=1) + "\n"
    atomic_write_text(path, text)
    return text


def write_group_csv(path, reports: dict[str, EvalReport]) -> str:
    """One row per (classifier, group) with the pooled group metrics, for plotting."""
    from .features.table import atomic_write_text

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["classifier", "group", "da", "fpr", "fnr", "mean_utility"])
    for name, rep in reports.items():
        for g, row in enumerate(rep.groups):
            cells = ("" if row[k] is None else repr(row[k]) for k in ("da", "fpr", "fnr", "mean_utility"))
            writer.writerow([name, g, *cells])
    atomic_write_text(path, buf.getvalue())
    return buf.getvalue()
