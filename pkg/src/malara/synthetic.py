"""Synthetic labelled binary-feature datasets."""

from __future__ import annotations

import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .attack import METAME_OPCODES, METAME_SIDE_EFFECTS
from .features.table import FeatureSchema, FeatureTable, binarize
from .model import as_malware_mask


@dataclass
class Dataset:
    X: np.ndarray  # uint8, rows are binary feature vectors
    y: np.ndarray  # 'M' / 'B'
    feature_names: tuple[str, ...]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.uint8)
        self.y = np.asarray([str(v) for v in self.y])
        self.feature_names = tuple(self.feature_names)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size or self.X.shape[1] != len(self.feature_names):
            raise ValueError("dataset shapes do not agree")
        as_malware_mask(self.y)

    def __len__(self) -> int:
        return self.y.size

    @property
    def is_malware(self) -> np.ndarray:
        return self.y == "M"

    def take(self, idx) -> Dataset:
        return Dataset(self.X[idx], self.y[idx], self.feature_names)

    def restrict(self, features: Sequence[int]) -> Dataset:
        features = list(features)
        return Dataset(self.X[:, features], self.y, [self.feature_names[i] for i in features])

    @classmethod
    def from_table(cls, table: FeatureTable, schema: FeatureSchema | None = None) -> Dataset:
        schema = schema or FeatureSchema.presence(table.names)
        if "?" in table.labels:
            raise ValueError("unlabelled rows ('?') cannot be used here")
        return cls(binarize(table, schema), np.array(table.labels), schema.names)

    def to_table(self) -> FeatureTable:
        return FeatureTable(list(self.feature_names), self.y.tolist(), self.X.astype(float))


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Independent Bernoulli features per class.

    ``theta_m[i]`` / ``theta_b[i]`` are the presence probabilities of feature i
    in malware / benign samples.
    """

    feature_names: tuple[str, ...]
    theta_m: np.ndarray
    theta_b: np.ndarray
    n_per_class: int = 200
    seed: int = 0
    dynamic: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "theta_m", np.asarray(self.theta_m, dtype=float))
        object.__setattr__(self, "theta_b", np.asarray(self.theta_b, dtype=float))
        n = len(self.feature_names)
        if n < 1:
            raise ValueError("need at least one feature")
        for theta in (self.theta_m, self.theta_b):
            if theta.shape != (n,):
                raise ValueError("generator parameters must match the feature count")
            if np.any((theta < 0) | (theta > 1)):
                raise ValueError("generator probabilities must lie in [0, 1]")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "theta_m": self.theta_m.tolist(),
            "theta_b": self.theta_b.tolist(),
            "n_per_class": self.n_per_class,
            "seed": self.seed,
            "dynamic": list(self.dynamic),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> SyntheticSpec:
        if "theta_m" not in obj:
            # scenario shorthand: {"scenario": "default", "separation": ..., ...}
            kwargs = {k: obj[k] for k in ("separation", "n_per_class", "seed", "n_generic") if k in obj}
            return default_scenario(**kwargs)
        return cls(
            feature_names=tuple(obj["feature_names"]),
            theta_m=np.array(obj["theta_m"], dtype=float),
            theta_b=np.array(obj["theta_b"], dtype=float),
            n_per_class=int(obj.get("n_per_class", 200)),
            seed=int(obj.get("seed", 0)),
            dynamic=tuple(obj.get("dynamic", ())),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> SyntheticSpec:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def schema(self) -> FeatureSchema:
        return FeatureSchema(self.feature_names, dynamic=frozenset(self.dynamic))


# nop/push/pop are the features the metame preset drives to 1; benign code
# carries them far more often than malware in the default scenario
CONVERGENT_OPCODES = ("nop", "push", "pop")


def default_scenario(separation: float = 0.085, n_per_class: int = 200, seed: int = 0,
                     n_generic: int = 20) -> SyntheticSpec:
    """The calibrated desk-scale scenario used by the experiment scripts.

    Features: the six metame opcodes, fourteen weakly informative side-effect
    features and ``n_generic`` features whose class gap is ``2 * separation``.
    Of the opcodes only nop/push/pop carry class signal (0.2 vs 0.8).
    """
    names, tm, tb = [], [], []
    for name in METAME_OPCODES:
        names.append(name)
        if name in CONVERGENT_OPCODES:
            tm.append(0.2)
            tb.append(0.8)
        else:
            tm.append(0.5)
            tb.append(0.5)
    signs = np.resize([-1.0, 1.0], max(len(METAME_SIDE_EFFECTS), n_generic))
    for name, s in zip(METAME_SIDE_EFFECTS, signs):
        names.append(name)
        tm.append(0.5 + 0.05 * s)
        tb.append(0.5 - 0.05 * s)
    for i in range(n_generic):
        names.append(f"api_{i:02d}")
        tm.append(0.5 + separation * signs[i])
        tb.append(0.5 - separation * signs[i])
    return SyntheticSpec(tuple(names), np.array(tm), np.array(tb), n_per_class, seed)


def generate_synthetic(spec: SyntheticSpec, seed=None) -> Dataset:
    """Malware rows first, then benign; reproducible for a fixed seed."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n = spec.n_per_class
    X_m = rng.random((n, spec.n_features)) < spec.theta_m
    X_b = rng.random((n, spec.n_features)) < spec.theta_b
    y = np.array(["M"] * n + ["B"] * n)
    return Dataset(np.vstack([X_m, X_b]).astype(np.uint8), y, spec.feature_names)
