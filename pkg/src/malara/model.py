"""Bernoulli Naive Bayes over binary feature vectors, with expected-utility decisions.

The per-class likelihood of a binary vector x is

    p(x | y) = prod_i theta[y, i] ** x_i * (1 - theta[y, i]) ** (1 - x_i)

accumulated in log space, since products over ~1000 features underflow.
Conditionals are smoothed with ``alpha`` pseudo-counts per outcome.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from collections.abc import Mapping, Sequence

import numpy as np

MODEL_FILE_VERSION = 1


class Label(str, Enum):
    M = "M"
    B = "B"

    def __str__(self) -> str:
        return self.value


class ModelFileError(ValueError):
    pass


def as_malware_mask(labels: Sequence) -> np.ndarray:
    """Boolean mask (True = malware) from a sequence of 'M'/'B' labels."""
    arr = np.asarray([str(v) for v in labels])
    bad = set(arr.tolist()) - {"M", "B"}
    if bad:
        raise ValueError(f"labels must be 'M' or 'B', got {sorted(bad)}")
    return arr == "M"


@dataclass(frozen=True)
class UtilityMatrix:
    """Defender utility u[predicted][actual]."""

    mm: float = 1.0  # predict M, actual M
    mb: float = 0.0  # predict M, actual B
    bm: float = 0.0  # predict B, actual M
    bb: float = 1.0  # predict B, actual B

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mm, self.mb, self.bm, self.bb)):
            raise ValueError("utilities must be finite")

    def __call__(self, predicted, actual) -> float:
        return {("M", "M"): self.mm, ("M", "B"): self.mb,
                ("B", "M"): self.bm, ("B", "B"): self.bb}[(str(predicted), str(actual))]

    def expected(self, w_m, w_b):
        """Expected utilities (EU(M), EU(B)) given class weights."""
        return self.mm * w_m + self.mb * w_b, self.bm * w_m + self.bb * w_b

    def to_dict(self) -> dict:
        return {"M": {"M": self.mm, "B": self.mb}, "B": {"M": self.bm, "B": self.bb}}

    @classmethod
    def from_dict(cls, obj: Mapping) -> UtilityMatrix:
        try:
            return cls(mm=float(obj["M"]["M"]), mb=float(obj["M"]["B"]),
                       bm=float(obj["B"]["M"]), bb=float(obj["B"]["B"]))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"utility must be a 2x2 mapping keyed by predicted/actual label: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> UtilityMatrix:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


ZERO_ONE = UtilityMatrix(1.0, 0.0, 0.0, 1.0)
# heavier penalty on false negatives
FN_AVERSE = UtilityMatrix(1.0, 0.0, -5.0, 1.0)


@dataclass(frozen=True, eq=False)
class NBModel:
    prior_m: float
    prior_b: float
    theta_m: np.ndarray
    theta_b: np.ndarray
    alpha: float = 1.0
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        theta_m = np.asarray(self.theta_m, dtype=float)
        theta_b = np.asarray(self.theta_b, dtype=float)
        object.__setattr__(self, "theta_m", theta_m)
        object.__setattr__(self, "theta_b", theta_b)
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(theta_m.size))
        object.__setattr__(self, "feature_names", names)
        self.check()

    def check(self) -> None:
        if self.prior_m < 0 or self.prior_b < 0 or abs(self.prior_m + self.prior_b - 1.0) > 1e-12:
            raise ValueError("priors must be non-negative and sum to 1")
        if self.theta_m.ndim != 1 or self.theta_m.shape != self.theta_b.shape:
            raise ValueError("theta_m and theta_b must be vectors of equal length")
        if len(self.feature_names) != self.n:
            raise ValueError("feature_names length does not match theta")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        for theta in (self.theta_m, self.theta_b):
            if self.alpha > 0:
                ok = np.all((theta > 0) & (theta < 1))
            else:
                ok = np.all((theta >= 0) & (theta <= 1))
            if not ok:
                raise ValueError("theta outside the admissible range")

    @property
    def n(self) -> int:
        return self.theta_m.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, NBModel):
            return NotImplemented
        return (
            self.prior_m == other.prior_m
            and self.prior_b == other.prior_b
            and self.alpha == other.alpha
            and self.feature_names == other.feature_names
            and np.array_equal(self.theta_m, other.theta_m)
            and np.array_equal(self.theta_b, other.theta_b)
        )

    @cached_property
    def _log_tables(self):
        with np.errstate(divide="ignore"):
            return (
                np.log(self.theta_m), np.log1p(-self.theta_m),
                np.log(self.theta_b), np.log1p(-self.theta_b),
                math.log(self.prior_m) if self.prior_m > 0 else -math.inf,
                math.log(self.prior_b) if self.prior_b > 0 else -math.inf,
            )

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.n:
            raise ValueError(f"dimension mismatch: model has {self.n} features, got {x.shape[-1]}")
        return x.astype(bool, copy=False)

    def log_likelihood(self, x, label) -> np.ndarray | float:
        """log p(x | label); ``x`` may be a single vector or a matrix of rows."""
        x = self._check_dim(x)
        lm1, lm0, lb1, lb0, _, _ = self._log_tables
        if str(label) == "M":
            table = np.where(x, lm1, lm0)
        else:
            table = np.where(x, lb1, lb0)
        out = table.sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def log_joint(self, x):
        """(log p(M) + log p(x|M), log p(B) + log p(x|B))."""
        _, _, _, _, lpm, lpb = self._log_tables
        return lpm + self.log_likelihood(x, "M"), lpb + self.log_likelihood(x, "B")


def fit(X, y, alpha: float = 1.0, feature_names: Sequence[str] = ()) -> NBModel:
    """Train on binary rows ``X`` with labels ``y`` ('M'/'B')."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix of binary rows")
    is_m = as_malware_mask(y)
    if is_m.size != X.shape[0]:
        raise ValueError("dimension mismatch: X and y lengths differ")
    if not np.isin(X, (0, 1)).all():
        raise ValueError("features must be binary")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    n_m = int(is_m.sum())
    n_b = is_m.size - n_m
    if n_m == 0 or n_b == 0:
        raise ValueError("degenerate training set")
    X = X.astype(np.int64)
    count_m = X[is_m].sum(axis=0)
    count_b = X[~is_m].sum(axis=0)
    return NBModel(
        prior_m=n_m / is_m.size,
        prior_b=n_b / is_m.size,
        theta_m=(count_m + alpha) / (n_m + 2 * alpha),
        theta_b=(count_b + alpha) / (n_b + 2 * alpha),
        alpha=float(alpha),
        feature_names=tuple(feature_names),
    )


def normalize_log_weights(log_m, log_b):
    """Normalize two log-weights into probabilities; NaN where both are -inf."""
    log_m = np.asarray(log_m, dtype=float)
    log_b = np.asarray(log_b, dtype=float)
    with np.errstate(invalid="ignore"):
        top = np.maximum(log_m, log_b)
        e_m = np.exp(log_m - top)
        e_b = np.exp(log_b - top)
        w_m = e_m / (e_m + e_b)
        w_b = e_b / (e_m + e_b)
    if w_m.ndim == 0:
        return float(w_m), float(w_b)
    return w_m, w_b


def class_conditional(model: NBModel, x, y) -> float:
    return float(np.exp(model.log_likelihood(x, y)))


def posterior(model: NBModel, x):
    """(p(M|x), p(B|x)) by Bayes rule over the two classes."""
    w_m, w_b = normalize_log_weights(*model.log_joint(x))
    if np.any(np.isnan(w_m)):
        raise ValueError("zero evidence")
    return w_m, w_b


def decide(w_m, w_b, u: UtilityMatrix):
    """Label maximizing expected utility; ties go to M."""
    eu_m, eu_b = u.expected(w_m, w_b)
    if np.ndim(eu_m) == 0:
        return Label.M if eu_m >= eu_b else Label.B
    return np.where(eu_m >= eu_b, "M", "B")


def classify_eq1(model: NBModel, x, u: UtilityMatrix = ZERO_ONE):
    """Adversary-unaware maximum expected utility classification.

    Accepts one vector (returns a Label) or a matrix (returns an array of 'M'/'B').
    """
    w_m, w_b = posterior(model, x)
    return decide(w_m, w_b, u)


def expected_utilities(model: NBModel, x, u: UtilityMatrix = ZERO_ONE):
    return u.expected(*posterior(model, x))


def model_to_dict(model: NBModel) -> dict:
    return {
        "version": MODEL_FILE_VERSION,
        "alpha": model.alpha,
        "prior_m": model.prior_m,
        "prior_b": model.prior_b,
        "feature_names": list(model.feature_names),
        "theta_m": model.theta_m.tolist(),
        "theta_b": model.theta_b.tolist(),
    }


def model_from_dict(obj: Mapping) -> NBModel:
    if not isinstance(obj, Mapping):
        raise ModelFileError("model file must hold a JSON object")
    if obj.get("version") != MODEL_FILE_VERSION:
        raise ModelFileError(f"model version mismatch: expected {MODEL_FILE_VERSION}, got {obj.get('version')!r}")
    try:
        return NBModel(
            prior_m=float(obj["prior_m"]),
            prior_b=float(obj["prior_b"]),
            theta_m=np.array(obj["theta_m"], dtype=float),
            theta_b=np.array(obj["theta_b"], dtype=float),
            alpha=float(obj["alpha"]),
            feature_names=tuple(obj["feature_names"]),
        )
    except KeyError as exc:
        raise ModelFileError(f"model file missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid model file: {exc}") from None


def dumps_model(model: NBModel) -> str:
    # json emits repr() floats, which round-trip exactly
    return json.dumps(model_to_dict(model), indent=1) + "\n"


def save_model(model: NBModel, path: str | os.PathLike) -> None:
    from .features.table import atomic_write_text

    atomic_write_text(path, dumps_model(model))


def load_model(path: str | os.PathLike) -> NBModel:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None
    return model_from_dict(obj)
