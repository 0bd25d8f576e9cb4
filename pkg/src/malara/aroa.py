"""Adversary-aware classification against obfuscation attacks.

The defender scores an observed vector x' by

    EU(y_C) = u(y_C, M) p(M) sum_{x in X'} p(o_{x->x'} | x, M) p(x | M)
            + u(y_C, B) p(B) p(x' | B)

where X' are the possible origins of x'. The attack probability is obtained by
simulating the attacker: with degenerate utilities (0 if caught, 1 if not)
his random optimal attack is argmin_o P_o, where P_o ~ Beta with mean
r_o = p(M | o(x)) and a perceived variance ``var``. Over L draws,

    p_hat(o | x, M) = #{draws where o is the argmin} / L.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .attack import (
    METAME_OPCODES,
    Attack,
    AttackConfig,
    attack_between,
    attack_masks,
    origin_masks,
)
from .model import ZERO_ONE, Label, NBModel, UtilityMatrix, decide, normalize_log_weights

DEGENERATE_TOL = 1e-12
CLAMP_FACTOR = 0.95
_DRAW_BUDGET = 2_000_000  # beta draws per chunk


@dataclass(frozen=True)
class AttackerBeliefs:
    var: float = 0.25
    L: int = 700

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("var must be > 0")
        if self.L < 1:
            raise ValueError("L must be >= 1")


@dataclass(frozen=True)
class BetaParams:
    delta1: float
    delta2: float
    degenerate_at: int | None = None

    @property
    def mean(self) -> float:
        if self.degenerate_at is not None:
            return float(self.degenerate_at)
        return self.delta1 / (self.delta1 + self.delta2)

    @property
    def var(self) -> float:
        if self.degenerate_at is not None:
            return 0.0
        s = self.delta1 + self.delta2
        return self.delta1 * self.delta2 / (s * s * (s + 1))


def _beta_arrays(r, s, var):
    """Moment-matched Beta shapes for means r (with s = 1 - r), vectorized.

    Returns (delta1, delta2, degenerate) where degenerate is -1 (proper Beta),
    0 or 1 (point mass).
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    rs = r * s
    clamped = var >= CLAMP_FACTOR * rs
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = np.where(clamped, 1.0 / CLAMP_FACTOR - 1.0, rs / var - 1.0)
    degenerate = np.where(r <= DEGENERATE_TOL, 0, np.where(s <= DEGENERATE_TOL, 1, -1))
    return r * nu, s * nu, degenerate


def beta_from_mean_var(r: float, var: float) -> BetaParams:
    """Beta(delta1, delta2) with mean r and variance min(var, 0.95 r (1 - r)).

    Means within 1e-12 of 0 or 1 give a point mass instead.
    """
    if not var > 0:
        raise ValueError("var must be > 0")
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    d1, d2, deg = _beta_arrays(r, 1.0 - r, var)
    if deg >= 0:
        return BetaParams(0.0, 0.0, int(deg))
    return BetaParams(float(d1), float(d2))


def logit_beta_draws(delta1, delta2, degenerate, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` rows of logit(Beta) draws, one column per parameter pair.

    Gamma variates are formed as G(a) = G(a + 1) * U**(1/a) in log space and
    combined as log G1 - log G2, which is monotone in the Beta variate and
    keeps full resolution near both 0 and 1 even for shapes far below 1.
    Point masses at 0 and 1 map to -inf and +inf.
    """
    delta1 = np.asarray(delta1, dtype=float)
    delta2 = np.asarray(delta2, dtype=float)
    degenerate = np.asarray(degenerate)
    proper = degenerate < 0
    a = np.where(proper, delta1, 1.0)
    b = np.where(proper, delta2, 1.0)
    shape = (size, a.size)
    lg1 = np.log(rng.standard_gamma(a + 1.0, size=shape)) + np.log1p(-rng.random(shape)) / a
    lg2 = np.log(rng.standard_gamma(b + 1.0, size=shape)) + np.log1p(-rng.random(shape)) / b
    out = lg1 - lg2
    if not proper.all():
        out[:, degenerate == 0] = -np.inf
        out[:, degenerate == 1] = np.inf
    return out


def log_beta_draws(delta1, delta2, degenerate, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` rows of log Beta draws (log of the variate, not of its odds)."""
    return -np.logaddexp(0.0, -logit_beta_draws(delta1, delta2, degenerate, size, rng))


def estimate_r(model: NBModel, z):
    """Classifier malware probability p1 / (p1 + p2) at z (vector or rows)."""
    r, _ = _r_and_complement(model, z)
    return float(r) if np.ndim(r) == 0 else r


def _r_and_complement(model: NBModel, z):
    r, s = normalize_log_weights(*model.log_joint(z))
    if np.any(np.isnan(r)):
        raise ValueError("zero evidence")
    return r, s


def win_counts(points, model: NBModel, beliefs: AttackerBeliefs, rng: np.random.Generator,
               L: int | None = None) -> np.ndarray:
    """How often each attacked point (row) is the attacker's optimum over L draws.

    Ties go to the lowest row. The counts always sum to L.
    """
    points = np.atleast_2d(points)
    L = beliefs.L if L is None else L
    n_attacks = points.shape[0]
    if n_attacks == 1:
        return np.array([L], dtype=np.int64)
    r, s = _r_and_complement(model, points)
    d1, d2, deg = _beta_arrays(r, s, beliefs.var)
    counts = np.zeros(n_attacks, dtype=np.int64)
    chunk = max(1, _DRAW_BUDGET // n_attacks)
    done = 0
    while done < L:
        rows = min(chunk, L - done)
        draws = logit_beta_draws(d1, d2, deg, rows, rng)
        counts += np.bincount(draws.argmin(axis=1), minlength=n_attacks)
        done += rows
    return counts


def shared_win_counts(point_sets: Sequence[np.ndarray], model: NBModel, beliefs: AttackerBeliefs,
                      rng: np.random.Generator) -> list[np.ndarray]:
    """``win_counts`` for several attack sets using common draws.

    Each distinct attacked point gets one Beta draw per round, shared by every
    set containing it. Per-set counts keep their distribution but become
    correlated across sets; the cost scales with the number of distinct points.
    """
    L = beliefs.L
    out = [np.array([L], dtype=np.int64) if len(ps) == 1 else None for ps in point_sets]
    todo = [k for k, c in enumerate(out) if c is None]
    if not todo:
        return out
    stacked = np.concatenate([point_sets[k] for k in todo])
    unique, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    bounds = np.cumsum([0] + [len(point_sets[k]) for k in todo])
    columns = [inverse[bounds[i]:bounds[i + 1]] for i in range(len(todo))]
    r, s = _r_and_complement(model, unique)
    d1, d2, deg = _beta_arrays(r, s, beliefs.var)
    for k in todo:
        out[k] = np.zeros(len(point_sets[k]), dtype=np.int64)
    chunk = max(1, _DRAW_BUDGET // unique.shape[0])
    done = 0
    while done < L:
        rows = min(chunk, L - done)
        draws = logit_beta_draws(d1, d2, deg, rows, rng)
        for k, cols in zip(todo, columns):
            out[k] += np.bincount(draws[:, cols].argmin(axis=1), minlength=cols.size)
        done += rows
    return out


def _attacked_points(x, masks) -> np.ndarray:
    return (np.asarray(x, dtype=bool) | masks).astype(np.uint8)


def attacker_optimal_sample(x, attacks: Sequence[Attack], model: NBModel,
                            beliefs: AttackerBeliefs, rng: np.random.Generator) -> Attack:
    """One draw of the attacker's random optimal attack."""
    if not attacks:
        raise ValueError("attack set must be non-empty")
    masks = np.array([a.mask(model.n) for a in attacks])
    counts = win_counts(_attacked_points(x, masks), model, beliefs, rng, L=1)
    return attacks[int(np.argmax(counts))]


class AttackEstimate(NamedTuple):
    p: float
    reachable: bool
    counts: np.ndarray


def attack_probability(x, x_prime, attacks: Sequence[Attack], model: NBModel,
                       beliefs: AttackerBeliefs, rng: np.random.Generator) -> AttackEstimate:
    """Monte Carlo estimate of p(o_{x->x'} | x, M) over the given attack set."""
    target = attack_between(x, x_prime)
    if target is None:
        return AttackEstimate(0.0, False, np.zeros(len(attacks), dtype=np.int64))
    masks = np.array([a.mask(model.n) for a in attacks]).reshape(len(attacks), model.n)
    counts = win_counts(_attacked_points(x, masks), model, beliefs, rng)
    try:
        k = list(attacks).index(target)
    except ValueError:
        return AttackEstimate(0.0, True, counts)
    return AttackEstimate(counts[k] / beliefs.L, True, counts)


@dataclass(frozen=True)
class AroaConfig:
    beliefs: AttackerBeliefs = field(default_factory=AttackerBeliefs)
    attack: AttackConfig = field(default_factory=AttackConfig)
    utility: UtilityMatrix = ZERO_ONE

    def to_dict(self, feature_names: Sequence[str] | None = None) -> dict:
        targeted = self.attack.targeted
        if targeted is not None and feature_names is not None:
            targeted = [feature_names[i] for i in targeted]
        return {
            "L": self.beliefs.L,
            "var": self.beliefs.var,
            "max_attacks": self.attack.max_attacks,
            "max_origins": self.attack.max_origins,
            "targeted": "all-static" if targeted is None else list(targeted),
            "seed": self.attack.seed,
        }

    @classmethod
    def from_dict(cls, obj: Mapping, feature_names: Sequence[str], dynamic=(),
                  utility: UtilityMatrix = ZERO_ONE) -> AroaConfig:
        names = list(feature_names)
        targeted = obj.get("targeted", "all-static")
        if targeted == "all-static":
            idx = tuple(i for i, nm in enumerate(names) if nm not in set(dynamic))
            targeted_idx = None if len(idx) == len(names) else idx
        elif targeted == "metame":
            targeted_idx = tuple(i for i, nm in enumerate(names) if nm in METAME_OPCODES)
        else:
            missing = [nm for nm in targeted if nm not in names]
            if missing:
                raise ValueError(f"targeted features not in schema: {missing}")
            targeted_idx = tuple(names.index(nm) for nm in targeted)
        return cls(
            beliefs=AttackerBeliefs(var=float(obj.get("var", 0.25)), L=int(obj.get("L", 700))),
            attack=AttackConfig(
                max_attacks=int(obj.get("max_attacks", 20)),
                max_origins=int(obj.get("max_origins", 300)),
                targeted=targeted_idx,
                seed=int(obj.get("seed", 0)),
            ),
            utility=utility,
        )

    @classmethod
    def load(cls, path: str | os.PathLike, feature_names, dynamic=(),
             utility: UtilityMatrix = ZERO_ONE) -> AroaConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), feature_names, dynamic, utility)


@dataclass
class AroaDecision:
    label: Label
    eu_m: float  # expected utilities, normalized by total evidence
    eu_b: float
    log_evidence: float  # unnormalized EU = eu * exp(log_evidence)
    n_origins: int
    attack_probs: np.ndarray  # p_hat(o_{x->x'} | x, M) per origin

    @property
    def raw_eu(self) -> tuple[float, float]:
        scale = math.exp(self.log_evidence)
        return self.eu_m * scale, self.eu_b * scale


def _rng(seed: int, key: tuple) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _logsumexp(v: np.ndarray) -> float:
    if v.size == 0:
        return -math.inf
    top = float(v.max())
    if top == -math.inf:
        return top
    return top + math.log(float(np.exp(v - top).sum()))


def malware_evidence(model: NBModel, x_prime, cfg: AroaConfig, stream: tuple = ()):
    """log sum_x p_hat(o_{x->x'} | x, M) p(x | M) and the per-origin p_hat."""
    x_prime = np.asarray(x_prime)
    if x_prime.shape != (model.n,):
        raise ValueError(f"dimension mismatch: model has {model.n} features, got {x_prime.shape}")
    origins = origin_masks(x_prime, cfg.attack, _rng(cfg.attack.seed, (*stream, 0)))
    point_sets, hits = [], []
    for k, x in enumerate(origins):
        rng = _rng(cfg.attack.seed, (*stream, k + 1))
        forced = Attack.from_mask(x_prime.astype(bool) & ~x)
        masks = attack_masks(x, cfg.attack, rng, forced=forced)
        point_sets.append(_attacked_points(x, masks))
        hits.append(np.flatnonzero((masks == forced.mask(model.n)).all(axis=1)))
    draw_rng = _rng(cfg.attack.seed, (*stream, origins.shape[0] + 1))
    all_counts = shared_win_counts(point_sets, model, cfg.beliefs, draw_rng)
    probs = np.array([c[h[0]] / cfg.beliefs.L if h.size else 0.0 for c, h in zip(all_counts, hits)])
    with np.errstate(divide="ignore"):
        terms = np.log(probs) + model.log_likelihood(origins, "M")
    return _logsumexp(terms), origins.shape[0], probs


def classify_aroa(model: NBModel, x_prime, cfg: AroaConfig = AroaConfig(),
                  stream: tuple = ()) -> AroaDecision:
    """Adversary-aware maximum expected utility label for one observed vector.

    ``stream`` keys the random streams (e.g. the row index in a batch), so
    batches are reproducible regardless of evaluation order.
    """
    log_s, n_origins, probs = malware_evidence(model, x_prime, cfg, stream)
    _, _, _, _, lpm, lpb = model._log_tables
    log_a = lpm + log_s
    log_b = lpb + model.log_likelihood(np.atleast_2d(x_prime), "B")[0]
    if log_a == -math.inf and log_b == -math.inf:
        w_m = w_b = 0.0
        log_evidence = -math.inf
    else:
        w_m, w_b = normalize_log_weights(log_a, log_b)
        log_evidence = float(np.logaddexp(log_a, log_b))
    eu_m, eu_b = cfg.utility.expected(w_m, w_b)
    return AroaDecision(decide(w_m, w_b, cfg.utility), float(eu_m), float(eu_b),
                        log_evidence, n_origins, probs)


def classify_aroa_batch(model: NBModel, X, cfg: AroaConfig = AroaConfig(),
                        stream: tuple = (), n_jobs: int = 1) -> list[AroaDecision]:
    X = np.atleast_2d(np.asarray(X))
    if n_jobs == 1:
        return [classify_aroa(model, x, cfg, (*stream, i)) for i, x in enumerate(X)]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(
        delayed(classify_aroa)(model, x, cfg, (*stream, i)) for i, x in enumerate(X)
    )
