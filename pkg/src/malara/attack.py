"""Obfuscation attacks on binary feature vectors.

An attack switches on a set H of features that are absent in x (a monotone
0 -> 1 move). For an observed x' the possible origins are the vectors obtained
by switching off any subset K of the features present in x'. Both sets grow
as 2**m, so beyond a cap they are sampled uniformly without replacement,
always keeping the empty subset (identity attack / x' itself).

The stochastic simulator ``simulate_obfuscation`` is a separate, richer model
of a metamorphic engine (it may also remove features) used to generate
obfuscated test data.
"""

from __future__ import annotations

import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

METAME_OPCODES = ("nop", "xor", "sub", "push", "pop", "or")
# Stand-ins for the other most-modified features; only names present in a
# schema are used.
METAME_SIDE_EFFECTS = (
    "mov", "test", "and", "add", "call", "jmp", "cmp",
    "lea", "ret", "inc", "dec", "shl", "shr", "jz",
)
# Probability that a change moves the feature towards 1.
METAME_DIRECTIONS = {
    "nop": 1.0, "push": 1.0, "pop": 1.0,  # inserted junk, saturates
    "sub": 0.8, "or": 0.8,                # substitutes for xor
    "xor": 0.2,                           # replaced, tends to disappear
}


@dataclass(frozen=True)
class Attack:
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))

    @classmethod
    def from_mask(cls, mask) -> Attack:
        return cls(tuple(np.flatnonzero(mask)))

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[list(self.indices)] = True
        return m

    def __len__(self) -> int:
        return len(self.indices)


IDENTITY = Attack()


@dataclass(frozen=True)
class AttackConfig:
    max_attacks: int = 20
    max_origins: int = 300
    targeted: tuple[int, ...] | None = None  # None: every feature attackable
    seed: int = 0

    def __post_init__(self):
        if self.max_attacks < 1 or self.max_origins < 1:
            raise ValueError("caps must be >= 1")
        if self.targeted is not None:
            object.__setattr__(self, "targeted", tuple(sorted(set(int(i) for i in self.targeted))))

    def targeted_mask(self, n: int) -> np.ndarray:
        if self.targeted is None:
            return np.ones(n, dtype=bool)
        mask = np.zeros(n, dtype=bool)
        mask[list(self.targeted)] = True
        return mask


def attack_between(x, x_prime) -> Attack | None:
    """The attack o_{x->x'}, or None if x' is not reachable by 0 -> 1 flips."""
    x = np.asarray(x, dtype=bool)
    x_prime = np.asarray(x_prime, dtype=bool)
    if np.any(x & ~x_prime):
        return None
    return Attack.from_mask(x_prime & ~x)


def apply_attack(x, attack: Attack) -> np.ndarray:
    x = np.asarray(x)
    idx = list(attack.indices)
    if idx and np.any(x[idx] != 0):
        raise ValueError("attack not applicable")
    out = x.copy()
    out[idx] = 1
    return out


def subset_masks(m: int, cap: int, rng: np.random.Generator, forced=None) -> np.ndarray:
    """Rows are subsets of ``m`` candidates.

    Full enumeration (row k = bits of k) when 2**m <= cap; otherwise the empty
    subset, then ``forced`` if given, then uniform distinct draws up to ``cap``.
    """
    if m < 63 and (1 << m) <= cap:
        codes = np.arange(1 << m, dtype=np.int64)
        return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    rows = [np.zeros(m, dtype=bool)]
    seen = {rows[0].tobytes()}
    if forced is not None:
        forced = np.asarray(forced, dtype=bool)
        if forced.tobytes() not in seen and cap > 1:
            rows.append(forced)
            seen.add(forced.tobytes())
    while len(rows) < cap:
        need = cap - len(rows)
        batch = rng.integers(0, 2, size=(2 * need, m), dtype=np.uint8).astype(bool)
        for row in batch:
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(row)
                if len(rows) == cap:
                    break
    return np.array(rows, dtype=bool).reshape(len(rows), m)


def _rng(cfg: AttackConfig, rng) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(cfg.seed)


def attack_masks(x, cfg: AttackConfig, rng=None, forced: Attack | None = None) -> np.ndarray:
    """Attacks available from ``x`` as an (A, n) boolean matrix; row 0 is the identity."""
    x = np.asarray(x, dtype=bool)
    candidates = np.flatnonzero(~x & cfg.targeted_mask(x.size))
    forced_sub = None
    if forced is not None:
        forced_sub = np.isin(candidates, forced.indices)
        if forced_sub.sum() != len(forced):
            raise ValueError("forced attack outside the attackable set")
    sub = subset_masks(candidates.size, cfg.max_attacks, _rng(cfg, rng), forced_sub)
    out = np.zeros((sub.shape[0], x.size), dtype=bool)
    out[:, candidates] = sub
    return out


def attacks_of(x, cfg: AttackConfig, rng=None, forced: Attack | None = None) -> list[Attack]:
    return [Attack.from_mask(row) for row in attack_masks(x, cfg, rng, forced)]


def origin_masks(x_prime, cfg: AttackConfig, rng=None) -> np.ndarray:
    """Origins of ``x_prime`` as an (K, n) boolean matrix; row 0 is x' itself."""
    x_prime = np.asarray(x_prime, dtype=bool)
    candidates = np.flatnonzero(x_prime & cfg.targeted_mask(x_prime.size))
    sub = subset_masks(candidates.size, cfg.max_origins, _rng(cfg, rng))
    out = np.broadcast_to(x_prime, (sub.shape[0], x_prime.size)).copy()
    out[:, candidates] &= ~sub
    return out


def origins_of(x_prime, cfg: AttackConfig, rng=None) -> list[np.ndarray]:
    dtype = np.asarray(x_prime).dtype
    return [row.astype(dtype) for row in origin_masks(x_prime, cfg, rng)]


@dataclass(frozen=True, eq=False)
class ObfuscationProfile:
    """Per-feature change probabilities of a stochastic obfuscator.

    ``up[i]`` is the direction bias of feature i: 0.5 flips either way with
    probability ``p[i]``; 1.0 only ever switches the feature on; 0.0 only off.
    Features in ``frozen`` (dynamic behaviour) are never modified.
    ``passes`` is how many times ``obfuscate`` runs the engine over a binary.
    """

    feature_names: tuple[str, ...]
    p: np.ndarray
    up: np.ndarray = None
    frozen: np.ndarray = None
    passes: int = 1

    def __post_init__(self):
        n = len(self.feature_names)
        p = np.asarray(self.p, dtype=float)
        up = np.full(n, 0.5) if self.up is None else np.asarray(self.up, dtype=float)
        frozen = np.zeros(n, dtype=bool) if self.frozen is None else np.asarray(self.frozen, dtype=bool)
        for name, arr in (("p", p), ("up", up), ("frozen", frozen)):
            if arr.shape != (n,):
                raise ValueError(f"profile {name} has shape {arr.shape}, expected ({n},)")
        if np.any((p < 0) | (p > 1)) or np.any((up < 0) | (up > 1)):
            raise ValueError("profile probabilities must lie in [0, 1]")
        if self.passes < 0:
            raise ValueError("passes must be >= 0")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "frozen", frozen)

    @property
    def n(self) -> int:
        return len(self.feature_names)

    @property
    def p_on(self) -> np.ndarray:
        return np.where(self.frozen, 0.0, self.p * np.minimum(1.0, 2 * self.up))

    @property
    def p_off(self) -> np.ndarray:
        return np.where(self.frozen, 0.0, self.p * np.minimum(1.0, 2 * (1 - self.up)))

    @classmethod
    def null(cls, feature_names: Sequence[str]) -> ObfuscationProfile:
        return cls(tuple(feature_names), np.zeros(len(feature_names)))

    @classmethod
    def from_dict(cls, obj: Mapping, feature_names: Sequence[str], dynamic=()) -> ObfuscationProfile:
        """Build from ``{targeted, probabilities, side_effect_default}``.

        Optional keys: ``targeted_default`` (probability for targeted names
        without an explicit entry, 0.5), ``directions`` (name -> bias towards 1)
        and ``passes``.
        """
        names = list(feature_names)
        unknown = (set(obj.get("targeted", ())) | set(obj.get("probabilities", {}))
                   | set(obj.get("directions", {}))) - set(names)
        if unknown:
            raise ValueError(f"profile names not in schema: {sorted(unknown)}")
        p = np.full(len(names), float(obj.get("side_effect_default", 0.0)))
        targeted_default = float(obj.get("targeted_default", 0.5))
        for name in obj.get("targeted", ()):
            p[names.index(name)] = targeted_default
        for name, value in obj.get("probabilities", {}).items():
            p[names.index(name)] = float(value)
        up = np.full(len(names), 0.5)
        for name, value in obj.get("directions", {}).items():
            up[names.index(name)] = float(value)
        frozen = np.isin(names, list(dynamic))
        return cls(tuple(names), p, up, frozen, int(obj.get("passes", 1)))

    def to_dict(self) -> dict:
        return {
            "targeted": [],
            "probabilities": dict(zip(self.feature_names, self.p.tolist())),
            "side_effect_default": 0.0,
            "directions": {nm: u for nm, u in zip(self.feature_names, self.up.tolist()) if u != 0.5},
            "passes": self.passes,
        }

    @classmethod
    def load(cls, path: str | os.PathLike, feature_names, dynamic=()) -> ObfuscationProfile:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), feature_names, dynamic)


def metame_profile(
    feature_names: Sequence[str],
    targeted_p: float = 0.5,
    side_effect_p: float = 0.2,
    other_p: float = 0.02,
    dynamic=(),
    passes: int = 3,
) -> ObfuscationProfile:
    """Preset mimicking the metame engine: heavy changes on six opcode features."""
    names = list(feature_names)
    p = np.full(len(names), other_p)
    up = np.full(len(names), 0.5)
    for i, name in enumerate(names):
        if name in METAME_OPCODES:
            p[i] = targeted_p
            up[i] = METAME_DIRECTIONS.get(name, 0.5)
        elif name in METAME_SIDE_EFFECTS:
            p[i] = side_effect_p
    return ObfuscationProfile(tuple(names), p, up, np.isin(names, list(dynamic)), passes)


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_obfuscation(x, profile: ObfuscationProfile, seed=None) -> np.ndarray:
    """One obfuscation pass; ``x`` may be a vector or a matrix of rows."""
    x = np.asarray(x)
    if x.shape[-1] != profile.n:
        raise ValueError(f"dimension mismatch: profile has {profile.n} features, got {x.shape[-1]}")
    u = _generator(seed).random(x.shape)
    on = x.astype(bool)
    flip = np.where(on, u < profile.p_off, u < profile.p_on)
    return np.where(flip, 1 - x, x).astype(x.dtype)


def obfuscate(X, profile: ObfuscationProfile, seed=None) -> np.ndarray:
    """Run ``profile.passes`` obfuscation passes over ``X``."""
    rng = _generator(seed)
    out = np.asarray(X)
    for _ in range(profile.passes):
        out = simulate_obfuscation(out, profile, rng)
    return out


def rank_modified_features(clean, obfuscated, names: Sequence[str] | None = None) -> list[tuple]:
    """(feature, count) pairs sorted by modification count, ties by index."""
    clean = np.asarray(clean)
    obfuscated = np.asarray(obfuscated)
    if clean.shape != obfuscated.shape:
        raise ValueError("clean and obfuscated sequences must align")
    counts = (np.atleast_2d(clean) != np.atleast_2d(obfuscated)).sum(axis=0)
    order = np.argsort(-counts, kind="stable")
    labels = list(names) if names is not None else list(range(counts.size))
    return [(labels[i], int(counts[i])) for i in order]


def feature_trajectory(x, profile: ObfuscationProfile, k: int, seed=None) -> np.ndarray:
    """Apply the obfuscator ``k`` times in sequence.

    Row t holds, per feature, the number of passes up to t+1 in which the
    feature changed, as a percentage of ``k``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = _generator(seed)
    current = np.asarray(x)
    changes = np.zeros((k, current.shape[-1]))
    for t in range(k):
        nxt = simulate_obfuscation(current, profile, rng)
        changes[t] = nxt != current
        current = nxt
    return 100.0 * np.cumsum(changes, axis=0) / k
