"""Byte-entropy statistics over a raw binary."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_WINDOW = 256


@dataclass(frozen=True)
class RawBinary:
    data: bytes
    path: str = "<memory>"

    def __post_init__(self):
        if len(self.data) == 0:
            raise ValueError(f"empty binary: {self.path}")


@dataclass(frozen=True)
class EntropyFeatures:
    file_size: int
    entropy_mean: float
    entropy_median: float
    entropy_max: float
    entropy_min: float
    entropy_whole: float
    entropy_variance: float
    entropy_range: float

    def as_dict(self) -> dict:
        return asdict(self)


ENTROPY_FIELDS = tuple(EntropyFeatures.__dataclass_fields__)


def _entropy_of_counts(counts: np.ndarray, total: int) -> float:
    f = counts[counts > 0] / total
    h = float(-(f * np.log2(f)).sum())
    return h if h > 0 else 0.0  # no -0.0


def shannon_entropy(data: bytes) -> float:
    """Shannon entropy of the byte distribution, in bits per byte (0..8)."""
    if len(data) == 0:
        raise ValueError("empty buffer")
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    return _entropy_of_counts(counts, len(data))


def window_entropies(data: bytes, window_size: int = DEFAULT_WINDOW) -> np.ndarray:
    """Entropy of consecutive non-overlapping windows; the last one may be short."""
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    if len(data) == 0:
        raise ValueError("empty buffer")
    view = memoryview(data)
    return np.array(
        [shannon_entropy(view[i : i + window_size]) for i in range(0, len(data), window_size)]
    )


def entropy_features(binary: RawBinary | bytes, window_size: int = DEFAULT_WINDOW) -> EntropyFeatures:
    data = binary.data if isinstance(binary, RawBinary) else bytes(binary)
    if len(data) == 0:
        raise ValueError("empty binary")
    per_window = window_entropies(data, window_size)
    lo = float(per_window.min())
    hi = float(per_window.max())
    return EntropyFeatures(
        file_size=len(data),
        entropy_mean=float(per_window.mean()),
        entropy_median=float(np.median(per_window)),
        entropy_max=hi,
        entropy_min=lo,
        entropy_whole=shannon_entropy(data),
        entropy_variance=float(per_window.var()),  # population variance
        entropy_range=hi - lo,
    )
