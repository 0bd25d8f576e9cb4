"""Feature CSV tables, feature schemas and Bernoulli binarization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LABELS = ("M", "B", "?")


@dataclass(frozen=True)
class Rule:
    kind: str = "presence"
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in ("presence", "threshold"):
            raise ValueError(f"unknown rule {self.kind!r}")
        if self.kind == "threshold" and (self.threshold is None or not math.isfinite(self.threshold)):
            raise ValueError("threshold rule needs a finite value")

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.nan_to_num(values, nan=0.0)  # empty cell = feature absent
        if self.kind == "presence":
            return (values > 0).astype(np.uint8)
        return (values >= self.threshold).astype(np.uint8)


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    rules: Mapping[str, Rule] = field(default_factory=dict)
    dynamic: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        rules = {name: self.rules.get(name, Rule()) for name in self.names}
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "dynamic", frozenset(self.dynamic))
        unknown = self.dynamic - set(self.names)
        if unknown:
            raise ValueError(f"dynamic flags for unknown features: {sorted(unknown)}")

    @property
    def n(self) -> int:
        return len(self.names)

    @classmethod
    def presence(cls, names: Sequence[str]) -> FeatureSchema:
        return cls(tuple(names))

    @classmethod
    def from_dict(cls, obj: Mapping) -> FeatureSchema:
        rules, dynamic = {}, set()
        for name, spec in obj.items():
            kind = spec.get("rule", "presence")
            rules[name] = Rule(kind, spec.get("value")) if kind == "threshold" else Rule(kind)
            if spec.get("dynamic", False):
                dynamic.add(name)
        return cls(tuple(obj), rules, frozenset(dynamic))

    @classmethod
    def load(cls, path: str | os.PathLike) -> FeatureSchema:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {}
        for name in self.names:
            rule = self.rules[name]
            entry = {"rule": rule.kind}
            if rule.kind == "threshold":
                entry["value"] = rule.threshold
            if name in self.dynamic:
                entry["dynamic"] = True
            out[name] = entry
        return out


@dataclass
class FeatureTable:
    """Labelled rows of named numeric features, as stored in feature CSVs.

    ``values`` is a float matrix; empty CSV cells are NaN.
    """

    names: list[str]
    labels: list[str]
    values: np.ndarray
    ids: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.labels), len(self.names))
        bad = set(self.labels) - set(LABELS)
        if bad:
            raise ValueError(f"labels must be in {LABELS}, got {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.labels)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"missing column: {name}") from None


def binarize(table: FeatureTable | Mapping[str, Sequence], schema: FeatureSchema) -> np.ndarray:
    """Apply each schema rule to its column; rows keep input order.

    ``table`` may also be a plain mapping of column name to values.
    """
    if isinstance(table, FeatureTable):
        columns = {name: table.column(name) for name in schema.names if name in table.names}
        n_rows = len(table)
    else:
        columns = {}
        for name in schema.names:
            if name not in table:
                continue
            try:
                columns[name] = np.array([float(v) for v in table[name]], dtype=float)
            except (TypeError, ValueError):
                raise ValueError(f"non-numeric cell in column {name}") from None
        n_rows = len(next(iter(columns.values()))) if columns else 0
    missing = [name for name in schema.names if name not in columns]
    if missing:
        raise KeyError(f"missing column: {missing[0]}")
    out = np.empty((n_rows, schema.n), dtype=np.uint8)
    for j, name in enumerate(schema.names):
        out[:, j] = schema.rules[name].apply(columns[name])
    return out


def _fmt(v: float) -> str:
    if math.isnan(v):
        return ""
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def table_to_csv(table: FeatureTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", *table.names])
    for label, row in zip(table.labels, table.values):
        writer.writerow([label, *map(_fmt, row)])
    return buf.getvalue()


def read_feature_csv(path: str | os.PathLike) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        if not header or header[0] != "label":
            raise ValueError(f"{path}: first column must be 'label'")
        labels, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}")
            labels.append(rec[0])
            try:
                rows.append([float(c) if c != "" else math.nan for c in rec[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
    values = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return FeatureTable(header[1:], labels, values)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_feature_csv(path: str | os.PathLike, table: FeatureTable) -> None:
    atomic_write_text(path, table_to_csv(table))
