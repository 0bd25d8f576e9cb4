"""Static feature extraction: byte entropy, file size and PE header fields."""

from __future__ import annotations

import logging
import math
import os
from pathlib import Path

import numpy as np

from .entropy import (
    DEFAULT_WINDOW,
    ENTROPY_FIELDS,
    EntropyFeatures,
    RawBinary,
    entropy_features,
    shannon_entropy,
    window_entropies,
)
from .pe import PE_FIELDS, PEFormatError, PEHeaderFeatures, parse_pe_header
from .table import (
    FeatureSchema,
    FeatureTable,
    Rule,
    binarize,
    read_feature_csv,
    table_to_csv,
    write_feature_csv,
)

log = logging.getLogger(__name__)

STATIC_FIELDS = ENTROPY_FIELDS + PE_FIELDS


def read_binary(path: str | os.PathLike) -> RawBinary:
    return RawBinary(Path(path).read_bytes(), str(path))


def extract_row(binary: RawBinary, window_size: int = DEFAULT_WINDOW) -> dict[str, float]:
    """All natively extracted features of one binary.

    PE columns are NaN when the input is not a parseable PE file.
    """
    row = dict(entropy_features(binary, window_size).as_dict())
    try:
        row.update(parse_pe_header(binary).as_dict())
    except PEFormatError as exc:
        log.warning("%s: %s; PE columns left empty", binary.path, exc)
        row.update({name: math.nan for name in PE_FIELDS})
    return row


def list_inputs(path: str | os.PathLike) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.rglob("*") if p.is_file())
    return [path]


def extract_table(paths, window_size: int = DEFAULT_WINDOW) -> FeatureTable:
    rows, ids = [], []
    for p in paths:
        rows.append(extract_row(read_binary(p), window_size))
        ids.append(str(p))
    values = np.array([[r[name] for name in STATIC_FIELDS] for r in rows], dtype=float)
    return FeatureTable(list(STATIC_FIELDS), ["?"] * len(rows), values.reshape(len(rows), len(STATIC_FIELDS)), ids)


__all__ = [
    "DEFAULT_WINDOW",
    "ENTROPY_FIELDS",
    "PE_FIELDS",
    "STATIC_FIELDS",
    "EntropyFeatures",
    "FeatureSchema",
    "FeatureTable",
    "PEFormatError",
    "PEHeaderFeatures",
    "RawBinary",
    "Rule",
    "binarize",
    "entropy_features",
    "extract_row",
    "extract_table",
    "list_inputs",
    "parse_pe_header",
    "read_binary",
    "read_feature_csv",
    "shannon_entropy",
    "table_to_csv",
    "window_entropies",
    "write_feature_csv",
]
