import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CRAFTED_FIELDS, FIXTURES, craft_pe
from malara.features import (
    PE_FIELDS,
    FeatureSchema,
    FeatureTable,
    PEFormatError,
    RawBinary,
    Rule,
    binarize,
    entropy_features,
    extract_row,
    parse_pe_header,
    read_feature_csv,
    shannon_entropy,
    write_feature_csv,
)


def test_entropy_constant_buffer():
    assert shannon_entropy(b"\x41" * 1024) == 0.0


def test_entropy_uniform_bytes():
    assert shannon_entropy(bytes(range(256))) == 8.0


def test_entropy_four_symbols():
    assert shannon_entropy(bytes([0, 0, 1, 1, 2, 2, 3, 3])) == pytest.approx(2.0, abs=1e-12)


def test_entropy_rejects_empty():
    with pytest.raises(ValueError, match="empty buffer"):
        shannon_entropy(b"")


@given(st.binary(min_size=1, max_size=512), st.randoms(use_true_random=False))
def test_entropy_permutation_invariant(data, rnd):
    shuffled = bytearray(data)
    rnd.shuffle(shuffled)
    assert shannon_entropy(bytes(shuffled)) == shannon_entropy(data)


@given(st.binary(min_size=1, max_size=512))
def test_entropy_doubling_and_range(data):
    h = shannon_entropy(data)
    assert shannon_entropy(data + data) == h
    assert 0.0 <= h <= 8.0


def test_entropy_features_constant_data():
    ef = entropy_features(RawBinary(b"\x00" * 512), window_size=256)
    assert ef.file_size == 512
    for name in ("entropy_mean", "entropy_median", "entropy_max", "entropy_min",
                 "entropy_whole", "entropy_variance", "entropy_range"):
        assert getattr(ef, name) == 0.0


def test_entropy_features_single_uniform_window():
    ef = entropy_features(RawBinary(bytes(range(256))), window_size=256)
    assert ef.entropy_mean == ef.entropy_median == ef.entropy_max == ef.entropy_min == ef.entropy_whole == 8.0
    assert ef.entropy_variance == 0.0 and ef.entropy_range == 0.0


def test_entropy_features_three_windows():
    # windows with entropy 0, 2 and 4 bits: constant, 4-symbol and 16-symbol uniform
    w0 = b"\x07" * 16
    w1 = bytes([0, 1, 2, 3] * 4)
    w2 = bytes(range(16))
    ef = entropy_features(RawBinary(w0 + w1 + w2), window_size=16)
    stats = [0.0, 2.0, 4.0]
    assert ef.entropy_mean == pytest.approx(np.mean(stats), abs=1e-12)
    assert ef.entropy_median == pytest.approx(2.0, abs=1e-12)
    assert ef.entropy_range == pytest.approx(4.0, abs=1e-12)
    assert ef.entropy_variance == pytest.approx(np.var(stats), abs=1e-12)


def test_entropy_features_short_last_window():
    ef = entropy_features(RawBinary(b"\x00" * 256 + b"\x00\x01"), window_size=256)
    assert ef.entropy_max == 1.0 and ef.entropy_min == 0.0
    assert ef.file_size == 258


@settings(max_examples=50)
@given(st.binary(min_size=1, max_size=2048), st.integers(1, 300))
def test_entropy_features_invariants(data, window):
    ef = entropy_features(RawBinary(data), window)
    assert ef.entropy_min <= ef.entropy_median <= ef.entropy_max
    assert ef.entropy_range == ef.entropy_max - ef.entropy_min
    assert ef.entropy_variance >= 0
    assert all(0 <= getattr(ef, f) <= 8 for f in ("entropy_mean", "entropy_whole", "entropy_max", "entropy_min"))


def test_raw_binary_rejects_empty():
    with pytest.raises(ValueError):
        RawBinary(b"")


def test_window_size_validated():
    with pytest.raises(ValueError):
        entropy_features(RawBinary(b"ab"), window_size=0)


# --- PE header -----------------------------------------------------------------------

def test_crafted_pe_all_fields(crafted_pe):
    assert parse_pe_header(RawBinary(crafted_pe)).as_dict() == CRAFTED_FIELDS


def test_crafted_pe_direct_field_bytes(crafted_pe):
    # number_of_sections bytes 03 00 and size_of_code bytes 00 10 00 00
    assert crafted_pe[0x80 + 6 : 0x80 + 8] == b"\x03\x00"
    assert crafted_pe[0x80 + 24 + 4 : 0x80 + 24 + 8] == b"\x00\x10\x00\x00"
    hdr = parse_pe_header(crafted_pe)
    assert hdr.number_of_sections == 3
    assert hdr.size_of_code == 4096


# Values from `objdump -p` and the pefile package, run once on the fixtures.
TOOLCHAIN_ORACLE = {
    "cli-32.exe": dict(
        machine=332, number_of_sections=5, time_date_stamp=1684547546, number_of_symbols=0,
        size_of_optional_header=224, characteristics=0x102, size_of_code=0x1600,
        size_of_initialized_data=0x1600, size_of_uninitialized_data=0, address_of_entry_point=0x1B87,
        image_base=0x400000, section_alignment=0x1000, file_alignment=0x200, size_of_image=0x7000,
        size_of_headers=0x400, subsystem=3, dll_characteristics=0x8140, number_of_imports=10,
    ),
    "cli-64.exe": dict(
        machine=34404, number_of_sections=6, time_date_stamp=1684547556, number_of_symbols=0,
        size_of_optional_header=240, characteristics=0x22, size_of_code=0x1800,
        size_of_initialized_data=0x2200, size_of_uninitialized_data=0, address_of_entry_point=0x1D40,
        image_base=0x140000000, section_alignment=0x1000, file_alignment=0x200, size_of_image=0x9000,
        size_of_headers=0x400, subsystem=3, dll_characteristics=0x8160, number_of_imports=10,
    ),
}


@pytest.mark.parametrize("name", sorted(TOOLCHAIN_ORACLE))
def test_toolchain_pe_matches_independent_dump(name):
    data = (FIXTURES / name).read_bytes()
    assert parse_pe_header(data).as_dict() == TOOLCHAIN_ORACLE[name]


def test_pe_pure_function(crafted_pe):
    assert parse_pe_header(crafted_pe) == parse_pe_header(bytes(crafted_pe))


def test_pe_errors(crafted_pe):
    with pytest.raises(PEFormatError, match="not a DOS/PE file"):
        parse_pe_header(b"\x7fELF" + b"\x00" * 100)
    bad_offset = bytearray(crafted_pe[:0x80])
    struct.pack_into("<I", bad_offset, 0x3C, 0x10000)
    with pytest.raises(PEFormatError, match="truncated header"):
        parse_pe_header(bytes(bad_offset))
    with pytest.raises(PEFormatError, match="unsupported PE format"):
        parse_pe_header(craft_pe(magic=0x107))
    with pytest.raises(PEFormatError, match="truncated header"):
        parse_pe_header(b"MZ")


def test_pe_without_imports():
    assert parse_pe_header(craft_pe(n_imports=0)).number_of_imports == 0


def test_extract_row_non_pe_leaves_pe_columns_empty(caplog):
    row = extract_row(RawBinary(b"hello world", "x.txt"))
    assert row["file_size"] == 11
    assert all(math.isnan(row[f]) for f in PE_FIELDS)
    assert "x.txt" in caplog.text


# --- binarization --------------------------------------------------------------------

def test_binarize_presence_counts():
    schema = FeatureSchema.presence(["xor", "sub", "push"])
    assert binarize({"xor": [5], "sub": [0], "push": [2]}, schema).tolist() == [[1, 0, 1]]


def test_binarize_threshold():
    schema = FeatureSchema(("entropy_whole",), {"entropy_whole": Rule("threshold", 7.0)})
    assert binarize({"entropy_whole": [7.2, 6.9, 7.0]}, schema).ravel().tolist() == [1, 0, 1]


def test_binarize_mixed_table_against_scripted_oracle():
    schema = FeatureSchema.from_dict({
        "nop": {"rule": "presence"},
        "size_of_code": {"rule": "threshold", "value": 4096},
        "entropy_whole": {"rule": "threshold", "value": 6.5},
    })
    rows = [
        {"nop": 3, "size_of_code": 512, "entropy_whole": 7.9},
        {"nop": 0, "size_of_code": 4096, "entropy_whole": 1.0},
        {"nop": 0.5, "size_of_code": 10000, "entropy_whole": 6.5},
    ]
    table = FeatureTable(["entropy_whole", "nop", "size_of_code"], ["?"] * 3,
                         [[r["entropy_whole"], r["nop"], r["size_of_code"]] for r in rows])
    expected = []
    for r in rows:
        expected.append([
            1 if r["nop"] > 0 else 0,
            1 if r["size_of_code"] >= 4096 else 0,
            1 if r["entropy_whole"] >= 6.5 else 0,
        ])
    assert binarize(table, schema).tolist() == expected


def test_binarize_errors():
    schema = FeatureSchema.presence(["a", "b"])
    with pytest.raises(KeyError, match="missing column"):
        binarize({"a": [1]}, schema)
    with pytest.raises(ValueError, match="non-numeric"):
        binarize({"a": ["x"], "b": [1]}, schema)


@given(st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=1, max_size=20))
def test_binarize_idempotent_on_binary(rows):
    schema = FeatureSchema.presence(["a", "b", "c"])
    table = FeatureTable(["a", "b", "c"], ["?"] * len(rows), rows)
    once = binarize(table, schema)
    again = binarize(FeatureTable(["a", "b", "c"], ["?"] * len(rows), once), schema)
    assert np.array_equal(once, again)
    assert np.array_equal(once, np.array(rows))


def test_schema_validation_and_json_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        FeatureSchema(("a", "a"))
    schema = FeatureSchema.from_dict({"a": {"rule": "presence", "dynamic": True},
                                      "b": {"rule": "threshold", "value": 2.5}})
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(schema.to_dict()))
    again = FeatureSchema.load(path)
    assert again.names == ("a", "b") and again.dynamic == {"a"}
    assert again.rules["b"] == Rule("threshold", 2.5)


def test_feature_csv_roundtrip(tmp_path):
    table = FeatureTable(["a", "b"], ["M", "?"], [[1.0, 0.25], [math.nan, 3.0]])
    path = tmp_path / "t.csv"
    write_feature_csv(path, table)
    assert path.read_text().splitlines() == ["label,a,b", "M,1,0.25", "?,,3"]
    again = read_feature_csv(path)
    assert again.labels == ["M", "?"]
    assert np.array_equal(again.values, table.values, equal_nan=True)


def test_feature_csv_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,a\nM,abc\n")
    with pytest.raises(ValueError, match="non-numeric"):
        read_feature_csv(path)
    path.write_text("label,a\nX,1\n")
    with pytest.raises(ValueError, match="labels"):
        read_feature_csv(path)
