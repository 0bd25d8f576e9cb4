import struct
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# Field values written into the crafted PE below.
CRAFTED_FIELDS = dict(
    machine=0x14C,
    number_of_sections=3,
    time_date_stamp=0x5E0BE100,
    number_of_symbols=7,
    size_of_optional_header=224,
    characteristics=0x0102,
    size_of_code=4096,
    size_of_initialized_data=0x2400,
    size_of_uninitialized_data=0x80,
    address_of_entry_point=0x1234,
    image_base=0x400000,
    section_alignment=0x1000,
    file_alignment=0x200,
    size_of_image=0x5000,
    size_of_headers=0x400,
    subsystem=2,
    dll_characteristics=0x8140,
    number_of_imports=2,
)


def craft_pe(fields=CRAFTED_FIELDS, magic=0x10B, n_imports=None):
    """Minimal PE32 image: DOS header, COFF, optional header, 3 sections, an import table."""
    f = dict(fields)
    n_imports = f["number_of_imports"] if n_imports is None else n_imports
    e_lfanew = 0x80
    dos = bytearray(0x80)
    dos[0:2] = b"MZ"
    struct.pack_into("<I", dos, 0x3C, e_lfanew)
    coff = struct.pack("<HHIIIHH", f["machine"], f["number_of_sections"], f["time_date_stamp"], 0,
                       f["number_of_symbols"], f["size_of_optional_header"], f["characteristics"])
    opt = bytearray(f["size_of_optional_header"])
    struct.pack_into("<HBB", opt, 0, magic, 14, 0)
    struct.pack_into("<IIIIIII", opt, 4, f["size_of_code"], f["size_of_initialized_data"],
                     f["size_of_uninitialized_data"], f["address_of_entry_point"], 0x1000, 0x2000,
                     f["image_base"])
    struct.pack_into("<II", opt, 32, f["section_alignment"], f["file_alignment"])
    struct.pack_into("<IIIHH", opt, 56, f["size_of_image"], f["size_of_headers"], 0,
                     f["subsystem"], f["dll_characteristics"])
    struct.pack_into("<I", opt, 92, 16)
    struct.pack_into("<II", opt, 96 + 8, 0x3000, 20 * (n_imports + 1))  # import directory
    sections = b""
    layout = [(b".text", 0x1000, 0x400), (b".data", 0x2000, 0x600), (b".idata", 0x3000, 0x800)]
    for name, vaddr, raw in layout[: f["number_of_sections"]]:
        sections += struct.pack("<8sIIIIIIHHI", name, 0x200, vaddr, 0x200, raw, 0, 0, 0, 0, 0)
    header = bytes(dos) + b"PE\0\0" + coff + bytes(opt) + sections
    image = bytearray(0xA00)
    image[: len(header)] = header
    for k in range(n_imports):
        struct.pack_into("<IIIII", image, 0x800 + 20 * k, 0x3100 + k, 0, 0, 0x3200 + k, 0x3300 + k)
    return bytes(image)


@pytest.fixture
def crafted_pe():
    return craft_pe()


@pytest.fixture
def hand_dataset():
    X = np.array([[1, 1], [1, 0], [0, 0], [0, 1]], dtype=np.uint8)
    y = ["M", "M", "B", "B"]
    return X, y
