"""Minimal PE/COFF header decoder.

Only the fields used as static features are decoded. Layout follows the
published PE/COFF format: DOS stub with ``e_lfanew`` at 0x3C, the ``PE\\0\\0``
signature, the 20-byte COFF file header, then the PE32 (0x10B) or PE32+
(0x20B) optional header followed by the data directories and section table.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass

from .entropy import RawBinary

PE32_MAGIC = 0x10B
PE32PLUS_MAGIC = 0x20B
IMPORT_DIRECTORY = 1
_IMPORT_DESCRIPTOR_SIZE = 20
_SECTION_HEADER_SIZE = 40
_MAX_IMPORT_DESCRIPTORS = 4096


class PEFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PEHeaderFeatures:
    machine: int
    number_of_sections: int
    time_date_stamp: int
    number_of_symbols: int
    size_of_optional_header: int
    characteristics: int
    size_of_code: int
    size_of_initialized_data: int
    size_of_uninitialized_data: int
    address_of_entry_point: int
    image_base: int
    section_alignment: int
    file_alignment: int
    size_of_image: int
    size_of_headers: int
    subsystem: int
    dll_characteristics: int
    number_of_imports: int

    def as_dict(self) -> dict:
        return asdict(self)


PE_FIELDS = tuple(PEHeaderFeatures.__dataclass_fields__)


def _unpack(fmt: str, data: bytes, offset: int) -> tuple:
    try:
        return struct.unpack_from("<" + fmt, data, offset)
    except struct.error:
        raise PEFormatError("truncated header") from None


def _rva_to_offset(rva: int, sections: list[tuple[int, int, int, int]]) -> int | None:
    for vaddr, vsize, raw_size, raw_ptr in sections:
        if vaddr <= rva < vaddr + max(vsize, raw_size):
            return rva - vaddr + raw_ptr
    return None


def _count_imports(data: bytes, rva: int, sections) -> int:
    if rva == 0:
        return 0
    offset = _rva_to_offset(rva, sections)
    if offset is None:
        return 0
    count = 0
    while count < _MAX_IMPORT_DESCRIPTORS:
        start = offset + count * _IMPORT_DESCRIPTOR_SIZE
        entry = data[start : start + _IMPORT_DESCRIPTOR_SIZE]
        if len(entry) < _IMPORT_DESCRIPTOR_SIZE or not any(entry):
            break
        count += 1
    return count


def parse_pe_header(binary: RawBinary | bytes) -> PEHeaderFeatures:
    data = binary.data if isinstance(binary, RawBinary) else bytes(binary)
    if data[:2] != b"MZ":
        raise PEFormatError("not a DOS/PE file")
    (e_lfanew,) = _unpack("I", data, 0x3C)
    if e_lfanew + 4 + 20 > len(data):
        raise PEFormatError("truncated header")
    if data[e_lfanew : e_lfanew + 4] != b"PE\0\0":
        raise PEFormatError("not a DOS/PE file")

    coff = e_lfanew + 4
    machine, n_sections, timestamp, _symtab, n_symbols, opt_size, characteristics = _unpack(
        "HHIIIHH", data, coff
    )
    opt = coff + 20
    (magic,) = _unpack("H", data, opt)
    if magic == PE32_MAGIC:
        (size_code, size_init, size_uninit, entry, _base_code, _base_data, image_base,
         sect_align, file_align) = _unpack("IIIIIIIII", data, opt + 4)
        (size_image, size_headers, _checksum, subsystem, dll_chars) = _unpack("IIIHH", data, opt + 56)
        dirs_at = opt + 92
    elif magic == PE32PLUS_MAGIC:
        (size_code, size_init, size_uninit, entry, _base_code, image_base,
         sect_align, file_align) = _unpack("IIIIIQII", data, opt + 4)
        (size_image, size_headers, _checksum, subsystem, dll_chars) = _unpack("IIIHH", data, opt + 56)
        dirs_at = opt + 108
    else:
        raise PEFormatError("unsupported PE format")

    (n_dirs,) = _unpack("I", data, dirs_at)
    import_rva = 0
    if n_dirs > IMPORT_DIRECTORY:
        import_rva, _ = _unpack("II", data, dirs_at + 4 + 8 * IMPORT_DIRECTORY)

    sections = []
    table = opt + opt_size
    for k in range(n_sections):
        vsize, vaddr, raw_size, raw_ptr = _unpack("IIII", data, table + k * _SECTION_HEADER_SIZE + 8)
        sections.append((vaddr, vsize, raw_size, raw_ptr))

    return PEHeaderFeatures(
        machine=machine,
        number_of_sections=n_sections,
        time_date_stamp=timestamp,
        number_of_symbols=n_symbols,
        size_of_optional_header=opt_size,
        characteristics=characteristics,
        size_of_code=size_code,
        size_of_initialized_data=size_init,
        size_of_uninitialized_data=size_uninit,
        address_of_entry_point=entry,
        image_base=image_base,
        section_alignment=sect_align,
        file_alignment=file_align,
        size_of_image=size_image,
        size_of_headers=size_headers,
        subsystem=subsystem,
        dll_characteristics=dll_chars,
        number_of_imports=_count_imports(data, import_rva, sections),
    )
