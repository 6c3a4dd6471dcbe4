"""Minimal ELF reader for little-endian x86-32 / x86-64 executables.

Parsing is done with :mod:`struct` directly; only the pieces the rest of
the toolchain needs are materialized: section headers with contents,
symbol tables, and function boundaries derived from them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import FunctionNotFound, MalformedImage, SectionNotFound, UnsupportedArchitecture

ELF_MAGIC = b"\x7fELF"

ELFCLASS32 = 1
ELFCLASS64 = 2
ELFDATA2LSB = 1

EM_386 = 3
EM_X86_64 = 62

SHT_NOBITS = 8
SHT_SYMTAB = 2
SHT_DYNSYM = 11

SHF_WRITE = 0x1
SHF_ALLOC = 0x2
SHF_EXECINSTR = 0x4

STT_OBJECT = 1
STT_FUNC = 2

SHN_UNDEF = 0


class Architecture(Enum):
    X86_32 = "x86-32"
    X86_64 = "x86-64"

    @property
    def bitness(self) -> int:
        return 32 if self is Architecture.X86_32 else 64


class SymbolKind(Enum):
    FUNCTION = "function"
    OBJECT = "object"
    OTHER = "other"


class BoundarySource(Enum):
    SYMBOL_TABLE = "symbol-table"
    USER_OVERRIDE = "user-override"


@dataclass(frozen=True)
class Section:
    name: str
    vaddr: int
    size: int
    flags: frozenset[str]  # subset of {"alloc", "exec", "write"}
    contents: bytes  # empty for NOBITS sections

    @property
    def is_alloc(self) -> bool:
        return "alloc" in self.flags

    @property
    def is_exec(self) -> bool:
        return "exec" in self.flags

    def contains(self, vaddr: int) -> bool:
        return self.vaddr <= vaddr < self.vaddr + self.size


@dataclass(frozen=True)
class Symbol:
    name: str
    vaddr: int
    size: int  # 0 = unknown
    kind: SymbolKind


@dataclass(frozen=True)
class FunctionBoundary:
    name: str
    start: int
    end: int  # exclusive
    source: BoundarySource

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty boundary for {self.name!r}: start 0x{self.start:x} >= end 0x{self.end:x}")


@dataclass(frozen=True)
class SectionView:
    """Raw view of one section: base address plus contents.

    For NOBITS sections (``.bss``) the data is an all-zero logical view and
    ``uninitialized`` is set.
    """

    vaddr: int
    data: bytes
    uninitialized: bool = False


@dataclass(frozen=True)
class BinaryImage:
    architecture: Architecture
    sections: tuple[Section, ...]
    symbols: tuple[Symbol, ...]
    origin_path: str
    _section_index: dict[str, Section] = field(repr=False, default_factory=dict)

    @property
    def bitness(self) -> int:
        return self.architecture.bitness

    def section(self, name: str) -> Section:
        try:
            return self._section_index[name]
        except KeyError:
            raise SectionNotFound(f"no section named {name!r} in {self.origin_path}") from None

    def has_section(self, name: str) -> bool:
        return name in self._section_index

    def section_containing(self, vaddr: int, exec_only: bool = False) -> Section | None:
        for sec in self.sections:
            if sec.is_alloc and sec.contains(vaddr) and (not exec_only or sec.is_exec):
                return sec
        return None

    def function_symbols(self) -> list[Symbol]:
        return [s for s in self.symbols if s.kind is SymbolKind.FUNCTION]

    def symbol_at(self, vaddr: int, kind: SymbolKind | None = None) -> Symbol | None:
        """First symbol whose address equals ``vaddr`` (deduplication order)."""
        for sym in self.symbols:
            if sym.vaddr == vaddr and (kind is None or sym.kind is kind):
                return sym
        return None

    def symbol_covering(self, vaddr: int, kind: SymbolKind | None = None) -> Symbol | None:
        """First symbol whose [vaddr, vaddr+size) extent covers the address."""
        for sym in self.symbols:
            if sym.size > 0 and sym.vaddr <= vaddr < sym.vaddr + sym.size:
                if kind is None or sym.kind is kind:
                    return sym
        return None


def _flag_set(sh_flags: int) -> frozenset[str]:
    out = set()
    if sh_flags & SHF_ALLOC:
        out.add("alloc")
    if sh_flags & SHF_EXECINSTR:
        out.add("exec")
    if sh_flags & SHF_WRITE:
        out.add("write")
    return frozenset(out)


def _read_cstr(blob: bytes, off: int) -> str:
    end = blob.find(b"\x00", off)
    if end < 0:
        end = len(blob)
    return blob[off:end].decode("utf-8", errors="replace")


def load_image(path: str | Path) -> BinaryImage:
    """Parse an ELF executable into an immutable :class:`BinaryImage`.

    Raises :class:`MalformedImage` for structural problems and
    :class:`UnsupportedArchitecture` for anything that is not little-endian
    x86-32 / x86-64.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != ELF_MAGIC:
        raise MalformedImage(f"{path}: missing ELF magic")
    ei_class, ei_data = data[4], data[5]
    if ei_data != ELFDATA2LSB:
        raise UnsupportedArchitecture(f"{path}: only little-endian ELF is supported")
    if ei_class == ELFCLASS32:
        is64 = False
    elif ei_class == ELFCLASS64:
        is64 = True
    else:
        raise MalformedImage(f"{path}: bad EI_CLASS {ei_class}")

    try:
        if is64:
            (_, e_machine, _, _, _, e_shoff, _, _, _, _, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
                "<HHIQQQIHHHHHH", data, 16
            )
        else:
            (_, e_machine, _, _, _, e_shoff, _, _, _, _, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
                "<HHIIIIIHHHHHH", data, 16
            )
    except struct.error as exc:
        raise MalformedImage(f"{path}: truncated ELF header") from exc

    if is64 and e_machine != EM_X86_64:
        raise UnsupportedArchitecture(f"{path}: 64-bit ELF with machine {e_machine}, expected x86-64")
    if not is64 and e_machine != EM_386:
        raise UnsupportedArchitecture(f"{path}: 32-bit ELF with machine {e_machine}, expected x86")
    arch = Architecture.X86_64 if is64 else Architecture.X86_32

    if e_shoff == 0 or e_shnum == 0:
        raise MalformedImage(f"{path}: no section headers")
    sh_fmt = "<IIQQQQIIQQ" if is64 else "<IIIIIIIIII"
    if e_shentsize < struct.calcsize(sh_fmt):
        raise MalformedImage(f"{path}: section header entry size {e_shentsize} too small")

    raw_headers = []
    for i in range(e_shnum):
        off = e_shoff + i * e_shentsize
        try:
            fields = struct.unpack_from(sh_fmt, data, off)
        except struct.error as exc:
            raise MalformedImage(f"{path}: truncated section header {i}") from exc
        # name-off, type, flags, addr, offset, size, link, info, align, entsize
        raw_headers.append(fields)

    if e_shstrndx >= e_shnum:
        raise MalformedImage(f"{path}: bad section-name string table index {e_shstrndx}")
    str_off, str_size = raw_headers[e_shstrndx][4], raw_headers[e_shstrndx][5]
    shstrtab = data[str_off : str_off + str_size]

    sections: list[Section] = []
    for name_off, sh_type, sh_flags, sh_addr, sh_offset, sh_size, _, _, _, _ in raw_headers:
        name = _read_cstr(shstrtab, name_off)
        if sh_type == SHT_NOBITS or sh_size == 0:
            contents = b""
        else:
            if sh_offset + sh_size > len(data):
                raise MalformedImage(f"{path}: section {name!r} extends past end of file")
            contents = data[sh_offset : sh_offset + sh_size]
        sections.append(Section(name=name, vaddr=sh_addr, size=sh_size, flags=_flag_set(sh_flags), contents=contents))

    symbols = _parse_symbols(path, data, raw_headers, sections, is64)

    image = BinaryImage(
        architecture=arch,
        sections=tuple(sections),
        symbols=tuple(symbols),
        origin_path=str(path),
        _section_index={s.name: s for s in sections if s.name},
    )
    _check_invariants(image)
    return image


def _parse_symbols(path, data, raw_headers, sections, is64) -> list[Symbol]:
    sym_fmt = "<IBBHQQ" if is64 else "<IIIBBH"
    sym_size = struct.calcsize(sym_fmt)
    symbols: list[Symbol] = []
    seen: set[tuple[str, int]] = set()
    for hdr in raw_headers:
        _, sh_type, _, _, sh_offset, sh_size, sh_link, _, _, sh_entsize = hdr
        if sh_type not in (SHT_SYMTAB, SHT_DYNSYM):
            continue
        if sh_link >= len(raw_headers):
            raise MalformedImage(f"{path}: symbol table with bad string-table link")
        st_off, st_size = raw_headers[sh_link][4], raw_headers[sh_link][5]
        strtab = data[st_off : st_off + st_size]
        entsize = sh_entsize or sym_size
        for off in range(sh_offset, sh_offset + sh_size, entsize):
            try:
                fields = struct.unpack_from(sym_fmt, data, off)
            except struct.error as exc:
                raise MalformedImage(f"{path}: truncated symbol table") from exc
            if is64:
                name_off, info, _, shndx, value, size = fields
            else:
                name_off, value, size, info, _, shndx = fields
            if shndx == SHN_UNDEF:
                continue
            name = _read_cstr(strtab, name_off)
            if not name:
                continue
            st_type = info & 0xF
            if st_type == STT_FUNC:
                kind = SymbolKind.FUNCTION
            elif st_type == STT_OBJECT:
                kind = SymbolKind.OBJECT
            else:
                kind = SymbolKind.OTHER
            key = (name, value)
            if key in seen:
                continue
            seen.add(key)
            symbols.append(Symbol(name=name, vaddr=value, size=size, kind=kind))
    # Aliases at one address: keep the first by (address, name) order.
    symbols.sort(key=lambda s: (s.vaddr, s.name))
    deduped: list[Symbol] = []
    taken: set[tuple[int, SymbolKind]] = set()
    for sym in symbols:
        key = (sym.vaddr, sym.kind)
        if key in taken:
            continue
        taken.add(key)
        deduped.append(sym)
    return deduped


def _check_invariants(image: BinaryImage) -> None:
    alloc = [s for s in image.sections if s.is_alloc and s.size > 0]
    alloc.sort(key=lambda s: s.vaddr)
    for a, b in zip(alloc, alloc[1:]):
        if a.vaddr + a.size > b.vaddr:
            raise MalformedImage(
                f"{image.origin_path}: alloc sections {a.name!r} and {b.name!r} overlap "
                f"(0x{a.vaddr:x}+0x{a.size:x} vs 0x{b.vaddr:x})"
            )
    for sym in image.function_symbols():
        if image.section_containing(sym.vaddr, exec_only=True) is None:
            raise MalformedImage(
                f"{image.origin_path}: function symbol {sym.name!r} at 0x{sym.vaddr:x} "
                "is outside every executable section"
            )


def resolve_functions(
    image: BinaryImage,
    requests: list[str],
    overrides: list[tuple[str, int, int | None]] | None = None,
) -> list[FunctionBoundary]:
    """Resolve the requested function names to address boundaries.

    Symbol-table entries win; an override ``(name, start, end?)`` fills in
    for functions missing from a stripped symbol table. Unknown ends are
    inferred from the next known function start in the same section, else
    the section end.
    """
    overrides = overrides or []
    override_map = {name: (start, end) for name, start, end in overrides}
    func_syms = {s.name: s for s in image.function_symbols()}

    # Known function starts (symbols plus overrides) for end inference.
    known_starts = sorted(
        {s.vaddr for s in image.function_symbols()} | {start for _, start, _ in overrides}
    )

    out: list[FunctionBoundary] = []
    for name in requests:
        if name in func_syms:
            sym = func_syms[name]
            start = sym.vaddr
            end = sym.vaddr + sym.size if sym.size > 0 else None
            source = BoundarySource.SYMBOL_TABLE
        elif name in override_map:
            start, end = override_map[name]
            source = BoundarySource.USER_OVERRIDE
        else:
            raise FunctionNotFound(f"function {name!r}: no symbol and no override in {image.origin_path}")

        sec = image.section_containing(start, exec_only=True)
        if sec is None:
            raise FunctionNotFound(f"function {name!r}: start 0x{start:x} is not in an executable section")
        if end is None:
            nexts = [a for a in known_starts if a > start and sec.contains(a)]
            end = nexts[0] if nexts else sec.vaddr + sec.size
        end = min(end, sec.vaddr + sec.size)
        out.append(FunctionBoundary(name=name, start=start, end=end, source=source))

    out.sort(key=lambda b: b.start)
    for a, b in zip(out, out[1:]):
        if a.end > b.start:
            # Clamp rather than fail: symbol sizes occasionally cover padding.
            object.__setattr__(a, "end", b.start)
    return out


def section_bytes(image: BinaryImage, name: str) -> SectionView:
    """Base address and raw contents of a section.

    ``.bss``-style NOBITS sections yield an all-zero view flagged
    uninitialized.
    """
    sec = image.section(name)
    if not sec.contents and sec.size > 0:
        return SectionView(vaddr=sec.vaddr, data=bytes(sec.size), uninitialized=True)
    return SectionView(vaddr=sec.vaddr, data=sec.contents, uninitialized=False)
