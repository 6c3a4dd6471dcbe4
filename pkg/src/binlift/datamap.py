"""Data mapping recovery: section data items referenced by a function,
proximity expansion, stack variables, and the canonical table serialization.

Item labels use covering symbol names when the binary still has them and
"section:0xADDR" chains otherwise (the stripped-binary case).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .elf import BinaryImage, SectionView, SymbolKind, section_bytes
from .x86 import Instruction

SIZE_BYTES = {"byte": 1, "word": 2, "dword": 4, "qword": 8}
SIZE_NAMES = {v: k for k, v in SIZE_BYTES.items()}
DATA_SECTION_FAMILIES = (".rodata", ".data", ".bss")

PRINTABLE_LO, PRINTABLE_HI = 0x20, 0x7E


@dataclass(frozen=True)
class DataItem:
    section: str
    vaddr: int
    size_class: str  # byte | word | dword | qword
    count: int
    value_kind: str  # "hex" | "string" | "uninit"
    value: str  # hex text, the string literal, or "?"
    label: str
    origin: str = "referenced"  # "referenced" | "proximity"
    conflict: bool = False

    @property
    def unit(self) -> int:
        return SIZE_BYTES[self.size_class]

    @property
    def end(self) -> int:
        return self.vaddr + self.count * self.unit

    def covers(self, addr: int) -> bool:
        return self.vaddr <= addr < self.end


@dataclass(frozen=True)
class StackVariable:
    frame_offset: int  # signed; never 0
    size_class: str
    label: str
    conflict: bool = False

    def __post_init__(self):
        if self.frame_offset == 0:
            raise ValueError("stack variable offset must be nonzero")


@dataclass
class DataMappingTable:
    items: dict[str, list[DataItem]] = field(default_factory=dict)  # per section, address order
    temp_vars: list[StackVariable] = field(default_factory=list)
    substitutions: dict[str, str] = field(default_factory=dict)  # operand occurrence -> label chain

    def all_items(self) -> list[DataItem]:
        return [item for items in self.items.values() for item in items]

    def item_covering(self, addr: int) -> DataItem | None:
        for item in self.all_items():
            if item.covers(addr):
                return item
        return None


@dataclass
class CandidatePool:
    """Full byte extents of the data sections, keyed by section name."""

    sections: dict[str, SectionView] = field(default_factory=dict)

    def section_for(self, addr: int) -> tuple[str, SectionView] | None:
        for name, view in self.sections.items():
            if view.vaddr <= addr < view.vaddr + len(view.data):
                return name, view
        return None


def _is_data_section(name: str) -> bool:
    return any(name == fam or name.startswith(fam + ".") for fam in DATA_SECTION_FAMILIES)


def collect_candidate_data(image: BinaryImage) -> CandidatePool:
    """Pool the full extents of .rodata / .data / .bss (and dotted variants)."""
    pool = CandidatePool()
    for sec in image.sections:
        if sec.is_alloc and sec.size > 0 and _is_data_section(sec.name):
            pool.sections[sec.name] = section_bytes(image, sec.name)
    return pool


def detect_string(data: bytes, offset: int) -> str | None:
    """Maximal run of >= 2 printable ASCII bytes at ``offset`` terminated by
    a null byte; None when the run is short or unterminated."""
    if offset >= len(data):
        raise ValueError("offset past end of buffer")
    end = offset
    while end < len(data) and PRINTABLE_LO <= data[end] <= PRINTABLE_HI:
        end += 1
    if end - offset < 2 or end >= len(data) or data[end] != 0:
        return None
    return data[offset:end].decode("ascii")


def _split_width(width: int) -> list[int]:
    """Split an access width into supported item units (16-byte vector
    accesses become two qwords, etc.)."""
    out = []
    remaining = width
    for unit in (8, 4, 2, 1):
        while remaining >= unit:
            out.append(unit)
            remaining -= unit
    return out


def _item_label(image: BinaryImage, section: str, addr: int) -> str:
    sym = image.symbol_covering(addr, SymbolKind.OBJECT) or image.symbol_at(addr, SymbolKind.OBJECT)
    if sym is not None:
        return sym.name
    return f"{section}:0x{addr:X}"


def _hex_value(view: SectionView, addr: int, unit: int) -> str:
    off = addr - view.vaddr
    raw = view.data[off : off + unit]
    return f"0x{int.from_bytes(raw, 'little'):0{unit * 2}x}"


def _materialize(
    image: BinaryImage,
    section: str,
    view: SectionView,
    addr: int,
    unit: int,
    origin: str,
    try_string: bool,
) -> DataItem:
    label = _item_label(image, section, addr)
    if view.uninitialized:
        return DataItem(section=section, vaddr=addr, size_class=SIZE_NAMES[unit], count=1,
                        value_kind="uninit", value="?", label=label, origin=origin)
    if try_string:
        text = detect_string(view.data, addr - view.vaddr)
        if text is not None:
            return DataItem(section=section, vaddr=addr, size_class="byte", count=len(text) + 1,
                            value_kind="string", value=text, label=label, origin=origin)
    return DataItem(section=section, vaddr=addr, size_class=SIZE_NAMES[unit], count=1,
                    value_kind="hex", value=_hex_value(view, addr, unit), label=label, origin=origin)


@dataclass(frozen=True)
class _Site:
    key: str  # substitution occurrence key
    addr: int  # candidate absolute address
    width: int | None


def _reference_sites(instructions: list[Instruction], pool: CandidatePool) -> list[_Site]:
    """Operand occurrences that resolve into the pool: rip-relative and
    absolute memory forms directly, base+displacement forms whose
    displacement lands in a data section (array indexing), and immediate
    values that are data-section addresses (32-bit address materialization)."""
    sites: list[_Site] = []
    for insn in instructions:
        for ref in insn.mem_refs:
            if ref.frame_relative or ref.seg in ("fs", "gs"):
                continue
            if ref.resolved is not None and pool.section_for(ref.resolved) is not None:
                key = f"{ref.expr}(rip=0x{ref.rip_value:x})" if ref.is_rip else ref.expr
                sites.append(_Site(key, ref.resolved, ref.width))
            elif ref.base is not None and ref.disp > 0 and pool.section_for(ref.disp) is not None:
                sites.append(_Site(ref.expr, ref.disp, ref.width))
        for imm in insn.imms:
            if pool.section_for(imm) is not None:
                sites.append(_Site(f"0x{imm:x}", imm, None))
    return sites


def cross_reference(
    instructions: list[Instruction],
    pool: CandidatePool,
    image: BinaryImage,
) -> list[DataItem]:
    """Resolve memory operands to absolute addresses and materialize the
    pool items they land in.

    64-bit rip-relative operands resolve as next-instruction address plus
    displacement; 32-bit (and indexed/base-less) absolute displacements
    resolve directly. Unresolvable operands are skipped.
    """
    width_by_addr: dict[tuple[str, int], list[int | None]] = {}
    order: list[tuple[str, int]] = []
    for site in _reference_sites(instructions, pool):
        name, _ = pool.section_for(site.addr)
        key = (name, site.addr)
        if key not in width_by_addr:
            width_by_addr[key] = []
            order.append(key)
        width_by_addr[key].append(site.width)

    items: list[DataItem] = []
    claimed: dict[str, list[tuple[int, int]]] = {}
    for key in sorted(order, key=lambda k: (k[0], k[1])):
        name, addr = key
        view = pool.sections[name]
        widths = [w for w in width_by_addr[key] if w]
        conflict = len(set(widths)) > 1
        width = max(widths) if widths else 4  # address-only references default to dword
        byte_access = widths == [] or 1 in widths
        units = _split_width(min(width, 8) if width <= 8 else width)
        cursor = addr
        for i, unit in enumerate(units):
            if cursor + unit > view.vaddr + len(view.data):
                break
            if any(lo <= cursor < hi for lo, hi in claimed.get(name, [])):
                break
            item = _materialize(image, name, view, cursor, unit, "referenced",
                                try_string=(i == 0 and byte_access))
            if item.conflict != conflict:
                item = replace(item, conflict=conflict)
            items.append(item)
            claimed.setdefault(name, []).append((item.vaddr, item.end))
            cursor = item.end
            if item.value_kind == "string":
                break
    return items


def proximity_expand(
    referenced: list[DataItem],
    pool: CandidatePool,
    window: int,
) -> list[DataItem]:
    """Add unreferenced same-section items within ``window`` bytes of a
    referenced item, walking in the referenced item's unit size.

    Only referenced-origin items seed expansion, which makes a second
    application with the same window a no-op.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    out = list(referenced)
    if window == 0:
        return out
    extents: dict[str, list[tuple[int, int]]] = {}
    for item in referenced:
        extents.setdefault(item.section, []).append((item.vaddr, item.end))

    def occupied(section: str, lo: int, hi: int) -> bool:
        return any(a < hi and lo < b for a, b in extents.get(section, []))

    for seed in referenced:
        if seed.origin != "referenced" or seed.value_kind == "string":
            continue
        view = pool.sections[seed.section]
        unit = seed.unit
        sec_lo, sec_hi = view.vaddr, view.vaddr + len(view.data)
        # forward walk
        addr = seed.end
        while addr + unit <= sec_hi and addr - seed.end <= window:
            if occupied(seed.section, addr, addr + unit):
                break
            out.append(_expand_one(pool, seed.section, view, addr, unit))
            extents.setdefault(seed.section, []).append((addr, addr + unit))
            addr += unit
        # backward walk
        addr = seed.vaddr - unit
        while addr >= sec_lo and seed.vaddr - (addr + unit) <= window:
            if occupied(seed.section, addr, addr + unit):
                break
            out.append(_expand_one(pool, seed.section, view, addr, unit))
            extents.setdefault(seed.section, []).append((addr, addr + unit))
            addr -= unit
    out.sort(key=lambda it: (it.section, it.vaddr))
    return out


def _expand_one(pool: CandidatePool, section: str, view: SectionView, addr: int, unit: int) -> DataItem:
    if view.uninitialized:
        return DataItem(section=section, vaddr=addr, size_class=SIZE_NAMES[unit], count=1,
                        value_kind="uninit", value="?", label=f"{section}:0x{addr:X}",
                        origin="proximity")
    return DataItem(section=section, vaddr=addr, size_class=SIZE_NAMES[unit], count=1,
                    value_kind="hex", value=_hex_value(view, addr, unit),
                    label=f"{section}:0x{addr:X}", origin="proximity")


def extract_stack_vars(instructions: list[Instruction]) -> list[StackVariable]:
    """Distinct (offset, size) pairs from frame-register-relative operands.

    Offsets are relative to rbp/rsp (ebp/esp on 32-bit); offset 0 slots are
    skipped. Multiple widths at one offset are all kept, flagged as
    conflicting.
    """
    widths_by_offset: dict[int, set[int]] = {}
    for insn in instructions:
        for ref in insn.mem_refs:
            if not ref.frame_relative or ref.width is None or ref.disp == 0:
                continue
            width = min(ref.width, 8)  # vector spills count as qword slots
            widths_by_offset.setdefault(ref.disp, set()).add(width)

    out: list[StackVariable] = []
    for offset in sorted(widths_by_offset):
        widths = sorted(widths_by_offset[offset])
        conflict = len(widths) > 1
        for width in widths:
            label = f"var_{-offset:X}" if offset < 0 else f"arg_{offset:X}"
            out.append(StackVariable(frame_offset=offset, size_class=SIZE_NAMES[width],
                                     label=label, conflict=conflict))
    return out


def _merge_bss_runs(items: list[DataItem]) -> list[DataItem]:
    merged: list[DataItem] = []
    for item in items:
        if (
            merged
            and item.value_kind == "uninit"
            and merged[-1].value_kind == "uninit"
            and merged[-1].size_class == item.size_class
            and merged[-1].end == item.vaddr
        ):
            prev = merged[-1]
            merged[-1] = replace(prev, count=prev.count + item.count)
        else:
            merged.append(item)
    return merged


def _offset_key(offset: int) -> str:
    return f"-0x{-offset:x}" if offset < 0 else f"0x{offset:x}"


def build_table(
    referenced: list[DataItem],
    stack_vars: list[StackVariable],
    instructions: list[Instruction],
) -> DataMappingTable:
    """Assemble the final table: merged items per section, temp vars, and a
    substitution entry for every resolved memory-operand occurrence."""
    by_section: dict[str, list[DataItem]] = {}
    for item in sorted(referenced, key=lambda it: (it.section, it.vaddr)):
        by_section.setdefault(item.section, []).append(item)
    for name, items in by_section.items():
        if name == ".bss" or name.startswith(".bss."):
            by_section[name] = _merge_bss_runs(items)

    table = DataMappingTable(items=by_section, temp_vars=list(stack_vars))

    var_by_offset = {}
    for var in stack_vars:
        var_by_offset.setdefault(var.frame_offset, var)

    for insn in instructions:
        for ref in insn.mem_refs:
            if ref.frame_relative and ref.width is not None and ref.disp != 0:
                var = var_by_offset.get(ref.disp)
                if var is not None:
                    table.substitutions.setdefault(_offset_key(ref.disp), var.label)

    pool = CandidatePool()
    for name, items in table.items.items():
        if items:
            lo = min(it.vaddr for it in items)
            hi = max(it.end for it in items)
            pool.sections[name] = SectionView(vaddr=lo, data=bytes(hi - lo))
    for site in _reference_sites(instructions, pool):
        item = table.item_covering(site.addr)
        if item is None:
            continue
        chain = f"{item.section}:0x{item.vaddr:X}"
        if item.label != chain:
            chain = f"{chain} -> {item.label}"
        table.substitutions.setdefault(site.key, chain)

    _check_table(table)
    return table


def _check_table(table: DataMappingTable) -> None:
    labels = {item.label for item in table.all_items()}
    labels |= {f"{it.section}:0x{it.vaddr:X}" for it in table.all_items()}
    labels |= {var.label for var in table.temp_vars}
    for key, chain in table.substitutions.items():
        target = chain.rsplit(" -> ", 1)[-1]
        if target not in labels:
            raise ValueError(f"substitution {key!r} targets unknown label {target!r}")
    for items in table.items.values():
        addrs = [it.vaddr for it in items]
        if len(addrs) != len(set(addrs)):
            raise ValueError("duplicate item addresses within a section")


def _section_sort_key(name: str) -> tuple[int, str]:
    for rank, fam in enumerate(DATA_SECTION_FAMILIES):
        if name == fam or name.startswith(fam + "."):
            return rank, name
    return len(DATA_SECTION_FAMILIES), name


def render_item_value(item: DataItem) -> str:
    """The "size:count,value" text for one item."""
    if item.value_kind == "string":
        return f'{item.size_class}:{item.count},"{item.value}"'
    return f"{item.size_class}:{item.count},{item.value}"


def serialize_table(table: DataMappingTable) -> str:
    """Canonical JSON: one key per populated section (.rodata, .data, .bss
    order), then "temp vars"; addresses as "0x" + uppercase hex."""
    payload: dict[str, dict[str, str]] = {}
    for name in sorted(table.items, key=_section_sort_key):
        items = table.items[name]
        if not items:
            continue
        payload[name] = {f"0x{it.vaddr:X}": render_item_value(it) for it in items}
    if table.temp_vars:
        rendered: dict[str, str] = {}
        for var in sorted(table.temp_vars, key=lambda v: (v.frame_offset, SIZE_BYTES[v.size_class])):
            rendered[_offset_key(var.frame_offset)] = var.size_class  # widest wins
        payload["temp vars"] = rendered
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


@dataclass
class DataMapExtraction:
    table: DataMappingTable
    referenced: list[DataItem]
    stack_vars: list[StackVariable]


def extract_data_map(
    image: BinaryImage,
    instructions: list[Instruction],
    window: int = 64,
) -> DataMapExtraction:
    """Full pipeline: candidate pool, cross-reference, proximity expansion,
    stack variables, final table."""
    pool = collect_candidate_data(image)
    referenced = cross_reference(instructions, pool, image)
    expanded = proximity_expand(referenced, pool, window)
    stack_vars = extract_stack_vars(instructions)
    table = build_table(expanded, stack_vars, instructions)
    return DataMapExtraction(table=table, referenced=expanded, stack_vars=stack_vars)
