"""Basic-block segmentation, edge construction, symbolic relabeling, and
the canonical CFG serialization used in prompts and datasets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .elf import BinaryImage, FunctionBoundary, SymbolKind
from .errors import BinliftError
from .x86 import CFClass, Instruction, decode_function


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: tuple[Instruction, ...]

    def __post_init__(self):
        if not self.instructions:
            raise ValueError(f"basic block {self.label!r} has no instructions")
        for insn in self.instructions[:-1]:
            if insn.cf_class is not CFClass.SEQUENTIAL:
                raise ValueError(
                    f"block {self.label!r}: non-terminal instruction at 0x{insn.vaddr:x} "
                    f"has cf_class {insn.cf_class.value}"
                )

    @property
    def start(self) -> int:
        return self.instructions[0].vaddr

    @property
    def end(self) -> int:
        return self.instructions[-1].end

    @property
    def terminator(self) -> Instruction:
        return self.instructions[-1]


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "indirect-jump" | "branch-target-outside-function" | ...
    vaddr: int
    detail: str


@dataclass
class ControlFlowGraph:
    function_name: str
    nodenum: int
    nodes: dict[str, list[str]]  # label -> instruction text lines, address order
    edges: list[list[str]]  # [source label, target label], source/target address order

    def validate(self) -> None:
        if self.nodenum != len(self.nodes):
            raise BinliftError(f"nodenum {self.nodenum} != {len(self.nodes)} nodes")
        if "start" not in self.nodes:
            raise BinliftError("entry block 'start' missing")
        for src, dst in self.edges:
            if src not in self.nodes or dst not in self.nodes:
                raise BinliftError(f"edge [{src}, {dst}] references a missing block")


def block_label(addr: int, entry: int) -> str:
    return "start" if addr == entry else f"loc_{addr:X}"


def segment_blocks(instructions: list[Instruction]) -> list[BasicBlock]:
    """Split a decoded instruction list into basic blocks.

    A block ends after every control-transfer instruction (jumps and calls
    both terminate blocks) and a new block begins at every static branch
    target inside the function.
    """
    if not instructions:
        raise ValueError("cannot segment an empty instruction list")
    entry = instructions[0].vaddr
    end = instructions[-1].end
    boundaries = {i.vaddr for i in instructions}

    leaders = {entry}
    for idx, insn in enumerate(instructions):
        if insn.cf_class is not CFClass.SEQUENTIAL and idx + 1 < len(instructions):
            leaders.add(instructions[idx + 1].vaddr)
        target = insn.static_target
        if target is not None and entry <= target < end and target in boundaries:
            leaders.add(target)

    blocks: list[BasicBlock] = []
    current: list[Instruction] = []
    for insn in instructions:
        if insn.vaddr in leaders and current:
            blocks.append(BasicBlock(block_label(current[0].vaddr, entry), tuple(current)))
            current = []
        current.append(insn)
    if current:
        blocks.append(BasicBlock(block_label(current[0].vaddr, entry), tuple(current)))
    return blocks


def build_edges(
    blocks: list[BasicBlock],
    diagnostics: list[Diagnostic] | None = None,
) -> list[list[str]]:
    """Directed edges between blocks, per-block in (target, fall-through) order.

    Indirect jumps contribute no edges and record a diagnostic; branch
    targets outside the function keep their numeric form and likewise only
    produce a diagnostic.
    """
    label_by_addr = {b.start: b.label for b in blocks}
    edges: list[list[str]] = []
    seen: set[tuple[str, str]] = set()

    def emit(src: str, dst: str) -> None:
        if (src, dst) not in seen:
            seen.add((src, dst))
            edges.append([src, dst])

    def diagnose(kind: str, vaddr: int, detail: str) -> None:
        if diagnostics is not None:
            diagnostics.append(Diagnostic(kind, vaddr, detail))

    for i, block in enumerate(blocks):
        term = block.terminator
        fall = blocks[i + 1].label if i + 1 < len(blocks) else None
        cls = term.cf_class
        if cls is CFClass.COND_JUMP:
            target_label = label_by_addr.get(term.static_target)
            if target_label is not None:
                emit(block.label, target_label)
            else:
                diagnose("branch-target-outside-function", term.vaddr,
                         f"{term.text} leaves the function")
            if fall is not None:
                emit(block.label, fall)
        elif cls is CFClass.UNCOND_JUMP:
            target_label = label_by_addr.get(term.static_target)
            if target_label is not None:
                emit(block.label, target_label)
            else:
                diagnose("branch-target-outside-function", term.vaddr,
                         f"{term.text} leaves the function (tail call?)")
        elif cls is CFClass.INDIRECT_JUMP:
            diagnose("indirect-jump", term.vaddr,
                     f"{term.text} has no static targets; no edges emitted")
        elif cls is CFClass.CALL:
            if fall is not None:
                emit(block.label, fall)
        elif cls is CFClass.RETURN:
            pass
        else:  # sequential end: fall through into the next leader
            if fall is not None:
                emit(block.label, fall)
    return edges


def relabel_operands(blocks: list[BasicBlock], image: BinaryImage) -> list[BasicBlock]:
    """Rewrite numeric branch targets to block labels and call targets to
    callee names (symbol name when available, else ``sub_`` + hex)."""
    label_by_addr = {b.start: b.label for b in blocks}
    out: list[BasicBlock] = []
    for block in blocks:
        insns: list[Instruction] = []
        for insn in block.instructions:
            target = insn.static_target
            if target is None:
                insns.append(insn)
                continue
            numeric = f"0x{target:x}"
            if insn.cf_class in (CFClass.COND_JUMP, CFClass.UNCOND_JUMP):
                label = label_by_addr.get(target)
                if label is not None:
                    insns.append(dataclasses.replace(insn, operands=insn.operands.replace(numeric, label, 1)))
                else:
                    insns.append(insn)
            elif insn.cf_class is CFClass.CALL:
                sym = image.symbol_at(target, SymbolKind.FUNCTION) or image.symbol_at(target)
                name = sym.name if sym is not None else f"sub_{target:X}"
                insns.append(dataclasses.replace(insn, operands=insn.operands.replace(numeric, name, 1)))
            else:
                insns.append(insn)
        out.append(BasicBlock(block.label, tuple(insns)))
    return out


def serialize_cfg(cfg: ControlFlowGraph) -> str:
    """Canonical JSON: keys "nodenum", "nodes", "edges" in that order,
    nodes in block address order. Byte-identical for identical input."""
    cfg.validate()
    payload = {"nodenum": cfg.nodenum, "nodes": cfg.nodes, "edges": cfg.edges}
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


@dataclass
class CfgExtraction:
    cfg: ControlFlowGraph
    blocks: list[BasicBlock]
    instructions: list[Instruction]
    diagnostics: list[Diagnostic] = field(default_factory=list)


def _addr_of(label: str, blocks: list[BasicBlock]) -> int:
    for b in blocks:
        if b.label == label:
            return b.start
    raise KeyError(label)


def extract_cfg(image: BinaryImage, boundary: FunctionBoundary, relabel: bool = True) -> CfgExtraction:
    """Full pipeline: decode, segment, build edges, relabel, assemble CFG."""
    instructions = decode_function(image, boundary)
    raw_blocks = segment_blocks(instructions)
    diagnostics: list[Diagnostic] = []
    edges = build_edges(raw_blocks, diagnostics)
    blocks = relabel_operands(raw_blocks, image) if relabel else raw_blocks

    addr_by_label = {b.label: b.start for b in blocks}
    nodes = {b.label: [i.text for i in b.instructions] for b in sorted(blocks, key=lambda b: b.start)}
    sorted_edges = sorted(edges, key=lambda e: (addr_by_label[e[0]], addr_by_label[e[1]]))
    cfg = ControlFlowGraph(
        function_name=boundary.name,
        nodenum=len(nodes),
        nodes=nodes,
        edges=sorted_edges,
    )
    cfg.validate()
    return CfgExtraction(cfg=cfg, blocks=blocks, instructions=instructions, diagnostics=diagnostics)
