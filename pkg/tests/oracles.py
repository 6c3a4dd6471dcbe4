"""Independent test oracles: external binutils listings and reference
metric implementations. Nothing here may import the code paths it checks
beyond plain data types."""

from __future__ import annotations

import re
import subprocess
from functools import lru_cache

OBJDUMP_ROW = re.compile(r"^\s*([0-9a-f]+):\s+((?:[0-9a-f]{2} )+)\s*(.*)$")
BRANCH_MNEMONIC = re.compile(r"^(j[a-z]+|call[ql]?|loop\w*)$")


def objdump_rows(path, start: int, end: int) -> list[tuple[int, int, str, str]]:
    """(address, byte count, mnemonic, operands) per instruction from
    ``objdump -d`` over [start, end); continuation lines are merged."""
    out = subprocess.run(
        ["objdump", "-d", "-M", "intel", "--start-address", hex(start),
         "--stop-address", hex(end), str(path)],
        capture_output=True, text=True, check=True,
    ).stdout
    rows: list[tuple[int, int, str, str]] = []
    for line in out.splitlines():
        m = OBJDUMP_ROW.match(line)
        if not m:
            continue
        addr = int(m.group(1), 16)
        nbytes = len(m.group(2).split())
        rest = m.group(3).strip()
        if not rest:  # byte continuation of the previous instruction
            if rows:
                a, n, mnem, ops = rows[-1]
                rows[-1] = (a, n + nbytes, mnem, ops)
            continue
        parts = rest.split(None, 1)
        mnemonic = parts[0]
        operands = parts[1].strip() if len(parts) > 1 else ""
        if mnemonic in ("notrack", "bnd", "lock", "rep", "repz", "repnz") and operands:
            sub = operands.split(None, 1)
            mnemonic, operands = sub[0], (sub[1].strip() if len(sub) > 1 else "")
        assert mnemonic != "(bad)", f"objdump rejects bytes at {addr:#x} in {path}"
        rows.append((addr, nbytes, mnemonic, operands))
    return rows


def objdump_branch_targets(rows) -> set[int]:
    """Direct branch/call target addresses from an objdump listing."""
    targets = set()
    for _, _, mnemonic, operands in rows:
        if BRANCH_MNEMONIC.match(mnemonic):
            token = operands.split()[0] if operands else ""
            try:
                targets.add(int(token, 16))
            except ValueError:
                pass  # indirect operand
    return targets


def readelf_sections(path) -> dict[str, tuple[int, int]]:
    """{section name: (vaddr, size)} from ``readelf -S``."""
    out = subprocess.run(["readelf", "-SW", str(path)], capture_output=True, text=True, check=True).stdout
    sections = {}
    for line in out.splitlines():
        m = re.match(r"\s*\[\s*\d+\]\s+(\S+)\s+\S+\s+([0-9a-f]+)\s+[0-9a-f]+\s+([0-9a-f]+)", line)
        if m:
            sections[m.group(1)] = (int(m.group(2), 16), int(m.group(3), 16))
    return sections


def readelf_symbols(path) -> dict[str, tuple[int, int, str]]:
    """{symbol name: (vaddr, size, type)} from ``readelf -s``."""
    out = subprocess.run(["readelf", "-sW", str(path)], capture_output=True, text=True, check=True).stdout
    symbols = {}
    for line in out.splitlines():
        m = re.match(
            r"\s*\d+:\s+([0-9a-f]+)\s+(\d+)\s+(\w+)\s+\w+\s+\w+\s+(\S+)\s+(\S+)$", line
        )
        if m and m.group(4) != "UND":
            symbols[m.group(5)] = (int(m.group(1), 16), int(m.group(2)), m.group(3))
    return symbols


def naive_edit_distance(a: str, b: str) -> int:
    """The recursive definition evaluated top-down (memoized): base case
    max of the prefix lengths when one is empty, else the three-way min
    with unit costs and a free diagonal on matching characters."""

    @lru_cache(maxsize=None)
    def ed(i: int, j: int) -> int:
        if min(i, j) == 0:
            return max(i, j)
        return min(
            ed(i - 1, j) + 1,
            ed(i, j - 1) + 1,
            ed(i - 1, j - 1) + (1 if a[i - 1] != b[j - 1] else 0),
        )

    result = ed(len(a), len(b))
    ed.cache_clear()
    return result


def enumerate_pass_at_k(n: int, c: int, k: int) -> float:
    """Exhaustive pass@k: fraction of k-subsets of n outputs containing at
    least one of the c correct ones."""
    from itertools import combinations

    outputs = list(range(n))
    correct = set(outputs[:c])
    subsets = list(combinations(outputs, k))
    hits = sum(1 for s in subsets if correct & set(s))
    return hits / len(subsets)
