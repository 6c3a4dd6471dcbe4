"""Candidate scoring: re-compilation, re-execution against IO examples,
edit similarity, the unbiased pass@k estimator, and per-configuration
aggregation in the (O0..O3 + AVG) table shape."""

from __future__ import annotations

import json
import math
import subprocess
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .config import EvalLimits, ToolchainConfig
from .dataset import OPT_LEVELS, SourceBundle, rewrite_for_32bit
from .errors import EmptyGroundTruth, InvalidInput


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance (unit-cost insert/delete/substitute) via
    dynamic programming; O(len(a)*len(b)) time, two rows of memory."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,  # delete
                cur[j - 1] + 1,  # insert
                prev[j - 1] + (ca != cb),  # substitute
            )
        prev = cur
    return prev[-1]


def normalize_source(text: str) -> str:
    """Whitespace runs collapsed to single spaces, ends trimmed."""
    return " ".join(text.split())


@dataclass(frozen=True)
class SimilarityPair:
    a: str  # prediction
    b: str  # ground truth

    @property
    def l_a(self) -> int:
        return len(self.a)

    @property
    def l_b(self) -> int:
        return len(self.b)

    @property
    def ed(self) -> int:
        return edit_distance(self.a, self.b)


def edit_similarity(prediction: str, ground_truth: str) -> float:
    """1 - ED/L_B over whitespace-normalized text; may be negative when the
    prediction is much longer than the ground truth (not clamped)."""
    a = normalize_source(prediction)
    b = normalize_source(ground_truth)
    if not b:
        raise EmptyGroundTruth("ground-truth sequence is empty after normalization")
    return 1.0 - edit_distance(a, b) / len(b)


# ---------------------------------------------------------------------------
# pass@k
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PassAtKInput:
    n: int  # total generated outputs
    c: int  # correct outputs
    k: int  # draw size

    def __post_init__(self):
        if not 0 <= self.c <= self.n:
            raise InvalidInput(f"need 0 <= c <= n, got c={self.c} n={self.n}")
        if not 1 <= self.k <= self.n:
            raise InvalidInput(f"need 1 <= k <= n, got k={self.k} n={self.n}")


def pass_at_k(inp: PassAtKInput) -> float:
    """Unbiased estimator 1 - C(n-c, k)/C(n, k).

    Evaluated as an exact rational before the final float conversion, so
    pass@1 equals c/n exactly and degenerate cases are exact 0/1.
    """
    if inp.c == 0:
        return 0.0
    if inp.n - inp.c < inp.k:
        return 1.0
    ratio = Fraction(math.comb(inp.n - inp.c, inp.k), math.comb(inp.n, inp.k))
    return float(1 - ratio)


# ---------------------------------------------------------------------------
# compile / execute checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    ok: bool
    timed_out: bool = False
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _compile_candidate(
    source: str,
    bundle: SourceBundle,
    bitness: int,
    opt_level: str,
    toolchain: ToolchainConfig,
    timeout: float,
    workdir: Path,
) -> CheckResult:
    text = bundle.compose(body=source)
    if bitness == 32:
        text = rewrite_for_32bit(text)
    src = workdir / "candidate.c"
    src.write_text(text)
    out = workdir / "candidate.bin"
    cmd = [toolchain.cc, f"-m{bitness}", f"-{opt_level}", *toolchain.base_flags, str(src), "-o", str(out)]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        return CheckResult(ok=False, timed_out=True, detail=f"compile timeout after {timeout}s")
    if proc.returncode != 0:
        return CheckResult(ok=False, detail=proc.stderr[-2000:])
    return CheckResult(ok=True)


def check_recompile(
    candidate_source: str,
    bundle: SourceBundle,
    bitness: int,
    opt_level: str = "O0",
    toolchain: ToolchainConfig | None = None,
    timeout: float = 30.0,
) -> CheckResult:
    """True iff candidate + scaffold compile cleanly within the timeout."""
    toolchain = toolchain or ToolchainConfig()
    with tempfile.TemporaryDirectory(prefix="binlift_recom_") as tmp:
        return _compile_candidate(candidate_source, bundle, bitness, opt_level,
                                  toolchain, timeout, Path(tmp))


def _normalize_output(text: str) -> str:
    # trailing whitespace per line and the final newline only
    return "\n".join(line.rstrip() for line in text.splitlines()).rstrip("\n")


def check_reexecute(
    candidate_source: str,
    bundle: SourceBundle,
    bitness: int,
    opt_level: str = "O0",
    toolchain: ToolchainConfig | None = None,
    compile_timeout: float = 30.0,
    run_timeout: float = 10.0,
) -> CheckResult:
    """True iff the rebuilt program passes every IO example: normal exit,
    expected stdout (trailing-whitespace normalized), expected return."""
    toolchain = toolchain or ToolchainConfig()
    with tempfile.TemporaryDirectory(prefix="binlift_reexe_") as tmp:
        workdir = Path(tmp)
        compiled = _compile_candidate(candidate_source, bundle, bitness, opt_level,
                                      toolchain, compile_timeout, workdir)
        if not compiled:
            return CheckResult(ok=False, timed_out=compiled.timed_out,
                               detail=f"recompile failed: {compiled.detail[:500]}")
        binary = workdir / "candidate.bin"
        binary.chmod(0o755)
        for io in bundle.io_examples:
            try:
                proc = subprocess.run(
                    [str(binary), *io.args], capture_output=True, text=True, timeout=run_timeout
                )
            except subprocess.TimeoutExpired:
                return CheckResult(ok=False, timed_out=True,
                                   detail=f"run timeout on args {io.args}")
            if proc.returncode < 0:
                return CheckResult(ok=False, detail=f"crashed (signal {-proc.returncode}) on args {io.args}")
            if io.expected_return is not None and proc.returncode != io.expected_return:
                return CheckResult(ok=False, detail=f"exit {proc.returncode} != {io.expected_return} on args {io.args}")
            if _normalize_output(proc.stdout) != _normalize_output(io.expected_stdout):
                return CheckResult(
                    ok=False,
                    detail=f"stdout {proc.stdout!r} != {io.expected_stdout!r} on args {io.args}",
                )
        return CheckResult(ok=True)


# ---------------------------------------------------------------------------
# records and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    bitness: int
    opt_level: str
    re_com: bool
    re_exe: bool
    es: float
    model_id: str = ""
    sample_index: int = 0

    def __post_init__(self):
        if self.re_exe and not self.re_com:
            raise InvalidInput("re_exe implies re_com")

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "bitness": self.bitness,
                "opt_level": self.opt_level,
                "re_com": self.re_com,
                "re_exe": self.re_exe,
                "es": self.es,
                "model_id": self.model_id,
                "sample_index": self.sample_index,
            }
        )

    @classmethod
    def from_json_line(cls, line: str) -> "EvalRecord":
        d = json.loads(line)
        return cls(
            sample_id=d["sample_id"], bitness=d["bitness"], opt_level=d["opt_level"],
            re_com=d["re_com"], re_exe=d["re_exe"], es=d["es"],
            model_id=d.get("model_id", ""), sample_index=d.get("sample_index", 0),
        )


@dataclass
class ReportCell:
    bitness: int
    opt_level: str
    count: int
    re_com_pct: float
    re_exe_pct: float
    es_mean: float
    pass_at_1: float | None = None
    pass_at_10: float | None = None


@dataclass
class EvalReport:
    cells: list[ReportCell] = field(default_factory=list)
    avg_rows: list[ReportCell] = field(default_factory=list)

    def cell(self, bitness: int, opt_level: str) -> ReportCell | None:
        for cell in self.cells:
            if cell.bitness == bitness and cell.opt_level == opt_level:
                return cell
        return None

    def to_json(self) -> str:
        def encode(cell: ReportCell) -> dict:
            return {
                "bitness": cell.bitness,
                "opt_level": cell.opt_level,
                "count": cell.count,
                "re_com_pct": cell.re_com_pct,
                "re_exe_pct": cell.re_exe_pct,
                "es_mean": cell.es_mean,
                "pass_at_1": cell.pass_at_1,
                "pass_at_10": cell.pass_at_10,
            }

        return json.dumps(
            {"cells": [encode(c) for c in self.cells], "avg": [encode(c) for c in self.avg_rows]},
            indent=2,
        )

    def to_csv(self) -> str:
        """Aligned-column CSV, one row per (bitness, opt level) plus AVG."""
        header = ["bitness", "opt", "count", "re_com%", "re_exe%", "es", "pass@1", "pass@10"]
        rows = [header]

        def fmt(value, pct=False):
            if value is None:
                return "-"
            return f"{value:.2f}" if pct else str(value)

        for cell in self.cells + self.avg_rows:
            rows.append([
                str(cell.bitness), cell.opt_level, str(cell.count),
                fmt(cell.re_com_pct, pct=True), fmt(cell.re_exe_pct, pct=True),
                fmt(cell.es_mean, pct=True),
                fmt(cell.pass_at_1 * 100 if cell.pass_at_1 is not None else None, pct=True),
                fmt(cell.pass_at_10 * 100 if cell.pass_at_10 is not None else None, pct=True),
            ])
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = [", ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
        return "\n".join(lines) + "\n"


def passk_inputs_from_records(records: list[EvalRecord], k_max: int | None = None) -> dict[str, PassAtKInput]:
    """Per-sample (n, c) pairs: n candidates seen, c of them re-executable."""
    grouped: dict[str, list[EvalRecord]] = {}
    for record in records:
        grouped.setdefault(record.sample_id, []).append(record)
    out = {}
    for sample_id, group in grouped.items():
        n = len(group)
        c = sum(1 for r in group if r.re_exe)
        out[sample_id] = PassAtKInput(n=n, c=c, k=min(k_max or 1, n))
    return out


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate(
    records: list[EvalRecord],
    passk_inputs: dict[str, PassAtKInput] | None = None,
) -> EvalReport:
    """Per-(bitness, opt level) percentages and means, with an unweighted
    AVG row per bitness over the optimization levels present."""
    report = EvalReport()
    if not records:
        return report
    passk_inputs = passk_inputs or {}

    by_config: dict[tuple[int, str], list[EvalRecord]] = {}
    for record in records:
        by_config.setdefault((record.bitness, record.opt_level), []).append(record)

    for bitness in sorted({b for b, _ in by_config}):
        for opt in OPT_LEVELS:
            group = by_config.get((bitness, opt))
            if not group:
                continue
            sample_ids = sorted({r.sample_id for r in group})
            p1 = [
                pass_at_k(PassAtKInput(n=passk_inputs[s].n, c=passk_inputs[s].c, k=1))
                for s in sample_ids if s in passk_inputs
            ]
            p10 = [
                pass_at_k(PassAtKInput(n=passk_inputs[s].n, c=passk_inputs[s].c, k=10))
                for s in sample_ids
                if s in passk_inputs and passk_inputs[s].n >= 10
            ]
            report.cells.append(ReportCell(
                bitness=bitness,
                opt_level=opt,
                count=len(group),
                re_com_pct=_mean([float(r.re_com) for r in group]) * 100,
                re_exe_pct=_mean([float(r.re_exe) for r in group]) * 100,
                es_mean=_mean([r.es for r in group]) * 100,
                pass_at_1=_mean(p1) if p1 else None,
                pass_at_10=_mean(p10) if p10 else None,
            ))
        cells = [c for c in report.cells if c.bitness == bitness]
        if cells:
            report.avg_rows.append(ReportCell(
                bitness=bitness,
                opt_level="AVG",
                count=sum(c.count for c in cells),
                re_com_pct=_mean([c.re_com_pct for c in cells]),
                re_exe_pct=_mean([c.re_exe_pct for c in cells]),
                es_mean=_mean([c.es_mean for c in cells]),
                pass_at_1=_mean([c.pass_at_1 for c in cells if c.pass_at_1 is not None])
                if any(c.pass_at_1 is not None for c in cells) else None,
                pass_at_10=_mean([c.pass_at_10 for c in cells if c.pass_at_10 is not None])
                if any(c.pass_at_10 is not None for c in cells) else None,
            ))
    return report


# ---------------------------------------------------------------------------
# harness over candidate records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateRecord:
    """One candidate decompilation paired with its sample provenance."""

    sample_id: str
    func_name: str
    bitness: int
    opt_level: str
    candidate_source: str
    ground_truth: str
    model_id: str = ""
    sample_index: int = 0

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "func_name": self.func_name,
                "bitness": self.bitness,
                "opt_level": self.opt_level,
                "candidate_source": self.candidate_source,
                "ground_truth": self.ground_truth,
                "model_id": self.model_id,
                "sample_index": self.sample_index,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "CandidateRecord":
        d = json.loads(line)
        return cls(
            sample_id=d["sample_id"], func_name=d["func_name"], bitness=d["bitness"],
            opt_level=d["opt_level"], candidate_source=d["candidate_source"],
            ground_truth=d["ground_truth"], model_id=d.get("model_id", ""),
            sample_index=d.get("sample_index", 0),
        )


def evaluate_candidate(
    record: CandidateRecord,
    bundle: SourceBundle,
    toolchain: ToolchainConfig | None = None,
    limits: EvalLimits | None = None,
) -> EvalRecord:
    limits = limits or EvalLimits()
    re_com = check_recompile(record.candidate_source, bundle, record.bitness,
                             record.opt_level, toolchain, limits.compile_timeout)
    re_exe = CheckResult(ok=False)
    if re_com:
        re_exe = check_reexecute(record.candidate_source, bundle, record.bitness,
                                 record.opt_level, toolchain,
                                 limits.compile_timeout, limits.run_timeout)
    es = edit_similarity(record.candidate_source, record.ground_truth)
    return EvalRecord(
        sample_id=record.sample_id,
        bitness=record.bitness,
        opt_level=record.opt_level,
        re_com=bool(re_com),
        re_exe=bool(re_exe),
        es=es,
        model_id=record.model_id,
        sample_index=record.sample_index,
    )
