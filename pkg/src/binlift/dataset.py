"""Dataset construction: compile C bundles at four optimization levels for
both bitnesses, strip, extract CFG and data mapping, and emit prompt /
ground-truth records in curriculum order.

Bundle JSON schema (one document per bundle):
  {"func_name": ..., "source": ..., "scaffold": ...,
   "io_examples": [{"args": [...], "expected_stdout": ..., "expected_return": ...}],
   "bitness": [32, 64]}

The scaffold must contain the marker line ``/*__FUNCTION_UNDER_TEST__*/``
where the function source (or a candidate decompilation) is spliced in.
"""

from __future__ import annotations

import hashlib
import json
import re
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .cfg import extract_cfg, serialize_cfg
from .config import RunConfig, ToolchainConfig
from .datamap import extract_data_map, serialize_table
from .elf import load_image, resolve_functions
from .errors import CompileError, DecodeError, FunctionNotFound, SampleSkipped
from .prompt import PROMPT_VERSION, build_prompt

FUNC_MARKER = "/*__FUNCTION_UNDER_TEST__*/"
OPT_LEVELS = ("O0", "O1", "O2", "O3")


@dataclass(frozen=True)
class IOExample:
    args: list[str]
    expected_stdout: str
    expected_return: int | None = 0


@dataclass
class SourceBundle:
    func_name: str
    source: str  # exactly one definition of func_name
    scaffold: str  # support code + driver, carries FUNC_MARKER
    io_examples: list[IOExample]
    bitness: tuple[int, ...] = (32, 64)

    def __post_init__(self):
        defs = re.findall(rf"\b{re.escape(self.func_name)}\s*\(", self.source)
        if not defs:
            raise ValueError(f"bundle source does not define {self.func_name!r}")
        if FUNC_MARKER not in self.scaffold:
            raise ValueError(f"scaffold for {self.func_name!r} lacks {FUNC_MARKER}")

    def compose(self, body: str | None = None) -> str:
        """Full translation unit with ``body`` (default: the ground truth)
        spliced at the marker."""
        return self.scaffold.replace(FUNC_MARKER, body if body is not None else self.source, 1)

    def bundle_hash(self) -> str:
        blob = json.dumps(
            {
                "func_name": self.func_name,
                "source": self.source,
                "scaffold": self.scaffold,
                "io": [[io.args, io.expected_stdout, io.expected_return] for io in self.io_examples],
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {
                "func_name": self.func_name,
                "source": self.source,
                "scaffold": self.scaffold,
                "io_examples": [
                    {"args": io.args, "expected_stdout": io.expected_stdout, "expected_return": io.expected_return}
                    for io in self.io_examples
                ],
                "bitness": list(self.bitness),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SourceBundle":
        data = json.loads(text)
        return cls(
            func_name=data["func_name"],
            source=data["source"],
            scaffold=data["scaffold"],
            io_examples=[
                IOExample(args=list(io["args"]), expected_stdout=io["expected_stdout"],
                          expected_return=io.get("expected_return", 0))
                for io in data["io_examples"]
            ],
            bitness=tuple(data.get("bitness", [32, 64])),
        )


# Fixed rewrite table mapping 64-bit-specific typedefs to their 32-bit
# equivalents. Patterns are whitespace-tolerant; unmatched sources pass
# through unchanged.
_REWRITE_32BIT = [
    (re.compile(r"\btypedef\s+unsigned\s+long\s+(?:int\s+)?size_t\s*;"), "typedef unsigned int size_t;"),
    (re.compile(r"\btypedef\s+long\s+(?:int\s+)?ssize_t\s*;"), "typedef int ssize_t;"),
    (re.compile(r"\btypedef\s+unsigned\s+long\s+(?:int\s+)?uintptr_t\s*;"), "typedef unsigned int uintptr_t;"),
    (re.compile(r"\btypedef\s+long\s+(?:int\s+)?intptr_t\s*;"), "typedef int intptr_t;"),
    (re.compile(r"\btypedef\s+long\s+(?:int\s+)?ptrdiff_t\s*;"), "typedef int ptrdiff_t;"),
    (re.compile(r"\btypedef\s+unsigned\s+long\s+(?:int\s+)?uint64_t\s*;"), "typedef unsigned long long uint64_t;"),
    (re.compile(r"\btypedef\s+long\s+(?:int\s+)?int64_t\s*;"), "typedef long long int64_t;"),
]


def rewrite_for_32bit(source: str) -> str:
    """Apply the fixed 64-bit -> 32-bit typedef rewrites; no-op otherwise."""
    for pattern, replacement in _REWRITE_32BIT:
        source = pattern.sub(replacement, source)
    return source


@dataclass
class CompiledBinary:
    path: Path  # stripped executable
    prestrip_path: Path  # same build with symbols, the boundary/test oracle
    sidecar_path: Path  # JSON symbol dump of the pre-strip binary
    bitness: int
    opt_level: str
    flags: list[str]
    compiler_version: str

    def function_symbols(self) -> dict[str, tuple[int, int]]:
        data = json.loads(self.sidecar_path.read_text())
        return {name: (entry[0], entry[1]) for name, entry in data["functions"].items()}


_version_cache: dict[str, str] = {}


def compiler_version(cc: str) -> str:
    if cc not in _version_cache:
        out = subprocess.run([cc, "--version"], capture_output=True, text=True, check=True)
        _version_cache[cc] = out.stdout.splitlines()[0].strip()
    return _version_cache[cc]


def compile_and_strip(
    bundle: SourceBundle,
    opt_level: str,
    bitness: int,
    toolchain: ToolchainConfig,
    workdir: str | Path,
) -> CompiledBinary:
    """Build the bundle at the requested level/bitness, keep the pre-strip
    binary and a symbol sidecar, and strip the deliverable."""
    if opt_level not in OPT_LEVELS:
        raise ValueError(f"bad optimization level {opt_level!r}")
    if bitness not in (32, 64):
        raise ValueError(f"bad bitness {bitness}")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    source_text = bundle.compose()
    if bitness == 32:
        source_text = rewrite_for_32bit(source_text)
    src = workdir / f"{bundle.func_name}.c"
    src.write_text(source_text)

    stem = f"{bundle.func_name}_{bitness}_{opt_level}"
    prestrip = workdir / f"{stem}.prestrip"
    stripped = workdir / stem
    flags = [f"-m{bitness}", f"-{opt_level}", *toolchain.base_flags]
    cmd = [toolchain.cc, *flags, str(src), "-o", str(prestrip)]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=toolchain.compile_timeout)
    except subprocess.TimeoutExpired as exc:
        raise CompileError(f"compiler timed out after {toolchain.compile_timeout}s: {' '.join(cmd)}") from exc
    if proc.returncode != 0:
        raise CompileError(f"compiler failed for {bundle.func_name} ({bitness}-bit {opt_level})", stderr=proc.stderr)

    sidecar = workdir / f"{stem}.symbols.json"
    image = load_image(prestrip)
    functions = {s.name: [s.vaddr, s.size] for s in image.function_symbols()}
    objects = {
        s.name: [s.vaddr, s.size]
        for s in image.symbols
        if s.kind.value == "object"
    }
    sidecar.write_text(json.dumps({"functions": functions, "objects": objects}, sort_keys=True, indent=1))

    stripped.write_bytes(prestrip.read_bytes())
    stripped.chmod(0o755)
    proc = subprocess.run([toolchain.strip_tool, str(stripped)], capture_output=True, text=True,
                          timeout=toolchain.compile_timeout)
    if proc.returncode != 0:
        raise CompileError(f"strip failed for {stripped}", stderr=proc.stderr)

    return CompiledBinary(
        path=stripped,
        prestrip_path=prestrip,
        sidecar_path=sidecar,
        bitness=bitness,
        opt_level=opt_level,
        flags=flags,
        compiler_version=compiler_version(toolchain.cc),
    )


@dataclass
class SampleRecord:
    id: str
    bitness: int
    opt_level: str
    prompt: str
    ground_truth: str
    cfg_nodenum: int
    metadata: dict[str, str] = field(default_factory=dict)

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "bitness": self.bitness,
                "opt_level": self.opt_level,
                "cfg_nodenum": self.cfg_nodenum,
                "prompt": self.prompt,
                "ground_truth": self.ground_truth,
                "metadata": self.metadata,
            },
            sort_keys=False,
            ensure_ascii=False,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "SampleRecord":
        data = json.loads(line)
        return cls(
            id=data["id"],
            bitness=data["bitness"],
            opt_level=data["opt_level"],
            prompt=data["prompt"],
            ground_truth=data["ground_truth"],
            cfg_nodenum=data["cfg_nodenum"],
            metadata=data.get("metadata", {}),
        )


def sample_id(bundle: SourceBundle, opt_level: str, bitness: int, toolchain_version: str) -> str:
    blob = f"{bundle.bundle_hash()}|{opt_level}|{bitness}|{toolchain_version}"
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def build_sample(
    bundle: SourceBundle,
    opt_level: str,
    bitness: int,
    config: RunConfig,
    workdir: str | Path,
) -> SampleRecord:
    """Compile, strip, extract, and package one sample.

    Raises :class:`SampleSkipped` when the function has no boundary in the
    stripped binary (e.g. fully inlined away) or extraction fails.
    """
    compiled = compile_and_strip(bundle, opt_level, bitness, config.toolchain, workdir)
    functions = compiled.function_symbols()
    if bundle.func_name not in functions:
        raise SampleSkipped("boundary-missing")
    start, size = functions[bundle.func_name]
    if size == 0:
        raise SampleSkipped("boundary-missing")

    image = load_image(compiled.path)
    try:
        boundary = resolve_functions(
            image, [bundle.func_name], overrides=[(bundle.func_name, start, start + size)]
        )[0]
        extraction = extract_cfg(image, boundary)
        data = extract_data_map(image, extraction.instructions, window=config.datamap.proximity_window)
    except (DecodeError, FunctionNotFound) as exc:
        raise SampleSkipped(f"extraction-failed: {exc}") from exc

    asm_lines = []
    for block in extraction.blocks:
        asm_lines.append(f"{block.label}:")
        asm_lines.extend(f"  {insn.text}" for insn in block.instructions)
    prompt = build_prompt(
        "\n".join(asm_lines),
        serialize_cfg(extraction.cfg),
        serialize_table(data.table),
        bitness,
        opt_level,
        include_assembly=config.prompt.include_assembly,
        budget_tokens=config.prompt.budget_tokens,
    )

    binary_hash = hashlib.sha256(compiled.path.read_bytes()).hexdigest()
    return SampleRecord(
        id=sample_id(bundle, opt_level, bitness, compiled.compiler_version),
        bitness=bitness,
        opt_level=opt_level,
        prompt=prompt.render(),
        ground_truth=bundle.source,
        cfg_nodenum=extraction.cfg.nodenum,
        metadata={
            "func_name": bundle.func_name,
            "compiler": compiled.compiler_version,
            "flags": " ".join(compiled.flags),
            "bundle_sha256": bundle.bundle_hash(),
            "binary_sha256": binary_hash,
            "prompt_version": PROMPT_VERSION,
        },
    )


def curriculum_sort(samples: list[SampleRecord]) -> list[SampleRecord]:
    """Stable simple-to-complex order: block count, then prompt length,
    then id."""
    return sorted(samples, key=lambda s: (s.cfg_nodenum, len(s.prompt), s.id))


@dataclass
class DatasetResult:
    samples: list[SampleRecord]
    skipped: list[dict]
    samples_path: Path | None = None
    manifest_path: Path | None = None


def build_dataset(
    bundles: list[SourceBundle],
    config: RunConfig,
    out_dir: str | Path,
    opt_levels: tuple[str, ...] = OPT_LEVELS,
    keep_artifacts: bool = False,
) -> DatasetResult:
    """Compile every bundle at every (bitness, opt level) it targets and
    write curriculum-ordered JSON lines plus a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [
        (bundle, opt, bits)
        for bundle in bundles
        for bits in sorted(bundle.bitness)
        for opt in opt_levels
    ]

    samples: list[SampleRecord] = []
    skipped: list[dict] = []

    def run_job(job):
        bundle, opt, bits = job
        if keep_artifacts:
            workdir = out_dir / "binaries" / f"{bundle.func_name}_{bits}_{opt}"
            return build_sample(bundle, opt, bits, config, workdir)
        with tempfile.TemporaryDirectory(prefix="binlift_") as tmp:
            return build_sample(bundle, opt, bits, config, tmp)

    with ThreadPoolExecutor(max_workers=config.limits.workers) as pool:
        for job, outcome in zip(jobs, pool.map(lambda j: _guard(run_job, j), jobs)):
            bundle, opt, bits = job
            if isinstance(outcome, SampleRecord):
                samples.append(outcome)
            else:
                skipped.append({"func_name": bundle.func_name, "bitness": bits,
                                "opt_level": opt, "reason": str(outcome)})

    ordered = curriculum_sort(samples)
    samples_path = out_dir / "samples.jsonl"
    with samples_path.open("w", encoding="utf-8") as fh:
        for record in ordered:
            fh.write(record.to_json_line() + "\n")

    counts: dict[str, int] = {}
    for record in ordered:
        key = f"{record.bitness}/{record.opt_level}"
        counts[key] = counts.get(key, 0) + 1
    manifest = {
        "samples": len(ordered),
        "by_config": dict(sorted(counts.items())),
        "skipped": sorted(skipped, key=lambda s: (s["func_name"], s["bitness"], s["opt_level"])),
        "toolchain": compiler_version(config.toolchain.cc),
        "config_hash": config.config_hash(),
        "prompt_version": PROMPT_VERSION,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    return DatasetResult(samples=ordered, skipped=skipped,
                         samples_path=samples_path, manifest_path=manifest_path)


def _guard(fn, job):
    try:
        return fn(job)
    except (SampleSkipped, CompileError) as exc:
        return exc


def load_bundles(path: str | Path) -> list[SourceBundle]:
    """Bundles from a directory of ``*.json`` documents or a single file."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise FileNotFoundError(f"no bundle JSON files in {path}")
        return [SourceBundle.from_json(f.read_text()) for f in files]
    return [SourceBundle.from_json(path.read_text())]
