"""Command-line orchestration of the extraction / dataset / decompilation /
evaluation workflow. Exit codes: 0 success, 1 operational failure, 2 usage
error."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .cfg import extract_cfg, serialize_cfg
from .config import RunConfig, load_config
from .datamap import extract_data_map, serialize_table
from .dataset import OPT_LEVELS, SampleRecord, build_dataset, load_bundles
from .elf import load_image, resolve_functions
from .errors import BinliftError
from .evaluate import (
    CandidateRecord,
    EvalRecord,
    aggregate,
    evaluate_candidate,
    passk_inputs_from_records,
)
from .llm import DecodeConfig, EndpointClient
from .prompt import build_prompt


def _hex_addr(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a hex address") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binlift",
        description="CFG- and data-mapping-augmented decompilation toolchain for stripped x86 ELF binaries",
    )
    parser.add_argument("--config", help="TOML run configuration", default=None)
    parser.add_argument("--dry-run", action="store_true", help="validate inputs, write nothing")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_boundary_args(p):
        p.add_argument("binary", help="ELF executable")
        p.add_argument("--func", required=True, help="function name")
        p.add_argument("--start", type=_hex_addr, default=None,
                       help="start address override (hex) for stripped binaries")
        p.add_argument("--end", type=_hex_addr, default=None, help="end address override (hex)")

    p = sub.add_parser("extract-cfg", help="decode one function and write its CFG JSON")
    add_boundary_args(p)
    p.add_argument("-o", "--out", default=None, help="output path (default: stdout)")
    p.set_defaults(handler=cmd_extract_cfg)

    p = sub.add_parser("extract-data", help="write one function's data mapping JSON")
    add_boundary_args(p)
    p.add_argument("--window", type=int, default=None, help="proximity window in bytes")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(handler=cmd_extract_data)

    p = sub.add_parser("prompt", help="assemble the full decompilation prompt for one function")
    add_boundary_args(p)
    p.add_argument("--opt", default="O0", choices=OPT_LEVELS, help="optimization level recorded in the prompt")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(handler=cmd_prompt)

    p = sub.add_parser("dataset", help="dataset operations")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    pb = dsub.add_parser("build", help="compile bundles and emit curriculum-ordered samples")
    pb.add_argument("--bundles", required=True, help="bundle JSON file or directory")
    pb.add_argument("--out", required=True, help="output directory")
    pb.add_argument("--levels", default=",".join(OPT_LEVELS),
                    help="comma-separated optimization levels (default: all four)")
    pb.add_argument("--keep-artifacts", action="store_true",
                    help="keep per-sample binaries under the output directory")
    pb.set_defaults(handler=cmd_dataset_build)

    p = sub.add_parser("decompile", help="submit sample prompts to the configured endpoint")
    p.add_argument("--samples", required=True, help="samples JSONL from `dataset build`")
    p.add_argument("--out", required=True, help="candidate records JSONL")
    p.add_argument("--n", type=int, default=1, help="candidates per sample (1 = greedy)")
    p.add_argument("--temperature", type=float, default=0.2)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--limit", type=int, default=None, help="only the first N samples")
    p.set_defaults(handler=cmd_decompile)

    p = sub.add_parser("evaluate", help="score candidate records (re-compile, re-execute, ES)")
    p.add_argument("--records", required=True, help="candidate records JSONL")
    p.add_argument("--bundles", required=True, help="bundle JSON file or directory")
    p.add_argument("--out", default=None, help="eval records JSONL")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate eval records into the per-config table")
    p.add_argument("--records", required=True, help="eval records JSONL")
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(handler=cmd_report)

    return parser


def _resolve(args, config: RunConfig):
    image = load_image(args.binary)
    overrides = []
    if args.start is not None:
        overrides.append((args.func, args.start, args.end))
    boundary = resolve_functions(image, [args.func], overrides)[0]
    return image, boundary


def _emit(text: str, out: str | None, dry_run: bool) -> None:
    if dry_run:
        return
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + ("\n" if not text.endswith("\n") else ""))


def cmd_extract_cfg(args, config: RunConfig) -> int:
    image, boundary = _resolve(args, config)
    if args.dry_run:
        print(f"would extract CFG of {boundary.name} [{boundary.start:#x}, {boundary.end:#x})")
        return 0
    extraction = extract_cfg(image, boundary)
    _emit(serialize_cfg(extraction.cfg), args.out, args.dry_run)
    for diag in extraction.diagnostics:
        print(f"note: {diag.kind} at 0x{diag.vaddr:x}: {diag.detail}", file=sys.stderr)
    return 0


def cmd_extract_data(args, config: RunConfig) -> int:
    image, boundary = _resolve(args, config)
    window = args.window if args.window is not None else config.datamap.proximity_window
    if args.dry_run:
        print(f"would extract data mapping of {boundary.name} (window {window})")
        return 0
    extraction = extract_cfg(image, boundary, relabel=False)
    data = extract_data_map(image, extraction.instructions, window=window)
    _emit(serialize_table(data.table), args.out, args.dry_run)
    return 0


def cmd_prompt(args, config: RunConfig) -> int:
    image, boundary = _resolve(args, config)
    if args.dry_run:
        print(f"would build a prompt for {boundary.name} ({image.bitness}-bit, {args.opt})")
        return 0
    extraction = extract_cfg(image, boundary)
    data = extract_data_map(image, extraction.instructions, window=config.datamap.proximity_window)
    asm_lines = []
    for block in extraction.blocks:
        asm_lines.append(f"{block.label}:")
        asm_lines.extend(f"  {insn.text}" for insn in block.instructions)
    prompt = build_prompt(
        "\n".join(asm_lines),
        serialize_cfg(extraction.cfg),
        serialize_table(data.table),
        image.bitness,
        args.opt,
        include_assembly=config.prompt.include_assembly,
        budget_tokens=config.prompt.budget_tokens,
    )
    _emit(prompt.render(), args.out, args.dry_run)
    return 0


def cmd_dataset_build(args, config: RunConfig) -> int:
    bundles = load_bundles(args.bundles)
    levels = tuple(level.strip() for level in args.levels.split(",") if level.strip())
    for level in levels:
        if level not in OPT_LEVELS:
            raise BinliftError(f"unknown optimization level {level!r}")
    if args.dry_run:
        jobs = sum(len(b.bitness) * len(levels) for b in bundles)
        print(f"would build {jobs} samples from {len(bundles)} bundles into {args.out}")
        return 0
    result = build_dataset(bundles, config, args.out, opt_levels=levels,
                           keep_artifacts=args.keep_artifacts)
    print(f"wrote {len(result.samples)} samples to {result.samples_path}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} jobs (see manifest)", file=sys.stderr)
    return 0


def _read_jsonl(path: str) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line.strip()]


def cmd_decompile(args, config: RunConfig) -> int:
    if not config.endpoint.url:
        raise BinliftError("no endpoint configured (set [endpoint] url/model in the config file)")
    samples = [SampleRecord.from_json_line(line) for line in _read_jsonl(args.samples)]
    if args.limit is not None:
        samples = samples[: args.limit]
    if args.dry_run:
        print(f"would submit {len(samples)} prompts to {config.endpoint.url} (n={args.n})")
        return 0
    decode = (
        DecodeConfig.greedy(max_tokens=config.prompt.budget_tokens)
        if args.n == 1
        else DecodeConfig.sampled(n=args.n, temperature=args.temperature, top_p=args.top_p,
                                  max_tokens=config.prompt.budget_tokens)
    )
    client = EndpointClient(config.endpoint)

    def run_one(sample: SampleRecord) -> list[CandidateRecord]:
        candidates = client.generate(sample.prompt, decode)
        return [
            CandidateRecord(
                sample_id=sample.id,
                func_name=sample.metadata.get("func_name", ""),
                bitness=sample.bitness,
                opt_level=sample.opt_level,
                candidate_source=c.extracted_source or "",
                ground_truth=sample.ground_truth,
                model_id=c.model_id,
                sample_index=c.sample_index,
            )
            for c in candidates
        ]

    with ThreadPoolExecutor(max_workers=config.endpoint.concurrency) as pool:
        batches = list(pool.map(run_one, samples))
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for batch in batches:
            for record in batch:
                fh.write(record.to_json_line() + "\n")
    print(f"wrote {sum(len(b) for b in batches)} candidates to {args.out}")
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    records = [CandidateRecord.from_json_line(line) for line in _read_jsonl(args.records)]
    bundles = {b.func_name: b for b in load_bundles(args.bundles)}
    missing = sorted({r.func_name for r in records if r.func_name not in bundles})
    if missing:
        raise BinliftError(f"no bundles for functions: {', '.join(missing)}")
    if args.dry_run:
        print(f"would evaluate {len(records)} candidates")
        return 0

    def run_one(record: CandidateRecord) -> EvalRecord:
        return evaluate_candidate(record, bundles[record.func_name],
                                  config.toolchain, config.limits)

    with ThreadPoolExecutor(max_workers=config.limits.workers) as pool:
        results = list(pool.map(run_one, records))
    if args.out:
        with Path(args.out).open("w", encoding="utf-8") as fh:
            for result in results:
                fh.write(result.to_json_line() + "\n")
    report = aggregate(results, passk_inputs_from_records(results, k_max=10))
    print(report.to_csv(), end="")
    return 0


def cmd_report(args, config: RunConfig) -> int:
    records = [EvalRecord.from_json_line(line) for line in _read_jsonl(args.records)]
    if args.dry_run:
        print(f"would aggregate {len(records)} eval records")
        return 0
    report = aggregate(records, passk_inputs_from_records(records, k_max=10))
    if args.out_json:
        Path(args.out_json).write_text(report.to_json() + "\n")
    if args.out_csv:
        Path(args.out_csv).write_text(report.to_csv())
    print(report.to_csv(), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        config.validate()
        return args.handler(args, config)
    except BinliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
