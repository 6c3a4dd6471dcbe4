import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from binlift.dataset import (
    FUNC_MARKER,
    IOExample,
    SampleRecord,
    SourceBundle,
    build_dataset,
    build_sample,
    compile_and_strip,
    curriculum_sort,
    load_bundles,
    rewrite_for_32bit,
    sample_id,
)
from binlift.deskcorpus import HARNESS_PRELUDE, desk_bundles, write_bundles
from binlift.elf import load_image
from binlift.errors import CompileError, SampleSkipped

from oracles import readelf_symbols


# --- rewrite_for_32bit -------------------------------------------------------

def test_size_t_typedef_rewritten():
    assert rewrite_for_32bit("typedef unsigned long size_t;") == "typedef unsigned int size_t;"


def test_ssize_t_typedef_rewritten():
    assert rewrite_for_32bit("typedef long ssize_t;") == "typedef int ssize_t;"


def test_fixed_width_typedefs_stay_64bit():
    assert rewrite_for_32bit("typedef unsigned long uint64_t;") == "typedef unsigned long long uint64_t;"


def test_no_matching_pattern_is_noop():
    source = "int f(void) { return 1; }"
    assert rewrite_for_32bit(source) == source


@pytest.fixture(scope="module")
def typedef_bundle():
    scaffold = (
        "#include <stddef.h>\n" + HARNESS_PRELUDE + "\n" + FUNC_MARKER + "\n\n"
        "int hx_main(int argc, char **argv) {\n"
        "    if (argc < 2) return 2;\n"
        "    hx_print_int(span_len(hx_atoi(argv[1])));\n"
        "    hx_newline();\n    return 0;\n}\n"
    )
    # the typedef matches <stddef.h> on 64-bit but conflicts on 32-bit
    source = (
        "typedef unsigned long size_t;\n"
        "int span_len(int n) {\n"
        "    size_t total = 0;\n"
        "    for (int i = 0; i < n; i++) total += 2;\n"
        "    return (int)total;\n}\n"
    )
    return SourceBundle(
        func_name="span_len", source=source, scaffold=scaffold,
        io_examples=[IOExample(args=["4"], expected_stdout="8\n")],
    )


def test_unrewritten_typedef_fails_m32_but_rewrite_fixes_it(typedef_bundle, run_config, tmp_path):
    import subprocess

    raw = tmp_path / "raw.c"
    raw.write_text(typedef_bundle.compose())  # no 32-bit rewrite applied
    proc = subprocess.run(
        [run_config.toolchain.cc, "-m32", "-O0", *run_config.toolchain.base_flags,
         str(raw), "-o", str(tmp_path / "raw.bin")],
        capture_output=True, text=True,
    )
    assert proc.returncode != 0
    assert "size_t" in proc.stderr

    compiled = compile_and_strip(typedef_bundle, "O0", 32, run_config.toolchain, tmp_path / "fixed")
    assert compiled.path.exists()


# --- compile_and_strip -------------------------------------------------------

def test_invalid_c_raises_compile_error(run_config, tmp_path):
    bundle = SourceBundle(
        func_name="broken",
        source="int broken(int x) { return x + ; }",
        scaffold=HARNESS_PRELUDE + FUNC_MARKER + "\nint hx_main(int argc, char **argv){ return 0; }\n",
        io_examples=[IOExample(args=[], expected_stdout="")],
    )
    with pytest.raises(CompileError) as err:
        compile_and_strip(bundle, "O0", 64, run_config.toolchain, tmp_path)
    assert err.value.stderr


def test_all_levels_loadable(corpus_artifacts):
    for opt in ("O0", "O1", "O2", "O3"):
        compiled = corpus_artifacts[("gcd_iter", 64, opt)]
        image = load_image(compiled.path)
        assert image.bitness == 64


def test_stripped_binary_has_no_symbols(corpus_artifacts):
    compiled = corpus_artifacts[("add_two", 64, "O0")]
    assert readelf_symbols(compiled.path) == {}
    assert "add_two" in readelf_symbols(compiled.prestrip_path)


def test_sidecar_matches_readelf(corpus_artifacts):
    compiled = corpus_artifacts[("fib_iter", 32, "O2")]
    sidecar = compiled.function_symbols()
    external = readelf_symbols(compiled.prestrip_path)
    assert sidecar["fib_iter"] == external["fib_iter"][:2]


# --- build_sample ------------------------------------------------------------

def test_straight_line_function_has_one_block(run_config, tmp_path, bundle_by_name):
    record = build_sample(bundle_by_name["add_two"], "O0", 64, run_config, tmp_path)
    assert record.cfg_nodenum == 1
    assert record.bitness == 64 and record.opt_level == "O0"


def test_if_else_has_four_blocks(run_config, tmp_path, bundle_by_name):
    record = build_sample(bundle_by_name["abs_diff"], "O0", 64, run_config, tmp_path)
    assert record.cfg_nodenum == 4


def test_inlined_away_function_is_skipped(run_config, tmp_path):
    bundle = SourceBundle(
        func_name="tiny_mul",
        source="static int tiny_mul(int a, int b) { return a * b; }",
        scaffold=HARNESS_PRELUDE + "\n" + FUNC_MARKER + "\n\n"
        "int hx_main(int argc, char **argv) {\n"
        "    if (argc < 3) return 2;\n"
        "    hx_print_int(tiny_mul(hx_atoi(argv[1]), hx_atoi(argv[2])));\n"
        "    hx_newline();\n    return 0;\n}\n",
        io_examples=[IOExample(args=["6", "7"], expected_stdout="42\n")],
    )
    with pytest.raises(SampleSkipped) as err:
        build_sample(bundle, "O3", 64, run_config, tmp_path)
    assert err.value.reason == "boundary-missing"


def test_prompt_reparses_and_nodenum_matches(run_config, tmp_path, bundle_by_name):
    record = build_sample(bundle_by_name["collatz_steps"], "O1", 32, run_config, tmp_path)
    marker = "# Control Flow Graph\n"
    start = record.prompt.index(marker) + len(marker)
    end = record.prompt.index("\n", start)
    cfg = json.loads(record.prompt[start:end])
    assert cfg["nodenum"] == record.cfg_nodenum
    assert list(cfg.keys()) == ["nodenum", "nodes", "edges"]


def test_sample_id_is_hash_stable(bundle_by_name):
    bundle = bundle_by_name["add_two"]
    a = sample_id(bundle, "O0", 64, "gcc (test) 11")
    b = sample_id(bundle, "O0", 64, "gcc (test) 11")
    assert a == b
    assert a != sample_id(bundle, "O1", 64, "gcc (test) 11")
    assert a != sample_id(bundle, "O0", 32, "gcc (test) 11")


def test_sample_record_jsonl_roundtrip():
    record = SampleRecord(id="abc", bitness=64, opt_level="O2", prompt="p",
                          ground_truth="int f;", cfg_nodenum=3, metadata={"k": "v"})
    again = SampleRecord.from_json_line(record.to_json_line())
    assert again == record


# --- curriculum_sort ---------------------------------------------------------

def _rec(nodenum, length, ident):
    return SampleRecord(id=ident, bitness=64, opt_level="O0", prompt="x" * length,
                        ground_truth="", cfg_nodenum=nodenum)


def test_curriculum_sort_empty():
    assert curriculum_sort([]) == []


def test_curriculum_sort_rule():
    records = [_rec(4, 90, "a"), _rec(1, 10, "b"), _rec(4, 50, "c")]
    ordered = curriculum_sort(records)
    assert [(r.cfg_nodenum, len(r.prompt)) for r in ordered] == [(1, 10), (4, 50), (4, 90)]


@given(st.lists(st.tuples(st.integers(1, 9), st.integers(0, 30), st.text("ab", max_size=4)), max_size=30))
def test_curriculum_sort_is_a_stable_permutation(entries):
    records = [_rec(n, ln, f"{i}_{ident}") for i, (n, ln, ident) in enumerate(entries)]
    ordered = curriculum_sort(records)
    assert sorted(r.id for r in ordered) == sorted(r.id for r in records)
    keys = [(r.cfg_nodenum, len(r.prompt), r.id) for r in ordered]
    assert keys == sorted(keys)


# --- bundle IO ---------------------------------------------------------------

def test_bundle_json_roundtrip(bundle_by_name):
    bundle = bundle_by_name["switch_math"]
    again = SourceBundle.from_json(bundle.to_json())
    assert again.func_name == bundle.func_name
    assert again.source == bundle.source
    assert again.scaffold == bundle.scaffold
    assert again.io_examples == bundle.io_examples
    assert again.bitness == bundle.bitness


def test_write_and_load_bundles(tmp_path):
    names = write_bundles(tmp_path)
    assert len(names) == len(desk_bundles())
    loaded = load_bundles(tmp_path)
    assert {b.func_name for b in loaded} == {b.func_name for b in desk_bundles()}


def test_bundle_requires_marker():
    with pytest.raises(ValueError):
        SourceBundle(func_name="f", source="int f(void){return 0;}", scaffold="no marker",
                     io_examples=[])


# --- build_dataset (small, fast) ----------------------------------------------

def test_build_dataset_small(run_config, tmp_path, bundle_by_name):
    bundles = [bundle_by_name["add_two"], bundle_by_name["abs_diff"]]
    result = build_dataset(bundles, run_config, tmp_path / "ds", opt_levels=("O0", "O2"))
    assert len(result.samples) == 8  # 2 bundles x 2 bitness x 2 levels
    assert not result.skipped
    lines = result.samples_path.read_text().splitlines()
    assert len(lines) == 8
    nodenums = [SampleRecord.from_json_line(line).cfg_nodenum for line in lines]
    assert nodenums == sorted(nodenums)
    manifest = json.loads(result.manifest_path.read_text())
    assert manifest["samples"] == 8
    assert manifest["by_config"]["64/O0"] == 2
