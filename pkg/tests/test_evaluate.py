import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binlift.errors import EmptyGroundTruth, InvalidInput
from binlift.evaluate import (
    CandidateRecord,
    CheckResult,
    EvalRecord,
    PassAtKInput,
    aggregate,
    check_recompile,
    check_reexecute,
    edit_distance,
    edit_similarity,
    evaluate_candidate,
    normalize_source,
    pass_at_k,
    passk_inputs_from_records,
)

from oracles import enumerate_pass_at_k, naive_edit_distance

SHORT = st.text(alphabet="abc", max_size=12)


# --- edit distance -------------------------------------------------------------

def test_identity_distance_zero():
    for text in ("", "a", "kitten", "int f(void){}"):
        assert edit_distance(text, text) == 0


def test_empty_side_costs_full_length():
    assert edit_distance("", "abc") == 3
    assert edit_distance("abc", "") == 3


def test_kitten_sitting_is_three():
    assert edit_distance("kitten", "sitting") == 3
    assert naive_edit_distance("kitten", "sitting") == 3


@given(SHORT, SHORT)
def test_dp_matches_recursive_definition(a, b):
    assert edit_distance(a, b) == naive_edit_distance(a, b)


@given(SHORT, SHORT)
def test_symmetry(a, b):
    assert edit_distance(a, b) == edit_distance(b, a)


@given(SHORT, SHORT, SHORT)
def test_triangle_inequality(a, b, c):
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


# --- edit similarity -------------------------------------------------------------

def test_es_identity_is_one():
    assert edit_similarity("int f;", "int f;") == 1.0


def test_es_kitten_sitting():
    assert abs(edit_similarity("kitten", "sitting") - (1 - 3 / 7)) < 1e-9


def test_es_empty_prediction_is_zero():
    assert edit_similarity("", "nonempty") == 0.0


def test_es_whitespace_normalized():
    assert edit_similarity("int   f( void )", "int f( void )") == 1.0
    assert normalize_source("  a \n\t b  ") == "a b"


def test_es_can_be_negative_and_unclamped():
    value = edit_similarity("x" * 100, "ab")
    assert value < 0


def test_es_empty_ground_truth_raises():
    with pytest.raises(EmptyGroundTruth):
        edit_similarity("int f;", "   ")


# --- pass@k ----------------------------------------------------------------------

def test_paper_worked_example_exact():
    assert pass_at_k(PassAtKInput(n=20, c=1, k=1)) == 0.05


def test_all_or_none():
    assert pass_at_k(PassAtKInput(n=7, c=7, k=3)) == 1.0
    assert pass_at_k(PassAtKInput(n=7, c=0, k=3)) == 0.0


def test_enumeration_oracle_5_2_2():
    assert abs(pass_at_k(PassAtKInput(n=5, c=2, k=2)) - 0.7) < 1e-12
    assert abs(enumerate_pass_at_k(5, 2, 2) - 0.7) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 7, 20, 50])
def test_pass_at_1_is_exactly_c_over_n(n):
    for c in range(1, n + 1):
        assert pass_at_k(PassAtKInput(n=n, c=c, k=1)) == c / n


@given(st.integers(1, 30), st.data())
def test_monotone_in_k_and_c(n, data):
    c = data.draw(st.integers(0, n))
    k = data.draw(st.integers(1, n))
    base = pass_at_k(PassAtKInput(n=n, c=c, k=k))
    if k < n:
        assert pass_at_k(PassAtKInput(n=n, c=c, k=k + 1)) >= base
    if c < n:
        assert pass_at_k(PassAtKInput(n=n, c=c + 1, k=k)) >= base


@given(st.integers(2, 12), st.data())
def test_matches_exhaustive_enumeration(n, data):
    c = data.draw(st.integers(0, n))
    k = data.draw(st.integers(1, n))
    assert abs(pass_at_k(PassAtKInput(n=n, c=c, k=k)) - enumerate_pass_at_k(n, c, k)) < 1e-12


def test_invalid_inputs_rejected():
    with pytest.raises(InvalidInput):
        PassAtKInput(n=5, c=6, k=1)
    with pytest.raises(InvalidInput):
        PassAtKInput(n=5, c=2, k=0)
    with pytest.raises(InvalidInput):
        PassAtKInput(n=5, c=2, k=6)
    with pytest.raises(InvalidInput):
        PassAtKInput(n=5, c=-1, k=1)


# --- recompile / re-execute -------------------------------------------------------

def test_ground_truth_recompiles(bundle_by_name, run_config):
    bundle = bundle_by_name["gcd_iter"]
    assert check_recompile(bundle.source, bundle, 64, "O0", run_config.toolchain)


def test_broken_candidate_fails_recompile(bundle_by_name, run_config):
    bundle = bundle_by_name["gcd_iter"]
    result = check_recompile("int gcd_iter(int a, int b) { return a + ; }", bundle, 64, "O0",
                             run_config.toolchain)
    assert not result
    assert result.detail


def test_undeclared_helper_fails_with_diagnostics(bundle_by_name, run_config):
    bundle = bundle_by_name["gcd_iter"]
    candidate = "int gcd_iter(int a, int b) { return mystery_helper(a, b); }"
    result = check_recompile(candidate, bundle, 64, "O0", run_config.toolchain)
    assert not result
    assert "mystery_helper" in result.detail


def test_ground_truth_reexecutes(bundle_by_name, run_config):
    bundle = bundle_by_name["abs_diff"]
    assert check_reexecute(bundle.source, bundle, 64, "O0", run_config.toolchain)
    assert check_reexecute(bundle.source, bundle, 32, "O2", run_config.toolchain)


def test_constant_candidate_fails_reexecute(bundle_by_name, run_config):
    bundle = bundle_by_name["abs_diff"]
    result = check_reexecute("int abs_diff(int a, int b) { return 7; }", bundle, 64, "O0",
                             run_config.toolchain)
    assert not result
    assert "stdout" in result.detail


def test_renamed_variables_still_pass(bundle_by_name, run_config):
    bundle = bundle_by_name["abs_diff"]
    candidate = (
        "int abs_diff(int left, int right) {\n"
        "    if (left > right) {\n        return left - right;\n    }\n"
        "    return right - left;\n}"
    )
    assert check_reexecute(candidate, bundle, 64, "O0", run_config.toolchain)


# --- records and aggregation ------------------------------------------------------

def test_reexe_implies_recom_enforced():
    with pytest.raises(InvalidInput):
        EvalRecord(sample_id="s", bitness=64, opt_level="O0", re_com=False, re_exe=True, es=0.5)


def test_eval_record_roundtrip():
    record = EvalRecord(sample_id="s", bitness=32, opt_level="O2", re_com=True,
                        re_exe=False, es=0.25, model_id="m", sample_index=3)
    assert EvalRecord.from_json_line(record.to_json_line()) == record


def test_single_record_cell():
    records = [EvalRecord("s1", 64, "O0", re_com=True, re_exe=False, es=0.5)]
    report = aggregate(records)
    cell = report.cell(64, "O0")
    assert (cell.re_com_pct, cell.re_exe_pct, cell.es_mean) == (100.0, 0.0, 50.0)
    assert cell.count == 1


def test_empty_records_empty_report():
    report = aggregate([])
    assert report.cells == [] and report.avg_rows == []


def test_four_level_aggregation_matches_hand_computation():
    records = []
    for opt, (rc, rx, es) in {
        "O0": ([True, True], [True, False], [1.0, 0.5]),
        "O1": ([True, False], [False, False], [0.5, 0.25]),
        "O2": ([True, True], [True, True], [0.75, 0.75]),
        "O3": ([False, False], [False, False], [0.0, -0.5]),
    }.items():
        for i in range(2):
            records.append(EvalRecord(f"{opt}_{i}", 64, opt, re_com=rc[i], re_exe=rx[i], es=es[i]))
    report = aggregate(records)
    assert report.cell(64, "O0").re_com_pct == 100.0
    assert report.cell(64, "O0").re_exe_pct == 50.0
    assert report.cell(64, "O1").re_com_pct == 50.0
    assert report.cell(64, "O2").re_exe_pct == 100.0
    assert report.cell(64, "O3").es_mean == pytest.approx(-25.0)
    avg = report.avg_rows[0]
    # unweighted mean over the four levels
    assert avg.re_com_pct == pytest.approx((100 + 50 + 100 + 0) / 4)
    assert avg.re_exe_pct == pytest.approx((50 + 0 + 100 + 0) / 4)
    assert avg.es_mean == pytest.approx((75 + 37.5 + 75 + -25) / 4)
    assert avg.count == 8


def test_missing_levels_reported_absent_not_zero():
    records = [EvalRecord("a", 64, "O0", re_com=True, re_exe=True, es=1.0)]
    report = aggregate(records)
    assert report.cell(64, "O1") is None
    assert len(report.cells) == 1


def test_passk_from_records_and_report():
    records = []
    for i in range(20):
        records.append(EvalRecord("s1", 64, "O0", re_com=True, re_exe=(i == 0), es=0.5,
                                  sample_index=i))
    inputs = passk_inputs_from_records(records, k_max=10)
    assert inputs["s1"].n == 20 and inputs["s1"].c == 1
    report = aggregate(records, inputs)
    cell = report.cell(64, "O0")
    assert cell.pass_at_1 == 0.05  # the worked 1/20 example
    assert cell.pass_at_10 == pytest.approx(enumerate_pass_at_k(20, 1, 10))


def test_csv_shape():
    records = [
        EvalRecord("a", 64, "O0", re_com=True, re_exe=True, es=1.0),
        EvalRecord("b", 64, "O2", re_com=True, re_exe=False, es=0.5),
    ]
    csv = aggregate(records).to_csv()
    lines = csv.strip().splitlines()
    assert lines[0].startswith("bitness")
    assert len(lines) == 1 + 2 + 1  # header, two cells, one AVG row
    assert any("AVG" in line for line in lines)


def test_evaluate_candidate_self_oracle(bundle_by_name, run_config):
    bundle = bundle_by_name["add_two"]
    record = CandidateRecord(
        sample_id="x", func_name="add_two", bitness=64, opt_level="O1",
        candidate_source=bundle.source, ground_truth=bundle.source,
    )
    result = evaluate_candidate(record, bundle, run_config.toolchain, run_config.limits)
    assert result.re_com and result.re_exe
    assert result.es == 1.0
