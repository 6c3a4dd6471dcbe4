import json

import pytest

from binlift.errors import PromptTooLong
from binlift.prompt import build_prompt

CFG_JSON = '{"nodenum":1,"nodes":{"start":["mov eax, edi","ret"]},"edges":[]}'
TABLE_JSON = '{"temp vars":{"-0x4":"dword"}}'
ASM = "start:\n  mov eax, edi\n  ret"


def test_sections_appear_in_fixed_order():
    prompt = build_prompt(ASM, CFG_JSON, TABLE_JSON, 64, "O0")
    text = prompt.render()
    i_pre = text.index("x86 64-bit assembly")
    i_asm = text.index("# Assembly")
    i_cfg = text.index("# Control Flow Graph")
    i_map = text.index("# Data Mapping")
    i_dir = text.index("fenced code block")
    assert i_pre < i_asm < i_cfg < i_map < i_dir


def test_embedded_json_is_byte_identical():
    prompt = build_prompt(ASM, CFG_JSON, TABLE_JSON, 32, "O2")
    text = prompt.render()
    assert CFG_JSON in text
    assert TABLE_JSON in text
    assert prompt.cfg_json == CFG_JSON
    assert prompt.data_map_json == TABLE_JSON


def test_idempotent_for_equal_inputs():
    a = build_prompt(ASM, CFG_JSON, TABLE_JSON, 64, "O1").render()
    b = build_prompt(ASM, CFG_JSON, TABLE_JSON, 64, "O1").render()
    assert a == b


def test_assembly_section_can_be_disabled():
    prompt = build_prompt(ASM, CFG_JSON, TABLE_JSON, 64, "O0", include_assembly=False)
    text = prompt.render()
    assert "# Assembly" not in text
    assert "# Control Flow Graph" in text


def test_budget_overflow_raises():
    big_asm = "start:\n" + "\n".join(f"  mov eax, 0x{i:x}" for i in range(2000))
    with pytest.raises(PromptTooLong):
        build_prompt(big_asm, CFG_JSON, TABLE_JSON, 64, "O0", budget_tokens=4096)


def test_default_budget_accepts_small_function():
    prompt = build_prompt(ASM, CFG_JSON, TABLE_JSON, 64, "O0")
    assert prompt.token_estimate <= 4096


def test_invalid_cfg_json_rejected():
    with pytest.raises(json.JSONDecodeError):
        build_prompt(ASM, "{not json", TABLE_JSON, 64, "O0")


def test_empty_assembly_rejected():
    with pytest.raises(ValueError):
        build_prompt("  \n ", CFG_JSON, TABLE_JSON, 64, "O0")


def test_bad_bitness_and_level_rejected():
    with pytest.raises(ValueError):
        build_prompt(ASM, CFG_JSON, TABLE_JSON, 16, "O0")
    with pytest.raises(ValueError):
        build_prompt(ASM, CFG_JSON, TABLE_JSON, 64, "Ofast")


def test_preamble_names_bitness_and_level():
    prompt = build_prompt(ASM, CFG_JSON, TABLE_JSON, 32, "O3")
    assert "32-bit" in prompt.preamble
    assert "O3" in prompt.preamble
