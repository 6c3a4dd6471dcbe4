import pytest

from binlift.elf import load_image, resolve_functions
from binlift.errors import DecodeError
from binlift.x86 import CFClass, decode_bytes, decode_function, decode_one

from oracles import objdump_branch_targets, objdump_rows


def test_rip_relative_load_resolution():
    # mov eax, [rip+0x3fa29] placed so the next instruction sits at 0x4729
    code = bytes.fromhex("8b0529fa0300")
    insn = decode_one(code, 0, 0x4723, 64)
    assert insn.mnemonic == "mov"
    assert insn.operands == "eax, dword ptr [rip+0x3fa29]"
    ref = insn.mem_refs[0]
    assert ref.is_rip and ref.rip_value == 0x4729
    assert ref.resolved == 0x44152
    assert ref.width == 4


def test_moffs_absolute_32bit():
    # mov eax, ds:0x804a020
    insn = decode_one(bytes.fromhex("a120a00408"), 0, 0x8049000, 32)
    assert insn.text == "mov eax, ds:0x804a020"
    assert insn.mem_refs[0].resolved == 0x0804A020


def test_short_conditional_jump_rendering():
    # jg +0x14 at 0x4724 -> target 0x473a
    insn = decode_one(bytes.fromhex("7f14"), 0, 0x4724, 64)
    assert insn.mnemonic == "jg"
    assert insn.operands == "short 0x473a"
    assert insn.cf_class is CFClass.COND_JUMP
    assert insn.static_target == 0x473A


def test_call_and_return_classification():
    call = decode_one(bytes.fromhex("e8fb000000"), 0, 0x401000, 64)
    assert call.cf_class is CFClass.CALL
    assert call.static_target == 0x401100
    ret = decode_one(bytes.fromhex("c3"), 0, 0x401000, 64)
    assert ret.cf_class is CFClass.RETURN
    assert ret.static_target is None


def test_indirect_jump_has_no_target():
    insn = decode_one(bytes.fromhex("ffe0"), 0, 0x401000, 64)
    assert insn.text == "jmp rax"
    assert insn.cf_class is CFClass.INDIRECT_JUMP
    assert insn.static_target is None


def test_backward_rel8_target():
    insn = decode_one(bytes.fromhex("ebfe"), 0, 0x401000, 64)  # jmp self
    assert insn.static_target == 0x401000


def test_stack_frame_memref():
    insn = decode_one(bytes.fromhex("8b45fc"), 0, 0x401000, 64)  # mov eax, [rbp-0x4]
    ref = insn.mem_refs[0]
    assert ref.frame_relative and ref.disp == -4 and ref.width == 4


def test_fs_segment_not_resolved():
    # mov rax, fs:0x28  (64 48 8b 04 25 28 00 00 00)
    insn = decode_one(bytes.fromhex("64488b042528000000"), 0, 0x401000, 64)
    assert "fs:0x28" in insn.operands
    assert insn.mem_refs[0].resolved is None


def test_immediates_recorded():
    insn = decode_one(bytes.fromhex("0520a00408"), 0, 0x8049000, 32)  # add eax, 0x804a020
    assert insn.imms == (0x0804A020,)


def test_truncated_instruction_raises_with_address():
    with pytest.raises(DecodeError) as err:
        decode_one(bytes.fromhex("8b"), 0, 0xABCD, 64)
    assert err.value.vaddr == 0xABCD


def test_unknown_opcode_raises():
    with pytest.raises(DecodeError):
        decode_one(bytes.fromhex("0f37"), 0, 0x1000, 64)


def test_rex_byte_registers():
    insn = decode_one(bytes.fromhex("4088f8"), 0, 0x1000, 64)  # mov al, dil
    assert insn.text == "mov al, dil"


def test_decode_bytes_tiles_buffer():
    code = bytes.fromhex("554889e58b45fc5dc3")
    insns = decode_bytes(code, 0x1000, 64)
    assert insns[0].vaddr == 0x1000
    assert insns[-1].end == 0x1000 + len(code)
    for a, b in zip(insns, insns[1:]):
        assert a.end == b.vaddr


def test_rep_string_op():
    insn = decode_one(bytes.fromhex("f348a5"), 0, 0x1000, 64)
    assert insn.mnemonic == "rep movsq"


def _check_against_objdump(path, functions):
    image = load_image(path)
    boundaries = resolve_functions(image, functions)
    for boundary in boundaries:
        insns = decode_function(image, boundary)
        rows = objdump_rows(path, boundary.start, boundary.end)
        assert [(i.vaddr, i.byte_len) for i in insns] == [(a, n) for a, n, _, _ in rows], (
            f"{path} {boundary.name}: instruction boundaries diverge from objdump"
        )
        mine = {i.static_target for i in insns if i.static_target is not None}
        assert mine == objdump_branch_targets(rows), (
            f"{path} {boundary.name}: branch target sets diverge from objdump"
        )


@pytest.mark.parametrize("func_name", ["switch_math", "collatz_steps", "first_factor_scaled", "bubble3"])
@pytest.mark.parametrize("bits,opt", [(64, "O0"), (64, "O3"), (32, "O0"), (32, "O2")])
def test_differential_against_objdump(corpus_artifacts, func_name, bits, opt):
    compiled = corpus_artifacts[(func_name, bits, opt)]
    _check_against_objdump(compiled.prestrip_path, [func_name])


def test_decode_function_rejects_overrun(corpus_artifacts):
    compiled = corpus_artifacts[("add_two", 64, "O0")]
    image = load_image(compiled.prestrip_path)
    boundary = resolve_functions(image, ["add_two"])[0]
    from binlift.elf import FunctionBoundary

    # 64-bit O0 functions open with a 4-byte endbr64; +3 cuts mid-instruction
    bad = FunctionBoundary(boundary.name, boundary.start, boundary.start + 3, boundary.source)
    with pytest.raises(DecodeError):
        decode_function(image, bad)
