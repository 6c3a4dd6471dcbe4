"""Instruction decoder for little-endian x86-32 / x86-64 machine code.

Covers the instruction forms GCC emits at -O0 through -O3 for C code on
the baseline ISA (integer, x87, SSE/SSE2, a few SSE4/BMI stragglers).
Anything outside the tables raises :class:`DecodeError` with the failing
address rather than guessing.

Rendering dialect (fixed, so downstream artifacts are byte-stable):
lowercase mnemonics and registers, operands joined with ", ", hex
immediates as ``0x..`` masked to the operand width, memory operands as
``dword ptr [rbp-0x4]`` / ``[rip+0x2f56]`` / ``ds:0x804c000``, rel8 branch
targets prefixed with ``short``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .elf import BinaryImage, FunctionBoundary
from .errors import DecodeError


class CFClass(Enum):
    SEQUENTIAL = "sequential"
    COND_JUMP = "cond-jump"
    UNCOND_JUMP = "uncond-jump"
    INDIRECT_JUMP = "indirect-jump"
    CALL = "call"
    RETURN = "return"


@dataclass(frozen=True)
class MemRef:
    """One decoded memory operand, kept structural for later analyses."""

    expr: str  # e.g. "[rbp-0x4]", "[rip+0x2f56]", "ds:0x804c000"
    seg: str | None
    base: str | None
    index: str | None
    scale: int
    disp: int
    width: int | None  # accessed bytes; None when not a data access (lea)
    is_rip: bool = False
    rip_value: int | None = None  # next-instruction address for rip-relative
    resolved: int | None = None  # statically known absolute address

    @property
    def frame_relative(self) -> bool:
        return self.base in ("rbp", "rsp", "ebp", "esp")


@dataclass(frozen=True)
class Instruction:
    vaddr: int
    byte_len: int
    mnemonic: str
    operands: str
    cf_class: CFClass
    static_target: int | None
    mem_refs: tuple[MemRef, ...] = ()
    imms: tuple[int, ...] = ()  # unsigned immediate values (address-reference candidates)

    @property
    def text(self) -> str:
        return f"{self.mnemonic} {self.operands}" if self.operands else self.mnemonic

    @property
    def end(self) -> int:
        return self.vaddr + self.byte_len


REG64 = ["rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
         "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15"]
REG32 = ["eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi",
         "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"]
REG16 = ["ax", "cx", "dx", "bx", "sp", "bp", "si", "di",
         "r8w", "r9w", "r10w", "r11w", "r12w", "r13w", "r14w", "r15w"]
REG8_REX = ["al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil",
            "r8b", "r9b", "r10b", "r11b", "r12b", "r13b", "r14b", "r15b"]
REG8_LEGACY = ["al", "cl", "dl", "bl", "ah", "ch", "dh", "bh"]
SREG = ["es", "cs", "ss", "ds", "fs", "gs"]

WIDTH_NAME = {1: "byte", 2: "word", 4: "dword", 8: "qword", 10: "tbyte", 16: "xmmword"}

CC_NAMES = ["o", "no", "b", "ae", "e", "ne", "be", "a",
            "s", "ns", "p", "np", "l", "ge", "le", "g"]

ARITH_BASE = {0x00: "add", 0x08: "or", 0x10: "adc", 0x18: "sbb",
              0x20: "and", 0x28: "sub", 0x30: "xor", 0x38: "cmp"}
GRP1 = ["add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"]
GRP2 = ["rol", "ror", "rcl", "rcr", "shl", "shr", "shl", "sar"]
GRP3 = ["test", "test", "not", "neg", "mul", "imul", "div", "idiv"]


def _reg(idx: int, size: int, rex: int) -> str:
    if size == 8:
        return REG64[idx]
    if size == 4:
        return REG32[idx]
    if size == 2:
        return REG16[idx]
    if size == 1:
        return REG8_REX[idx] if rex else REG8_LEGACY[idx]
    raise AssertionError(f"bad register size {size}")


def _sx(value: int, nbytes: int) -> int:
    bits = nbytes * 8
    if value >= 1 << (bits - 1):
        value -= 1 << bits
    return value


def _imm_text(value: int, size: int) -> str:
    return f"0x{value & ((1 << (size * 8)) - 1):x}"


class _Cursor:
    __slots__ = ("data", "pos", "start_vaddr", "start_pos")

    def __init__(self, data: bytes, pos: int, vaddr: int):
        self.data = data
        self.pos = pos
        self.start_pos = pos
        self.start_vaddr = vaddr

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated instruction", self.start_vaddr)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def peek(self) -> int | None:
        return self.data[self.pos] if self.pos < len(self.data) else None

    def i8(self) -> int:
        return _sx(self.u8(), 1)

    def u16(self) -> int:
        return int.from_bytes(self._take(2), "little")

    def u32(self) -> int:
        return int.from_bytes(self._take(4), "little")

    def u64(self) -> int:
        return int.from_bytes(self._take(8), "little")

    def i16(self) -> int:
        return _sx(self.u16(), 2)

    def i32(self) -> int:
        return _sx(self.u32(), 4)

    def uimm(self, n: int) -> int:
        return int.from_bytes(self._take(n), "little")

    @property
    def length(self) -> int:
        return self.pos - self.start_pos


class _Insn:
    """Mutable scratch state while one instruction is assembled."""

    def __init__(self, vaddr: int, bitness: int):
        self.vaddr = vaddr
        self.bitness = bitness
        self.mnemonic = ""
        self.prefix_text = ""
        self.operands: list[str] = []
        self.mem_refs: list[MemRef] = []
        self.cf_class = CFClass.SEQUENTIAL
        self.static_target: int | None = None
        # prefix state
        self.seg: str | None = None
        self.opsize66 = False
        self.addr67 = False
        self.lock = False
        self.rep: str | None = None
        self.rex = 0
        self.imms: list[int] = []

    def imm_text(self, value: int, size: int) -> str:
        masked = value & ((1 << (size * 8)) - 1)
        self.imms.append(masked)
        return _imm_text(value, size)

    @property
    def rexw(self) -> bool:
        return bool(self.rex & 0x8)

    def opsize(self) -> int:
        if self.bitness == 64 and self.rexw:
            return 8
        return 2 if self.opsize66 else 4

    def opsize_d64(self) -> int:
        # push/pop/call/jmp default to 64-bit operands in long mode
        if self.bitness == 64:
            return 2 if self.opsize66 else 8
        return 2 if self.opsize66 else 4

    def addr_size(self) -> int:
        if self.bitness == 64:
            return 4 if self.addr67 else 8
        if self.addr67:
            raise DecodeError("16-bit addressing is not supported", self.vaddr)
        return 4

    def sse_sel(self) -> str:
        if self.rep == "f3":
            return "f3"
        if self.rep == "f2":
            return "f2"
        if self.opsize66:
            return "66"
        return ""


# ---------------------------------------------------------------------------
# ModRM / SIB
# ---------------------------------------------------------------------------

def _modrm(cur: _Cursor) -> tuple[int, int, int]:
    b = cur.u8()
    return b >> 6, (b >> 3) & 7, b & 7


def _decode_mem(ins: _Insn, cur: _Cursor, mod: int, rm: int, width: int | None) -> MemRef:
    """Decode the memory form of a ModRM operand (mod != 3)."""
    asz = ins.addr_size()
    regs = REG64 if asz == 8 else REG32
    base = index = None
    scale = 1
    disp = 0
    is_rip = False

    if rm == 4:  # SIB
        sib = cur.u8()
        ss, idx, bse = sib >> 6, (sib >> 3) & 7, sib & 7
        idx |= (0x8 if ins.rex & 0x2 else 0)  # REX.X
        bse_ext = bse | (0x8 if ins.rex & 0x1 else 0)  # REX.B
        if idx != 4:
            index = regs[idx]
            scale = 1 << ss
        if bse == 5 and mod == 0:
            disp = cur.i32()
        else:
            base = regs[bse_ext]
    elif rm == 5 and mod == 0:
        if ins.bitness == 64:
            is_rip = True
            disp = cur.i32()
        else:
            disp = cur.i32()
    else:
        base = regs[rm | (0x8 if ins.rex & 0x1 else 0)]

    if mod == 1:
        disp = cur.i8()
    elif mod == 2:
        disp = cur.i32()

    seg = ins.seg
    if is_rip:
        expr = f"[rip{'+' if disp >= 0 else '-'}0x{abs(disp):x}]"
        ref = MemRef(expr=expr, seg=seg, base=None, index=None, scale=1,
                     disp=disp, width=width, is_rip=True)
    elif base is None and index is None:
        addr = disp & ((1 << (asz * 8)) - 1)
        expr = f"{seg or 'ds'}:0x{addr:x}"
        resolved = None if seg in ("fs", "gs") else addr
        ref = MemRef(expr=expr, seg=seg or "ds", base=None, index=None, scale=1,
                     disp=addr, width=width, resolved=resolved)
    else:
        parts = ""
        if base:
            parts = base
        if index:
            parts += ("+" if parts else "") + index
            if scale != 1:
                parts += f"*{scale}"
        if disp or not parts:
            parts += f"-0x{-disp:x}" if disp < 0 else f"+0x{disp:x}"
        expr = f"[{parts}]"
        if seg:
            expr = f"{seg}:{expr}"
        resolved = None
        if base is None and seg not in ("fs", "gs"):
            # index-only addressing: displacement is the table/array base
            resolved = disp & ((1 << (asz * 8)) - 1) if disp >= 0 else None
        ref = MemRef(expr=expr, seg=seg, base=base, index=index, scale=scale,
                     disp=disp, width=width, resolved=resolved)
    ins.mem_refs.append(ref)
    return ref


def _rm_operand(ins: _Insn, cur: _Cursor, mod: int, rm: int, size: int,
                reg_bank: str = "gpr") -> str:
    if mod == 3:
        idx = rm | (0x8 if ins.rex & 0x1 else 0)
        if reg_bank == "xmm":
            return f"xmm{idx}"
        if reg_bank == "mm":
            return f"mm{rm}"
        return _reg(idx, size, ins.rex)
    ref = _decode_mem(ins, cur, mod, rm, size if reg_bank != "lea" else None)
    if reg_bank == "lea":
        return ref.expr
    name = WIDTH_NAME[size]
    return f"{name} ptr {ref.expr}"


def _reg_operand(ins: _Insn, reg: int, size: int, reg_bank: str = "gpr") -> str:
    idx = reg | (0x8 if ins.rex & 0x4 else 0)  # REX.R
    if reg_bank == "xmm":
        return f"xmm{idx}"
    if reg_bank == "mm":
        return f"mm{reg}"
    return _reg(idx, size, ins.rex)


# ---------------------------------------------------------------------------
# SSE tables: (opcode, selector) -> (mnemonic, form, mem_width)
# Forms: XM2X reg<-rm, X2XM rm<-reg, both xmm banks unless noted.
# ---------------------------------------------------------------------------

_SSE = {
    (0x10, ""): ("movups", "XM2X", 16), (0x10, "66"): ("movupd", "XM2X", 16),
    (0x10, "f3"): ("movss", "XM2X", 4), (0x10, "f2"): ("movsd", "XM2X", 8),
    (0x11, ""): ("movups", "X2XM", 16), (0x11, "66"): ("movupd", "X2XM", 16),
    (0x11, "f3"): ("movss", "X2XM", 4), (0x11, "f2"): ("movsd", "X2XM", 8),
    (0x12, ""): ("movlps", "XM2X", 8), (0x12, "66"): ("movlpd", "XM2X", 8),
    (0x12, "f3"): ("movsldup", "XM2X", 16), (0x12, "f2"): ("movddup", "XM2X", 8),
    (0x13, ""): ("movlps", "X2XM", 8), (0x13, "66"): ("movlpd", "X2XM", 8),
    (0x14, ""): ("unpcklps", "XM2X", 16), (0x14, "66"): ("unpcklpd", "XM2X", 16),
    (0x15, ""): ("unpckhps", "XM2X", 16), (0x15, "66"): ("unpckhpd", "XM2X", 16),
    (0x16, ""): ("movhps", "XM2X", 8), (0x16, "66"): ("movhpd", "XM2X", 8),
    (0x16, "f3"): ("movshdup", "XM2X", 16),
    (0x17, ""): ("movhps", "X2XM", 8), (0x17, "66"): ("movhpd", "X2XM", 8),
    (0x28, ""): ("movaps", "XM2X", 16), (0x28, "66"): ("movapd", "XM2X", 16),
    (0x29, ""): ("movaps", "X2XM", 16), (0x29, "66"): ("movapd", "X2XM", 16),
    (0x2A, "f3"): ("cvtsi2ss", "G2X", 0), (0x2A, "f2"): ("cvtsi2sd", "G2X", 0),
    (0x2C, "f3"): ("cvttss2si", "X2G", 4), (0x2C, "f2"): ("cvttsd2si", "X2G", 8),
    (0x2D, "f3"): ("cvtss2si", "X2G", 4), (0x2D, "f2"): ("cvtsd2si", "X2G", 8),
    (0x2E, ""): ("ucomiss", "XM2X", 4), (0x2E, "66"): ("ucomisd", "XM2X", 8),
    (0x2F, ""): ("comiss", "XM2X", 4), (0x2F, "66"): ("comisd", "XM2X", 8),
    (0x51, ""): ("sqrtps", "XM2X", 16), (0x51, "66"): ("sqrtpd", "XM2X", 16),
    (0x51, "f3"): ("sqrtss", "XM2X", 4), (0x51, "f2"): ("sqrtsd", "XM2X", 8),
    (0x52, ""): ("rsqrtps", "XM2X", 16), (0x52, "f3"): ("rsqrtss", "XM2X", 4),
    (0x53, ""): ("rcpps", "XM2X", 16), (0x53, "f3"): ("rcpss", "XM2X", 4),
    (0x54, ""): ("andps", "XM2X", 16), (0x54, "66"): ("andpd", "XM2X", 16),
    (0x55, ""): ("andnps", "XM2X", 16), (0x55, "66"): ("andnpd", "XM2X", 16),
    (0x56, ""): ("orps", "XM2X", 16), (0x56, "66"): ("orpd", "XM2X", 16),
    (0x57, ""): ("xorps", "XM2X", 16), (0x57, "66"): ("xorpd", "XM2X", 16),
    (0x58, ""): ("addps", "XM2X", 16), (0x58, "66"): ("addpd", "XM2X", 16),
    (0x58, "f3"): ("addss", "XM2X", 4), (0x58, "f2"): ("addsd", "XM2X", 8),
    (0x59, ""): ("mulps", "XM2X", 16), (0x59, "66"): ("mulpd", "XM2X", 16),
    (0x59, "f3"): ("mulss", "XM2X", 4), (0x59, "f2"): ("mulsd", "XM2X", 8),
    (0x5A, ""): ("cvtps2pd", "XM2X", 8), (0x5A, "66"): ("cvtpd2ps", "XM2X", 16),
    (0x5A, "f3"): ("cvtss2sd", "XM2X", 4), (0x5A, "f2"): ("cvtsd2ss", "XM2X", 8),
    (0x5B, ""): ("cvtdq2ps", "XM2X", 16), (0x5B, "66"): ("cvtps2dq", "XM2X", 16),
    (0x5B, "f3"): ("cvttps2dq", "XM2X", 16),
    (0x5C, ""): ("subps", "XM2X", 16), (0x5C, "66"): ("subpd", "XM2X", 16),
    (0x5C, "f3"): ("subss", "XM2X", 4), (0x5C, "f2"): ("subsd", "XM2X", 8),
    (0x5D, ""): ("minps", "XM2X", 16), (0x5D, "66"): ("minpd", "XM2X", 16),
    (0x5D, "f3"): ("minss", "XM2X", 4), (0x5D, "f2"): ("minsd", "XM2X", 8),
    (0x5E, ""): ("divps", "XM2X", 16), (0x5E, "66"): ("divpd", "XM2X", 16),
    (0x5E, "f3"): ("divss", "XM2X", 4), (0x5E, "f2"): ("divsd", "XM2X", 8),
    (0x5F, ""): ("maxps", "XM2X", 16), (0x5F, "66"): ("maxpd", "XM2X", 16),
    (0x5F, "f3"): ("maxss", "XM2X", 4), (0x5F, "f2"): ("maxsd", "XM2X", 8),
    (0x60, "66"): ("punpcklbw", "XM2X", 16), (0x61, "66"): ("punpcklwd", "XM2X", 16),
    (0x62, "66"): ("punpckldq", "XM2X", 16), (0x63, "66"): ("packsswb", "XM2X", 16),
    (0x64, "66"): ("pcmpgtb", "XM2X", 16), (0x65, "66"): ("pcmpgtw", "XM2X", 16),
    (0x66, "66"): ("pcmpgtd", "XM2X", 16), (0x67, "66"): ("packuswb", "XM2X", 16),
    (0x68, "66"): ("punpckhbw", "XM2X", 16), (0x69, "66"): ("punpckhwd", "XM2X", 16),
    (0x6A, "66"): ("punpckhdq", "XM2X", 16), (0x6B, "66"): ("packssdw", "XM2X", 16),
    (0x6C, "66"): ("punpcklqdq", "XM2X", 16), (0x6D, "66"): ("punpckhqdq", "XM2X", 16),
    (0x6F, "66"): ("movdqa", "XM2X", 16), (0x6F, "f3"): ("movdqu", "XM2X", 16),
    (0x70, "66"): ("pshufd", "XM2X_I", 16), (0x70, "f3"): ("pshufhw", "XM2X_I", 16),
    (0x70, "f2"): ("pshuflw", "XM2X_I", 16),
    (0x74, "66"): ("pcmpeqb", "XM2X", 16), (0x75, "66"): ("pcmpeqw", "XM2X", 16),
    (0x76, "66"): ("pcmpeqd", "XM2X", 16),
    (0x7F, "66"): ("movdqa", "X2XM", 16), (0x7F, "f3"): ("movdqu", "X2XM", 16),
    (0xC2, ""): ("cmpps", "XM2X_I", 16), (0xC2, "66"): ("cmppd", "XM2X_I", 16),
    (0xC2, "f3"): ("cmpss", "XM2X_I", 4), (0xC2, "f2"): ("cmpsd", "XM2X_I", 8),
    (0xC6, ""): ("shufps", "XM2X_I", 16), (0xC6, "66"): ("shufpd", "XM2X_I", 16),
    (0xD1, "66"): ("psrlw", "XM2X", 16), (0xD2, "66"): ("psrld", "XM2X", 16),
    (0xD3, "66"): ("psrlq", "XM2X", 16), (0xD4, "66"): ("paddq", "XM2X", 16),
    (0xD5, "66"): ("pmullw", "XM2X", 16), (0xD6, "66"): ("movq", "X2XM", 8),
    (0xD7, "66"): ("pmovmskb", "X2G32", 16),
    (0xD8, "66"): ("psubusb", "XM2X", 16), (0xD9, "66"): ("psubusw", "XM2X", 16),
    (0xDA, "66"): ("pminub", "XM2X", 16), (0xDB, "66"): ("pand", "XM2X", 16),
    (0xDC, "66"): ("paddusb", "XM2X", 16), (0xDD, "66"): ("paddusw", "XM2X", 16),
    (0xDE, "66"): ("pmaxub", "XM2X", 16), (0xDF, "66"): ("pandn", "XM2X", 16),
    (0xE0, "66"): ("pavgb", "XM2X", 16), (0xE1, "66"): ("psraw", "XM2X", 16),
    (0xE2, "66"): ("psrad", "XM2X", 16), (0xE3, "66"): ("pavgw", "XM2X", 16),
    (0xE4, "66"): ("pmulhuw", "XM2X", 16), (0xE5, "66"): ("pmulhw", "XM2X", 16),
    (0xE6, "66"): ("cvttpd2dq", "XM2X", 16), (0xE6, "f3"): ("cvtdq2pd", "XM2X", 8),
    (0xE6, "f2"): ("cvtpd2dq", "XM2X", 16),
    (0xE7, "66"): ("movntdq", "X2XM", 16),
    (0xE8, "66"): ("psubsb", "XM2X", 16), (0xE9, "66"): ("psubsw", "XM2X", 16),
    (0xEA, "66"): ("pminsw", "XM2X", 16), (0xEB, "66"): ("por", "XM2X", 16),
    (0xEC, "66"): ("paddsb", "XM2X", 16), (0xED, "66"): ("paddsw", "XM2X", 16),
    (0xEE, "66"): ("pmaxsw", "XM2X", 16), (0xEF, "66"): ("pxor", "XM2X", 16),
    (0xF1, "66"): ("psllw", "XM2X", 16), (0xF2, "66"): ("pslld", "XM2X", 16),
    (0xF3, "66"): ("psllq", "XM2X", 16), (0xF4, "66"): ("pmuludq", "XM2X", 16),
    (0xF5, "66"): ("pmaddwd", "XM2X", 16), (0xF6, "66"): ("psadbw", "XM2X", 16),
    (0xF8, "66"): ("psubb", "XM2X", 16), (0xF9, "66"): ("psubw", "XM2X", 16),
    (0xFA, "66"): ("psubd", "XM2X", 16), (0xFB, "66"): ("psubq", "XM2X", 16),
    (0xFC, "66"): ("paddb", "XM2X", 16), (0xFD, "66"): ("paddw", "XM2X", 16),
    (0xFE, "66"): ("paddd", "XM2X", 16),
}

# shift-by-immediate groups 0F 71 / 72 / 73: reg field -> mnemonic
_SSE_SHIFT_GRP = {
    0x71: {2: "psrlw", 4: "psraw", 6: "psllw"},
    0x72: {2: "psrld", 4: "psrad", 6: "pslld"},
    0x73: {2: "psrlq", 3: "psrldq", 6: "psllq", 7: "pslldq"},
}

# 0F 38 map (modrm, no immediate) and 0F 3A map (modrm + imm8), 66-selected
_0F38 = {
    0x00: "pshufb", 0x01: "phaddw", 0x02: "phaddd", 0x03: "phaddsw",
    0x04: "pmaddubsw", 0x05: "phsubw", 0x06: "phsubd", 0x07: "phsubsw",
    0x08: "psignb", 0x09: "psignw", 0x0A: "psignd", 0x0B: "pmulhrsw",
    0x17: "ptest", 0x1C: "pabsb", 0x1D: "pabsw", 0x1E: "pabsd",
    0x20: "pmovsxbw", 0x21: "pmovsxbd", 0x22: "pmovsxbq", 0x23: "pmovsxwd",
    0x24: "pmovsxwq", 0x25: "pmovsxdq", 0x28: "pmuldq", 0x29: "pcmpeqq",
    0x2B: "packusdw", 0x30: "pmovzxbw", 0x31: "pmovzxbd", 0x32: "pmovzxbq",
    0x33: "pmovzxwd", 0x34: "pmovzxwq", 0x35: "pmovzxdq", 0x37: "pcmpgtq",
    0x38: "pminsb", 0x39: "pminsd", 0x3A: "pminuw", 0x3B: "pminud",
    0x3C: "pmaxsb", 0x3D: "pmaxsd", 0x3E: "pmaxuw", 0x3F: "pmaxud",
    0x40: "pmulld", 0x41: "phminposuw",
}
_0F3A = {
    0x08: "roundps", 0x09: "roundpd", 0x0A: "roundss", 0x0B: "roundsd",
    0x0C: "blendps", 0x0D: "blendpd", 0x0E: "pblendw", 0x0F: "palignr",
    0x14: "pextrb", 0x15: "pextrw", 0x16: "pextrd", 0x17: "extractps",
    0x20: "pinsrb", 0x21: "insertps", 0x22: "pinsrd",
    0x40: "dpps", 0x41: "dppd", 0x42: "mpsadbw", 0x44: "pclmulqdq",
    0x63: "pcmpistri",
}

# x87 memory forms: (opcode, reg) -> (mnemonic, mem bytes or 0 for no-ptr)
_X87_MEM = {
    (0xD8, 0): ("fadd", 4), (0xD8, 1): ("fmul", 4), (0xD8, 2): ("fcom", 4),
    (0xD8, 3): ("fcomp", 4), (0xD8, 4): ("fsub", 4), (0xD8, 5): ("fsubr", 4),
    (0xD8, 6): ("fdiv", 4), (0xD8, 7): ("fdivr", 4),
    (0xD9, 0): ("fld", 4), (0xD9, 2): ("fst", 4), (0xD9, 3): ("fstp", 4),
    (0xD9, 4): ("fldenv", 0), (0xD9, 5): ("fldcw", 2),
    (0xD9, 6): ("fnstenv", 0), (0xD9, 7): ("fnstcw", 2),
    (0xDA, 0): ("fiadd", 4), (0xDA, 1): ("fimul", 4), (0xDA, 2): ("ficom", 4),
    (0xDA, 3): ("ficomp", 4), (0xDA, 4): ("fisub", 4), (0xDA, 5): ("fisubr", 4),
    (0xDA, 6): ("fidiv", 4), (0xDA, 7): ("fidivr", 4),
    (0xDB, 0): ("fild", 4), (0xDB, 1): ("fisttp", 4), (0xDB, 2): ("fist", 4),
    (0xDB, 3): ("fistp", 4), (0xDB, 5): ("fld", 10), (0xDB, 7): ("fstp", 10),
    (0xDC, 0): ("fadd", 8), (0xDC, 1): ("fmul", 8), (0xDC, 2): ("fcom", 8),
    (0xDC, 3): ("fcomp", 8), (0xDC, 4): ("fsub", 8), (0xDC, 5): ("fsubr", 8),
    (0xDC, 6): ("fdiv", 8), (0xDC, 7): ("fdivr", 8),
    (0xDD, 0): ("fld", 8), (0xDD, 1): ("fisttp", 8), (0xDD, 2): ("fst", 8),
    (0xDD, 3): ("fstp", 8), (0xDD, 4): ("frstor", 0), (0xDD, 6): ("fnsave", 0),
    (0xDD, 7): ("fnstsw", 2),
    (0xDE, 0): ("fiadd", 2), (0xDE, 1): ("fimul", 2), (0xDE, 2): ("ficom", 2),
    (0xDE, 3): ("ficomp", 2), (0xDE, 4): ("fisub", 2), (0xDE, 5): ("fisubr", 2),
    (0xDE, 6): ("fidiv", 2), (0xDE, 7): ("fidivr", 2),
    (0xDF, 0): ("fild", 2), (0xDF, 1): ("fisttp", 2), (0xDF, 2): ("fist", 2),
    (0xDF, 3): ("fistp", 2), (0xDF, 4): ("fbld", 10), (0xDF, 5): ("fild", 8),
    (0xDF, 6): ("fbstp", 10), (0xDF, 7): ("fistp", 8),
}

# x87 register forms: (opcode, reg) -> (mnemonic, operand style)
# styles: ST_STI "st, st(i)", STI_ST "st(i), st", STI "st(i)", NONE
_X87_REG = {
    (0xD8, 0): ("fadd", "ST_STI"), (0xD8, 1): ("fmul", "ST_STI"),
    (0xD8, 2): ("fcom", "STI"), (0xD8, 3): ("fcomp", "STI"),
    (0xD8, 4): ("fsub", "ST_STI"), (0xD8, 5): ("fsubr", "ST_STI"),
    (0xD8, 6): ("fdiv", "ST_STI"), (0xD8, 7): ("fdivr", "ST_STI"),
    (0xD9, 0): ("fld", "STI"), (0xD9, 1): ("fxch", "STI"),
    (0xDA, 0): ("fcmovb", "ST_STI"), (0xDA, 1): ("fcmove", "ST_STI"),
    (0xDA, 2): ("fcmovbe", "ST_STI"), (0xDA, 3): ("fcmovu", "ST_STI"),
    (0xDB, 0): ("fcmovnb", "ST_STI"), (0xDB, 1): ("fcmovne", "ST_STI"),
    (0xDB, 2): ("fcmovnbe", "ST_STI"), (0xDB, 3): ("fcmovnu", "ST_STI"),
    (0xDB, 5): ("fucomi", "ST_STI"), (0xDB, 6): ("fcomi", "ST_STI"),
    (0xDC, 0): ("fadd", "STI_ST"), (0xDC, 1): ("fmul", "STI_ST"),
    (0xDC, 4): ("fsubr", "STI_ST"), (0xDC, 5): ("fsub", "STI_ST"),
    (0xDC, 6): ("fdivr", "STI_ST"), (0xDC, 7): ("fdiv", "STI_ST"),
    (0xDD, 0): ("ffree", "STI"), (0xDD, 2): ("fst", "STI"),
    (0xDD, 3): ("fstp", "STI"), (0xDD, 4): ("fucom", "STI"),
    (0xDD, 5): ("fucomp", "STI"),
    (0xDE, 0): ("faddp", "STI_ST"), (0xDE, 1): ("fmulp", "STI_ST"),
    (0xDE, 4): ("fsubrp", "STI_ST"), (0xDE, 5): ("fsubp", "STI_ST"),
    (0xDE, 6): ("fdivrp", "STI_ST"), (0xDE, 7): ("fdivp", "STI_ST"),
    (0xDF, 5): ("fucomip", "ST_STI"), (0xDF, 6): ("fcomip", "ST_STI"),
}

# x87 exact-byte forms: (opcode, modrm) -> mnemonic
_X87_EXACT = {
    (0xD9, 0xD0): "fnop", (0xD9, 0xE0): "fchs", (0xD9, 0xE1): "fabs",
    (0xD9, 0xE4): "ftst", (0xD9, 0xE5): "fxam", (0xD9, 0xE8): "fld1",
    (0xD9, 0xE9): "fldl2t", (0xD9, 0xEA): "fldl2e", (0xD9, 0xEB): "fldpi",
    (0xD9, 0xEC): "fldlg2", (0xD9, 0xED): "fldln2", (0xD9, 0xEE): "fldz",
    (0xD9, 0xF0): "f2xm1", (0xD9, 0xF1): "fyl2x", (0xD9, 0xF2): "fptan",
    (0xD9, 0xF3): "fpatan", (0xD9, 0xF4): "fxtract", (0xD9, 0xF5): "fprem1",
    (0xD9, 0xF6): "fdecstp", (0xD9, 0xF7): "fincstp", (0xD9, 0xF8): "fprem",
    (0xD9, 0xF9): "fyl2xp1", (0xD9, 0xFA): "fsqrt", (0xD9, 0xFB): "fsincos",
    (0xD9, 0xFC): "frndint", (0xD9, 0xFD): "fscale", (0xD9, 0xFE): "fsin",
    (0xD9, 0xFF): "fcos",
    (0xDA, 0xE9): "fucompp", (0xDB, 0xE2): "fnclex", (0xDB, 0xE3): "fninit",
    (0xDE, 0xD9): "fcompp", (0xDF, 0xE0): "fnstsw",
}


def _x87(ins: _Insn, cur: _Cursor, opcode: int) -> None:
    modrm = cur.peek()
    if modrm is None:
        raise DecodeError("truncated instruction", ins.vaddr)
    mod, reg, rm = modrm >> 6, (modrm >> 3) & 7, modrm & 7
    if mod != 3:
        cur.u8()
        entry = _X87_MEM.get((opcode, reg))
        if entry is None:
            raise DecodeError(f"unknown x87 memory form {opcode:02x}/{reg}", ins.vaddr)
        mnem, width = entry
        ref = _decode_mem(ins, cur, mod, rm, width or None)
        ins.mnemonic = mnem
        if width:
            ins.operands.append(f"{WIDTH_NAME[width]} ptr {ref.expr}")
        else:
            ins.operands.append(ref.expr)
        return
    if (opcode, modrm) in _X87_EXACT:
        cur.u8()
        ins.mnemonic = _X87_EXACT[(opcode, modrm)]
        if ins.mnemonic == "fnstsw":
            ins.operands.append("ax")
        return
    entry = _X87_REG.get((opcode, reg))
    if entry is None:
        raise DecodeError(f"unknown x87 register form {opcode:02x} {modrm:02x}", ins.vaddr)
    cur.u8()
    mnem, style = entry
    ins.mnemonic = mnem
    sti = f"st({rm})"
    if style == "ST_STI":
        ins.operands += ["st", sti]
    elif style == "STI_ST":
        ins.operands += [sti, "st"]
    elif style == "STI":
        ins.operands.append(sti)


# ---------------------------------------------------------------------------
# main decode
# ---------------------------------------------------------------------------

def decode_one(data: bytes, pos: int, vaddr: int, bitness: int) -> Instruction:
    """Decode a single instruction at ``data[pos:]`` mapped at ``vaddr``."""
    if bitness not in (32, 64):
        raise ValueError(f"bitness must be 32 or 64, got {bitness}")
    cur = _Cursor(data, pos, vaddr)
    ins = _Insn(vaddr, bitness)

    opcode = None
    seg_names = {0x26: "es", 0x2E: "cs", 0x36: "ss", 0x3E: "ds", 0x64: "fs", 0x65: "gs"}
    while opcode is None:
        b = cur.u8()
        if b in seg_names:
            ins.seg = seg_names[b]
        elif b == 0x66:
            ins.opsize66 = True
        elif b == 0x67:
            ins.addr67 = True
        elif b == 0xF0:
            ins.lock = True
        elif b == 0xF2:
            ins.rep = "f2"
        elif b == 0xF3:
            ins.rep = "f3"
        elif bitness == 64 and 0x40 <= b <= 0x4F:
            # low nibble carries W/R/X/B; bit 4 marks bare-REX presence,
            # which alone switches the byte-register bank (spl..dil)
            ins.rex = (b & 0xF) | 0x10
            opcode = cur.u8()
        else:
            opcode = b

    if opcode == 0x0F:
        _decode_0f(ins, cur)
    else:
        _decode_main(ins, cur, opcode)

    length = cur.length
    if length > 15:
        raise DecodeError("instruction longer than 15 bytes", vaddr)

    # Fix up rip-relative references now that the length is known.
    refs = []
    mask = (1 << 64) - 1
    for ref in ins.mem_refs:
        if ref.is_rip:
            rip = vaddr + length
            refs.append(MemRef(expr=ref.expr, seg=ref.seg, base=ref.base, index=ref.index,
                               scale=ref.scale, disp=ref.disp, width=ref.width, is_rip=True,
                               rip_value=rip, resolved=(rip + ref.disp) & mask))
        else:
            refs.append(ref)

    mnemonic = ins.prefix_text + ins.mnemonic
    if ins.lock:
        mnemonic = "lock " + mnemonic
    return Instruction(
        vaddr=vaddr,
        byte_len=length,
        mnemonic=mnemonic,
        operands=", ".join(ins.operands),
        cf_class=ins.cf_class,
        static_target=ins.static_target,
        mem_refs=tuple(refs),
        imms=tuple(ins.imms),
    )


def _rel_branch(ins: _Insn, cur: _Cursor, rel_bytes: int, cls: CFClass, mnemonic: str) -> None:
    rel = _sx(cur.uimm(rel_bytes), rel_bytes)
    target = (ins.vaddr + cur.length + rel) & ((1 << 64) - 1)
    if ins.bitness == 32:
        target &= 0xFFFFFFFF
    ins.mnemonic = mnemonic
    ins.cf_class = cls
    ins.static_target = target
    prefix = "short " if rel_bytes == 1 and cls is not CFClass.CALL else ""
    ins.operands.append(f"{prefix}0x{target:x}")


def _decode_main(ins: _Insn, cur: _Cursor, op: int) -> None:
    bit64 = ins.bitness == 64

    base = op & 0xF8
    if base in ARITH_BASE and (op & 7) <= 5:
        mnem = ARITH_BASE[base]
        sub = op & 7
        osz = ins.opsize()
        if sub in (0, 1, 2, 3):
            mod, reg, rm = _modrm(cur)
            size = 1 if sub in (0, 2) else osz
            r = _reg_operand(ins, reg, size)
            m = _rm_operand(ins, cur, mod, rm, size)
            ins.mnemonic = mnem
            ins.operands = [m, r] if sub in (0, 1) else [r, m]
        elif sub == 4:
            imm = cur.u8()
            ins.mnemonic = mnem
            ins.operands = ["al", ins.imm_text(imm, 1)]
        else:
            n = 2 if osz == 2 else 4
            imm = _sx(cur.uimm(n), n)
            ins.mnemonic = mnem
            ins.operands = [_reg(0, osz, ins.rex), ins.imm_text(imm, osz)]
        return

    if 0x40 <= op <= 0x4F:  # 32-bit only: inc/dec reg (64-bit REX eaten earlier)
        ins.mnemonic = "inc" if op < 0x48 else "dec"
        ins.operands = [_reg(op & 7, ins.opsize(), 0)]
        return

    if 0x50 <= op <= 0x5F:
        idx = (op & 7) | (0x8 if ins.rex & 0x1 else 0)
        ins.mnemonic = "push" if op < 0x58 else "pop"
        ins.operands = [_reg(idx, ins.opsize_d64(), ins.rex)]
        return

    if op == 0x63 and bit64:
        mod, reg, rm = _modrm(cur)
        ins.mnemonic = "movsxd"
        r = _reg_operand(ins, reg, ins.opsize())
        m = _rm_operand(ins, cur, mod, rm, 4)
        ins.operands = [r, m]
        return

    if op == 0x68:
        osz = ins.opsize_d64()
        n = 2 if ins.opsize66 else 4
        imm = _sx(cur.uimm(n), n)
        ins.mnemonic = "push"
        ins.operands = [ins.imm_text(imm, osz)]
        return
    if op == 0x6A:
        imm = cur.i8()
        ins.mnemonic = "push"
        ins.operands = [ins.imm_text(imm, ins.opsize_d64())]
        return
    if op in (0x69, 0x6B):
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        if op == 0x69:
            n = 2 if osz == 2 else 4
            imm = _sx(cur.uimm(n), n)
        else:
            imm = cur.i8()
        ins.mnemonic = "imul"
        ins.operands = [r, m, ins.imm_text(imm, osz)]
        return

    if 0x70 <= op <= 0x7F:
        _rel_branch(ins, cur, 1, CFClass.COND_JUMP, "j" + CC_NAMES[op & 0xF])
        return

    if op in (0x80, 0x81, 0x82, 0x83):
        mod, reg, rm = _modrm(cur)
        osz = 1 if op in (0x80, 0x82) else ins.opsize()
        m = _rm_operand(ins, cur, mod, rm, osz)
        if op == 0x81:
            n = 2 if osz == 2 else 4
            imm = _sx(cur.uimm(n), n)
        else:
            imm = cur.i8()
        ins.mnemonic = GRP1[reg]
        ins.operands = [m, ins.imm_text(imm, osz)]
        return

    if op in (0x84, 0x85):
        mod, reg, rm = _modrm(cur)
        size = 1 if op == 0x84 else ins.opsize()
        r = _reg_operand(ins, reg, size)
        m = _rm_operand(ins, cur, mod, rm, size)
        ins.mnemonic = "test"
        ins.operands = [m, r]
        return
    if op in (0x86, 0x87):
        mod, reg, rm = _modrm(cur)
        size = 1 if op == 0x86 else ins.opsize()
        r = _reg_operand(ins, reg, size)
        m = _rm_operand(ins, cur, mod, rm, size)
        ins.mnemonic = "xchg"
        ins.operands = [m, r]
        return

    if op in (0x88, 0x89, 0x8A, 0x8B):
        mod, reg, rm = _modrm(cur)
        size = 1 if op in (0x88, 0x8A) else ins.opsize()
        r = _reg_operand(ins, reg, size)
        m = _rm_operand(ins, cur, mod, rm, size)
        ins.mnemonic = "mov"
        ins.operands = [m, r] if op in (0x88, 0x89) else [r, m]
        return

    if op in (0x8C, 0x8E):
        mod, reg, rm = _modrm(cur)
        if reg >= len(SREG):
            raise DecodeError("bad segment register", ins.vaddr)
        m = _rm_operand(ins, cur, mod, rm, 2)
        ins.mnemonic = "mov"
        ins.operands = [m, SREG[reg]] if op == 0x8C else [SREG[reg], m]
        return

    if op == 0x8D:
        mod, reg, rm = _modrm(cur)
        if mod == 3:
            raise DecodeError("lea with register operand", ins.vaddr)
        r = _reg_operand(ins, reg, ins.opsize())
        m = _rm_operand(ins, cur, mod, rm, 0, reg_bank="lea")
        ins.mnemonic = "lea"
        ins.operands = [r, m]
        return

    if op == 0x8F:
        mod, reg, rm = _modrm(cur)
        if reg != 0:
            raise DecodeError("bad group 1a encoding", ins.vaddr)
        ins.mnemonic = "pop"
        ins.operands = [_rm_operand(ins, cur, mod, rm, ins.opsize_d64())]
        return

    if op == 0x90 and not (ins.rex & 0x1):
        ins.mnemonic = "pause" if ins.rep == "f3" else "nop"
        return
    if 0x90 <= op <= 0x97:
        idx = (op & 7) | (0x8 if ins.rex & 0x1 else 0)
        osz = ins.opsize()
        ins.mnemonic = "xchg"
        ins.operands = [_reg(idx, osz, ins.rex), _reg(0, osz, ins.rex)]
        return

    if op == 0x98:
        ins.mnemonic = {2: "cbw", 4: "cwde", 8: "cdqe"}[ins.opsize()]
        return
    if op == 0x99:
        ins.mnemonic = {2: "cwd", 4: "cdq", 8: "cqo"}[ins.opsize()]
        return
    if op == 0x9B:
        _decode_fwait(ins, cur)
        return
    if op == 0x9C:
        ins.mnemonic = "pushf" if ins.bitness == 32 else "pushfq"
        return
    if op == 0x9D:
        ins.mnemonic = "popf" if ins.bitness == 32 else "popfq"
        return
    if op == 0x9E:
        ins.mnemonic = "sahf"
        return
    if op == 0x9F:
        ins.mnemonic = "lahf"
        return

    if 0xA0 <= op <= 0xA3:
        asz = ins.addr_size()
        offset = cur.uimm(asz)
        width = 1 if op in (0xA0, 0xA2) else ins.opsize()
        ref = MemRef(expr=f"{ins.seg or 'ds'}:0x{offset:x}", seg=ins.seg or "ds",
                     base=None, index=None, scale=1, disp=offset, width=width,
                     resolved=None if ins.seg in ("fs", "gs") else offset)
        ins.mem_refs.append(ref)
        acc = _reg(0, width, ins.rex)
        ins.mnemonic = "mov"
        ins.operands = [acc, ref.expr] if op in (0xA0, 0xA1) else [ref.expr, acc]
        return

    if op in (0xA4, 0xA5, 0xA6, 0xA7, 0xAA, 0xAB, 0xAC, 0xAD, 0xAE, 0xAF):
        stem = {0xA4: "movs", 0xA6: "cmps", 0xAA: "stos", 0xAC: "lods", 0xAE: "scas"}
        base_op = op & 0xFE
        name = stem[base_op if base_op in stem else op & 0xF6]
        if op & 1:
            suffix = {2: "w", 4: "d", 8: "q"}[ins.opsize()]
        else:
            suffix = "b"
        if ins.rep == "f3":
            ins.prefix_text = "repz " if name in ("cmps", "scas") else "rep "
        elif ins.rep == "f2":
            ins.prefix_text = "repnz "
        ins.mnemonic = name + suffix
        return

    if op in (0xA8, 0xA9):
        osz = 1 if op == 0xA8 else ins.opsize()
        if op == 0xA8:
            imm = cur.u8()
        else:
            n = 2 if osz == 2 else 4
            imm = _sx(cur.uimm(n), n)
        ins.mnemonic = "test"
        ins.operands = [_reg(0, osz, ins.rex), ins.imm_text(imm, osz)]
        return

    if 0xB0 <= op <= 0xB7:
        idx = (op & 7) | (0x8 if ins.rex & 0x1 else 0)
        imm = cur.u8()
        ins.mnemonic = "mov"
        ins.operands = [_reg(idx, 1, ins.rex), ins.imm_text(imm, 1)]
        return
    if 0xB8 <= op <= 0xBF:
        idx = (op & 7) | (0x8 if ins.rex & 0x1 else 0)
        osz = ins.opsize()
        imm = cur.uimm(osz)  # the only true imm64 form
        ins.mnemonic = "movabs" if osz == 8 else "mov"
        ins.operands = [_reg(idx, osz, ins.rex), ins.imm_text(imm, osz)]
        return

    if op in (0xC0, 0xC1, 0xD0, 0xD1, 0xD2, 0xD3):
        mod, reg, rm = _modrm(cur)
        osz = 1 if op in (0xC0, 0xD0, 0xD2) else ins.opsize()
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = GRP2[reg]
        if op in (0xC0, 0xC1):
            ins.operands = [m, ins.imm_text(cur.u8(), 1)]
        elif op in (0xD0, 0xD1):
            ins.operands = [m, "1"]
        else:
            ins.operands = [m, "cl"]
        return

    if op == 0xC2:
        imm = cur.u16()
        ins.mnemonic = "ret"
        ins.operands = [ins.imm_text(imm, 2)]
        ins.cf_class = CFClass.RETURN
        return
    if op == 0xC3:
        ins.mnemonic = "ret"
        ins.cf_class = CFClass.RETURN
        return
    if op in (0xCA, 0xCB):
        if op == 0xCA:
            ins.operands = [ins.imm_text(cur.u16(), 2)]
        ins.mnemonic = "retf"
        ins.cf_class = CFClass.RETURN
        return

    if op in (0xC6, 0xC7):
        mod, reg, rm = _modrm(cur)
        if reg != 0:
            raise DecodeError("bad group 11 encoding", ins.vaddr)
        osz = 1 if op == 0xC6 else ins.opsize()
        m = _rm_operand(ins, cur, mod, rm, osz)
        if op == 0xC6:
            imm = cur.u8()
        else:
            n = 2 if osz == 2 else 4
            imm = _sx(cur.uimm(n), n)
        ins.mnemonic = "mov"
        ins.operands = [m, ins.imm_text(imm, osz)]
        return

    if op == 0xC8:
        size = cur.u16()
        depth = cur.u8()
        ins.mnemonic = "enter"
        ins.operands = [ins.imm_text(size, 2), ins.imm_text(depth, 1)]
        return
    if op == 0xC9:
        ins.mnemonic = "leave"
        return

    if op == 0xCC:
        ins.mnemonic = "int3"
        ins.cf_class = CFClass.CALL
        return
    if op == 0xCD:
        imm = cur.u8()
        ins.mnemonic = "int"
        ins.operands = [ins.imm_text(imm, 1)]
        ins.cf_class = CFClass.CALL
        return
    if op == 0xCF:
        ins.mnemonic = "iretq" if ins.rexw else "iret"
        ins.cf_class = CFClass.RETURN
        return

    if 0xD8 <= op <= 0xDF:
        _x87(ins, cur, op)
        return

    if 0xE0 <= op <= 0xE3:
        names = {0xE0: "loopne", 0xE1: "loope", 0xE2: "loop"}
        if op == 0xE3:
            name = "jrcxz" if ins.addr_size() == 8 else "jecxz"
        else:
            name = names[op]
        _rel_branch(ins, cur, 1, CFClass.COND_JUMP, name)
        return

    if op == 0xE8:
        n = 2 if (ins.opsize66 and ins.bitness == 32) else 4
        _rel_branch(ins, cur, n, CFClass.CALL, "call")
        return
    if op == 0xE9:
        n = 2 if (ins.opsize66 and ins.bitness == 32) else 4
        _rel_branch(ins, cur, n, CFClass.UNCOND_JUMP, "jmp")
        return
    if op == 0xEB:
        _rel_branch(ins, cur, 1, CFClass.UNCOND_JUMP, "jmp")
        return

    if op == 0xF4:
        ins.mnemonic = "hlt"
        ins.cf_class = CFClass.RETURN
        return
    if op == 0xF5:
        ins.mnemonic = "cmc"
        return

    if op in (0xF6, 0xF7):
        mod, reg, rm = _modrm(cur)
        osz = 1 if op == 0xF6 else ins.opsize()
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = GRP3[reg]
        if reg in (0, 1):
            if op == 0xF6:
                imm = cur.u8()
            else:
                n = 2 if osz == 2 else 4
                imm = _sx(cur.uimm(n), n)
            ins.operands = [m, ins.imm_text(imm, osz)]
        else:
            ins.operands = [m]
        return

    if 0xF8 <= op <= 0xFD:
        ins.mnemonic = ["clc", "stc", "cli", "sti", "cld", "std"][op - 0xF8]
        return

    if op == 0xFE:
        mod, reg, rm = _modrm(cur)
        if reg > 1:
            raise DecodeError("bad group 4 encoding", ins.vaddr)
        ins.mnemonic = "inc" if reg == 0 else "dec"
        ins.operands = [_rm_operand(ins, cur, mod, rm, 1)]
        return

    if op == 0xFF:
        mod, reg, rm = _modrm(cur)
        if reg in (0, 1):
            ins.mnemonic = "inc" if reg == 0 else "dec"
            ins.operands = [_rm_operand(ins, cur, mod, rm, ins.opsize())]
        elif reg == 2:
            ins.mnemonic = "call"
            ins.cf_class = CFClass.CALL
            ins.operands = [_rm_operand(ins, cur, mod, rm, ins.opsize_d64())]
        elif reg == 4:
            ins.mnemonic = "jmp"
            ins.cf_class = CFClass.INDIRECT_JUMP
            ins.operands = [_rm_operand(ins, cur, mod, rm, ins.opsize_d64())]
        elif reg == 6:
            ins.mnemonic = "push"
            ins.operands = [_rm_operand(ins, cur, mod, rm, ins.opsize_d64())]
        else:
            raise DecodeError(f"unsupported group 5 form /{reg}", ins.vaddr)
        return

    raise DecodeError(f"unsupported opcode 0x{op:02x}", ins.vaddr)


def _decode_fwait(ins: _Insn, cur: _Cursor) -> None:
    """9B: standalone fwait, or merged wait forms (fstcw, fstsw, ...)."""
    nxt = cur.peek()
    if nxt in (0xD9, 0xDB, 0xDD):
        save = cur.pos
        opcode = cur.u8()
        try:
            _x87(ins, cur, opcode)
        except DecodeError:
            cur.pos = save
            ins.mnemonic = "fwait"
            return
        if ins.mnemonic.startswith("fn"):
            ins.mnemonic = "f" + ins.mnemonic[2:]
            return
        # Not a wait-combinable form; treat the 9B as standalone.
        cur.pos = save
        ins.mnemonic = "fwait"
        ins.operands = []
        ins.mem_refs = []
        return
    ins.mnemonic = "fwait"


def _decode_0f(ins: _Insn, cur: _Cursor) -> None:
    op = cur.u8()
    sel = ins.sse_sel()

    if op == 0x38:
        op3 = cur.u8()
        mnem = _0F38.get(op3)
        if mnem is None or sel != "66":
            raise DecodeError(f"unsupported opcode 0f 38 {op3:02x}", ins.vaddr)
        mod, reg, rm = _modrm(cur)
        r = _reg_operand(ins, reg, 16, reg_bank="xmm")
        m = _rm_operand(ins, cur, mod, rm, 16, reg_bank="xmm")
        ins.mnemonic = mnem
        ins.operands = [r, m]
        return
    if op == 0x3A:
        op3 = cur.u8()
        mnem = _0F3A.get(op3)
        if mnem is None or sel != "66":
            raise DecodeError(f"unsupported opcode 0f 3a {op3:02x}", ins.vaddr)
        mod, reg, rm = _modrm(cur)
        r = _reg_operand(ins, reg, 16, reg_bank="xmm")
        m = _rm_operand(ins, cur, mod, rm, 16, reg_bank="xmm")
        imm = cur.u8()
        ins.mnemonic = mnem
        ins.operands = [r, m, _imm_text(imm, 1)]
        return

    if op == 0x05:
        ins.mnemonic = "syscall"
        ins.cf_class = CFClass.CALL
        return
    if op == 0x0B:
        ins.mnemonic = "ud2"
        ins.cf_class = CFClass.RETURN
        return
    if op == 0x31:
        ins.mnemonic = "rdtsc"
        return
    if op == 0xA2:
        ins.mnemonic = "cpuid"
        return

    if op == 0x1E and ins.rep == "f3":
        modrm = cur.u8()
        if modrm == 0xFA:
            ins.mnemonic = "endbr64"
        elif modrm == 0xFB:
            ins.mnemonic = "endbr32"
        else:
            raise DecodeError(f"unsupported f3 0f 1e form {modrm:02x}", ins.vaddr)
        return

    if op in (0x0D, 0x18, 0x19, 0x1A, 0x1B, 0x1C, 0x1D, 0x1E, 0x1F):
        mod, reg, rm = _modrm(cur)
        m = _rm_operand(ins, cur, mod, rm, ins.opsize())
        if op == 0x18 and mod != 3 and reg <= 3:
            ins.mnemonic = ["prefetchnta", "prefetcht0", "prefetcht1", "prefetcht2"][reg]
            ins.operands = [m]
        else:
            ins.mnemonic = "nop"
            ins.operands = [m]
        return

    if 0x40 <= op <= 0x4F:
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = "cmov" + CC_NAMES[op & 0xF]
        ins.operands = [r, m]
        return

    if 0x80 <= op <= 0x8F:
        n = 2 if (ins.opsize66 and ins.bitness == 32) else 4
        _rel_branch(ins, cur, n, CFClass.COND_JUMP, "j" + CC_NAMES[op & 0xF])
        return

    if 0x90 <= op <= 0x9F:
        mod, reg, rm = _modrm(cur)
        ins.mnemonic = "set" + CC_NAMES[op & 0xF]
        ins.operands = [_rm_operand(ins, cur, mod, rm, 1)]
        return

    if op in (0xA0, 0xA1, 0xA8, 0xA9):
        ins.mnemonic = "push" if op in (0xA0, 0xA8) else "pop"
        ins.operands = ["fs" if op in (0xA0, 0xA1) else "gs"]
        return

    if op in (0xA3, 0xAB, 0xB3, 0xBB):
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = {0xA3: "bt", 0xAB: "bts", 0xB3: "btr", 0xBB: "btc"}[op]
        ins.operands = [m, r]
        return
    if op in (0xA4, 0xAC, 0xA5, 0xAD):
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = "shld" if op in (0xA4, 0xA5) else "shrd"
        if op in (0xA4, 0xAC):
            ins.operands = [m, r, _imm_text(cur.u8(), 1)]
        else:
            ins.operands = [m, r, "cl"]
        return

    if op == 0xAE:
        mod, reg, rm = _modrm(cur)
        if mod == 3:
            mnem = {5: "lfence", 6: "mfence", 7: "sfence"}.get(reg)
            if mnem is None:
                raise DecodeError(f"unsupported 0f ae register form /{reg}", ins.vaddr)
            ins.mnemonic = mnem
            return
        mnem = {2: "ldmxcsr", 3: "stmxcsr", 7: "clflush"}.get(reg)
        if mnem is None:
            raise DecodeError(f"unsupported 0f ae memory form /{reg}", ins.vaddr)
        ref = _decode_mem(ins, cur, mod, rm, 4 if reg in (2, 3) else 1)
        ins.mnemonic = mnem
        ins.operands = [("dword ptr " if reg in (2, 3) else "byte ptr ") + ref.expr]
        return

    if op == 0xAF:
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = "imul"
        ins.operands = [r, m]
        return

    if op in (0xB0, 0xB1):
        mod, reg, rm = _modrm(cur)
        size = 1 if op == 0xB0 else ins.opsize()
        r = _reg_operand(ins, reg, size)
        m = _rm_operand(ins, cur, mod, rm, size)
        ins.mnemonic = "cmpxchg"
        ins.operands = [m, r]
        return

    if op in (0xB6, 0xB7, 0xBE, 0xBF):
        mod, reg, rm = _modrm(cur)
        r = _reg_operand(ins, reg, ins.opsize())
        m = _rm_operand(ins, cur, mod, rm, 1 if op in (0xB6, 0xBE) else 2)
        ins.mnemonic = "movzx" if op in (0xB6, 0xB7) else "movsx"
        ins.operands = [r, m]
        return

    if op == 0xB8 and sel == "f3":
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = "popcnt"
        ins.operands = [r, m]
        return

    if op == 0xBA:
        mod, reg, rm = _modrm(cur)
        if reg < 4:
            raise DecodeError("bad group 8 encoding", ins.vaddr)
        m = _rm_operand(ins, cur, mod, rm, ins.opsize())
        ins.mnemonic = ["bt", "bts", "btr", "btc"][reg - 4]
        ins.operands = [m, _imm_text(cur.u8(), 1)]
        return

    if op in (0xBC, 0xBD):
        mod, reg, rm = _modrm(cur)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        if sel == "f3":
            ins.mnemonic = "tzcnt" if op == 0xBC else "lzcnt"
        else:
            ins.mnemonic = "bsf" if op == 0xBC else "bsr"
        ins.operands = [r, m]
        return

    if op in (0xC0, 0xC1):
        mod, reg, rm = _modrm(cur)
        size = 1 if op == 0xC0 else ins.opsize()
        r = _reg_operand(ins, reg, size)
        m = _rm_operand(ins, cur, mod, rm, size)
        ins.mnemonic = "xadd"
        ins.operands = [m, r]
        return

    if op == 0xC3:
        mod, reg, rm = _modrm(cur)
        if mod == 3:
            raise DecodeError("movnti needs a memory operand", ins.vaddr)
        osz = ins.opsize()
        r = _reg_operand(ins, reg, osz)
        m = _rm_operand(ins, cur, mod, rm, osz)
        ins.mnemonic = "movnti"
        ins.operands = [m, r]
        return

    if op == 0xC7:
        mod, reg, rm = _modrm(cur)
        if reg != 1 or mod == 3:
            raise DecodeError("unsupported group 9 form", ins.vaddr)
        width = 16 if ins.rexw else 8
        ref = _decode_mem(ins, cur, mod, rm, width)
        ins.mnemonic = "cmpxchg16b" if ins.rexw else "cmpxchg8b"
        ins.operands = [f"{WIDTH_NAME[width]} ptr {ref.expr}"]
        return

    if 0xC8 <= op <= 0xCF:
        idx = (op & 7) | (0x8 if ins.rex & 0x1 else 0)
        ins.mnemonic = "bswap"
        ins.operands = [_reg(idx, 8 if ins.rexw else 4, ins.rex)]
        return

    # movd / movq
    if op == 0x6E:
        mod, reg, rm = _modrm(cur)
        gsz = 8 if ins.rexw else 4
        bank = "xmm" if sel == "66" else "mm"
        r = _reg_operand(ins, reg, 16, reg_bank=bank)
        m = _rm_operand(ins, cur, mod, rm, gsz)
        ins.mnemonic = "movq" if ins.rexw else "movd"
        ins.operands = [r, m]
        return
    if op == 0x7E:
        mod, reg, rm = _modrm(cur)
        if sel == "f3":
            r = _reg_operand(ins, reg, 16, reg_bank="xmm")
            m = _rm_operand(ins, cur, mod, rm, 8, reg_bank="xmm")
            ins.mnemonic = "movq"
            ins.operands = [r, m]
            return
        gsz = 8 if ins.rexw else 4
        bank = "xmm" if sel == "66" else "mm"
        r = _reg_operand(ins, reg, 16, reg_bank=bank)
        m = _rm_operand(ins, cur, mod, rm, gsz)
        ins.mnemonic = "movq" if ins.rexw else "movd"
        ins.operands = [m, r]
        return
    if op == 0x6F and sel == "":
        mod, reg, rm = _modrm(cur)
        r = _reg_operand(ins, reg, 8, reg_bank="mm")
        m = _rm_operand(ins, cur, mod, rm, 8, reg_bank="mm")
        ins.mnemonic = "movq"
        ins.operands = [r, m]
        return
    if op == 0x7F and sel == "":
        mod, reg, rm = _modrm(cur)
        r = _reg_operand(ins, reg, 8, reg_bank="mm")
        m = _rm_operand(ins, cur, mod, rm, 8, reg_bank="mm")
        ins.mnemonic = "movq"
        ins.operands = [m, r]
        return

    if op in _SSE_SHIFT_GRP:
        mod, reg, rm = _modrm(cur)
        mnem = _SSE_SHIFT_GRP[op].get(reg)
        if mnem is None or mod != 3:
            raise DecodeError(f"unsupported sse shift form 0f {op:02x} /{reg}", ins.vaddr)
        bank = "xmm" if sel == "66" else "mm"
        m = _rm_operand(ins, cur, mod, rm, 16, reg_bank=bank)
        ins.mnemonic = mnem
        ins.operands = [m, _imm_text(cur.u8(), 1)]
        return

    if op == 0xC4:  # pinsrw
        mod, reg, rm = _modrm(cur)
        bank = "xmm" if sel == "66" else "mm"
        r = _reg_operand(ins, reg, 16, reg_bank=bank)
        m = _rm_operand(ins, cur, mod, rm, 2) if mod != 3 else _reg(rm | (0x8 if ins.rex & 1 else 0), 4, ins.rex)
        ins.mnemonic = "pinsrw"
        ins.operands = [r, m, _imm_text(cur.u8(), 1)]
        return
    if op == 0xC5:  # pextrw
        mod, reg, rm = _modrm(cur)
        if mod != 3:
            raise DecodeError("pextrw needs a register source", ins.vaddr)
        bank = "xmm" if sel == "66" else "mm"
        r = _reg_operand(ins, reg, 4)
        m = _rm_operand(ins, cur, mod, rm, 16, reg_bank=bank)
        ins.mnemonic = "pextrw"
        ins.operands = [r, m, _imm_text(cur.u8(), 1)]
        return

    entry = _SSE.get((op, sel))
    if entry is None and sel == "" and 0x60 <= op <= 0xFE:
        # MMX form of an SSE2 table entry
        entry66 = _SSE.get((op, "66"))
        if entry66 is not None:
            mnem, form, _ = entry66
            mod, reg, rm = _modrm(cur)
            r = _reg_operand(ins, reg, 8, reg_bank="mm")
            m = _rm_operand(ins, cur, mod, rm, 8, reg_bank="mm")
            ins.mnemonic = mnem
            if form == "XM2X_I":
                ins.operands = [r, m, _imm_text(cur.u8(), 1)]
            elif form == "X2XM":
                ins.operands = [m, r]
            else:
                ins.operands = [r, m]
            return
    if entry is not None:
        mnem, form, memw = entry
        mod, reg, rm = _modrm(cur)
        if form == "G2X":
            gsz = 8 if ins.rexw else 4
            r = _reg_operand(ins, reg, 16, reg_bank="xmm")
            m = _rm_operand(ins, cur, mod, rm, gsz)
            ins.operands = [r, m]
        elif form == "X2G":
            gsz = 8 if ins.rexw else 4
            r = _reg_operand(ins, reg, gsz)
            m = _rm_operand(ins, cur, mod, rm, memw, reg_bank="xmm")
            ins.operands = [r, m]
        elif form == "X2G32":
            r = _reg_operand(ins, reg, 8 if ins.rexw else 4)
            m = _rm_operand(ins, cur, mod, rm, memw, reg_bank="xmm")
            ins.operands = [r, m]
        elif form == "X2XM":
            r = _reg_operand(ins, reg, 16, reg_bank="xmm")
            m = _rm_operand(ins, cur, mod, rm, memw, reg_bank="xmm")
            ins.operands = [m, r]
        else:  # XM2X / XM2X_I
            r = _reg_operand(ins, reg, 16, reg_bank="xmm")
            m = _rm_operand(ins, cur, mod, rm, memw, reg_bank="xmm")
            ins.operands = [r, m]
            if form == "XM2X_I":
                ins.operands.append(_imm_text(cur.u8(), 1))
        ins.mnemonic = mnem
        return

    raise DecodeError(f"unsupported opcode 0x0f 0x{op:02x} (prefix {sel or 'none'})", ins.vaddr)


# ---------------------------------------------------------------------------
# Function-level decoding
# ---------------------------------------------------------------------------

def decode_bytes(code: bytes, vaddr: int, bitness: int) -> list[Instruction]:
    """Decode a raw byte buffer exhaustively; instructions tile the buffer."""
    out: list[Instruction] = []
    pos = 0
    while pos < len(code):
        insn = decode_one(code, pos, vaddr + pos, bitness)
        out.append(insn)
        pos += insn.byte_len
    return out


def decode_function(image: BinaryImage, boundary: FunctionBoundary) -> list[Instruction]:
    """Decode all instructions in ``[boundary.start, boundary.end)``.

    The decoded instructions tile the range with no gaps; an instruction
    running past the end raises :class:`DecodeError`.
    """
    if boundary.start >= boundary.end:
        raise ValueError(f"empty boundary for {boundary.name!r}")
    sec = image.section_containing(boundary.start, exec_only=True)
    if sec is None or boundary.end > sec.vaddr + sec.size:
        raise DecodeError(f"boundary for {boundary.name!r} is not inside an executable section", boundary.start)
    lo = boundary.start - sec.vaddr
    hi = boundary.end - sec.vaddr
    code = sec.contents[lo:hi]
    instructions = decode_bytes(code, boundary.start, image.bitness)
    last = instructions[-1]
    if last.end != boundary.end:
        raise DecodeError(
            f"instruction at 0x{last.vaddr:x} overruns function end 0x{boundary.end:x}", last.vaddr
        )
    return instructions
