"""A small corpus of self-contained C functions with IO examples.

Every bundle is a freestanding program: the scaffold carries a syscall
write/exit harness and a ``_start`` shim, so the binaries link and run for
both bitnesses without any libc. Function semantics are mirrored in Python
to generate the expected IO outputs.
"""

from __future__ import annotations

from .dataset import FUNC_MARKER, IOExample, SourceBundle

HARNESS_PRELUDE = r"""/* freestanding driver support: raw syscalls, no libc */
typedef __SIZE_TYPE__ hx_size;

#if defined(__i386__)
static long hx_syscall3(long n, long a, long b, long c) {
    long r;
    __asm__ volatile("int $0x80" : "=a"(r) : "a"(n), "b"(a), "c"(b), "d"(c) : "memory");
    return r;
}
#define HX_SYS_WRITE 4
#else
static long hx_syscall3(long n, long a, long b, long c) {
    long r;
    __asm__ volatile("syscall" : "=a"(r) : "a"(n), "D"(a), "S"(b), "d"(c) : "rcx", "r11", "memory");
    return r;
}
#define HX_SYS_WRITE 1
#endif

static void hx_write(const char *s, hx_size n) { hx_syscall3(HX_SYS_WRITE, 1, (long)s, (long)n); }

static void hx_print_char(char c) { hx_write(&c, 1); }

static void hx_print_long(long v) {
    char buf[24];
    int i = 23;
    unsigned long u = (v < 0) ? (unsigned long)(-(v + 1)) + 1ul : (unsigned long)v;
    if (u == 0) buf[i--] = '0';
    while (u) { buf[i--] = (char)('0' + u % 10ul); u /= 10ul; }
    if (v < 0) buf[i--] = '-';
    hx_write(buf + i + 1, (hx_size)(23 - i));
}

static void hx_print_int(int v) { hx_print_long(v); }
static void hx_newline(void) { hx_print_char('\n'); }

static int hx_atoi(const char *s) {
    int neg = 0, v = 0;
    if (*s == '-') { neg = 1; s++; }
    while (*s >= '0' && *s <= '9') { v = v * 10 + (*s - '0'); s++; }
    return neg ? -v : v;
}

/* the compiler may lower aggregate initialization/copies to these */
void *memset(void *dst, int c, hx_size n);
void *memcpy(void *dst, const void *src, hx_size n);
__attribute__((optimize("no-tree-loop-distribute-patterns")))
void *memset(void *dst, int c, hx_size n) {
    unsigned char *p = dst;
    while (n--) *p++ = (unsigned char)c;
    return dst;
}
__attribute__((optimize("no-tree-loop-distribute-patterns")))
void *memcpy(void *dst, const void *src, hx_size n) {
    unsigned char *p = dst;
    const unsigned char *q = src;
    while (n--) *p++ = *q++;
    return dst;
}

int hx_main(int argc, char **argv);

#if defined(__i386__)
__asm__(
    ".globl _start\n"
    "_start:\n"
    "  xor %ebp, %ebp\n"
    "  mov (%esp), %eax\n"
    "  lea 4(%esp), %ecx\n"
    "  and $-16, %esp\n"
    "  sub $8, %esp\n"
    "  push %ecx\n"
    "  push %eax\n"
    "  call hx_main\n"
    "  mov %eax, %ebx\n"
    "  mov $1, %eax\n"
    "  int $0x80\n");
#else
__asm__(
    ".globl _start\n"
    "_start:\n"
    "  xor %ebp, %ebp\n"
    "  mov (%rsp), %rdi\n"
    "  lea 8(%rsp), %rsi\n"
    "  and $-16, %rsp\n"
    "  call hx_main\n"
    "  mov %eax, %edi\n"
    "  mov $60, %eax\n"
    "  syscall\n");
#endif
"""


def _int_driver(func_name: str, arity: int) -> str:
    args = ", ".join(f"hx_atoi(argv[{i + 1}])" for i in range(arity))
    return (
        "int hx_main(int argc, char **argv) {\n"
        f"    if (argc < {arity + 1}) return 2;\n"
        f"    hx_print_int({func_name}({args}));\n"
        "    hx_newline();\n"
        "    return 0;\n"
        "}\n"
    )


def make_bundle(func_name, source, arity, mirror, cases, decls="", bitness=(32, 64)):
    """Bundle with an integer driver; IO expectations come from ``mirror``."""
    scaffold = HARNESS_PRELUDE
    if decls:
        scaffold += "\n" + decls.strip() + "\n"
    scaffold += "\n" + FUNC_MARKER + "\n\n" + _int_driver(func_name, arity)
    ios = [
        IOExample(args=[str(a) for a in case], expected_stdout=f"{mirror(*case)}\n", expected_return=0)
        for case in cases
    ]
    return SourceBundle(func_name=func_name, source=source.strip() + "\n",
                        scaffold=scaffold, io_examples=ios, bitness=bitness)


def _py_collatz(n):
    steps = 0
    while n != 1:
        n = n // 2 if n % 2 == 0 else 3 * n + 1
        steps += 1
    return steps


def _py_gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def _py_is_prime(n):
    if n < 2:
        return 0
    i = 2
    while i * i <= n:
        if n % i == 0:
            return 0
        i += 1
    return 1


def _py_digit_sum(n):
    n = abs(n)
    s = 0
    while n:
        s += n % 10
        n //= 10
    return s


def _py_fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


_TABLE = [3, 1, 4, 1, 5, 9, 2, 6]
_DIGITS = [7, 1, 8, 2, 9, 3, 5, 0, 4, 6]


def desk_bundles() -> list[SourceBundle]:
    bundles = [
        make_bundle(
            "add_two",
            "int add_two(int a, int b) {\n    return a + b;\n}",
            2, lambda a, b: a + b, [(40, 2), (-7, 7), (123, 456)],
        ),
        make_bundle(
            "abs_diff",
            "int abs_diff(int a, int b) {\n"
            "    if (a > b) {\n        return a - b;\n    } else {\n        return b - a;\n    }\n}",
            2, lambda a, b: abs(a - b), [(10, 3), (3, 10), (-5, 5)],
        ),
        make_bundle(
            "clamp",
            "int clamp(int v, int lo, int hi) {\n"
            "    if (v < lo) return lo;\n    if (v > hi) return hi;\n    return v;\n}",
            3, lambda v, lo, hi: max(lo, min(v, hi)), [(5, 0, 10), (-3, 0, 10), (42, 0, 10)],
        ),
        make_bundle(
            "sum_to_n",
            "int sum_to_n(int n) {\n"
            "    int s = 0;\n    for (int i = 1; i <= n; i++) {\n        s += i;\n    }\n    return s;\n}",
            1, lambda n: n * (n + 1) // 2 if n > 0 else 0, [(10,), (1,), (100,)],
        ),
        make_bundle(
            "gcd_iter",
            "int gcd_iter(int a, int b) {\n"
            "    while (b != 0) {\n        int t = a % b;\n        a = b;\n        b = t;\n    }\n    return a;\n}",
            2, _py_gcd, [(48, 18), (17, 5), (100, 75)],
        ),
        make_bundle(
            "fib_iter",
            "int fib_iter(int n) {\n"
            "    int a = 0, b = 1;\n"
            "    for (int i = 0; i < n; i++) {\n        int t = a + b;\n        a = b;\n        b = t;\n    }\n"
            "    return a;\n}",
            1, _py_fib, [(10,), (1,), (20,)],
        ),
        make_bundle(
            "is_prime",
            "int is_prime(int n) {\n"
            "    if (n < 2) return 0;\n"
            "    for (int i = 2; i * i <= n; i++) {\n"
            "        if (n % i == 0) return 0;\n    }\n"
            "    return 1;\n}",
            1, _py_is_prime, [(97,), (91,), (2,)],
        ),
        make_bundle(
            "popcount_loop",
            "int popcount_loop(unsigned int v) {\n"
            "    int c = 0;\n    while (v) {\n        c += (int)(v & 1u);\n        v >>= 1;\n    }\n    return c;\n}",
            1, lambda v: bin(v).count("1"), [(255,), (1,), (1023,)],
        ),
        make_bundle(
            "digit_sum",
            "int digit_sum(int n) {\n"
            "    if (n < 0) n = -n;\n"
            "    int s = 0;\n    while (n > 0) {\n        s += n % 10;\n        n /= 10;\n    }\n    return s;\n}",
            1, _py_digit_sum, [(1234,), (-905,), (7,)],
        ),
        make_bundle(
            "collatz_steps",
            "int collatz_steps(int n) {\n"
            "    int steps = 0;\n"
            "    while (n != 1) {\n"
            "        if (n % 2 == 0) {\n            n = n / 2;\n        } else {\n            n = 3 * n + 1;\n        }\n"
            "        steps++;\n    }\n"
            "    return steps;\n}",
            1, _py_collatz, [(6,), (27,), (1,)],
        ),
        make_bundle(
            "max_of_three",
            "int max_of_three(int a, int b, int c) {\n"
            "    int m = a;\n    if (b > m) m = b;\n    if (c > m) m = c;\n    return m;\n}",
            3, lambda a, b, c: max(a, b, c), [(1, 2, 3), (9, 2, 3), (4, 8, 6)],
        ),
        make_bundle(
            "poly_eval",
            "int poly_eval(int x) {\n"
            "    return ((2 * x + 3) * x - 7) * x + 11;\n}",
            1, lambda x: ((2 * x + 3) * x - 7) * x + 11, [(0,), (3,), (-2,)],
        ),
        make_bundle(
            "switch_math",
            "int switch_math(int op, int a, int b) {\n"
            "    switch (op) {\n"
            "    case 0: return a + b;\n"
            "    case 1: return a - b;\n"
            "    case 2: return a * b;\n"
            "    case 3: return b != 0 ? a / b : 0;\n"
            "    case 4: return b != 0 ? a % b : 0;\n"
            "    case 5: return a ^ b;\n"
            "    case 6: return a << (b & 15);\n"
            "    case 7: return a >> (b & 15);\n"
            "    default: return -1;\n    }\n}",
            3,
            lambda op, a, b: [a + b, a - b, a * b,
                              int(a / b) if b else 0, int(a - b * int(a / b)) if b else 0,
                              a ^ b, a << (b & 15), a >> (b & 15), -1][op if 0 <= op <= 7 else 8],
            [(0, 9, 4), (3, 17, 5), (6, 3, 2), (9, 1, 1)],
        ),
        make_bundle(
            "str_length",
            'int str_length(void) {\n'
            '    static const char msg[] = "hello, world";\n'
            "    int n = 0;\n    while (msg[n] != '\\0') {\n        n++;\n    }\n    return n;\n}",
            0, lambda: 12, [()],
        ),
        make_bundle(
            "bump_counter",
            "int bump_counter(int x) {\n"
            "    static unsigned int counter;\n"
            "    counter += (unsigned int)x;\n"
            "    return (int)counter;\n}",
            1, lambda x: x, [(5,), (42,), (100,)],
        ),
        make_bundle(
            "array_sum",
            "int array_sum(int n) {\n"
            "    int s = 0;\n"
            "    for (int i = 0; i < n && i < 8; i++) {\n        s += seq_table[i];\n    }\n    return s;\n}",
            1, lambda n: sum(_TABLE[: max(0, min(n, 8))]),
            [(3,), (8,), (0,)],
            decls="static int seq_table[8] = {3, 1, 4, 1, 5, 9, 2, 6};",
        ),
        make_bundle(
            "array_max",
            "int array_max(void) {\n"
            "    int m = seq_table[0];\n"
            "    for (int i = 1; i < 8; i++) {\n"
            "        if (seq_table[i] > m) m = seq_table[i];\n    }\n"
            "    return m;\n}",
            0, lambda: max(_TABLE), [()],
            decls="static int seq_table[8] = {3, 1, 4, 1, 5, 9, 2, 6};",
        ),
        make_bundle(
            "first_factor_scaled",
            "int first_factor_scaled(int x) {\n"
            "    return (int)((float)x * scale_factors[0]);\n}",
            1, lambda x: int(x * 1.5), [(10,), (4,), (-8,)],
            decls="static float scale_factors[3] = {1.5f, 2.5f, 3.5f};",
        ),
        make_bundle(
            "lookup_digit",
            "int lookup_digit(int i) {\n"
            "    if (i < 0 || i > 9) return -1;\n"
            "    return (int)digit_codes[i];\n}",
            1, lambda i: _DIGITS[i] if 0 <= i <= 9 else -1, [(0,), (9,), (12,)],
            decls="static const unsigned char digit_codes[10] = {7, 1, 8, 2, 9, 3, 5, 0, 4, 6};",
        ),
        make_bundle(
            "union_mix",
            "int union_mix(int x) {\n"
            "    union { int whole; short half; } u;\n"
            "    u.whole = x * 3;\n"
            "    u.half = (short)(x + 5);\n"
            "    return u.whole + u.half;\n}",
            1,
            lambda x: _union_mix_py(x),
            [(10,), (100,), (-4,)],
        ),
        make_bundle(
            "rotate_bits",
            "unsigned int rotate_bits(unsigned int v, int k) {\n"
            "    k &= 31;\n"
            "    if (k == 0) return v;\n"
            "    return (v << k) | (v >> (32 - k));\n}",
            2, lambda v, k: ((v << (k & 31)) | (v >> (32 - (k & 31)))) & 0xFFFFFFFF if k & 31 else v,
            [(1, 1), (1073741824, 2), (305419896, 8)],
        ),
        make_bundle(
            "wavg",
            "int wavg(int a, int b) {\n"
            "    return (a * 3 + b) / 4;\n}",
            2, lambda a, b: int((a * 3 + b) / 4), [(10, 2), (7, 7), (-8, 4)],
        ),
        make_bundle(
            "global_tick",
            "int global_tick(void) {\n"
            "    static int ticks = 7;\n"
            "    ticks = ticks * 2 + 1;\n"
            "    return ticks;\n}",
            0, lambda: 15, [()],
        ),
        make_bundle(
            "nested_loops",
            "int nested_loops(int n, int m) {\n"
            "    int acc = 0;\n"
            "    for (int i = 0; i < n; i++) {\n"
            "        for (int j = 0; j < m; j++) {\n"
            "            if ((i + j) % 2 == 0) acc += i * j;\n"
            "            else acc -= j;\n        }\n    }\n"
            "    return acc;\n}",
            2, lambda n, m: _nested_py(n, m), [(3, 3), (5, 2), (0, 9)],
        ),
        make_bundle(
            "bubble3",
            "int bubble3(int a, int b, int c) {\n"
            "    int v[3];\n"
            "    v[0] = a; v[1] = b; v[2] = c;\n"
            "    for (int i = 0; i < 2; i++) {\n"
            "        for (int j = 0; j < 2 - i; j++) {\n"
            "            if (v[j] > v[j + 1]) {\n"
            "                int t = v[j];\n                v[j] = v[j + 1];\n                v[j + 1] = t;\n            }\n"
            "        }\n    }\n"
            "    return v[0] * 100 + v[1] * 10 + v[2];\n}",
            3, lambda a, b, c: (lambda s: s[0] * 100 + s[1] * 10 + s[2])(sorted([a, b, c])),
            [(3, 1, 2), (9, 5, 7), (1, 1, 1)],
        ),
        make_bundle(
            "parity_word",
            "int parity_word(unsigned int v) {\n"
            "    v ^= v >> 16;\n    v ^= v >> 8;\n    v ^= v >> 4;\n    v ^= v >> 2;\n    v ^= v >> 1;\n"
            "    return (int)(v & 1u);\n}",
            1, lambda v: bin(v).count("1") & 1, [(7,), (255,), (1024,)],
        ),
    ]
    return bundles


def _union_mix_py(x):
    whole = x * 3
    half = (x + 5) & 0xFFFF
    if half >= 0x8000:
        half -= 0x10000
    # overwriting the low half on a little-endian target
    mixed = (whole & ~0xFFFF) | (half & 0xFFFF)
    if mixed >= 0x80000000:
        mixed -= 0x100000000
    total = mixed + half
    total &= 0xFFFFFFFF
    if total >= 0x80000000:
        total -= 0x100000000
    return total


def _nested_py(n, m):
    acc = 0
    for i in range(n):
        for j in range(m):
            if (i + j) % 2 == 0:
                acc += i * j
            else:
                acc -= j
    return acc


def write_bundles(out_dir) -> list[str]:
    """Write each bundle as one JSON document; returns the file names."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for bundle in desk_bundles():
        path = out / f"{bundle.func_name}.json"
        path.write_text(bundle.to_json() + "\n")
        names.append(path.name)
    return names
