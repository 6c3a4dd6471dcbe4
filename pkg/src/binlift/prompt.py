"""Decompilation prompt assembly.

The template wording is versioned here so datasets and runs are
reproducible; the CFG and data-mapping JSON strings are embedded verbatim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import PromptTooLong

PROMPT_VERSION = "1"

DEFAULT_BUDGET_TOKENS = 4096
CHARS_PER_TOKEN = 4  # pre-flight budget heuristic, endpoint-agnostic

_PREAMBLE = (
    "The following is x86 {bitness}-bit assembly of one C function, compiled at "
    "optimization level {opt_level} and stripped of symbols. Reconstruct the "
    "original C source code of this function."
)
_DIRECTIVE = (
    "Write exactly one C function that compiles to the assembly above. "
    "Answer with the C source inside a single fenced code block and nothing else."
)


@dataclass(frozen=True)
class DecompilationPrompt:
    preamble: str
    bitness: int
    opt_level: str
    assembly: str
    cfg_json: str
    data_map_json: str
    directive: str
    include_assembly: bool = True

    def render(self) -> str:
        parts = [self.preamble, ""]
        if self.include_assembly:
            parts += ["# Assembly", self.assembly, ""]
        parts += ["# Control Flow Graph", self.cfg_json, ""]
        parts += ["# Data Mapping", self.data_map_json, ""]
        parts.append(self.directive)
        return "\n".join(parts)

    @property
    def rendered_length(self) -> int:
        return len(self.render())

    @property
    def token_estimate(self) -> int:
        return math.ceil(self.rendered_length / CHARS_PER_TOKEN)


def build_prompt(
    asm: str,
    cfg_json: str,
    table_json: str,
    bitness: int,
    opt_level: str,
    include_assembly: bool = True,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
) -> DecompilationPrompt:
    """Assemble the prompt; deterministic for identical inputs.

    Raises :class:`PromptTooLong` when the chars/4 token estimate exceeds
    ``budget_tokens``.
    """
    if bitness not in (32, 64):
        raise ValueError(f"bitness must be 32 or 64, got {bitness}")
    if opt_level not in ("O0", "O1", "O2", "O3"):
        raise ValueError(f"bad optimization level {opt_level!r}")
    if not asm.strip():
        raise ValueError("assembly listing is empty")
    json.loads(cfg_json)
    json.loads(table_json)

    prompt = DecompilationPrompt(
        preamble=_PREAMBLE.format(bitness=bitness, opt_level=opt_level),
        bitness=bitness,
        opt_level=opt_level,
        assembly=asm.rstrip("\n"),
        cfg_json=cfg_json,
        data_map_json=table_json,
        directive=_DIRECTIVE,
        include_assembly=include_assembly,
    )
    if prompt.token_estimate > budget_tokens:
        raise PromptTooLong(
            f"prompt estimate {prompt.token_estimate} tokens exceeds budget {budget_tokens}"
        )
    return prompt
