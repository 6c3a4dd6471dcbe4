"""Chat-completion endpoint client for decompilation candidates.

One POST per request: model id, a single user message carrying the
rendered prompt, and the decoding parameters. Compatible with the common
OpenAI-style wire shape; credentials come from an environment variable
named in the endpoint configuration.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .config import EndpointConfig
from .errors import EmptyCompletion, EndpointRejected, EndpointUnreachable
from .prompt import DecompilationPrompt

GREEDY_MAX_TOKENS = 4096


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "greedy"  # "greedy" | "sampled"
    temperature: float = 0.0
    top_p: float = 1.0
    n: int = 1
    max_tokens: int = GREEDY_MAX_TOKENS

    def __post_init__(self):
        if self.mode not in ("greedy", "sampled"):
            raise ValueError(f"bad decode mode {self.mode!r}")
        if self.mode == "greedy":
            object.__setattr__(self, "temperature", 0.0)
            if self.n != 1:
                raise ValueError("greedy decoding implies n = 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.n < 1:
            raise ValueError("candidate count must be >= 1")

    @classmethod
    def greedy(cls, max_tokens: int = GREEDY_MAX_TOKENS) -> "DecodeConfig":
        return cls(mode="greedy", max_tokens=max_tokens)

    @classmethod
    def sampled(cls, n: int, temperature: float = 0.2, top_p: float = 0.95,
                max_tokens: int = GREEDY_MAX_TOKENS) -> "DecodeConfig":
        return cls(mode="sampled", temperature=temperature, top_p=top_p, n=n, max_tokens=max_tokens)


@dataclass(frozen=True)
class Candidate:
    text: str
    extracted_source: str | None
    model_id: str
    sample_index: int
    latency: float


@dataclass
class EndpointClient:
    config: EndpointConfig
    session: requests.Session = field(default_factory=requests.Session)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _archive(self, request_body: dict, response_body: dict) -> None:
        if not self.config.archive_path:
            return
        req_blob = json.dumps(request_body, sort_keys=True)
        rsp_blob = json.dumps(response_body, sort_keys=True)
        entry = {
            "request_sha256": hashlib.sha256(req_blob.encode()).hexdigest(),
            "response_sha256": hashlib.sha256(rsp_blob.encode()).hexdigest(),
            "request": request_body,
            "response": response_body,
        }
        path = Path(self.config.archive_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def generate(self, prompt: DecompilationPrompt | str, config: DecodeConfig) -> list[Candidate]:
        """Submit the prompt; returns exactly ``config.n`` candidates.

        Transient failures are retried with jittered exponential backoff up
        to the configured cap.
        """
        rendered = prompt if isinstance(prompt, str) else prompt.render()
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": rendered}],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "n": config.n,
            "max_tokens": config.max_tokens,
        }
        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                time.sleep(delay * (1 + random.random() * 0.25))
            started = time.monotonic()
            try:
                response = self.session.post(
                    self.config.url, headers=self._headers(), json=body,
                    timeout=self.config.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            latency = time.monotonic() - started
            if response.status_code >= 500 or response.status_code == 429:
                last_error = EndpointRejected(
                    f"status {response.status_code} from {self.config.url}", status=response.status_code
                )
                continue
            if response.status_code >= 400:
                raise EndpointRejected(
                    f"status {response.status_code} from {self.config.url}: {response.text[:300]}",
                    status=response.status_code,
                )
            payload = response.json()
            self._archive(body, payload)
            return self._candidates(payload, config, latency)
        if isinstance(last_error, EndpointRejected):
            raise last_error
        raise EndpointUnreachable(
            f"{self.config.url} unreachable after {attempts} attempts: {last_error}"
        )

    def _candidates(self, payload: dict, config: DecodeConfig, latency: float) -> list[Candidate]:
        choices = payload.get("choices") or []
        if len(choices) < config.n:
            raise EmptyCompletion(
                f"endpoint returned {len(choices)} choices, expected {config.n}"
            )
        out: list[Candidate] = []
        for index, choice in enumerate(choices[: config.n]):
            message = choice.get("message") or {}
            text = message.get("content") or choice.get("text") or ""
            if not text.strip():
                raise EmptyCompletion(f"choice {index} is empty")
            out.append(
                Candidate(
                    text=text,
                    extracted_source=extract_code(text),
                    model_id=payload.get("model", self.config.model),
                    sample_index=index,
                    latency=latency,
                )
            )
        return out


_FENCE = re.compile(r"```[ \t]*(?:[cC](?:\+\+)?|)\s*\n(.*?)```", re.DOTALL)
_C_STARTER = re.compile(
    r"^\s*(?:static\s+|unsigned\s+|signed\s+|const\s+|struct\s+|union\s+|enum\s+"
    r"|void\b|int\b|long\b|short\b|char\b|float\b|double\b|bool\b|size_t\b|u?int\d+_t\b)"
)


def extract_code(candidate_text: str) -> str | None:
    """C source from a completion: the first fenced code block, else the
    longest region between a line starting with a C type/keyword and the
    final balanced closing brace."""
    match = _FENCE.search(candidate_text)
    if match:
        code = match.group(1).strip("\n")
        return code if code.strip() else None

    # unfenced fallback; never let stray fence markers into the result
    candidate_text = candidate_text.split("```")[0]
    lines = candidate_text.splitlines()
    start = None
    for idx, line in enumerate(lines):
        if _C_STARTER.match(line):
            start = idx
            break
    if start is None:
        return None
    text = "\n".join(lines[start:])
    depth = 0
    last_balanced = None
    for pos, ch in enumerate(text):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                last_balanced = pos
    if last_balanced is None:
        return None
    return text[: last_balanced + 1].strip()
