"""Run configuration: one TOML file, flag overrides applied by the CLI."""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

# Freestanding static builds: the corpus carries its own start/IO harness,
# so binaries link and run for both bitnesses without 32-bit libc dev files.
DEFAULT_CFLAGS = ["-static", "-nostdlib", "-no-pie", "-fno-pie", "-fno-stack-protector"]


@dataclass
class ToolchainConfig:
    cc: str = "gcc"
    strip_tool: str = "strip"
    base_flags: list[str] = field(default_factory=lambda: list(DEFAULT_CFLAGS))
    compile_timeout: float = 60.0


@dataclass
class EndpointConfig:
    url: str = ""
    model: str = ""
    api_key_env: str = "BINLIFT_API_KEY"
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 120.0
    concurrency: int = 4
    archive_path: str | None = None  # JSONL request/response archive


@dataclass
class EvalLimits:
    compile_timeout: float = 30.0
    run_timeout: float = 10.0
    workers: int = 4


@dataclass
class PromptConfig:
    budget_tokens: int = 4096
    include_assembly: bool = True


@dataclass
class DataMapConfig:
    proximity_window: int = 64


@dataclass
class RunConfig:
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    limits: EvalLimits = field(default_factory=EvalLimits)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    datamap: DataMapConfig = field(default_factory=DataMapConfig)
    out_dir: str = "out"

    def validate(self) -> None:
        if shutil.which(self.toolchain.cc) is None:
            raise ConfigError(f"compiler {self.toolchain.cc!r} not found on PATH")
        if shutil.which(self.toolchain.strip_tool) is None:
            raise ConfigError(f"strip tool {self.toolchain.strip_tool!r} not found on PATH")
        for name, value in [
            ("toolchain.compile_timeout", self.toolchain.compile_timeout),
            ("limits.compile_timeout", self.limits.compile_timeout),
            ("limits.run_timeout", self.limits.run_timeout),
            ("limits.workers", self.limits.workers),
            ("prompt.budget_tokens", self.prompt.budget_tokens),
            ("endpoint.concurrency", self.endpoint.concurrency),
        ]:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.datamap.proximity_window < 0:
            raise ConfigError("datamap.proximity_window must be >= 0")

    def config_hash(self) -> str:
        canon = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _apply_section(target, data: dict, path: str) -> None:
    for key, value in data.items():
        if not hasattr(target, key):
            raise ConfigError(f"unknown config key {path}.{key}")
        current = getattr(target, key)
        if isinstance(current, (ToolchainConfig, EndpointConfig, EvalLimits, PromptConfig, DataMapConfig)):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.{key} must be a table")
            _apply_section(current, value, f"{path}.{key}")
        else:
            setattr(target, key, value)


def load_config(path: str | Path | None) -> RunConfig:
    """Config from a TOML file; None yields defaults."""
    config = RunConfig()
    if path is not None:
        raw = Path(path).read_bytes()
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        _apply_section(config, data, "config")
    return config
