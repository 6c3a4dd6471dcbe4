"""Exception types shared across the toolchain."""


class BinliftError(Exception):
    """Base class for all toolchain errors."""


class MalformedImage(BinliftError):
    """The input file is not a well-formed ELF image."""


class UnsupportedArchitecture(BinliftError):
    """The ELF is valid but not little-endian x86-32 or x86-64."""


class SectionNotFound(BinliftError):
    """No section with the requested name exists in the image."""


class FunctionNotFound(BinliftError):
    """A requested function has neither a symbol nor a user override."""


class DecodeError(BinliftError):
    """Instruction bytes could not be decoded.

    Carries the virtual address at which decoding failed.
    """

    def __init__(self, message: str, vaddr: int | None = None):
        if vaddr is not None:
            message = f"{message} (at 0x{vaddr:x})"
        super().__init__(message)
        self.vaddr = vaddr


class PromptTooLong(BinliftError):
    """Rendered prompt exceeds the configured token budget."""


class CompileError(BinliftError):
    """Compiler invocation failed; stderr is captured in the message."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class SampleSkipped(BinliftError):
    """A dataset sample could not be built; carries the reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class EndpointUnreachable(BinliftError):
    """The completion endpoint could not be reached after retries."""


class EndpointRejected(BinliftError):
    """The completion endpoint returned a non-success status after retries."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class EmptyCompletion(BinliftError):
    """The endpoint answered successfully but returned no usable text."""


class EmptyGroundTruth(BinliftError):
    """Edit similarity is undefined for an empty ground-truth sequence."""


class InvalidInput(BinliftError):
    """Metric input violates its invariants (e.g. c > n for pass@k)."""


class ConfigError(BinliftError):
    """Run configuration failed validation."""
