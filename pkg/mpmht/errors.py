"""
Exception hierarchy shared by the detection library and the simulator CLI.

Every error carries the process exit code the CLI reports for it, so the
command-line layer can map failures without a lookup table.
"""

from typing import Optional


class MpmhtError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ContractViolation(MpmhtError):
    """A precondition on shapes, ranges or finiteness was not met."""


class SingularChannel(MpmhtError):
    """QR decomposition hit a (numerically) rank-deficient channel."""

    def __init__(self, message: str, column: Optional[int] = None, diagonal: Optional[float] = None):
        super().__init__(message)
        self.column = column
        self.diagonal = diagonal


class GenerationExhausted(MpmhtError):
    """The conditioned-channel rejection sampler ran out of attempts."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class OracleTooLarge(MpmhtError):
    """Brute-force search space exceeds the oracle guard."""

    exit_code = 3

    def __init__(self, message: str, search_size: int = 0):
        super().__init__(message)
        self.search_size = search_size


class MissingCompetitor(MpmhtError):
    """A bit position has only one hypothesis in the candidate list."""

    def __init__(self, message: str, layer: Optional[int] = None, bit: Optional[int] = None):
        super().__init__(message)
        self.layer = layer
        self.bit = bit


class ConfigError(MpmhtError):
    """Invalid sweep configuration; names the offending line when known."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, text: Optional[str] = None):
        if line is not None:
            detail = f"line {line}: {message}"
            if text is not None:
                detail += f" ({text.strip()!r})"
        else:
            detail = message
        super().__init__(detail)
        self.line = line
        self.text = text


class OutputError(MpmhtError):
    """Failure reading or writing a result file."""

    exit_code = 4

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message}: {path}" if path else message)
        self.path = path
