from __future__ import annotations


class GenextError(Exception):
    """Base class for every error raised by genext."""


class ConfigurationError(GenextError, ValueError):
    """Raised when the settings module is missing or holds invalid values."""


class InputError(GenextError, ValueError):
    """Raised when an input assignment does not match a program's input spec."""


class ParseError(GenextError):
    """Raised when IR text cannot be turned into a valid Program."""

    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class MachineFault(GenextError):
    """Raised when executing an instruction touches memory outside every region."""

    def __init__(self, message: str, address: int, block: str | None = None, index: int | None = None) -> None:
        self.address = address
        self.block = block
        self.index = index
        where = f" at {block}:{index}" if block is not None else ""
        super().__init__(f"{message}{where}")


class FuelExhausted(GenextError):
    """Raised when a run exceeds its step budget."""


class BudgetExhausted(GenextError):
    """Raised when specialization visits more states than allowed."""


class CongruenceViolation(GenextError):
    """Raised when delayed computation would leak into supplied state."""


class ReducibleModulusError(GenextError, ValueError):
    """Raised when a fingerprint modulus fails the irreducibility test."""

    def __init__(self, message: str, witness: int) -> None:
        self.witness = witness
        super().__init__(message)


class ResidualError(GenextError):
    """Raised when the residual builder is driven out of order."""


class BenchmarkError(GenextError, ValueError):
    """Raised for unknown benchmarks or out-of-range parameters."""
