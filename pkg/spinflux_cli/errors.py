"""
Error hierarchy
───────────────
Engines raise these; the CLI catches ``SpinfluxError`` and turns it into a
red console message (or a JSON ``{"error": ...}`` object) plus an exit code.
Validators never raise for model defects, they return reports instead.
"""


class SpinfluxError(Exception):
    """Root of every error raised by spinflux."""

    exit_code = 1


# ─── model-core ─────────────────────────────────────────────────────────────

class NegativeRate(SpinfluxError):
    pass


class ConstraintViolated(SpinfluxError):
    def __init__(self, identity: str, lhs: float, rhs: float):
        self.identity = identity
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"Constraint violated: {identity} ({lhs:g} != {rhs:g})")


class ParseError(SpinfluxError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SchemaError(SpinfluxError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"Invalid field '{field}': {message}")


class SizeExceeded(SpinfluxError):
    pass


# ─── thermo / flux-analysis ─────────────────────────────────────────────────

class OutsideDomain(SpinfluxError):
    def __init__(self, message: str, point=None, index: int | None = None):
        self.point = point
        self.index = index
        super().__init__(message)


class NoConvergence(SpinfluxError):
    pass


class ConservationBroken(SpinfluxError):
    pass


class QuadratureFailure(SpinfluxError):
    pass


# ─── fv-solver ──────────────────────────────────────────────────────────────

class InadmissibleState(SpinfluxError):
    def __init__(self, cell: int, time: float):
        self.cell = cell
        self.time = time
        super().__init__(f"Cell {cell} left the admissible domain at t={time:.6g}")


class NonFiniteFlux(SpinfluxError):
    pass


# ─── kmc-engine ─────────────────────────────────────────────────────────────

class StalledDynamics(SpinfluxError):
    def __init__(self, remaining: float):
        self.remaining = remaining
        super().__init__(f"Total jump rate vanished with {remaining:.6g} microscopic time left")


class BadBlockSize(SpinfluxError):
    pass


# ─── harness ────────────────────────────────────────────────────────────────

class ValidationFailure(SpinfluxError):
    exit_code = 2


class PostShockRefusal(SpinfluxError):
    exit_code = 3


# ─── cli ────────────────────────────────────────────────────────────────────

class UsageError(SpinfluxError):
    """Missing or conflicting command-line options."""
