"""Exception types shared across the package."""


class GLLRSSError(Exception):
    """Base class for all package errors."""


class ValidationError(GLLRSSError, ValueError):
    """Input failed a structural check (shape, symmetry, sign, range)."""


class DecompositionError(GLLRSSError, RuntimeError):
    """An eigen- or singular-value decomposition did not converge."""


class GenerationError(GLLRSSError, RuntimeError):
    """A random generator exhausted its retry budget."""


class SolverError(GLLRSSError, RuntimeError):
    """An optimizer failed (non-finite iterate, non-convergence, bad step)."""


class ParseError(GLLRSSError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column
