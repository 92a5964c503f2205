"""Joint graph learning and low-rank recovery of time-varying graph signals."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    DecompositionError,
    GenerationError,
    GLLRSSError,
    ParseError,
    SolverError,
    ValidationError,
)
from .graph import Graph, laplacian_from_graph, normalize_trace, validate_cgl  # noqa: E402
from .metrics import score  # noqa: E402
from .solver import SolverConfig, SolverResult, gl_lrss  # noqa: E402
from .transition import TransitionMatrix  # noqa: E402

__all__ = [
    "DecompositionError",
    "GenerationError",
    "GLLRSSError",
    "Graph",
    "ParseError",
    "SolverConfig",
    "SolverError",
    "SolverResult",
    "TransitionMatrix",
    "ValidationError",
    "gl_lrss",
    "laplacian_from_graph",
    "normalize_trace",
    "score",
    "validate_cgl",
]
