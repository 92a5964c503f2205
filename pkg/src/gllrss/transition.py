"""Transition matrices and the weighted time-difference operator.

The operator maps ``X = [x_1, ..., x_M]`` to
``[x_1, x_2 - R x_1, ..., x_M - R x_{M-1}]``. It is applied column-wise and
never builds the shift matrix or the ``NM x NM`` block operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    """Lag-one transition ``R``, either diagonal or a general symmetric matrix.

    Use :meth:`diagonal`, :meth:`identity` or :meth:`symmetric` to build one.
    """

    kind: str
    coeffs: np.ndarray | None = None
    sym: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "diagonal":
            c = np.array(self.coeffs, dtype=float)
            if c.ndim != 1 or c.size == 0:
                raise ValidationError(f"diagonal coefficients must be a non-empty vector, got shape {c.shape}")
            bad = np.flatnonzero(~((c >= 0) & (c <= 1)))
            if bad.size:
                raise ValidationError(f"coefficient {bad[0]} = {c[bad[0]]!r} outside [0, 1]")
            c.setflags(write=False)
            object.__setattr__(self, "coeffs", c)
            object.__setattr__(self, "sym", None)
        elif self.kind == "symmetric":
            s = np.array(self.sym, dtype=float)
            if s.ndim != 2 or s.shape[0] != s.shape[1]:
                raise ValidationError(f"symmetric transition must be square, got shape {s.shape}")
            asym = float(np.max(np.abs(s - s.T))) if s.size else 0.0
            if asym > SYMMETRY_TOL:
                raise ValidationError(f"transition matrix asymmetric by {asym:.3e}")
            s.setflags(write=False)
            object.__setattr__(self, "sym", s)
            object.__setattr__(self, "coeffs", None)
        else:
            raise ValidationError(f"unknown transition kind {self.kind!r}")

    @classmethod
    def diagonal(cls, coeffs) -> "TransitionMatrix":
        return cls("diagonal", coeffs=coeffs)

    @classmethod
    def identity(cls, n: int) -> "TransitionMatrix":
        return cls("diagonal", coeffs=np.ones(n))

    @classmethod
    def symmetric(cls, matrix) -> "TransitionMatrix":
        return cls("symmetric", sym=matrix)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0] if self.kind == "diagonal" else self.sym.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.kind == "diagonal" and bool(np.all(self.coeffs == 1.0))

    def matrix(self) -> np.ndarray:
        """Dense ``N x N`` form."""
        if self.kind == "diagonal":
            return np.diag(self.coeffs)
        return np.array(self.sym)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``R @ x`` for a vector or a matrix of column signals."""
        if self.kind == "diagonal":
            return self.coeffs[:, None] * x if x.ndim == 2 else self.coeffs * x
        return self.sym @ x

    # R is diagonal or symmetric, so R^T x = R x
    apply_transpose = apply


def as_transition(r, n: int) -> TransitionMatrix:
    """Coerce ``None`` (identity), a vector of coefficients or a square matrix."""
    if isinstance(r, TransitionMatrix):
        tm = r
    elif r is None:
        tm = TransitionMatrix.identity(n)
    else:
        a = np.asarray(r, dtype=float)
        if a.ndim == 1:
            tm = TransitionMatrix.diagonal(a)
        elif a.ndim == 2 and np.count_nonzero(a - np.diag(np.diag(a))) == 0:
            tm = TransitionMatrix.diagonal(np.diag(a))
        else:
            tm = TransitionMatrix.symmetric(a)
    if tm.n != n:
        raise ValidationError(f"transition matrix has size {tm.n}, signals have {n} vertices")
    return tm


def _check_signal(x, r):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError(f"signal matrix must be 2-D (N x M), got shape {x.shape}")
    return x, as_transition(r, x.shape[0])


def weighted_difference(x, r) -> np.ndarray:
    """Column 0 is ``x_1``; column ``t`` is ``x_t - R x_{t-1}``."""
    x, r = _check_signal(x, r)
    d = x.copy()
    d[:, 1:] -= r.apply(x[:, :-1])
    return d


def weighted_difference_adjoint(g, r) -> np.ndarray:
    """Adjoint of :func:`weighted_difference`: ``G - R^T G B^T``.

    Right-multiplying by ``B^T`` shifts columns left (column ``t`` receives
    column ``t + 1``, the last column becomes zero).
    """
    g, r = _check_signal(g, r)
    out = g.copy()
    out[:, :-1] -= r.apply_transpose(g[:, 1:])
    return out


def shift_left(g: np.ndarray) -> np.ndarray:
    """``G B^T``: column ``t`` receives column ``t + 1``; last column zero."""
    out = np.zeros_like(g)
    out[:, :-1] = g[:, 1:]
    return out
