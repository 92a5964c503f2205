"""Weighted graphs, combinatorial Laplacians, spectra and smoothness measures.

Laplacians are plain ``numpy`` arrays; :func:`validate_cgl` and
:func:`check_cgl` are the gatekeepers for the combinatorial-Laplacian
constraints (symmetry, nonpositive off-diagonals, zero row sums, PSD).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DecompositionError, ValidationError

SYM_TOL = 1e-10
OFFDIAG_TOL = 1e-10
ROWSUM_TOL = 1e-8
PSD_TOL = 1e-8


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph without self-loops.

    Parameters
    ----------
    weights : ndarray, shape (n, n)
        Symmetric nonnegative adjacency matrix with zero diagonal.
    coords : ndarray, shape (n, d), optional
        Vertex positions (the generators use d = 2).
    """

    weights: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ValidationError(f"weights must be a non-empty square matrix, got shape {w.shape}")
        _check_adjacency(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.coords is not None:
            c = np.array(self.coords, dtype=float)
            if c.ndim != 2 or c.shape[0] != w.shape[0]:
                raise ValidationError(f"coords must have shape (n, d) with n={w.shape[0]}, got {c.shape}")
            c.setflags(write=False)
            object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))


def _check_adjacency(w):
    asym = np.argwhere(w != w.T)
    if asym.size:
        i, j = asym[0]
        raise ValidationError(f"weights not symmetric at ({i}, {j}): {w[i, j]!r} != {w[j, i]!r}")
    neg = np.argwhere(w < 0)
    if neg.size:
        i, j = neg[0]
        raise ValidationError(f"negative weight at ({i}, {j}): {w[i, j]!r}")
    diag = np.flatnonzero(np.diag(w))
    if diag.size:
        raise ValidationError(f"self-loop at vertex {diag[0]}: weight {w[diag[0], diag[0]]!r}")
    if not np.all(np.isfinite(w)):
        i, j = np.argwhere(~np.isfinite(w))[0]
        raise ValidationError(f"non-finite weight at ({i}, {j})")


def laplacian_from_graph(g: Graph | np.ndarray) -> np.ndarray:
    """Return the combinatorial Laplacian ``diag(W 1) - W``.

    Accepts a :class:`Graph` or a raw adjacency matrix, which is validated
    the same way.
    """
    w = g.weights if isinstance(g, Graph) else Graph(g).weights
    return np.diag(w.sum(axis=1)) - w


def normalize_trace(l: np.ndarray, target: float) -> np.ndarray:
    """Scale ``l`` so that its trace equals ``target``."""
    if target <= 0:
        raise ValidationError(f"target trace must be positive, got {target}")
    tr = np.trace(l)
    if not tr > 0:
        raise ValidationError(f"cannot normalize a Laplacian with trace {tr} (empty graph?)")
    return l * (target / tr)


def _as_vector(x, n, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValidationError(f"{name} must be a length-{n} vector, got shape {x.shape}")
    return x


def smoothness(x, l: np.ndarray) -> float:
    """Laplacian quadratic form ``x^T L x``."""
    l = np.asarray(l, dtype=float)
    x = _as_vector(x, l.shape[0])
    return float(x @ l @ x)


def spatiotemporal_smoothness(x, r, l: np.ndarray) -> float:
    """``tr(D(X)^T L D(X))`` for the weighted difference operator ``D``.

    Sum over time of the smoothness of ``x_t - R x_{t-1}``, with the first
    column taken as is.
    """
    from .transition import weighted_difference

    l = np.asarray(l, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != l.shape[0]:
        raise ValidationError(f"signal shape {x.shape} does not match Laplacian of size {l.shape[0]}")
    d = weighted_difference(x, r)
    return float(np.sum(d * (l @ d)))


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def basis(self, r: int) -> np.ndarray:
        """First ``r`` eigenvectors (lowest graph frequencies)."""
        return self.eigenvectors[:, :r]


def eigendecompose(l: np.ndarray) -> Spectrum:
    l = np.asarray(l, dtype=float)
    sym = 0.5 * (l + l.T)
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        finite = bool(np.all(np.isfinite(l)))
        norm = np.linalg.norm(l) if finite else float("nan")
        raise DecompositionError(
            f"eigendecomposition failed (finite={finite}, frobenius norm={norm:.3e}, "
            f"asymmetry={np.max(np.abs(l - l.T)) if finite else float('nan'):.3e})"
        ) from exc
    # fix the sign so that results are reproducible across LAPACK builds
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return Spectrum(vals, vecs * signs)


def algebraic_connectivity(l: np.ndarray) -> float:
    """Second-smallest Laplacian eigenvalue (0 for a disconnected graph)."""
    vals = np.linalg.eigvalsh(0.5 * (l + l.T))
    return float(vals[1]) if vals.size > 1 else 0.0


@dataclass
class ConstraintCheck:
    passed: bool
    worst: float
    location: tuple | None = None


@dataclass
class ValidationReport:
    """Per-constraint outcome of :func:`validate_cgl`.

    ``worst`` is the largest violation magnitude for each constraint (0 when
    the constraint holds exactly) and ``location`` the offending index.
    """

    symmetry: ConstraintCheck
    offdiag_sign: ConstraintCheck
    row_sums: ConstraintCheck
    psd: ConstraintCheck
    tol: float = field(default=ROWSUM_TOL)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in (self.symmetry, self.offdiag_sign, self.row_sums, self.psd))

    def failures(self) -> list[str]:
        names = ("symmetry", "offdiag_sign", "row_sums", "psd")
        return [n for n in names if not getattr(self, n).passed]

    def __str__(self):
        parts = []
        for name in ("symmetry", "offdiag_sign", "row_sums", "psd"):
            c = getattr(self, name)
            parts.append(f"{name}={'ok' if c.passed else 'FAIL'}({c.worst:.2e})")
        return " ".join(parts)


def validate_cgl(m, tol: float | None = None) -> ValidationReport:
    """Check every combinatorial-Laplacian constraint and report each one.

    With ``tol=None`` the per-constraint defaults are used (1e-10 for
    symmetry and off-diagonal sign, 1e-8 for row sums and PSD); a given
    ``tol`` applies to all four.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    t_sym = SYM_TOL if tol is None else tol
    t_off = OFFDIAG_TOL if tol is None else tol
    t_row = ROWSUM_TOL if tol is None else tol
    t_psd = PSD_TOL if tol is None else tol

    asym = np.abs(m - m.T)
    loc = np.unravel_index(np.argmax(asym), asym.shape) if asym.size else None
    worst = float(asym.max()) if asym.size else 0.0
    symmetry = ConstraintCheck(worst <= t_sym, worst, tuple(int(i) for i in loc) if worst > 0 else None)

    off = m.copy()
    np.fill_diagonal(off, -np.inf)
    worst_off = float(off.max()) if m.shape[0] > 1 else -np.inf
    if worst_off > 0:
        loc = tuple(int(i) for i in np.unravel_index(np.argmax(off), off.shape))
        sign = ConstraintCheck(worst_off <= t_off, worst_off, loc)
    else:
        sign = ConstraintCheck(True, 0.0)

    rs = np.abs(m.sum(axis=1))
    worst_rs = float(rs.max())
    row_sums = ConstraintCheck(worst_rs <= t_row, worst_rs, (int(np.argmax(rs)),) if worst_rs > 0 else None)

    lam_min = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
    psd = ConstraintCheck(lam_min >= -t_psd, max(0.0, -lam_min))
    return ValidationReport(symmetry, sign, row_sums, psd, tol=t_row)


def check_cgl(m, tol: float | None = None) -> np.ndarray:
    """Raise :class:`ValidationError` unless ``m`` is a valid CGL; return it as an array."""
    report = validate_cgl(m, tol)
    if not report.ok:
        raise ValidationError(f"not a valid combinatorial Laplacian: {report}")
    return np.asarray(m, dtype=float)


def adjacency_from_laplacian(l: np.ndarray) -> np.ndarray:
    """Edge weights ``-L(i, j)`` off the diagonal, clipped at zero."""
    w = -np.asarray(l, dtype=float).copy()
    np.fill_diagonal(w, 0.0)
    return np.maximum(w, 0.0)
