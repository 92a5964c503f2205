"""Synthetic ground truth: random graphs, transition matrices and signals.

Random draws happen in a fixed order so that a seed fully determines the
output:

* graphs: vertex coordinates, ``n x 2`` uniform, redrawn whole on retry;
* transitions: Gaussian coefficients, redrawn individually until in ``[0, 1)``;
* signals: latent coefficients ``z`` (``rank x (m + 1)``, column 0 is the
  initial state), then observation noise (``n x m``).

:func:`make_instance` spawns one independent stream per object from a base
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import GenerationError, ValidationError
from .graph import Graph, algebraic_connectivity, eigendecompose, laplacian_from_graph, normalize_trace
from .transition import (
    TransitionMatrix,
    as_transition,
    weighted_difference,
    weighted_difference_adjoint,
)

__all__ = [
    "TransitionMatrix",
    "TransitionSpec",
    "SyntheticInstance",
    "generate_rgg",
    "generate_grid",
    "sample_transition",
    "generate_signals",
    "weighted_difference",
    "weighted_difference_adjoint",
    "symmetric_transition_transform",
    "random_symmetric_transition",
    "make_instance",
]

CONNECTIVITY_TOL = 1e-8
MAX_GRAPH_ATTEMPTS = 100
MAX_TRANSITION_DRAWS = 10_000


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _connected(w):
    return algebraic_connectivity(laplacian_from_graph(w)) > CONNECTIVITY_TOL


def rgg_weights(coords, sigma, threshold):
    """Gaussian-kernel weights with everything at or below ``threshold`` dropped."""
    d2 = cdist(coords, coords, "sqeuclidean")
    w = np.exp(-d2 / (2.0 * sigma**2))
    w[w <= threshold] = 0.0
    np.fill_diagonal(w, 0.0)
    return w


def generate_rgg(n: int, sigma: float = 0.5, threshold: float = 0.7, rng=None) -> Graph:
    """Random geometric graph on the unit square with Gaussian edge weights.

    Coordinates are redrawn (up to 100 times) until the graph is connected.
    """
    if n < 2:
        raise ValidationError(f"need at least 2 vertices, got {n}")
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if not 0 <= threshold < 1:
        raise ValidationError(f"threshold must lie in [0, 1), got {threshold}")
    rng = _rng(rng)
    for _ in range(MAX_GRAPH_ATTEMPTS):
        coords = rng.uniform(size=(n, 2))
        w = rgg_weights(coords, sigma, threshold)
        if _connected(w):
            return Graph(w, coords)
    raise GenerationError(
        f"no connected RGG after {MAX_GRAPH_ATTEMPTS} attempts (n={n}, sigma={sigma}, "
        f"threshold={threshold}); increase sigma or lower the threshold"
    )


def knn_weights(coords, k):
    """Symmetric kNN graph (union of directed neighbor lists), weight ``1/d``."""
    n = coords.shape[0]
    d = cdist(coords, coords)
    np.fill_diagonal(d, np.inf)
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    mask[np.repeat(np.arange(n), k), nbrs.ravel()] = True
    mask |= mask.T
    w = np.zeros((n, n))
    w[mask] = 1.0 / d[mask]
    return w


def generate_grid(n: int, k: int = 5, rng=None) -> Graph:
    """Random-coordinate ``k``-nearest-neighbor graph with inverse-distance weights."""
    if not n > k >= 1:
        raise ValidationError(f"need n > k >= 1, got n={n}, k={k}")
    rng = _rng(rng)
    for _ in range(MAX_GRAPH_ATTEMPTS):
        coords = rng.uniform(size=(n, 2))
        # coincident points would give an infinite weight
        for _ in range(MAX_GRAPH_ATTEMPTS):
            d = cdist(coords, coords)
            np.fill_diagonal(d, np.inf)
            dup = np.argwhere(d == 0)
            if not dup.size:
                break
            coords[dup[0, 1]] = rng.uniform(size=2)
        w = knn_weights(coords, k)
        if _connected(w):
            return Graph(w, coords)
    raise GenerationError(
        f"no connected kNN graph after {MAX_GRAPH_ATTEMPTS} attempts (n={n}, k={k}); increase k"
    )


@dataclass(frozen=True)
class TransitionSpec:
    """How to produce the per-vertex transition coefficients.

    ``kind`` is ``"identity"``, ``"diagonal_gaussian"`` (coefficients drawn
    from ``N(mean, std^2)`` and redrawn until they fall in ``[0, 1)``) or
    ``"explicit"`` (``coeffs`` used as given).
    """

    kind: str = "identity"
    mean: float = 0.5
    std: float = 0.25
    coeffs: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "diagonal_gaussian", "explicit"):
            raise ValidationError(f"unknown transition spec kind {self.kind!r}")
        if self.std < 0:
            raise ValidationError(f"std must be nonnegative, got {self.std}")
        if self.kind == "diagonal_gaussian" and self.std == 0 and not 0 <= self.mean < 1:
            raise ValidationError(f"mean {self.mean} outside [0, 1) with zero spread")
        if self.kind == "explicit":
            if self.coeffs is None:
                raise ValidationError("explicit transition spec needs coeffs")
            c = np.asarray(self.coeffs, dtype=float)
            if np.any((c < 0) | (c > 1)):
                raise ValidationError("explicit coefficients must lie in [0, 1]")
            object.__setattr__(self, "coeffs", tuple(float(v) for v in c))

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "diagonal_gaussian":
            d.update(mean=self.mean, std=self.std)
        elif self.kind == "explicit":
            d["coeffs"] = list(self.coeffs)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "coeffs" in d and d["coeffs"] is not None:
            d["coeffs"] = tuple(d["coeffs"])
        return cls(**d)


def sample_transition(spec: TransitionSpec, n: int, rng=None) -> TransitionMatrix:
    if spec.kind == "identity":
        return TransitionMatrix.identity(n)
    if spec.kind == "explicit":
        if len(spec.coeffs) != n:
            raise ValidationError(f"explicit spec has {len(spec.coeffs)} coefficients, need {n}")
        return TransitionMatrix.diagonal(spec.coeffs)
    rng = _rng(rng)
    c = rng.normal(spec.mean, spec.std, size=n)
    for _ in range(MAX_TRANSITION_DRAWS):
        bad = (c < 0) | (c >= 1)
        if not bad.any():
            return TransitionMatrix.diagonal(c)
        c[bad] = rng.normal(spec.mean, spec.std, size=int(bad.sum()))
    raise GenerationError(
        f"rejection sampling of N({spec.mean}, {spec.std}^2) into [0, 1) exceeded {MAX_TRANSITION_DRAWS} rounds"
    )


def random_symmetric_transition(n: int, rng=None, low=0.0, high=0.95) -> TransitionMatrix:
    """Symmetric, generally non-diagonal ``R = Q diag(c) Q^T`` with ``c`` uniform in ``[low, high)``."""
    rng = _rng(rng)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    c = rng.uniform(low, high, size=n)
    r = (q * c) @ q.T
    return TransitionMatrix.symmetric(0.5 * (r + r.T))


def generate_signals(l, r, rank: int, m: int, sigma_n: float, rng=None):
    """Draw clean signals ``X`` and noisy observations ``Y = X + noise``.

    ``x_t = R x_{t-1} + v_t`` with ``x_0 = v_0`` and ``v_t = U_r z_t``, where
    ``U_r`` holds the ``rank`` lowest-frequency eigenvectors of ``l`` and
    ``z_t`` has independent components of variance ``1/lambda_i`` (0 for the
    zero eigenvalue).

    Returns
    -------
    x, y : ndarray, shape (n, m)
    """
    l = np.asarray(l, dtype=float)
    n = l.shape[0]
    if not 1 <= rank <= n:
        raise ValidationError(f"rank must lie in [1, {n}], got {rank}")
    if m < 1:
        raise ValidationError(f"need at least one time instant, got m={m}")
    if sigma_n < 0:
        raise ValidationError(f"noise std must be nonnegative, got {sigma_n}")
    r = as_transition(r, n)
    spec = eigendecompose(l)
    if n > 1 and spec.eigenvalues[1] <= CONNECTIVITY_TOL:
        raise ValidationError("Laplacian is disconnected (second eigenvalue ~ 0)")
    rng = _rng(rng)

    lam = spec.eigenvalues[:rank]
    scale = np.zeros(rank)
    pos = lam > CONNECTIVITY_TOL
    scale[pos] = 1.0 / np.sqrt(lam[pos])
    z = rng.standard_normal((rank, m + 1)) * scale[:, None]
    v = spec.basis(rank) @ z
    noise = rng.standard_normal((n, m)) * sigma_n

    x = np.empty((n, m))
    prev = v[:, 0]
    for t in range(m):
        prev = r.apply(prev) + v[:, t + 1]
        x[:, t] = prev
    return x, x + noise


def symmetric_transition_transform(y, r_sym):
    """Rotate signals into the eigenbasis of a symmetric transition matrix.

    With ``R = Q diag(lam) Q^T`` the signals ``Q^T y_t`` follow the same
    model with the diagonal transition ``diag(lam)``.

    Returns
    -------
    y_tilde : ndarray
        ``Q^T Y``.
    lam : TransitionMatrix
        Diagonal transition with the eigenvalues of ``R``.
    q : ndarray
        Orthonormal eigenvectors of ``R`` (columns).
    """
    y = np.asarray(y, dtype=float)
    if isinstance(r_sym, TransitionMatrix):
        mat = r_sym.matrix()
    else:
        mat = np.asarray(r_sym, dtype=float)
        TransitionMatrix.symmetric(mat)
    if mat.shape[0] != y.shape[0]:
        raise ValidationError(f"transition size {mat.shape[0]} does not match {y.shape[0]} vertices")
    vals, q = np.linalg.eigh(0.5 * (mat + mat.T))
    # absorb rounding just outside [0, 1]
    vals = np.where(np.abs(vals) < 1e-12, 0.0, vals)
    vals = np.where(np.abs(vals - 1) < 1e-12, 1.0, vals)
    return q.T @ y, TransitionMatrix.diagonal(vals), q


@dataclass
class SyntheticInstance:
    """Ground truth and observations for one synthetic trial."""

    graph: Graph
    laplacian: np.ndarray
    transition: TransitionMatrix
    x: np.ndarray
    y: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)


def make_graph(kind: str, n: int, rng=None, sigma=0.5, threshold=0.7, k=5) -> Graph:
    if kind == "rgg":
        return generate_rgg(n, sigma, threshold, rng)
    if kind == "grid":
        return generate_grid(n, k, rng)
    raise ValidationError(f"unknown graph kind {kind!r} (expected 'rgg' or 'grid')")


def make_instance(
    seed,
    kind="rgg",
    n=30,
    m=100,
    rank=3,
    sigma_n=0.5,
    transition: TransitionSpec | None = None,
    sigma=0.5,
    threshold=0.7,
    k=5,
    trace=None,
) -> SyntheticInstance:
    """Generate a graph (Laplacian trace-normalized to ``trace``, default ``n``),
    a transition matrix and signals from independent streams spawned off ``seed``."""
    g_seq, r_seq, s_seq = np.random.SeedSequence(seed).spawn(3)
    g = make_graph(kind, n, np.random.default_rng(g_seq), sigma=sigma, threshold=threshold, k=k)
    l0 = normalize_trace(laplacian_from_graph(g), n if trace is None else trace)
    r = sample_transition(transition or TransitionSpec(), n, np.random.default_rng(r_seq))
    x, y = generate_signals(l0, r, rank, m, sigma_n, np.random.default_rng(s_seq))
    return SyntheticInstance(g, l0, r, x, y, seed=seed, meta={"kind": kind, "rank": rank, "sigma_n": sigma_n})
