"""Edge-recovery scores and relative estimation errors."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ValidationError

DEFAULT_TAU_EDGE = 1e-4


@dataclass(frozen=True)
class EdgeSet:
    """Presence indicator over the unordered vertex pairs ``i < j`` (row-major)."""

    n: int
    present: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.present, dtype=bool)
        if p.shape != (self.n * (self.n - 1) // 2,):
            raise ValidationError(f"indicator length {p.shape} does not match n={self.n}")
        object.__setattr__(self, "present", p)

    @classmethod
    def from_adjacency(cls, w, tau: float = 0.0) -> "EdgeSet":
        w = np.asarray(w)
        n = w.shape[0]
        return cls(n, w[np.triu_indices(n, 1)] > tau)

    @property
    def count(self) -> int:
        return int(self.present.sum())

    def pairs(self):
        iu = np.triu_indices(self.n, 1)
        return [(int(i), int(j)) for i, j, keep in zip(*iu, self.present) if keep]


def edges_from_laplacian(l, tau_edge: float = DEFAULT_TAU_EDGE) -> EdgeSet:
    """Pair ``(i, j)`` is an edge iff ``-L[i, j] > tau_edge``."""
    l = np.asarray(l, dtype=float)
    return EdgeSet.from_adjacency(-l, tau_edge)


@dataclass
class PRF:
    precision: float
    recall: float
    f_measure: float
    flags: tuple = ()


def _same_n(a, b):
    if a.n != b.n:
        raise ValidationError(f"edge sets over different vertex counts: {a.n} vs {b.n}")


def edge_prf(learned: EdgeSet, truth: EdgeSet) -> PRF:
    """Precision, recall and F-measure of learned edges against the truth.

    An empty learned set gives precision 0 (flag ``"learned_empty"``); an
    empty truth makes recall and F undefined (NaN, flag ``"truth_empty"``).
    """
    _same_n(learned, truth)
    tp = int(np.sum(learned.present & truth.present))
    fp = int(np.sum(learned.present & ~truth.present))
    fn = int(np.sum(~learned.present & truth.present))
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("learned_empty")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        flags.append("truth_empty")
        return PRF(precision, float("nan"), float("nan"), tuple(flags))
    recall = tp / (tp + fn)
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF(precision, recall, f, tuple(flags))


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi_labels(a, b, normalization: str = "mean") -> tuple[float, bool]:
    """Normalized mutual information between two binary labelings.

    Returns ``(nmi, degenerate)``. When either labeling is constant the
    value is 1 for identical labelings and 0 otherwise.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape or a.size == 0:
        raise ValidationError("labelings must be non-empty and of equal length")
    table = np.array(
        [[np.sum(~a & ~b), np.sum(~a & b)], [np.sum(a & ~b), np.sum(a & b)]], dtype=float
    )
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 or hb == 0.0:
        return (1.0 if np.array_equal(a, b) else 0.0), True
    joint = table / table.sum()
    outer = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    if normalization == "mean":
        denom = 0.5 * (ha + hb)
    elif normalization == "sqrt":
        denom = np.sqrt(ha * hb)
    else:
        raise ValidationError(f"unknown NMI normalization {normalization!r}")
    return float(min(1.0, max(0.0, mi / denom))), False


def nmi_edges(learned: EdgeSet, truth: EdgeSet, normalization: str = "mean") -> float:
    """NMI of the present/absent labeling of every vertex pair."""
    _same_n(learned, truth)
    return nmi_labels(learned.present, truth.present, normalization)[0]


def _rel_fro(est, ref, what):
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape:
        raise ValidationError(f"{what}: shape mismatch {est.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ValidationError(f"{what}: ground truth has zero norm")
    return float(np.linalg.norm(est - ref) / denom)


def gse(l_hat, l_true) -> float:
    """Relative Frobenius error of a learned Laplacian."""
    return _rel_fro(l_hat, l_true, "gse")


def lce(x_hat, x_true) -> float:
    """Relative Frobenius error of a low-rank estimate."""
    return _rel_fro(x_hat, x_true, "lce")


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f_measure: float
    nmi: float
    gse: float | None = None
    lce: float | None = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


METRIC_NAMES = ("f_measure", "precision", "recall", "nmi", "gse", "lce")


def score(l_hat, l_true, x_hat=None, x_true=None, tau_edge: float = DEFAULT_TAU_EDGE,
          nmi_normalization: str = "mean") -> MetricsReport:
    """All six measures for one learned graph (LCE only when both X are given)."""
    learned = edges_from_laplacian(l_hat, tau_edge)
    truth = edges_from_laplacian(l_true, tau_edge)
    prf = edge_prf(learned, truth)
    nmi, degenerate = nmi_labels(learned.present, truth.present, nmi_normalization)
    flags = list(prf.flags) + (["nmi_degenerate"] if degenerate else [])
    lce_val = lce(x_hat, x_true) if x_hat is not None and x_true is not None else None
    return MetricsReport(prf.precision, prf.recall, prf.f_measure, nmi, gse(l_hat, l_true), lce_val, flags)
