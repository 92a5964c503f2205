"""Synthetic experiment protocol, hyperparameter sweeps and the user-data path."""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .exceptions import GLLRSSError, ValidationError
from .graph import validate_cgl
from .metrics import DEFAULT_TAU_EDGE, METRIC_NAMES, score
from .solver import SolverConfig, gl_lrss
from .synth import TransitionSpec, make_instance
from .transition import TransitionMatrix

log = logging.getLogger(__name__)

SOLVER_KEYS = set(SolverConfig.__dataclass_fields__)
SIGNAL_KEYS = {"rank", "m", "sigma_n"}
GRAPH_KEYS = {"kind", "n", "sigma", "threshold", "k"}


def exponent_grid(base, start, stop, step):
    """``base ** e`` for ``e`` running from ``start`` to ``stop`` in ``step`` increments."""
    count = int(round((stop - start) / step)) + 1
    if count < 1:
        raise ValidationError(f"empty exponent range {start}..{stop} step {step}")
    return [float(base ** (start + i * step)) for i in range(count)]


# Ranges used when a sweep asks for "default": alpha in 10^[-2, 0], beta in
# 10^[0, 2] (exponent step 0.1), gamma in 2^[0, 5] (exponent step 0.4).
DEFAULT_SWEEP = {
    "alpha": {"base": 10, "start": -2, "stop": 0, "step": 0.1},
    "beta": {"base": 10, "start": 0, "stop": 2, "step": 0.1},
    "gamma": {"base": 2, "start": 0, "stop": 5, "step": 0.4},
}


def _expand_values(name, spec):
    if spec == "default":
        spec = DEFAULT_SWEEP.get(name)
        if spec is None:
            raise ValidationError(f"no default sweep range for {name!r}")
    if isinstance(spec, dict):
        vals = exponent_grid(spec.get("base", 10), spec["start"], spec["stop"], spec["step"])
        vals = list(spec.get("extra", [])) + vals
    else:
        vals = list(spec)
    if not vals:
        raise ValidationError(f"sweep grid for {name!r} is empty")
    return vals


@dataclass
class ExperimentConfig:
    """Everything needed to regenerate and rerun a batch of synthetic trials."""

    graph: dict = field(default_factory=lambda: {"kind": "rgg", "n": 30, "sigma": 0.5, "threshold": 0.7, "k": 5})
    signal: dict = field(default_factory=lambda: {"rank": 3, "m": 100, "sigma_n": 0.5})
    transition: TransitionSpec = field(default_factory=TransitionSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    trials: int = 20
    seed: int = 0
    sweep: dict | None = None
    outputs: str | None = None
    tau_edge: float = DEFAULT_TAU_EDGE
    # solve with the identity transition regardless of the generating one
    assume_identity: bool = False

    def __post_init__(self):
        graph = {"kind": "rgg", "n": 30, "sigma": 0.5, "threshold": 0.7, "k": 5}
        graph.update(self.graph)
        signal = {"rank": 3, "m": 100, "sigma_n": 0.5}
        signal.update(self.signal)
        self.graph, self.signal = graph, signal
        if set(graph) - GRAPH_KEYS:
            raise ValidationError(f"unknown graph settings {sorted(set(graph) - GRAPH_KEYS)}")
        if set(signal) - SIGNAL_KEYS:
            raise ValidationError(f"unknown signal settings {sorted(set(signal) - SIGNAL_KEYS)}")
        for name, val in (("trials", self.trials), ("n", graph["n"]), ("m", signal["m"]), ("rank", signal["rank"])):
            if int(val) < 1:
                raise ValidationError(f"{name} must be positive, got {val}")
        if signal["rank"] > graph["n"]:
            raise ValidationError(f"rank {signal['rank']} exceeds n={graph['n']}")
        if self.sweep is not None:
            if not self.sweep:
                raise ValidationError("sweep must name at least one parameter")
            for name, spec in self.sweep.items():
                if name not in SOLVER_KEYS | SIGNAL_KEYS:
                    raise ValidationError(f"cannot sweep {name!r}")
                _expand_values(name, spec)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        signal = dict(d.pop("signal", {}))
        trans = signal.pop("transition", d.pop("transition", None))
        solver = d.pop("solver", {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(
            signal=signal,
            transition=TransitionSpec.from_dict(trans) if trans else TransitionSpec(),
            solver=SolverConfig(**solver),
            **d,
        )

    def to_dict(self):
        d = asdict(self)
        d["transition"] = self.transition.to_dict()
        d["solver"] = self.solver.to_dict()
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with solver, signal or top-level fields overridden by name."""
        graph, signal = dict(self.graph), dict(self.signal)
        solver_changes, top = {}, {}
        for k, v in changes.items():
            if k in SOLVER_KEYS:
                solver_changes[k] = v
            elif k in SIGNAL_KEYS:
                signal[k] = v
            elif k in GRAPH_KEYS:
                graph[k] = v
            else:
                top[k] = v
        base = dict(
            graph=graph, signal=signal, transition=self.transition, solver=self.solver.replace(**solver_changes),
            trials=self.trials, seed=self.seed, sweep=self.sweep, outputs=self.outputs,
            tau_edge=self.tau_edge, assume_identity=self.assume_identity,
        )
        base.update(top)
        return ExperimentConfig(**base)


def trial_seed(base_seed: int, k: int) -> list:
    """Entropy for trial ``k``: streams never overlap across trials."""
    return [int(base_seed), int(k)]


def make_trial_instance(cfg: ExperimentConfig, k: int):
    g, s = cfg.graph, cfg.signal
    return make_instance(
        trial_seed(cfg.seed, k), kind=g["kind"], n=g["n"], m=s["m"], rank=s["rank"], sigma_n=s["sigma_n"],
        transition=cfg.transition, sigma=g["sigma"], threshold=g["threshold"], k=g["k"],
    )


def run_trial(cfg: ExperimentConfig, k: int) -> dict:
    """Generate, solve and score trial ``k``; failures are recorded, not raised."""
    out = {"trial": k, "seed": trial_seed(cfg.seed, k)}
    t0 = time.perf_counter()
    try:
        inst = make_trial_instance(cfg, k)
        r = TransitionMatrix.identity(inst.y.shape[0]) if cfg.assume_identity else inst.transition
        res = gl_lrss(inst.y, r, cfg.solver)
        rep = score(res.l_hat, inst.laplacian, res.x_hat, inst.x, tau_edge=cfg.tau_edge)
        out.update(
            metrics=rep.to_dict(),
            objective_trace=res.objective_trace,
            outer_iterations=res.outer_iterations_used,
            converged=res.converged,
        )
    except GLLRSSError as exc:
        log.warning("trial %d failed: %s", k, exc)
        out["error"] = f"{type(exc).__name__}: {exc}"
    out["seconds"] = time.perf_counter() - t0
    return out


def _run_trial_star(args):
    return run_trial(*args)


def aggregate(trials) -> dict:
    ok = [t["metrics"] for t in trials if "metrics" in t]
    agg = {"trials_ok": len(ok), "trials_failed": len(trials) - len(ok)}
    for name in METRIC_NAMES:
        vals = np.array([m[name] for m in ok if m.get(name) is not None], dtype=float)
        vals = vals[np.isfinite(vals)]
        agg[f"{name}_mean"] = float(np.mean(vals)) if vals.size else float("nan")
        agg[f"{name}_std"] = float(np.std(vals)) if vals.size else float("nan")
    outer = [t["outer_iterations"] for t in trials if "outer_iterations" in t]
    agg["outer_iterations_median"] = float(np.median(outer)) if outer else float("nan")
    return agg


@dataclass
class RunReport:
    trials: list
    aggregate: dict
    config: dict
    seconds: float
    version: str = __version__

    @property
    def ok(self) -> bool:
        return self.aggregate["trials_ok"] > 0

    def to_dict(self):
        return asdict(self)


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def run_synthetic(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    """Run ``cfg.trials`` independent trials and aggregate their scores.

    Trials may run in parallel processes; results are always ordered by
    trial index so the aggregate does not depend on scheduling.
    """
    t0 = time.perf_counter()
    trials = _map(_run_trial_star, [(cfg, k) for k in range(cfg.trials)], threads)
    return RunReport(trials, aggregate(trials), cfg.to_dict(), time.perf_counter() - t0)


def sweep_points(sweep: dict) -> list[dict]:
    names = sorted(sweep)
    grids = [_expand_values(n, sweep[n]) for n in names]
    return [dict(zip(names, vals)) for vals in itertools.product(*grids)]


def _selection_key(row):
    f = row["f_measure_mean"]
    g = row["gse_mean"]
    return (
        -(f if np.isfinite(f) else -np.inf),
        g if np.isfinite(g) else np.inf,
        tuple(row["params"][k] for k in sorted(row["params"])),
    )


@dataclass
class SweepResult:
    best: dict
    table: list
    config: dict
    version: str = __version__

    def to_dict(self):
        return asdict(self)

    def rows(self):
        """Flat rows (parameters, beta/alpha ratio, aggregate scores) for plotting."""
        out = []
        for row in self.table:
            flat = dict(row["params"])
            a = flat.get("alpha", self.config["solver"]["alpha"])
            b = flat.get("beta", self.config["solver"]["beta"])
            flat["beta_over_alpha"] = b / a
            flat.update({k: v for k, v in row.items() if k not in ("params", "trials")})
            out.append(flat)
        return out


def grid_search(cfg: ExperimentConfig, threads: int = 1, keep_trials: bool = False) -> SweepResult:
    """Evaluate every sweep point on the same trial seeds and pick the best.

    The winner maximizes mean F-measure; ties go to lower mean GSE, then to
    the lexicographically smaller parameter tuple. Points where every trial
    failed are kept in the table with ``failed=True`` but never selected.
    """
    if not cfg.sweep:
        raise ValidationError("grid search needs a sweep specification")
    table = []
    for params in sweep_points(cfg.sweep):
        rep = run_synthetic(cfg.replace(**params), threads)
        row = {"params": params, **rep.aggregate, "failed": not rep.ok}
        if keep_trials:
            row["trials"] = rep.trials
        table.append(row)
        log.info("sweep %s: F=%.4f", params, row["f_measure_mean"])
    candidates = [r for r in table if not r["failed"]]
    if not candidates:
        raise ValidationError("every sweep point failed")
    best = min(candidates, key=_selection_key)
    return SweepResult(dict(best["params"]), table, cfg.to_dict())


def estimate_transition_acf(y) -> TransitionMatrix:
    """Per-vertex lag-1 sample autocorrelation, clamped to ``[0, 1)``.

    Each row is mean-removed and the lag-1 autocovariance is divided by the
    lag-0 autocovariance (the biased estimator).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] < 3:
        raise ValidationError(f"need at least 3 time instants, got shape {y.shape}")
    d = y - y.mean(axis=1, keepdims=True)
    c0 = np.sum(d * d, axis=1)
    bad = np.flatnonzero(c0 <= 1e-12 * np.maximum(1.0, np.sum(y * y, axis=1)))
    if bad.size:
        raise ValidationError(f"row {int(bad[0])} has zero variance; lag-1 autocorrelation undefined")
    c1 = np.sum(d[:, 1:] * d[:, :-1], axis=1)
    coeffs = np.clip(c1 / c0, 0.0, np.nextafter(1.0, 0.0))
    return TransitionMatrix.diagonal(coeffs)


def resolve_transition(mode: str, y, loader=None) -> TransitionMatrix:
    """``identity``, ``acf`` or ``file:<path>`` (a vector or a square matrix)."""
    n = y.shape[0]
    if mode == "identity":
        return TransitionMatrix.identity(n)
    if mode == "acf":
        return estimate_transition_acf(y)
    if mode.startswith("file:"):
        from .io import load_matrix
        from .transition import as_transition

        a = load_matrix(mode[5:])
        if a.shape in ((1, n), (n, 1)):
            a = a.ravel()
        return as_transition(a, n)
    raise ValidationError(f"unknown transition mode {mode!r} (identity, acf or file:<path>)")


def learn(y, transition: str = "identity", cfg: SolverConfig | None = None):
    """Run the solver on user data and return ``(result, report dict)``."""
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=float)
    r = resolve_transition(transition, y)
    t0 = time.perf_counter()
    res = gl_lrss(y, r, cfg)
    check = validate_cgl(res.l_hat, tol=1e-6)
    flags = []
    if cfg.gamma == 0:
        flags.append("no_nuclear_norm")
    if not res.converged:
        flags.append("outer_not_converged")
    report = {
        "version": __version__,
        "shape": list(y.shape),
        "solver": cfg.to_dict(),
        "transition": {"mode": transition, "kind": r.kind, "coeffs": r.coeffs if r.kind == "diagonal" else None},
        "objective_trace": res.objective_trace,
        "outer_iterations": res.outer_iterations_used,
        "converged": res.converged,
        "cgl_valid": check.ok,
        "flags": flags,
        "seconds": time.perf_counter() - t0,
    }
    return res, report
