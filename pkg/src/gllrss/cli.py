"""Command-line entry point: ``gllrss {synth,sweep,learn,metrics,gen}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import DecompositionError, GenerationError, ParseError, SolverError, ValidationError
from .experiments import ExperimentConfig, grid_search, learn, make_trial_instance, run_synthetic
from .io import load_matrix, save_laplacian, save_matrix, save_report
from .metrics import DEFAULT_TAU_EDGE, score
from .synth import TransitionSpec

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("gllrss")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p, synthetic=True):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--tau-edge", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    if synthetic:
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--transition", help="identity, diagonal (Gaussian coefficients) or file:<path>")
        p.add_argument("--threads", type=int, default=1, help="parallel worker processes")


def build_parser():
    parser = _Parser(prog="gllrss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_common(sub.add_parser("synth", help="run synthetic Monte Carlo trials"))
    _add_common(sub.add_parser("sweep", help="grid-search hyperparameters on synthetic trials"))

    p = sub.add_parser("learn", help="learn a graph from a signal matrix file")
    p.add_argument("signals", help="CSV file, one row per vertex")
    _add_common(p, synthetic=False)
    p.add_argument("--transition", default="identity", help="identity, acf or file:<path>")

    p = sub.add_parser("metrics", help="score a learned Laplacian against a reference")
    p.add_argument("learned")
    p.add_argument("truth")
    p.add_argument("--tau-edge", type=float, default=DEFAULT_TAU_EDGE)

    p = sub.add_parser("gen", help="write a synthetic dataset to disk")
    _add_common(p)
    return parser


def _load_config(args, synthetic=True) -> ExperimentConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{args.config}: {exc.msg}", exc.lineno, exc.colno) from None
        cfg = ExperimentConfig.from_dict(raw)
    else:
        cfg = ExperimentConfig()
    changes = {k: getattr(args, k) for k in ("alpha", "beta", "gamma", "rho", "seed", "trials") if getattr(args, k, None) is not None}
    if getattr(args, "tau_edge", None) is not None:
        changes["tau_edge"] = args.tau_edge
    if getattr(args, "out", None):
        changes["outputs"] = args.out
    cfg = cfg.replace(**changes)
    mode = getattr(args, "transition", None) if synthetic else None
    if mode:
        if mode == "identity":
            cfg.transition = TransitionSpec()
        elif mode == "diagonal":
            cfg.transition = TransitionSpec("diagonal_gaussian")
        elif mode.startswith("file:"):
            coeffs = load_matrix(mode[5:]).ravel()
            cfg.transition = TransitionSpec("explicit", coeffs=tuple(coeffs))
        else:
            raise UsageError(f"unknown --transition {mode!r}")
    return cfg


def _outdir(path, default):
    out = Path(path or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    cfg = _load_config(args)
    rep = run_synthetic(cfg, threads=args.threads)
    out = _outdir(cfg.outputs, "gllrss-synth")
    save_report(rep, out / "report.json")
    agg = rep.aggregate
    print(f"F={agg['f_measure_mean']:.4f} P={agg['precision_mean']:.4f} R={agg['recall_mean']:.4f} "
          f"NMI={agg['nmi_mean']:.4f} GSE={agg['gse_mean']:.4f} LCE={agg['lce_mean']:.4f} "
          f"ok={agg['trials_ok']}/{len(rep.trials)}")
    if not rep.ok:
        print("all trials failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    if not cfg.sweep:
        cfg = cfg.replace(sweep={"alpha": "default", "beta": "default", "gamma": "default"})
    res = grid_search(cfg, threads=args.threads)
    out = _outdir(cfg.outputs, "gllrss-sweep")
    save_report(res, out / "sweep.json")
    rows = res.rows()
    cols = list(rows[0])
    with open(out / "sweep.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % row[c] if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
    print("best:", json.dumps(res.best))
    return EXIT_OK


def cmd_learn(args):
    cfg = _load_config(args, synthetic=False)
    y = load_matrix(args.signals)
    res, report = learn(y, args.transition, cfg.solver)
    out = _outdir(args.out, "gllrss-learn")
    save_laplacian(res.l_hat, out / "laplacian.csv", tau_edge=cfg.tau_edge)
    save_matrix(res.x_hat, out / "x_hat.csv")
    report["signals"] = str(args.signals)
    save_report(report, out / "report.json")
    print(f"wrote {out}/laplacian.csv, x_hat.csv, report.json (outer iterations {res.outer_iterations_used})")
    return EXIT_OK


def cmd_metrics(args):
    rep = score(load_matrix(args.learned), load_matrix(args.truth), tau_edge=args.tau_edge)
    print(json.dumps({k: v for k, v in rep.to_dict().items() if v is not None}, indent=2))
    return EXIT_OK


def cmd_gen(args):
    cfg = _load_config(args)
    out = _outdir(cfg.outputs, "gllrss-data")
    for k in range(cfg.trials):
        inst = make_trial_instance(cfg, k)
        d = out / f"trial{k:03d}"
        d.mkdir(exist_ok=True)
        save_matrix(inst.y, d / "y.csv")
        save_matrix(inst.x, d / "x.csv")
        save_laplacian(inst.laplacian, d / "laplacian.csv")
        save_matrix(np.diag(inst.transition.matrix()), d / "transition.csv")
    save_report(cfg, out / "config.json")
    print(f"wrote {cfg.trials} dataset(s) to {out}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "sweep": cmd_sweep, "learn": cmd_learn, "metrics": cmd_metrics, "gen": cmd_gen}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, DecompositionError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParseError, ValidationError, GenerationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
