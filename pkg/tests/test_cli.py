import json

import numpy as np
import pytest

from gllrss.cli import main
from gllrss.exceptions import ParseError, ValidationError
from gllrss.experiments import (
    ExperimentConfig,
    estimate_transition_acf,
    exponent_grid,
    grid_search,
    run_synthetic,
)
from gllrss.graph import validate_cgl
from gllrss.io import load_matrix, parse_matrix, save_laplacian, save_matrix

TINY = {"graph": {"n": 8}, "signal": {"m": 20}, "trials": 1, "seed": 11}


def test_matrix_round_trip_bit_identical(tmp_path):
    a = np.random.default_rng(0).normal(size=(6, 9)) * 10.0 ** np.arange(-4, 5)
    save_matrix(a, tmp_path / "a.csv")
    np.testing.assert_array_equal(load_matrix(tmp_path / "a.csv"), a)


def test_parse_small_and_comment():
    np.testing.assert_array_equal(parse_matrix("1,2\n3,4"), [[1, 2], [3, 4]])
    np.testing.assert_array_equal(parse_matrix("# header\n1,2\n3,4\n"), [[1, 2], [3, 4]])


def test_parse_errors_carry_location():
    with pytest.raises(ParseError, match="line 2") as info:
        parse_matrix("1,2\n3")
    assert info.value.line == 2
    with pytest.raises(ParseError) as info:
        parse_matrix("1,2\n3,x")
    assert (info.value.line, info.value.column) == (2, 2)


def test_save_laplacian_edge_list(tmp_path):
    l = np.array([[1.5, -1.5, 0], [-1.5, 2, -0.5], [0, -0.5, 0.5]])
    dense, edges = save_laplacian(l, tmp_path / "l.csv")
    np.testing.assert_array_equal(load_matrix(dense), l)
    assert edges.read_text().splitlines() == ["0,1,1.5", "1,2,0.5"]


def test_acf_ar1_and_white_noise():
    rng = np.random.default_rng(1)
    m = 5000
    ar = np.empty(m)
    ar[0] = rng.normal()
    for t in range(1, m):
        ar[t] = 0.8 * ar[t - 1] + rng.normal()
    c = estimate_transition_acf(np.vstack([ar, rng.normal(size=m)])).coeffs
    assert 0.75 <= c[0] <= 0.85
    assert 0 <= c[1] <= 0.05


def test_acf_rejects_constant_row():
    y = np.vstack([np.arange(10.0), np.full(10, 3.0)])
    with pytest.raises(ValidationError, match="row 1"):
        estimate_transition_acf(y)


def test_exponent_grid_for_gamma_has_13_points():
    g = exponent_grid(2, 0, 5, 0.4)
    assert len(g) == 13
    assert g[0] == 1 and g[-1] == pytest.approx(2**4.8)


def test_run_synthetic_tiny_and_deterministic():
    cfg = ExperimentConfig.from_dict(TINY)
    a = run_synthetic(cfg).to_dict()
    b = run_synthetic(cfg).to_dict()
    assert len(a["trials"]) == 1
    assert set(a["trials"][0]["metrics"]) >= {"precision", "recall", "f_measure", "nmi", "gse", "lce"}

    def strip(rep):
        rep = dict(rep, seconds=None)
        rep["trials"] = [dict(t, seconds=None) for t in rep["trials"]]
        return json.dumps(rep, sort_keys=True, default=str)

    assert strip(a) == strip(b)


def test_aggregate_is_mean_of_trials():
    rep = run_synthetic(ExperimentConfig.from_dict(dict(TINY, trials=3)))
    fs = [t["metrics"]["f_measure"] for t in rep.trials]
    assert abs(rep.aggregate["f_measure_mean"] - np.mean(fs)) <= 1e-12


def test_grid_search_single_point_and_dominance():
    cfg = ExperimentConfig.from_dict(dict(TINY, sweep={"gamma": [2.0]}))
    assert grid_search(cfg).best == {"gamma": 2.0}
    cfg = ExperimentConfig.from_dict(dict(TINY, trials=2, sweep={"alpha": [0.1, 100.0]}))
    res = grid_search(cfg, keep_trials=True)
    good, bad = res.table
    assert all(
        g["metrics"]["f_measure"] > b["metrics"]["f_measure"] for g, b in zip(good["trials"], bad["trials"])
    )
    assert res.best == {"alpha": 0.1}


def test_config_rejects_empty_sweep_and_bad_keys():
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict(dict(TINY, sweep={"gamma": []}))
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict(dict(TINY, colour="red"))


def test_cli_gen_learn_metrics(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen", "--trials", "1", "--seed", "2", "--out", str(data)]) == 0
    y = data / "trial000" / "y.csv"
    out = tmp_path / "learn"
    assert main(["learn", str(y), "--transition", "identity", "--gamma", "0", "--out", str(out)]) == 0
    l = load_matrix(out / "laplacian.csv")
    assert validate_cgl(l, tol=1e-6).ok
    report = json.loads((out / "report.json").read_text())
    assert "no_nuclear_norm" in report["flags"]
    capsys.readouterr()
    assert main(["metrics", str(out / "laplacian.csv"), str(data / "trial000" / "laplacian.csv")]) == 0
    assert "f_measure" in json.loads(capsys.readouterr().out)


def test_cli_learn_acf_records_coefficients(tmp_path):
    rng = np.random.default_rng(3)
    y = np.zeros((5, 200))
    for t in range(1, 200):
        y[:, t] = 0.6 * y[:, t - 1] + rng.normal(size=5)
    save_matrix(y, tmp_path / "y.csv")
    assert main(["learn", str(tmp_path / "y.csv"), "--transition", "acf", "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    c = report["transition"]["coeffs"]
    assert len(c) == 5 and all(0.4 < v < 0.8 for v in c)


def test_cli_synth_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    assert rep["config"]["graph"]["n"] == 8 and len(rep["trials"]) == 1


def test_cli_exit_codes(tmp_path):
    assert main(["nonsense"]) == 1
    assert main(["learn", str(tmp_path / "missing.csv")]) == 2
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    assert main(["learn", str(tmp_path / "bad.csv")]) == 2
    (tmp_path / "y.csv").write_text("1,2,3\n4,5,6\n")
    assert main(["learn", str(tmp_path / "y.csv"), "--transition", "sideways"]) == 2


def test_cli_solver_failure_exit_code(tmp_path, monkeypatch):
    from gllrss import experiments
    from gllrss.exceptions import SolverError

    def boom(*args, **kwargs):
        raise SolverError("forced")

    monkeypatch.setattr(experiments, "gl_lrss", boom)
    (tmp_path / "y.csv").write_text("1,2,3\n4,5,7\n")
    assert main(["learn", str(tmp_path / "y.csv")]) == 3
    assert main(["synth", "--config", str(_write(tmp_path, TINY)), "--out", str(tmp_path / "s")]) == 3


def test_readme_style_config_loads(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "signal": {"rank": 3, "transition": {"kind": "diagonal_gaussian", "mean": 0.5, "std": 0.25}},
        "solver": {"gamma": 0.0},
        "sweep": {"alpha": [0.03, 0.1], "gamma": {"base": 2, "start": 0, "stop": 5, "step": 0.4, "extra": [0]}},
    })
    assert cfg.transition.kind == "diagonal_gaussian"
    from gllrss.experiments import sweep_points
    assert len(sweep_points(cfg.sweep)) == 2 * 14


def _write(tmp_path, d):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p
