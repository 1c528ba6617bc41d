import csv
import json

import numpy as np
import pytest

from drsynth.abstraction import build_abstraction
from drsynth.benchmarks import builtin_benchmark, default_config
from drsynth.cli import EXIT_BELOW, EXIT_ERROR, EXIT_OK, main, summary_table
from drsynth.config import ConfigError, build_problem, load_config, parse_config
from drsynth.synthesis import value_iteration


def small_unicycle(**over):
    cfg = {"benchmark": "unicycle", "grid": {"counts": [7, 7]}, "horizon": 6,
           "validation": {"trials": 50, "save_trajectories": 3}}
    cfg.update(over)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration -----------------------------------------------------------

def test_minimal_builtin_config_is_valid():
    cfg = parse_config({"benchmark": "unicycle"})
    assert cfg.solver == "dual" and cfg.grid.counts == [21, 21]
    assert cfg.ambiguity.order == 2.0


def test_negative_epsilon_rejected():
    with pytest.raises(ConfigError, match="ambiguity.epsilon"):
        parse_config({"benchmark": "unicycle", "ambiguity": {"epsilon": -1e-3}})


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config({"benchmark": "unicycle", "colour": "red"})
    with pytest.raises(ConfigError, match="grid.cells"):
        parse_config({"benchmark": "unicycle", "grid": {"cells": 4}})


def test_infinite_horizon_default_tol():
    cfg = parse_config({"benchmark": "switched5", "horizon": "inf"})
    assert cfg.tol == 1e-6


def test_config_needs_exactly_one_system():
    base = default_config("switched5")
    with pytest.raises(ConfigError):
        parse_config({k: v for k, v in base.items() if k != "benchmark"})
    with pytest.raises(ConfigError):
        parse_config({**base, "system": {"modes": [{"A": [[1.0, 0.0], [0.0, 1.0]]}]}})
    with pytest.raises(ConfigError, match="unknown benchmark"):
        parse_config({"benchmark": "pendulum"})


def test_explicit_system_config():
    base = default_config("switched5")
    del base["benchmark"]
    base["system"] = {"modes": [{"A": [[0.9, 0.0], [0.0, 0.9]], "b": [0.1, 0.0]}]}
    pb = build_problem(parse_config(base))
    assert pb.system.n_modes == 1
    y = pb.system.step(np.array([[1.0, 1.0]]), np.array([0]), np.zeros((1, 2)))
    assert np.allclose(y, [[1.0, 0.9]])


def test_x0_dimension_checked():
    with pytest.raises(ConfigError, match="x0"):
        build_problem(parse_config({"benchmark": "unicycle", "x0": [0.1]}))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"benchmark": "nonlinear4"}))
    assert load_config(good).benchmark == "nonlinear4"


# -- built-in benchmarks -----------------------------------------------------

def test_switched5_a4_matrix():
    system, _ = builtin_benchmark("switched5")
    assert system.n_modes == 5
    assert np.array_equal(system.modes[3].A, [[1.0, 0.2], [-0.2, 1.0]])


def test_nonlinear4_mode1_drift():
    system, _ = builtin_benchmark("nonlinear4")
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(50, 2))
    y = system.step(x, np.zeros(50, dtype=int), np.zeros((50, 2)))
    drift = np.stack([0.5 + 0.2 * np.sin(x[:, 1]), 0.4 * np.cos(x[:, 0])], axis=1)
    assert y - x == pytest.approx(drift, abs=1e-12)


def test_unknown_builtin():
    with pytest.raises(Exception):
        builtin_benchmark("pendulum")


# -- run / main --------------------------------------------------------------

def test_target_trivial_exit_ok(tmp_path, capsys):
    path = write_cfg(tmp_path, small_unicycle(x0=[0.4, 0.4], p_th=1.0))
    assert main(["--config", path, "--out", str(tmp_path / "o")]) == EXIT_OK
    res = json.loads((tmp_path / "o" / "result.json").read_text())
    assert res["initial_state"]["p_lower"] == 1.0 and res["satisfied"]
    assert res["validation"]["probability"] == 1.0
    out = capsys.readouterr().out
    assert "|Q|" in out and "e_avg" in out and "synthesis s" in out


def test_unreachable_threshold_exit_below(tmp_path):
    path = write_cfg(tmp_path, small_unicycle(x0=[0.4, 0.4], p_th=1.01))
    assert main(["--config", path, "--out", str(tmp_path / "o"), "--no-validate"]) == EXIT_BELOW
    res = json.loads((tmp_path / "o" / "result.json").read_text())
    assert res["exit_status"] == EXIT_BELOW and not res["satisfied"]
    assert "validation" not in res
    assert not (tmp_path / "o" / "trajectories.csv").exists()


@pytest.mark.parametrize("args", [["--epsilon", "-0.1"], ["--horizon", "abc"], ["--threads", "0"],
                                  ["--horizon", "-3"]])
def test_bad_overrides_exit_error(tmp_path, capsys, args):
    path = write_cfg(tmp_path, small_unicycle())
    assert main(["--config", path, "--out", str(tmp_path / "o")] + args) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_bad_files_exit_error(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_ERROR
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert main(["--config", str(bad), "--out", str(tmp_path)]) == EXIT_ERROR
    path = write_cfg(tmp_path, {"benchmark": "unicycle", "solver": "magic"})
    assert main(["--config", path, "--out", str(tmp_path)]) == EXIT_ERROR
    assert "solver" in capsys.readouterr().err


def test_output_formats_and_round_trip(tmp_path):
    cfg = small_unicycle(x0=[0.0625, 0.0625])
    path = write_cfg(tmp_path, cfg)
    assert main(["--config", path, "--out", str(tmp_path / "o"), "--timings"]) in (EXIT_OK, EXIT_BELOW)
    out = tmp_path / "o"
    res = json.loads((out / "result.json").read_text())

    # the echoed config re-validates to the same experiment
    config = parse_config(res["config"])
    assert config == parse_config(cfg)

    pb = build_problem(config)
    ab = build_abstraction(pb.system, pb.partition, pb.ambiguity)
    direct = value_iteration(ab, pb.horizon)

    rows = read_csv(out / "values.csv")
    assert rows[0] == ["state", "cell_lower_0", "cell_lower_1", "cell_upper_0", "cell_upper_1",
                       "kind", "p_lower", "p_upper"]
    assert len(rows) == 1 + ab.n_states
    lower = np.array([float(r[-2]) for r in rows[1:]])
    upper = np.array([float(r[-1]) for r in rows[1:]])
    # 17 significant digits reload to the exact doubles
    assert np.array_equal(lower, direct.lower) and np.array_equal(upper, direct.upper)
    assert rows[-1][1:5] == ["", "", "", ""] and rows[-1][5] == "unsafe"
    kinds = [r[5] for r in rows[1:-1]]
    assert kinds.count("target") == len(pb.partition.target_ids)
    assert res["e_avg"] == pytest.approx(direct.e_avg, abs=1e-15)
    with open(out / "values.csv", "rb") as fh:
        assert fh.readline().endswith(b"\r\n")

    strat = read_csv(out / "strategy.csv")
    assert strat[0] == ["state", "step", "action"]
    assert len(strat) == 1 + 6 * ab.n_states
    table = np.zeros((6, ab.n_states), dtype=int)
    for q, k, a in strat[1:]:
        table[int(k), int(q)] = int(a)
    assert np.array_equal(table, direct.strategy.table)

    traj = read_csv(out / "trajectories.csv")
    assert traj[0] == ["trial", "step", "x_0", "x_1", "action", "outcome"]
    assert {r[0] for r in traj[1:]} == {"0", "1", "2"}

    timings = json.loads((out / "timings.json").read_text())
    assert timings["synthesis_seconds"] >= 0 and len(timings["per_sweep_seconds"]) > 0
    assert "timings" not in json.dumps(res)


def test_stationary_strategy_file(tmp_path):
    cfg = {"benchmark": "switched5", "grid": {"counts": [6, 6]}, "horizon": "inf"}
    path = write_cfg(tmp_path, cfg)
    code = main(["--config", path, "--out", str(tmp_path / "o"), "--no-validate"])
    assert code in (EXIT_OK, EXIT_BELOW)
    strat = read_csv(tmp_path / "o" / "strategy.csv")
    assert strat[0] == ["state", "action"]
    pb = build_problem(parse_config(cfg))
    assert len(strat) == 1 + pb.partition.n_states
    assert pb.partition.n_cells < 36  # one cell sits under the obstacle


def test_lp_and_dual_outputs_agree(tmp_path):
    cfg = {"benchmark": "switched5", "grid": {"counts": [6, 6]}, "horizon": 5}
    path = write_cfg(tmp_path, cfg)
    vals = {}
    for solver in ("dual", "lp"):
        out = tmp_path / solver
        main(["--config", path, "--out", str(out), "--solver", solver, "--no-validate"])
        rows = read_csv(out / "values.csv")[1:]
        vals[solver] = np.array([[float(r[-2]), float(r[-1])] for r in rows])
        assert json.loads((out / "result.json").read_text())["config"]["solver"] == solver
    assert np.abs(vals["dual"] - vals["lp"]).max() <= 1e-5


def test_overrides_applied(tmp_path):
    path = write_cfg(tmp_path, small_unicycle())
    main(["--config", path, "--out", str(tmp_path / "o"), "--epsilon", "0.01", "--horizon", "3",
          "--seed", "9", "--no-validate"])
    res = json.loads((tmp_path / "o" / "result.json").read_text())
    assert res["config"]["ambiguity"]["epsilon"] == 0.01
    assert res["config"]["horizon"] == 3 and res["config"]["seed"] == 9
    assert res["budget"] == pytest.approx(1e-4)


def test_repeat_runs_identical(tmp_path):
    path = write_cfg(tmp_path, small_unicycle())
    for d in ("a", "b"):
        main(["--config", path, "--out", str(tmp_path / d)])
    for name in ("result.json", "values.csv", "strategy.csv", "trajectories.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_summary_table_layout():
    text = summary_table([(442, 5e-3, 0.3663, "dual", 1.2, 38.7)])
    head, rule, row = text.splitlines()
    assert head.split() == ["|Q|", "eps", "e_avg", "solver", "abstraction", "s", "synthesis", "s"]
    assert row.split() == ["442", "0.005", "0.3663", "dual", "1.20", "38.70"]
    assert len(head) == len(rule) == len(row)
