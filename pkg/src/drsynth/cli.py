"""``synthesize`` command: abstraction, synthesis and validation from a JSON config."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .abstraction import build_abstraction
from .config import Config, ConfigError, build_problem, load_config, parse_config
from .model import InputError, MarkovianStrategy, ModelError
from .synthesis import refine, value_iteration
from .validation import make_test_distribution, simulate

EXIT_OK, EXIT_ERROR, EXIT_BELOW = 0, 1, 2


def _num(x) -> str:
    return "%.17g" % float(x)


def _writer(fh):
    return csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)


def write_values(path, partition, lower, upper):
    n = partition.dim
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["state"] + [f"cell_lower_{d}" for d in range(n)]
                   + [f"cell_upper_{d}" for d in range(n)] + ["kind", "p_lower", "p_upper"])
        for q in range(partition.n_states):
            if q == partition.unsafe_id:
                bounds, kind = [""] * (2 * n), "unsafe"
            else:
                bounds = [_num(v) for v in partition.lower[q]] + [_num(v) for v in partition.upper[q]]
                kind = "target" if partition.is_target[q] else "safe"
            w.writerow([q] + bounds + [kind, _num(lower[q]), _num(upper[q])])


def write_strategy(path, strategy):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        if isinstance(strategy, MarkovianStrategy):
            w.writerow(["state", "step", "action"])
            for k in range(strategy.horizon):
                for q, a in enumerate(strategy.table[k]):
                    w.writerow([q, k, int(a)])
        else:
            w.writerow(["state", "action"])
            for q, a in enumerate(strategy.table):
                w.writerow([q, int(a)])


def write_trajectories(path, trajectories, dim):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["trial", "step"] + [f"x_{d}" for d in range(dim)] + ["action", "outcome"])
        for t, tr in enumerate(trajectories):
            for k, x in enumerate(tr.states):
                a = tr.actions[k] if k < len(tr.actions) else ""
                w.writerow([t, k] + [_num(v) for v in x] + [a, tr.outcome])


def summary_table(rows) -> str:
    head = ["|Q|", "eps", "e_avg", "solver", "abstraction s", "synthesis s"]
    cells = [head] + [[str(r[0]), "%.4g" % r[1], "%.4f" % r[2], r[3], "%.2f" % r[4], "%.2f" % r[5]]
                      for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(head))]
    line = lambda c: "  ".join(s.rjust(w) for s, w in zip(c, widths))  # noqa: E731
    return "\n".join([line(cells[0]), "  ".join("-" * w for w in widths)]
                     + [line(c) for c in cells[1:]])


def run(config: Config, out_dir, threads: int = 1, write_timings: bool = False,
        validate: bool = True, stream=None) -> int:
    """Run one experiment and write its outputs; returns the exit code."""
    stream = sys.stdout if stream is None else stream
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(config)
    p = problem.partition
    t0 = time.perf_counter()
    abst = build_abstraction(problem.system, p, problem.ambiguity)
    t_abs = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = value_iteration(abst, problem.horizon, config.tol, config.solver, config.tol_pos,
                          config.max_iterations, config.dual_tol, threads)
    t_syn = time.perf_counter() - t0

    x0 = np.array(config.x0, dtype=float)
    q0 = int(p.locate(x0))
    lo0, hi0 = float(res.lower[q0]), float(res.upper[q0])
    status = EXIT_OK if lo0 >= config.p_th else EXIT_BELOW

    result = {
        "config": config.model_dump(mode="json"),
        "n_states": int(abst.n_states),
        "n_actions": int(abst.n_actions),
        "budget": float(abst.budget),
        "e_avg": float(res.e_avg),
        "iterations": int(res.iterations),
        "lower_iterations": int(res.info.get("lower_iterations", 0)),
        "upper_iterations": int(res.info.get("upper_iterations", 0)),
        "initial_state": {"x0": [float(v) for v in x0], "state": q0, "p_lower": lo0,
                          "p_upper": hi0},
        "p_th": float(config.p_th),
        "satisfied": status == EXIT_OK,
        "exit_status": status,
    }
    trajectories = []
    if validate:
        vc = config.validation
        sampler = make_test_distribution(problem.ambiguity, vc.sampler, vc.direction)
        sim = simulate(problem.system, p, refine(res.strategy, p), x0, problem.horizon,
                       vc.trials, sampler, seed=config.seed, max_steps=vc.max_steps,
                       record=vc.save_trajectories)
        trajectories = sim.trajectories
        result["validation"] = {"sampler": sampler.mode, "distance": float(sampler.distance),
                                "trials": sim.trials, "successes": sim.successes,
                                "probability": sim.probability, "ci99": list(sim.ci)}
    (out / "result.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    write_values(out / "values.csv", p, res.lower, res.upper)
    write_strategy(out / "strategy.csv", res.strategy)
    if validate:
        write_trajectories(out / "trajectories.csv", trajectories, p.dim)
    if write_timings:
        timings = {"abstraction_seconds": t_abs, "synthesis_seconds": t_syn,
                   "per_sweep_seconds": list(res.per_sweep_times)}
        (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    print(summary_table([(abst.n_states, problem.ambiguity.radius, res.e_avg, config.solver,
                          t_abs, t_syn)]), file=stream)
    print(f"x0 -> state {q0}: p_lower = {lo0:.6f}, p_upper = {hi0:.6f}, "
          f"threshold {config.p_th:g}: {'met' if status == EXIT_OK else 'not met'}", file=stream)
    return status


def _parser():
    ap = argparse.ArgumentParser(
        prog="synthesize",
        description="Distributionally robust strategy synthesis for switched stochastic systems.")
    ap.add_argument("--config", required=True, help="JSON experiment configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--solver", choices=["dual", "lp", "imdp-baseline"])
    ap.add_argument("--horizon", help="integer K or 'inf'")
    ap.add_argument("--epsilon", type=float, help="Wasserstein radius")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--timings", action="store_true",
                    help="also write timings.json (wall-clock, not reproducible)")
    ap.add_argument("--no-validate", action="store_true", help="skip the Monte Carlo check")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text())
        if args.solver is not None:
            raw["solver"] = args.solver
        if args.horizon is not None:
            raw["horizon"] = "inf" if args.horizon == "inf" else _int_arg(args.horizon)
        if args.epsilon is not None:
            raw.setdefault("ambiguity", {})["epsilon"] = args.epsilon
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.threads < 1:
            raise InputError("--threads must be >= 1")
        config = parse_config(raw)
        return run(config, args.out, args.threads, args.timings, not args.no_validate)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
    except json.JSONDecodeError as err:
        print(f"error: config is not valid JSON: {err}", file=sys.stderr)
    except (ConfigError, InputError, ModelError) as err:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_ERROR


def _int_arg(s):
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"invalid configuration:\n  horizon: expected an integer or 'inf', "
                          f"got {s!r}") from None


__all__ = ["main", "run", "load_config", "summary_table"]
