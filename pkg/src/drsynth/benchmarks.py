"""Built-in benchmark systems and their default (desk-scale) configurations."""

from __future__ import annotations

import copy

import numpy as np

from .model import AffineMode, InputError, SeparableTrigMode, SwitchedSystem

BENCHMARKS = ("unicycle", "nonlinear4", "switched5")

SWITCHED5_MATRICES = (
    [[0.79, 0.035], [0.0, 0.825]],
    [[0.79, 0.175], [0.0, 0.825]],
    [[0.79, 0.0], [0.175, 0.825]],
    [[1.0, 0.2], [-0.2, 1.0]],
    [[1.0, -0.2], [0.2, 1.0]],
)


def unicycle_system(speed: float = 1.0, dt: float = 1.0, n_headings: int = 8) -> SwitchedSystem:
    """Fixed-speed unicycle, ``x+ = x + dt * (speed * [cos u, sin u] + v)``.

    The noise enters scaled by ``dt``; with ``dt = 1`` it is additive as is.
    """
    if dt != 1.0:
        raise InputError("only dt = 1 keeps the noise additive and unscaled")
    heads = 2.0 * np.pi * np.arange(n_headings) / n_headings
    modes = [AffineMode(np.eye(2), dt * speed * np.array([np.cos(h), np.sin(h)])) for h in heads]
    return SwitchedSystem(tuple(modes), tuple(f"heading {k}/{n_headings}" for k in range(n_headings)))


def nonlinear4_system() -> SwitchedSystem:
    """``x+ = x + f_u(x) + v`` with four bounded trigonometric drifts."""
    terms = (
        [(0.5, 0.2, "sin", 1), (0.0, 0.4, "cos", 0)],
        [(-0.5, 0.2, "sin", 1), (0.0, 0.4, "cos", 0)],
        [(0.0, 0.4, "cos", 1), (0.5, 0.2, "sin", 0)],
        [(0.0, 0.4, "cos", 1), (-0.5, 0.2, "sin", 0)],
    )
    return SwitchedSystem(tuple(SeparableTrigMode(t) for t in terms), ("u1", "u2", "u3", "u4"))


def switched5_system() -> SwitchedSystem:
    return SwitchedSystem(tuple(AffineMode(A) for A in SWITCHED5_MATRICES),
                          tuple(f"A{k + 1}" for k in range(5)))


# Desk-scale defaults.  Cell widths are chosen so that one step moves a few
# cells and the noise spreads over neighbouring cells, as in the full-size
# studies, while keeping the state count in the hundreds to low thousands.
_DEFAULTS = {
    "unicycle": {
        "benchmark": "unicycle",
        "benchmark_params": {"speed": 0.075},
        "grid": {
            "counts": [21, 21],
            "safe_box": {"lower": [0.0, 0.0], "upper": [0.525, 0.525]},
            "target_boxes": [{"lower": [0.325, 0.325], "upper": [0.475, 0.475]}],
            "obstacle_boxes": [{"lower": [0.175, 0.15], "upper": [0.25, 0.3]},
                               {"lower": [0.35, 0.15], "upper": [0.475, 0.2]}],
        },
        "ambiguity": {
            "nominal": {"type": "empirical",
                        "mixture": {"centers": [[-0.01, 0.0], [0.01, 0.0]],
                                    "variance": [2.5e-5, 2.5e-5], "samples": 10, "seed": 7}},
            "epsilon": 5e-3,
            "order": 2.0,
            "support": {"lower": [-0.1, -0.1], "upper": [0.1, 0.1]},
        },
        "horizon": 40,
        "p_th": 0.1,
        "x0": [0.0625, 0.0625],
        "solver": "dual",
        "seed": 0,
    },
    "nonlinear4": {
        "benchmark": "nonlinear4",
        "grid": {
            "counts": [40, 40],
            "safe_box": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0]},
            "target_boxes": [{"lower": [0.6, 0.4], "upper": [1.8, 1.6]}],
            "obstacle_boxes": [{"lower": [-0.4, -0.8], "upper": [0.4, 0.8]},
                               {"lower": [0.8, -2.0], "upper": [1.2, -0.8]}],
        },
        "ambiguity": {
            "nominal": {"type": "empirical",
                        "mixture": {"centers": [[-0.05, 0.0], [0.05, 0.0]],
                                    "variance": [4e-4, 4e-4], "samples": 20, "seed": 11}},
            "epsilon": 5e-2,
            "order": 2.0,
            "support": {"lower": [-0.2, -0.2], "upper": [0.2, 0.2]},
        },
        "horizon": 15,
        "p_th": 0.5,
        "x0": [0.45, -0.85],
        "solver": "dual",
        "seed": 0,
    },
    "switched5": {
        "benchmark": "switched5",
        "grid": {
            "counts": [40, 40],
            "safe_box": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0]},
            "target_boxes": [{"lower": [-1.0, -1.0], "upper": [1.0, 1.0]}],
            "obstacle_boxes": [{"lower": [1.2, 0.4], "upper": [1.6, 1.2]}],
        },
        "ambiguity": {
            "nominal": {"type": "gaussian", "mean": [0.0, 0.0], "variance": [9e-4, 9e-4],
                        "truncation": 4.0},
            "epsilon": 0.0127,
            "order": 2.0,
            "support": {"lower": [-0.14, -0.14], "upper": [0.14, 0.14]},
        },
        "horizon": "inf",
        "p_th": 0.5,
        "x0": [1.5, -1.5],
        "solver": "dual",
        "seed": 0,
    },
}


def default_config(name: str) -> dict:
    """Default configuration dictionary of a built-in benchmark."""
    if name not in _DEFAULTS:
        raise InputError(f"unknown benchmark {name!r}; expected one of {BENCHMARKS}")
    return copy.deepcopy(_DEFAULTS[name])


def benchmark_system(name: str, params: dict | None = None) -> SwitchedSystem:
    params = dict(params or {})
    if name == "unicycle":
        allowed = {"speed", "dt"}
        if set(params) - allowed:
            raise InputError(f"unknown unicycle parameters {sorted(set(params) - allowed)}")
        return unicycle_system(**params)
    if params:
        raise InputError(f"benchmark {name!r} takes no parameters")
    if name == "nonlinear4":
        return nonlinear4_system()
    if name == "switched5":
        return switched5_system()
    raise InputError(f"unknown benchmark {name!r}; expected one of {BENCHMARKS}")


def builtin_benchmark(name: str):
    """``(system, default config dict)`` for a built-in benchmark."""
    cfg = default_config(name)
    return benchmark_system(name, cfg.get("benchmark_params")), cfg
