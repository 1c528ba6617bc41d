"""Robust dynamic programming, strategy extraction and refinement."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .inner import RowSet
from .model import (InputError, MarkovianStrategy, ModelError, RobustAbstraction, Row,
                    StationaryStrategy)

SOLVERS = ("dual", "lp", "imdp-baseline")
DEFAULT_TOL = 1e-6
DEFAULT_TOL_POS = 1e-9
DEFAULT_MAX_ITER = 100_000


class TimeLimitError(ModelError):
    """Synthesis stopped because it ran past its wall-clock limit."""

    def __init__(self, elapsed: float, limit: float):
        super().__init__(f"synthesis exceeded its time limit: {elapsed:.3g} s > {limit:.3g} s")
        self.elapsed = elapsed
        self.limit = limit


class ConvergenceError(ModelError):
    """Value iteration hit its iteration cap."""


@dataclass
class SynthesisResult:
    lower: np.ndarray
    upper: np.ndarray
    strategy: object
    e_avg: float
    iterations: int
    per_sweep_times: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def e_avg(lower, upper) -> float:
    """Mean gap between the upper and lower bound vectors."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape:
        raise InputError("bound vectors must have equal length")
    return float(np.mean(upper - lower))


class Backup:
    """Bellman backups over the non-trivial states of an abstraction.

    Target states are fixed at 1 and ``q_u`` at 0; every other safe cell is
    an active state whose rows are solved in batch.
    """

    def __init__(self, abstraction: RobustAbstraction, solver: str = "dual",
                 dual_tol: float = 1e-8, threads: int = 1):
        if solver not in ("dual", "lp", "imdp"):
            raise InputError(f"unknown inner solver {solver!r}")
        self.abstraction = abstraction
        self.solver = solver
        self.dual_tol = dual_tol
        self.threads = threads
        p = abstraction.partition
        self.m = abstraction.n_actions
        self.N = abstraction.n_states
        fixed = np.zeros(self.N, dtype=bool)
        fixed[p.target_ids] = True
        fixed[p.unsafe_id] = True
        self.active = np.flatnonzero(~fixed)
        self.rowset = RowSet(abstraction, [(q, a) for q in self.active for a in range(self.m)])
        self.indicator = np.zeros(self.N)
        self.indicator[p.target_ids] = 1.0

    def _solve(self, values, maximize, rows=None):
        rs = self.rowset
        if self.solver == "dual":
            return rs.solve_dual(values, maximize, self.dual_tol, self.threads, rows)
        if self.solver == "lp":
            return rs.solve_lp(values, maximize, rows)
        return rs.solve_imdp(values, maximize, rows)

    def q_values(self, values) -> np.ndarray:
        """Worst-case expectation for every active state and action."""
        return self._solve(values, False).reshape(len(self.active), self.m)

    def embed(self, active_values) -> np.ndarray:
        out = self.indicator.copy()
        out[self.active] = active_values
        return out

    def rows_for(self, actions) -> np.ndarray:
        return np.arange(len(self.active)) * self.m + np.asarray(actions)[self.active]

    def upper(self, values, actions) -> np.ndarray:
        return self.embed(self._solve(values, True, self.rows_for(actions)))

    def lower_fixed(self, values, actions) -> np.ndarray:
        return self.embed(self._solve(values, False, self.rows_for(actions)))


def argmax_first(Q, tol=DEFAULT_TOL_POS):
    """Row-wise argmax, preferring the smallest index within ``tol`` of the max."""
    best = Q.max(axis=1, keepdims=True)
    return np.argmax(Q >= best - tol, axis=1)


def bellman_lower(abstraction, value, solver="dual", tol_pos=DEFAULT_TOL_POS, backup=None):
    """One robust lower backup; returns ``(new value, argmax actions)``.

    Argmax ties are broken by the smallest action index; actions of target
    states and ``q_u`` are 0.
    """
    b = backup or Backup(abstraction, solver)
    Q = b.q_values(value)
    acts = np.zeros(b.N, dtype=np.int64)
    if len(b.active):
        acts[b.active] = argmax_first(Q, tol_pos)
        new = b.embed(Q.max(axis=1))
    else:
        new = b.indicator.copy()
    return new, acts


def bellman_upper(abstraction, value, strategy, solver="dual", k: int = 0, backup=None):
    """One best-case backup under ``strategy`` at time step ``k``."""
    b = backup or Backup(abstraction, solver)
    acts = _table_at(strategy, k)
    if not len(b.active):
        return b.indicator.copy()
    return b.upper(value, acts)


def _table_at(strategy, k):
    if isinstance(strategy, MarkovianStrategy):
        if not 0 <= k < strategy.horizon:
            raise InputError(f"time step {k} outside the strategy horizon")
        return strategy.table[k]
    return strategy.table


def extract_stationary(abstraction, p_inf, tol_pos=DEFAULT_TOL_POS, tol_argmax=None,
                       solver="dual", backup=None, return_info=False):
    """Proper optimal stationary strategy from a converged lower value.

    Grows nested sets from the target: a state joins round ``m`` through its
    smallest optimal action whose worst-case mass on the previous set is
    positive.  States without positive value (and targets) get action 0.
    """
    b = backup or Backup(abstraction, solver)
    tol_argmax = tol_pos if tol_argmax is None else tol_argmax
    p_inf = np.asarray(p_inf, dtype=float)
    N, m = b.N, b.m
    table = np.zeros(N, dtype=np.int64)
    layer = np.full(N, -1, dtype=np.int64)
    layer[abstraction.target_ids] = 0
    reach = p_inf > tol_pos
    reach[abstraction.unsafe_id] = False
    info = {"rounds": 0}
    if len(b.active):
        Q = b.q_values(p_inf)
        opt = Q >= Q.max(axis=1, keepdims=True) - tol_argmax
        in_set = np.zeros(N, dtype=bool)
        in_set[abstraction.target_ids] = True
        pending = reach[b.active]
        rnd = 0
        while pending.any():
            rnd += 1
            flat = np.flatnonzero((pending[:, None] & opt).ravel())
            mass = b._solve(in_set.astype(float), False, flat)
            ok = flat[mass > tol_pos]
            if ok.size == 0:
                break
            states = ok // m
            acts = ok % m
            # smallest qualifying action per state
            first = np.unique(states, return_index=True)[1]
            s_new, a_new = states[first], acts[first]
            q_new = b.active[s_new]
            table[q_new] = a_new
            layer[q_new] = rnd
            pending[s_new] = False
            in_set[q_new] = True
        info["rounds"] = rnd
        if pending.any():
            bad = b.active[np.flatnonzero(pending)]
            raise ModelError(f"backward reachable sets stop short of the positive-value set; "
                             f"{bad.size} states left, e.g. {bad[:5].tolist()}")
    strat = StationaryStrategy(table)
    if return_info:
        info["layer"] = layer
        return strat, info
    return strat


def greedy_stationary(abstraction, p_inf, tol_pos=DEFAULT_TOL_POS, solver="dual", backup=None):
    """Plain argmax strategy at ``p_inf`` without the backward reachability step."""
    _, acts = bellman_lower(abstraction, p_inf, solver, tol_pos, backup)
    return StationaryStrategy(acts)


def interval_hull(abstraction: RobustAbstraction, tol: float = 1e-8) -> RobustAbstraction:
    """Tightest interval abstraction containing every row set.

    Each bound is the worst/best-case mass on one support state, computed
    with the dual; the rows of the result carry no transport budget.
    """
    N, m = abstraction.n_states, abstraction.n_actions
    pairs = [(q, a) for q in range(N) for a in range(m)]
    rs = RowSet(abstraction, pairs)
    I = rs.support.shape[1]
    low = np.zeros((len(pairs), I))
    high = np.zeros((len(pairs), I))
    for k in range(I):
        live = np.flatnonzero(rs.imask[:, k])
        if not live.size:
            continue
        p = np.zeros((live.size, I))
        p[:, k] = 1.0
        low[live, k] = rs.solve_dual_on(p, False, tol, live)
        high[live, k] = rs.solve_dual_on(p, True, tol, live)
    low = np.clip(low, 0.0, 1.0)
    high = np.clip(high, 0.0, 1.0)
    rows = [[None] * m for _ in range(N)]
    for n, (q, a) in enumerate(pairs):
        r = abstraction.row(q, a)
        i = r.support.size
        keep = high[n, :i] > 0
        ids = r.support[keep]
        rows[q][a] = Row(nominal=ids, low=np.minimum(low[n, :i][keep], high[n, :i][keep]),
                         high=high[n, :i][keep], support=ids)
    hull = RobustAbstraction(partition=abstraction.partition, n_actions=m, rows=rows,
                             cost=abstraction.cost, budget=0.0, info=dict(abstraction.info))
    return hull


def value_iteration(abstraction: RobustAbstraction, horizon=None, tol: float = DEFAULT_TOL,
                    solver: str = "dual", tol_pos: float = DEFAULT_TOL_POS,
                    max_iterations: int = DEFAULT_MAX_ITER, dual_tol: float = 1e-8,
                    threads: int = 1, tol_argmax: Optional[float] = None,
                    time_limit: Optional[float] = None) -> SynthesisResult:
    """Lower and upper reach-avoid bounds with a strategy.

    ``horizon`` is a positive integer K or ``None`` / ``"inf"`` for the
    unbounded horizon.  ``solver`` is ``"dual"``, ``"lp"`` or
    ``"imdp-baseline"`` (interval hull of the row sets, greedy backups).
    ``time_limit`` (seconds) raises :class:`TimeLimitError` after the first
    sweep that ends past it.
    """
    if solver not in SOLVERS:
        raise InputError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    info: dict = {"solver": solver}
    t0 = time.perf_counter()
    if solver == "imdp-baseline":
        abstraction = interval_hull(abstraction, dual_tol)
        inner = "imdp"
    else:
        inner = solver
    b = Backup(abstraction, inner, dual_tol, threads)
    info["setup_seconds"] = time.perf_counter() - t0
    times: list = []
    infinite = horizon is None or horizon == "inf"
    lower = b.indicator.copy()
    worst_step = np.inf

    def clock(t):
        times.append(time.perf_counter() - t)
        elapsed = time.perf_counter() - t0
        if time_limit is not None and elapsed > time_limit:
            raise TimeLimitError(elapsed, time_limit)

    def lower_sweep(v):
        t = time.perf_counter()
        new, acts = bellman_lower(abstraction, v, tol_pos=tol_pos, backup=b)
        clock(t)
        return new, acts

    if not infinite:
        K = int(horizon)
        if K < 0:
            raise InputError("horizon must be non-negative")
        table = np.zeros((max(K, 1), b.N), dtype=np.int64)
        for s in range(K):
            new, acts = lower_sweep(lower)
            worst_step = min(worst_step, float((new - lower).min()))
            lower = new
            table[K - 1 - s] = acts
        strategy = MarkovianStrategy(table)
        upper = b.indicator.copy()
        for s in range(K):
            t = time.perf_counter()
            upper = b.upper(upper, table[K - 1 - s]) if len(b.active) else upper
            clock(t)
        iterations = K
        info.update(lower_iterations=K, upper_iterations=K)
    else:
        if not tol > 0:
            raise InputError("tol must be positive for the unbounded horizon")
        it, change, uchange = 0, np.inf, np.inf
        while len(b.active):
            if it >= max_iterations:
                raise ConvergenceError(
                    f"lower value iteration did not converge in {max_iterations} sweeps; "
                    f"last sup-norm change {change:.3g}")
            new, _ = lower_sweep(lower)
            it += 1
            change = float(np.abs(new - lower).max())
            worst_step = min(worst_step, float((new - lower).min()))
            lower = new
            if change < tol:
                break
        info["lower_iterations"] = it
        info["lower_change"] = change if it else 0.0
        tol_am = max(tol_pos, 10 * tol) if tol_argmax is None else tol_argmax
        strategy, ext = extract_stationary(abstraction, lower, tol_pos, tol_am, backup=b,
                                           return_info=True)
        info["extraction_rounds"] = ext["rounds"]
        upper = b.indicator.copy()
        ut = 0
        while len(b.active):
            if ut >= max_iterations:
                raise ConvergenceError(
                    f"upper value iteration did not converge in {max_iterations} sweeps; "
                    f"last sup-norm change {uchange:.3g}")
            t = time.perf_counter()
            new = b.upper(upper, strategy.table)
            clock(t)
            ut += 1
            uchange = float(np.abs(new - upper).max())
            upper = new
            if uchange < tol:
                break
        info["upper_iterations"] = ut
        info["upper_change"] = uchange if ut else 0.0
        iterations = it
    info["min_step_change"] = float(worst_step) if np.isfinite(worst_step) else 0.0
    info["synthesis_seconds"] = time.perf_counter() - t0
    return SynthesisResult(lower=lower, upper=upper, strategy=strategy,
                           e_avg=e_avg(lower, upper), iterations=iterations,
                           per_sweep_times=times, info=info)


class SwitchingStrategy:
    """Continuous-state strategy from an abstract one via the cell locator."""

    def __init__(self, strategy, partition):
        self.strategy = strategy
        self.partition = partition

    @property
    def horizon(self):
        return getattr(self.strategy, "horizon", None) \
            if isinstance(self.strategy, MarkovianStrategy) else None

    def __call__(self, path, k: Optional[int] = None):
        path = np.atleast_2d(np.asarray(path, dtype=float))
        k = len(path) - 1 if k is None else k
        return self.action(path[-1], k)

    def action(self, x, k: int = 0):
        """Action(s) for the current state(s) ``x`` at step ``k``."""
        q = self.partition.locate(x)
        if isinstance(self.strategy, MarkovianStrategy):
            return self.strategy.action(q, k)
        return self.strategy.action(q)


def refine(strategy, partition) -> SwitchingStrategy:
    return SwitchingStrategy(strategy, partition)
