"""Monte Carlo checks of the synthesised bounds.

Test distributions sit on the boundary of the ambiguity ball, trials use
per-trial seeds derived from ``(seed, trial)`` so results do not depend on
how trials are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .inner import InnerProblem, inner_min_lp
from .model import (AmbiguitySet, EmpiricalNoise, InputError, MarkovianStrategy,
                    TruncatedGaussianNoise)
from .synthesis import SwitchingStrategy, e_avg  # noqa: F401  (re-exported metric)

REACHED, UNSAFE, EXHAUSTED = "reached-target", "hit-unsafe", "horizon-exhausted"


@dataclass(frozen=True)
class Sampler:
    """Noise distribution used in simulation, with its exact distance to the nominal."""

    nominal: object
    shift: np.ndarray
    scale: Optional[np.ndarray] = None
    distance: float = 0.0
    mode: str = "nominal"

    @property
    def dim(self) -> int:
        return self.nominal.dim

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.scale is None:
            v = self.nominal.sample(rng, size)
        else:
            t = self.nominal.truncation
            z = stats.truncnorm.rvs(-t, t, size=(size, self.dim), random_state=rng)
            v = self.nominal.mean + z * self.scale
        return v + self.shift


def _truncated_second_moment(t: float) -> float:
    return float(stats.truncnorm.var(-t, t))


def make_test_distribution(ambiguity: AmbiguitySet, mode: str = "shifted",
                           direction=None) -> Sampler:
    """Sampler at Wasserstein distance exactly ``ambiguity.radius`` from the nominal.

    ``shifted`` translates the nominal by ``radius`` along ``direction``
    (first axis by default); a translation by ``delta`` is at distance
    ``|delta|`` in every Wasserstein order.  ``inflated`` widens every
    standard deviation of a Gaussian nominal by the same amount so the
    order-2 distance equals the radius.
    """
    nom = ambiguity.nominal
    eps = float(ambiguity.radius)
    n = nom.dim
    if mode == "nominal" or eps == 0:
        return Sampler(nom, np.zeros(n), None, 0.0, "nominal")
    if mode == "shifted":
        d = np.zeros(n) if direction is None else np.asarray(direction, dtype=float)
        if direction is None:
            d[0] = 1.0
        norm = np.linalg.norm(d)
        if norm == 0:
            raise InputError("shift direction must be non-zero")
        return Sampler(nom, eps * d / norm, None, eps, "shifted")
    if mode == "inflated":
        if not isinstance(nom, TruncatedGaussianNoise):
            raise InputError("inflated test distributions need a Gaussian nominal")
        if ambiguity.order != 2:
            raise InputError("inflated test distributions are calibrated for order 2")
        # product coupling of the standardised coordinates is optimal for
        # diagonal scalings: W2 = |sigma' - sigma| * sqrt(Var z)
        widen = eps / (np.sqrt(n) * np.sqrt(_truncated_second_moment(nom.truncation)))
        return Sampler(nom, np.zeros(n), nom.std + widen, eps, "inflated")
    raise InputError(f"unknown test distribution mode {mode!r}")


def empirical_w2(samples, reference) -> float:
    """Order-2 distance between a sample set and a reference.

    ``reference`` is an :class:`EmpiricalNoise` (exact discrete transport on
    the atoms) or an array of samples of a product distribution, compared
    axis by axis through sorted samples.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if isinstance(reference, EmpiricalNoise):
        atoms = reference.atoms
        # collapse samples into their distinct support points
        pts, counts = np.unique(x, axis=0, return_counts=True)
        a = counts / counts.sum()
        b = reference.weights
        C = ((pts[:, None, :] - atoms[None]) ** 2).sum(-1)
        P, Q = C.shape
        A_eq = np.vstack([np.kron(np.eye(P), np.ones((1, Q))),
                          np.kron(np.ones((1, P)), np.eye(Q))])
        res = optimize.linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]),
                               bounds=(0, None), method="highs")
        return float(np.sqrt(max(res.fun, 0.0)))
    y = np.atleast_2d(np.asarray(reference, dtype=float))
    if len(x) != len(y):
        raise InputError("sample sets must have equal size")
    per_axis = ((np.sort(x, axis=0) - np.sort(y, axis=0)) ** 2).mean(axis=0)
    return float(np.sqrt(per_axis.sum()))


def wilson_interval(successes: int, trials: int, confidence: float = 0.99):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise InputError("need at least one trial")
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def within_bounds(p_hat, ci, lower, upper) -> bool:
    """``p_hat`` inside ``[lower - hw, upper + hw]``, ``hw`` the CI half-width."""
    hw = 0.5 * (ci[1] - ci[0])
    return bool(lower - hw <= p_hat <= upper + hw)


@dataclass
class Trajectory:
    states: list
    actions: list
    outcome: str


@dataclass
class SimulationResult:
    probability: float
    successes: int
    trials: int
    ci: tuple
    outcomes: np.ndarray
    steps: np.ndarray
    trajectories: list = field(default_factory=list)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def simulate(system, partition, strategy, x0, horizon, trials: int, sampler, seed: int = 0,
             max_steps: int = 1000, record: int = 0, confidence: float = 0.99) -> SimulationResult:
    """Closed-loop reach-avoid simulation.

    A trial succeeds when it enters the target at some step ``k <= horizon``
    having stayed safe before.  ``horizon=None`` runs up to ``max_steps``.
    ``record`` keeps the first ``record`` trajectories.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    sw = strategy if isinstance(strategy, SwitchingStrategy) else SwitchingStrategy(strategy, partition)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (partition.dim,):
        raise InputError("initial state has the wrong dimension")
    K = int(max_steps) if horizon is None or horizon == "inf" else int(horizon)
    if isinstance(sw.strategy, MarkovianStrategy) and sw.strategy.horizon < K:
        raise InputError(f"strategy horizon {sw.strategy.horizon} is shorter than {K}")
    n = partition.dim
    noise = np.empty((trials, K, n))
    for t in range(trials):
        noise[t] = sampler.sample(trial_rng(seed, t), K).reshape(K, n) if K else 0.0
    x = np.tile(x0, (trials, 1))
    outcome = np.full(trials, EXHAUSTED, dtype=object)
    steps = np.full(trials, K, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    rec = min(int(record), trials)
    paths = [[x0.copy()] for _ in range(rec)]
    acts_rec = [[] for _ in range(rec)]
    for k in range(K + 1):
        q = partition.locate(x[alive])
        ids = np.flatnonzero(alive)
        hit = partition.is_target[q]
        bad = q == partition.unsafe_id
        outcome[ids[hit]] = REACHED
        outcome[ids[bad]] = UNSAFE
        steps[ids[hit | bad]] = k
        alive[ids[hit | bad]] = False
        if k == K or not alive.any():
            break
        ids = np.flatnonzero(alive)
        qa = partition.locate(x[ids])
        if isinstance(sw.strategy, MarkovianStrategy):
            a = sw.strategy.table[k][qa]
        else:
            a = sw.strategy.table[qa]
        x[ids] = system.step(x[ids], a, noise[ids, k])
        for r in range(rec):
            if alive[r]:
                acts_rec[r].append(int(a[np.searchsorted(ids, r)]))
                paths[r].append(x[r].copy())
    succ = int((outcome == REACHED).sum())
    ci = wilson_interval(succ, trials, confidence)
    trajs = [Trajectory(paths[r], acts_rec[r], outcome[r]) for r in range(rec)]
    return SimulationResult(succ / trials, succ, trials, ci, outcome, steps, trajs)


def adversary_rows(abstraction, strategy, values):
    """Worst-case rows (via the primal LP) under a stationary strategy.

    Returns a dense ``(N, N)`` transition matrix.
    """
    N = abstraction.n_states
    P = np.zeros((N, N))
    values = np.asarray(values, dtype=float)
    for q in range(N):
        r = abstraction.row(q, int(strategy.table[q]))
        prob = InnerProblem(values[r.support], r.low, r.high,
                            abstraction.cost.sub(r.support, r.nominal), abstraction.budget)
        _, gamma = inner_min_lp(prob)
        gamma = np.maximum(gamma, 0.0)
        P[q, r.support] = gamma / gamma.sum()
    return P


def simulate_chain(abstraction, transition, q0: int, trials: int, steps: int, seed: int = 0):
    """Probability that the abstract chain from ``q0`` hits the target within ``steps``.

    ``transition`` is a dense ``(N, N)`` row-stochastic matrix.  Returns
    ``(probability, fraction absorbed in target or q_u)``.
    """
    cdf = np.cumsum(transition, axis=1)
    cdf[:, -1] = 1.0
    u = np.stack([trial_rng(seed, t).random(steps) for t in range(trials)])
    q = np.full(trials, int(q0))
    tgt = abstraction.partition.is_target
    unsafe = abstraction.unsafe_id
    done = tgt[q] | (q == unsafe)
    for k in range(steps):
        live = ~done
        if not live.any():
            break
        nxt = (u[live, k][:, None] > cdf[q[live]]).sum(axis=1)
        q[live] = np.minimum(nxt, len(cdf) - 1)
        done = tgt[q] | (q == unsafe)
    return float(tgt[q].mean()), float(done.mean())
