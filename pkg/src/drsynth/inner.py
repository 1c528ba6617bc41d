"""Inner worst/best-case expectation over the ambiguity-lifted row sets.

For one (state, action) pair the adversary picks a row ``gamma`` over the
support-reachable states such that some transport plan ``pi`` moves mass
from a point ``gamma_hat`` of the nominal interval set to ``gamma`` at total
cost at most the budget.  Three ways to evaluate the inner problem live here:

* ``inner_min_lp`` / ``inner_max_lp``: the primal LP on the plan ``pi``
  (``gamma`` and ``gamma_hat`` are its marginals), solved by the reference
  simplex.
* ``inner_min_dual`` / ``inner_max_dual``: the concave scalar dual in the
  cost multiplier ``mu``; ``lambda`` is searched over a finite candidate set
  and ``mu`` by golden section.  ``RowSet`` holds the batched version
  used by the synthesis sweeps.
* ``imdp_inner_min`` / ``imdp_inner_max``: the order-based assignment for
  plain interval rows.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import InputError, ModelError
from .simplex import LPInfeasible, reference_lp

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
PAD = 1e30
ROW_ATOL = 1e-9


@dataclass(frozen=True)
class InnerProblem:
    """One inner problem.

    ``values`` (length I) live on the support-reachable states, the interval
    bounds (length J) on the nominal-reachable states, ``costs`` is I x J.
    ``nominal_pos[j]`` is the support position of nominal state ``j`` when
    known (used only for the zero-budget shortcut).
    """

    values: np.ndarray
    row_low: np.ndarray
    row_high: np.ndarray
    costs: np.ndarray
    budget: float
    nominal_pos: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("values", "row_low", "row_high", "costs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        I, J = self.values.size, self.row_low.size
        if self.costs.shape != (I, J) or self.row_high.shape != (J,):
            raise InputError(f"inconsistent inner problem shapes: values {I}, bounds {J}, "
                             f"costs {self.costs.shape}")
        if self.budget < 0:
            raise InputError("transport budget must be non-negative")

    def check_row(self):
        _check_interval_row(self.row_low, self.row_high)


def _check_interval_row(low, high):
    if np.any(low > high + ROW_ATOL) or low.sum() > 1 + ROW_ATOL or high.sum() < 1 - ROW_ATOL:
        raise ModelError(f"infeasible interval row: sum(low)={low.sum():.6g}, "
                         f"sum(high)={high.sum():.6g}")


# --------------------------------------------------------------------------
# interval rows


def _greedy(low, high, order):
    d = np.take_along_axis(high - low, order, axis=-1)
    remaining = 1.0 - low.sum(axis=-1, keepdims=True)
    cum = np.cumsum(d, axis=-1)
    alloc = np.clip(remaining - (cum - d), 0.0, d)
    row = low.copy()
    np.put_along_axis(row, order, np.take_along_axis(row, order, axis=-1) + alloc, axis=-1)
    return row


def imdp_inner_min(row_low, row_high, values):
    """Minimise ``row @ values`` over ``row_low <= row <= row_high``, ``sum(row) = 1``.

    Returns ``(value, row)``.  Ties in ``values`` are broken by index.
    """
    low = np.asarray(row_low, dtype=float)
    high = np.asarray(row_high, dtype=float)
    v = np.asarray(values, dtype=float)
    _check_interval_row(low, high)
    row = _greedy(low, high, np.argsort(v, kind="stable"))
    return float(row @ v), row


def imdp_inner_max(row_low, row_high, values):
    """Maximising counterpart of :func:`imdp_inner_min`."""
    low = np.asarray(row_low, dtype=float)
    high = np.asarray(row_high, dtype=float)
    v = np.asarray(values, dtype=float)
    _check_interval_row(low, high)
    row = _greedy(low, high, np.argsort(-v, kind="stable"))
    return float(row @ v), row


def imdp_batch(low, high, values, maximize=False):
    """Row-wise greedy for padded ``(R, J)`` arrays (pads carry zero bounds)."""
    key = -values if maximize else values
    row = _greedy(low, high, np.argsort(key, axis=-1, kind="stable"))
    return (row * values).sum(axis=-1)


# --------------------------------------------------------------------------
# primal LP


def _transport_lp(problem: InnerProblem, maximize: bool):
    # variables: gamma (I), gamma_hat (J), plan pi (I x J, row-major)
    p = problem.values
    I, J = problem.costs.shape
    n = I + J + I * J
    sign = -1.0 if maximize else 1.0
    obj = np.zeros(n)
    obj[:I] = sign * p
    A_eq = np.zeros((I + J + 1, n))
    for i in range(I):
        A_eq[i, I + J + i * J:I + J + (i + 1) * J] = 1.0
        A_eq[i, i] = -1.0
    for j in range(J):
        A_eq[I + j, I + J + j::J] = 1.0
        A_eq[I + j, I + j] = -1.0
    A_eq[I + J, I:I + J] = 1.0
    b_eq = np.zeros(I + J + 1)
    b_eq[-1] = 1.0
    A_ub = np.zeros((1, n))
    A_ub[0, I + J:] = problem.costs.reshape(-1)
    bounds = ([(0.0, None)] * I + list(zip(problem.row_low, problem.row_high))
              + [(0.0, None)] * (I * J))
    try:
        res = reference_lp(obj, A_ub, [problem.budget], A_eq, b_eq, bounds)
    except LPInfeasible as exc:
        raise ModelError(f"inner problem is infeasible: {exc}") from exc
    return sign * res.fun, np.maximum(res.x[:I], 0.0)


def inner_min_lp(problem: InnerProblem):
    """Primal LP value and the minimising row over the support states."""
    problem.check_row()
    return _transport_lp(problem, maximize=False)


def inner_max_lp(problem: InnerProblem):
    """Primal LP value and the maximising row over the support states."""
    problem.check_row()
    return _transport_lp(problem, maximize=True)


def membership_test(problem: InnerProblem, candidate, tol: float = 1e-9) -> bool:
    """Whether ``candidate`` (a row over the support states) is admissible.

    Finds the cheapest plan whose source marginal satisfies the interval
    bounds and whose target marginal is ``candidate``; admissible iff such a
    plan exists with cost within the budget.
    """
    gamma = np.asarray(candidate, dtype=float)
    I, J = problem.costs.shape
    if gamma.shape != (I,):
        raise InputError("candidate must be a row over the support states")
    n = I * J
    col = np.zeros((J, n))
    for j in range(J):
        col[j, j::J] = 1.0
    A_ub = np.vstack([col, -col])
    b_ub = np.concatenate([problem.row_high + tol, -(problem.row_low - tol)])
    A_eq = np.kron(np.eye(I), np.ones((1, J)))
    try:
        res = reference_lp(problem.costs.reshape(-1), A_ub, b_ub, A_eq, gamma)
    except LPInfeasible:
        return False
    return res.fun <= problem.budget + tol


# --------------------------------------------------------------------------
# dual


def _g_batch(mu, L, C, low, high, jmask, budget):
    """Dual function maximised over lambda, for each row at its own ``mu``.

    ``h_j = min_i L[i, j] + mu * C[i, j]``.  L, C: (R, K, J); low/high,
    jmask: (R, J); mu: (R,).
    """
    h = (L + mu[:, None, None] * C).min(axis=1)  # (R, J)
    d = h[:, None, :] - h[:, :, None]  # [r, k, j] = h_j - h_k
    terms = np.where(d >= 0, low[:, None, :] * d, high[:, None, :] * d)
    G = terms.sum(axis=2) + h
    G = np.where(jmask, G, -np.inf)
    return G.max(axis=1) - mu * budget


def _mu_upper(p, C, imask, jmask):
    """Right end of the search interval, beyond which ``g`` only decreases.

    For larger ``mu`` no positive-cost move can lower any ``h_j``; with
    ``spread = max p - min p`` this holds once ``mu * c_min >= spread``.
    """
    valid = imask[:, :, None] & jmask[:, None, :] & (C > 0)
    cmin = np.where(valid, C, np.inf).min(axis=(1, 2))
    pv = np.where(imask, p, np.nan)
    spread = np.nanmax(pv, axis=1) - np.nanmin(pv, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.where(np.isfinite(cmin), spread / cmin, 0.0)
    return np.where(spread > 0, mu, 0.0)


def _envelope_lines(p, C, imask):
    """Drop lines ``p_i + mu c_ij`` that never attain ``h_j`` for ``mu >= 0``.

    A line is dominated when another has both a smaller (or equal) cost and
    a smaller (or equal) offset.  Returns compacted ``(L, C)`` of shape
    ``(R, K, J)``.
    """
    R, I, J = C.shape
    Cm = np.where(imask[:, :, None], C, np.inf)
    order = np.argsort(Cm, axis=1, kind="stable")
    Cs = np.take_along_axis(Cm, order, axis=1)
    Ps = np.take_along_axis(np.broadcast_to(p[:, :, None], (R, I, J)), order, axis=1)
    prev = np.minimum.accumulate(Ps, axis=1)
    keep = np.ones_like(Ps, dtype=bool)
    keep[:, 1:] = Ps[:, 1:] < prev[:, :-1]
    keep &= np.isfinite(Cs)
    K = max(int(keep.sum(axis=1).max(initial=1)), 1)
    pick = np.argsort(~keep, axis=1, kind="stable")[:, :K]
    ok = np.take_along_axis(keep, pick, axis=1)
    L = np.where(ok, np.take_along_axis(Ps, pick, axis=1), PAD)
    Ck = np.where(ok, np.take_along_axis(Cs, pick, axis=1), 0.0)
    return L, Ck


def _golden_max(L, C, low, high, jmask, budget, tol, mu_hi, trace=None):
    """Best evaluated value of the concave dual for every row.

    Golden-section search over ``[0, mu_hi]`` run to width ``tol``; every
    evaluation is a valid bound, so the best one seen is returned.
    """
    R = L.shape[0]
    a = np.zeros(R)
    b = np.asarray(mu_hi, dtype=float)
    args = (L, C, low, high, jmask, budget)
    best = _g_batch(a, *args)
    fb = _g_batch(b, *args)
    if trace is not None:
        trace += [(0.0, best[0]), (b[0], fb[0])]
    best = np.maximum(best, fb)
    width = b.max(initial=0.0)
    if width <= tol:
        return best
    n_iter = int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = _g_batch(c, *args)
    fd = _g_batch(d, *args)
    if trace is not None:
        trace += [(c[0], fc[0]), (d[0], fd[0])]
    best = np.maximum(best, np.maximum(fc, fd))
    for _ in range(n_iter):
        right = fc < fd
        # keep [c, b] where the right probe is better, [a, d] otherwise
        a = np.where(right, c, a)
        b = np.where(right, b, d)
        new_c = np.where(right, d, b - INV_PHI * (b - a))
        new_d = np.where(right, a + INV_PHI * (b - a), c)
        probe = np.where(right, new_d, new_c)
        fp = _g_batch(probe, *args)
        if trace is not None:
            trace.append((probe[0], fp[0]))
        best = np.maximum(best, fp)
        fc, fd = np.where(right, fd, fp), np.where(right, fp, fc)
        c, d = new_c, new_d
    return best


def _solve_min(p, C, low, high, imask, jmask, budget, tol, trace=None):
    """Batched inner minimum for padded rows (pads marked by the masks)."""
    mu_hi = _mu_upper(p, C, imask, jmask)
    L, Ck = _envelope_lines(np.where(imask, p, PAD), C, imask)
    return _golden_max(L, Ck, low, high, jmask, budget, tol, mu_hi, trace)


def _pack_one(problem: InnerProblem):
    I, J = problem.costs.shape
    return (problem.values[None], problem.costs[None], problem.row_low[None],
            problem.row_high[None], np.ones((1, I), bool), np.ones((1, J), bool))


def _zero_budget_shortcut(problem: InnerProblem):
    if problem.budget != 0 or problem.nominal_pos is None:
        return False
    off = np.ones(problem.costs.shape, dtype=bool)
    off[problem.nominal_pos, np.arange(problem.costs.shape[1])] = False
    return bool(np.all(problem.costs[off] > 0))


def inner_min_dual(problem: InnerProblem, tol: float = 1e-8, return_trace: bool = False):
    """Worst-case expectation via the scalar dual.

    Every evaluated dual point is a valid lower bound; the best one is
    returned.  With ``return_trace`` a list of ``(mu, g(mu))`` pairs in
    evaluation order is returned as well.
    """
    if not tol > 0:
        raise InputError("tol must be positive")
    problem.check_row()
    trace: list = []
    if _zero_budget_shortcut(problem):
        v = imdp_inner_min(problem.row_low, problem.row_high,
                           problem.values[problem.nominal_pos])[0]
        return (v, trace) if return_trace else v
    p, C, low, high, imask, jmask = _pack_one(problem)
    v = float(_solve_min(p, C, low, high, imask, jmask, problem.budget, tol, trace)[0])
    return (v, trace) if return_trace else v


def inner_max_dual(problem: InnerProblem, tol: float = 1e-8, return_trace: bool = False):
    """Best-case expectation via the mirrored dual.

    Uses ``max E[p] = top - min E[top - p]``, which is the min dual applied
    to reflected values; the returned trace holds the mirrored (upper
    bound) objective values.
    """
    top = float(problem.values.max(initial=0.0))
    mirrored = InnerProblem(top - problem.values, problem.row_low, problem.row_high,
                            problem.costs, problem.budget, problem.nominal_pos)
    out = inner_min_dual(mirrored, tol, return_trace)
    if return_trace:
        v, trace = out
        return top - v, [(mu, top - g) for mu, g in trace]
    return top - out


def dual_objective(problem: InnerProblem, lam, mu):
    """``G(lambda, mu)`` of the min dual (vectorised over ``lam``)."""
    h = (problem.values[:, None] + mu * problem.costs).min(axis=0)
    d = h[None, :] - np.atleast_1d(np.asarray(lam, dtype=float))[:, None]
    terms = np.where(d >= 0, problem.row_low * d, problem.row_high * d)
    return terms.sum(axis=1) - mu * problem.budget + np.atleast_1d(lam)


def dual_g(problem: InnerProblem, mu: float) -> float:
    """``max_lambda G(lambda, mu)`` via the finite candidate set."""
    p, C, low, high, _, jmask = _pack_one(problem)
    return float(_g_batch(np.array([float(mu)]), p[:, :, None], C, low, high, jmask,
                          problem.budget)[0])


# --------------------------------------------------------------------------
# batched rows for the synthesis sweeps


class RowSet:
    """Padded arrays for a list of abstraction rows ``(q, a)``.

    Lets one sweep evaluate every row's dual in a handful of vectorised
    passes.
    """

    def __init__(self, abstraction, pairs):
        self.pairs = list(pairs)
        rows = [abstraction.row(q, a) for q, a in self.pairs]
        R = len(rows)
        I = max((r.support.size for r in rows), default=1)
        J = max((r.nominal.size for r in rows), default=1)
        self.support = np.zeros((R, I), dtype=np.int64)
        self.imask = np.zeros((R, I), dtype=bool)
        self.C = np.zeros((R, I, J))
        self.low = np.zeros((R, J))
        self.high = np.zeros((R, J))
        self.jmask = np.zeros((R, J), dtype=bool)
        self.nominal = np.zeros((R, J), dtype=np.int64)
        for k, r in enumerate(rows):
            i, j = r.support.size, r.nominal.size
            self.support[k, :i] = r.support
            self.imask[k, :i] = True
            self.nominal[k, :j] = r.nominal
            self.jmask[k, :j] = True
            self.low[k, :j] = r.low
            self.high[k, :j] = r.high
            self.C[k, :i, :j] = abstraction.cost.sub(r.support, r.nominal)
        self.budget = float(abstraction.budget)
        self.abstraction = abstraction

    def __len__(self):
        return len(self.pairs)

    def problem(self, k: int, values) -> InnerProblem:
        r = self.abstraction.row(*self.pairs[k])
        i, j = r.support.size, r.nominal.size
        return InnerProblem(np.asarray(values)[r.support], r.low, r.high, self.C[k, :i, :j],
                            self.budget, r.nominal_pos)

    def _values(self, values):
        p = np.asarray(values, dtype=float)[self.support]
        return np.where(self.imask, p, PAD)

    def solve_dual(self, values, maximize=False, tol=1e-8, threads=1, rows=None):
        """Inner min (or max) for every row, returned as an ``(R,)`` array."""
        idx = np.arange(len(self)) if rows is None else np.asarray(rows)
        out = np.empty(len(self))
        p = self._values(values)[idx]
        if maximize:
            top = np.where(self.imask[idx], p, -PAD).max(axis=1, keepdims=True)
            p = np.where(self.imask[idx], top - p, PAD)
        pv = np.where(self.imask[idx], p, np.nan)
        pmin = np.nanmin(pv, axis=1)
        flat = np.nanmax(pv, axis=1) - pmin <= 0.0
        res = pmin.copy()
        work = np.flatnonzero(~flat)
        if work.size:
            def run(chunk):
                sel = idx[chunk]
                return _solve_min(p[chunk], self.C[sel], self.low[sel], self.high[sel],
                                  self.imask[sel], self.jmask[sel], self.budget, tol)
            chunks = np.array_split(work, max(1, min(int(threads), work.size)))
            if len(chunks) > 1:
                with ThreadPoolExecutor(len(chunks)) as ex:
                    parts = list(ex.map(run, chunks))
            else:
                parts = [run(chunks[0])]
            for ch, part in zip(chunks, parts):
                res[ch] = part
        if maximize:
            res = top[:, 0] - res
        out[idx] = res
        return out if rows is None else out[idx]

    def solve_lp(self, values, maximize=False, rows=None):
        """Same as :meth:`solve_dual` through the reference LP, row by row."""
        idx = np.arange(len(self)) if rows is None else np.asarray(rows)
        out = np.empty(idx.size)
        values = np.asarray(values, dtype=float)
        for n, k in enumerate(idx):
            prob = self.problem(k, values)
            if np.ptp(prob.values) == 0:
                out[n] = prob.values[0]
            else:
                out[n] = (inner_max_lp if maximize else inner_min_lp)(prob)[0]
        return out

    def solve_imdp(self, values, maximize=False, rows=None):
        """Greedy interval-row expectation on the nominal states."""
        idx = np.arange(len(self)) if rows is None else np.asarray(rows)
        v = np.asarray(values, dtype=float)[self.nominal[idx]]
        return imdp_batch(self.low[idx], self.high[idx], np.where(self.jmask[idx], v, 0.0),
                          maximize)

    def solve_dual_on(self, p, maximize=False, tol=1e-8, rows=None):
        """Like :meth:`solve_dual` with per-row values ``p`` of shape ``(R, I)``."""
        idx = np.arange(len(self)) if rows is None else np.asarray(rows)
        im = self.imask[idx]
        p = np.asarray(p, dtype=float)
        top = np.where(im, p, -PAD).max(axis=1)
        q = top[:, None] - p if maximize else p
        q = np.where(im, q, PAD)
        res = _solve_min(q, self.C[idx], self.low[idx], self.high[idx], im, self.jmask[idx],
                         self.budget, tol)
        return top - res if maximize else res
