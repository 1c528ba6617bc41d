"""Small dense two-phase simplex with Bland's rule.

Meant as a test oracle and for the optional LP path of the synthesis loop;
it is exact up to floating point pivoting and never cycles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPInfeasible(RuntimeError):
    pass


class LPUnbounded(RuntimeError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(T, basis, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = c


def _run(T, basis, n_cols, tol, max_iter):
    # Last row of T holds reduced costs, last column the rhs.
    it = 0
    while True:
        red = T[-1, :n_cols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return it
        c = cand[0]
        col = T[:-1, c]
        pos = col > tol
        if not pos.any():
            raise LPUnbounded("objective is unbounded below")
        ratios = np.full(col.shape, np.inf)
        ratios[pos] = T[:-1, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        r = ties[np.argmin(np.asarray(basis)[ties])]
        _pivot(T, basis, r, c)
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")


def reference_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
                 tol: float = 1e-11, max_iter: int = 100000) -> LPResult:
    """Minimise ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``.

    ``bounds`` is a list of ``(lo, hi)`` pairs (``None`` for infinite); the
    default is ``x >= 0``.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if bounds is None:
        bounds = [(0.0, None)] * n
    elif len(bounds) == 2 and not isinstance(bounds[0], (tuple, list)):
        bounds = [tuple(bounds)] * n

    # Substitute x = lo + x' (or x = x+ - x- when free) so every variable is >= 0.
    cols, shift = [], np.zeros(n)
    extra_ub, extra_b = [], []
    for j, (lo, hi) in enumerate(bounds):
        if lo is None or lo == -np.inf:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
            if hi is not None and hi != np.inf:
                extra_ub.append((len(cols) - 2, len(cols) - 1))
                extra_b.append(hi)
        else:
            shift[j] = lo
            cols.append((j, 1.0))
            if hi is not None and hi != np.inf:
                if hi < lo:
                    raise LPInfeasible(f"variable {j} has empty bounds")
                extra_ub.append((len(cols) - 1, None))
                extra_b.append(hi - lo)
    nv = len(cols)
    M = np.zeros((n, nv))
    for k, (j, sgn) in enumerate(cols):
        M[j, k] = sgn
    cc = c @ M
    Aub = A_ub @ M
    bub = b_ub - A_ub @ shift
    Aeq = A_eq @ M
    beq = b_eq - A_eq @ shift
    if extra_ub:
        E = np.zeros((len(extra_ub), nv))
        for r, (k1, k2) in enumerate(extra_ub):
            E[r, k1] = 1.0
            if k2 is not None:
                E[r, k2] = -1.0
        Aub = np.vstack([Aub, E])
        bub = np.concatenate([bub, extra_b])
    const = float(c @ shift)

    m_ub, m_eq = Aub.shape[0], Aeq.shape[0]
    m = m_ub + m_eq
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = Aub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = Aeq
    b = np.concatenate([bub, beq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    n_struct = nv + m_ub

    # rows whose slack has coefficient +1 can start in the basis
    basis = [-1] * m
    need_art = []
    for r in range(m):
        if r < m_ub and not neg[r]:
            basis[r] = nv + r
        else:
            need_art.append(r)
    n_art = len(need_art)
    T = np.zeros((m + 1, n_struct + n_art + 1))
    T[:m, :n_struct] = A
    T[:m, -1] = b
    for k, r in enumerate(need_art):
        T[r, n_struct + k] = 1.0
        basis[r] = n_struct + k
    iters = 0
    if n_art:
        T[-1, n_struct:n_struct + n_art] = 1.0
        for r in need_art:
            T[-1] -= T[r]
        iters += _run(T, basis, n_struct + n_art, tol, max_iter)
        if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
            raise LPInfeasible("no feasible point")
        # drive remaining artificials out of the basis
        r = 0
        while r < T.shape[0] - 1:
            if basis[r] >= n_struct:
                nz = np.flatnonzero(np.abs(T[r, :n_struct]) > 1e-9)
                if nz.size:
                    _pivot(T, basis, r, nz[0])
                else:
                    T = np.delete(T, r, axis=0)
                    del basis[r]
                    continue
            r += 1
        T = np.delete(T, np.s_[n_struct:n_struct + n_art], axis=1)
    T[-1] = 0.0
    T[-1, :nv] = cc
    for r, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    iters += _run(T, basis, n_struct, tol, max_iter)

    xs = np.zeros(n_struct)
    for r, j in enumerate(basis):
        xs[j] = T[r, -1]
    x = M @ xs[:nv] + shift
    return LPResult(x=x, fun=float(cc @ xs[:nv]) + const, iterations=iters)
