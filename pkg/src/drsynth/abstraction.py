"""Construction of the robust MDP abstraction.

The nominal interval bounds capture discretisation error for the nominal
noise; the ambiguity ball is handled later by the inner solvers through the
transport cost table and the transport budget.
"""

from __future__ import annotations

import time

import numpy as np

from .model import (AmbiguitySet, Box, CostTable, EmpiricalNoise, InputError, Partition,
                    RobustAbstraction, Row, SwitchedSystem, TruncatedGaussianNoise)


def image_box(system: SwitchedSystem, mode: int, cell: Box) -> Box:
    """Box over-approximation of ``f_mode(cell)``."""
    if not 0 <= int(mode) < system.n_modes:
        raise InputError(f"mode {mode} out of range [0, {system.n_modes})")
    if cell.dim != system.dim:
        raise InputError("cell dimension does not match the system")
    lo, hi = system.modes[int(mode)].image(cell.lower, cell.upper)
    return Box(lo, hi)


def _image_boxes(system, partition):
    # (m, C, n) lower/upper image corners for every safe cell and mode.
    los, his = [], []
    for mode in system.modes:
        lo, hi = mode.image(partition.lower, partition.upper)
        los.append(lo)
        his.append(hi)
    return np.stack(los), np.stack(his)


def _check_dims(system, partition, noise):
    if not system.dim == partition.dim == noise.dim:
        raise InputError(f"dimension mismatch: system {system.dim}, partition {partition.dim}, "
                         f"noise {noise.dim}")


def _with_residual(ids, low, high, unsafe_id, low_u=None, high_u=None):
    """Append the ``q_u`` column from the residual mass of the safe columns."""
    if high_u is None:
        high_u = min(1.0, max(0.0, 1.0 - float(np.sum(low))))
    if low_u is None:
        low_u = min(1.0, max(0.0, 1.0 - float(np.sum(high))))
    keep = high > 0
    ids, low, high = ids[keep], low[keep], high[keep]
    if high_u > 0:
        ids = np.append(ids, unsafe_id)
        low = np.append(low, low_u)
        high = np.append(high, high_u)
    return ids.astype(np.int64), low.astype(float), high.astype(float)


def _empirical_row(partition, bl, bu, atoms):
    M = len(atoms)
    hit: dict[int, int] = {}
    inside: dict[int, int] = {}
    hit_u = inside_u = 0
    for v in atoms:
        lo, hi = bl + v, bu + v
        states, leaves = partition.box_states(lo, hi)
        hit_u += leaves
        inside_u += states.size == 0
        for s in states.tolist():
            hit[s] = hit.get(s, 0) + 1
        k = partition.containing_cell(lo, hi)
        if k >= 0:
            inside[k] = inside.get(k, 0) + 1
    ids = np.array(sorted(hit), dtype=np.int64)
    n_hi = np.array([hit[s] for s in ids.tolist()], dtype=np.int64)
    n_lo = np.array([inside.get(s, 0) for s in ids.tolist()], dtype=np.int64)
    # integer counts keep the residual column exact; atoms whose box stays
    # inside X cannot send mass to q_u, which tightens the residual bound
    high_u = min(M - int(n_lo.sum()), hit_u) / M
    low_u = max(M - int(n_hi.sum()), inside_u) / M
    return _with_residual(ids, n_lo / M, n_hi / M, partition.unsafe_id, low_u, high_u)


def _gaussian_row(partition, bl, bu, noise: TruncatedGaussianNoise):
    sup = noise.support_box()
    ids, leaves = partition.box_states(bl + sup.lower, bu + sup.upper)
    if ids.size == 0:
        return _with_residual(ids, np.zeros(0), np.zeros(0), partition.unsafe_id, 1.0, 1.0)
    cl = partition.lower[ids]
    cu = partition.upper[ids]
    p_lo = np.ones(len(ids))
    p_hi = np.ones(len(ids))
    for d in range(partition.dim):
        def mass(y):
            return noise.axis_cdf(cu[:, d] - y, d) - noise.axis_cdf(cl[:, d] - y, d)
        # mass is unimodal in the mean y with its peak at the centred mean
        y_star = np.clip(0.5 * (cl[:, d] + cu[:, d]) - noise.mean[d], bl[d], bu[d])
        p_hi *= mass(y_star)
        p_lo *= np.minimum(mass(np.full(len(ids), bl[d])), mass(np.full(len(ids), bu[d])))
    p_hi = np.clip(p_hi, 0.0, 1.0)
    p_lo = np.clip(np.minimum(p_lo, p_hi), 0.0, 1.0)
    # no mass can leave X when the noise support box around the image stays inside
    high_u = None if leaves else 0.0
    return _with_residual(ids, p_lo, p_hi, partition.unsafe_id, high_u=high_u)


def nominal_bounds(system: SwitchedSystem, partition: Partition, nominal):
    """Nominal interval bounds for every (state, action) pair.

    Returns ``rows[q][a] = (ids, low, high)`` with sorted state ids; the
    ``q_u`` entry of a safe row holds the residual mass bounds and the
    ``q_u`` row itself is the absorbing Dirac.
    """
    _check_dims(system, partition, nominal)
    img_lo, img_hi = _image_boxes(system, partition)
    rows = []
    for q in range(partition.n_cells):
        per_action = []
        for a in range(system.n_modes):
            bl, bu = img_lo[a, q], img_hi[a, q]
            if isinstance(nominal, EmpiricalNoise):
                per_action.append(_empirical_row(partition, bl, bu, nominal.atoms))
            elif isinstance(nominal, TruncatedGaussianNoise):
                per_action.append(_gaussian_row(partition, bl, bu, nominal))
            else:
                raise InputError(f"unsupported nominal noise model {type(nominal).__name__}")
        rows.append(per_action)
    u = partition.unsafe_id
    dirac = (np.array([u], dtype=np.int64), np.ones(1), np.ones(1))
    rows.append([dirac] * system.n_modes)
    return rows


def cost_matrix(partition: Partition, order: float = 2.0) -> np.ndarray:
    """Dense ``N x N`` matrix of ``inf ||x - y||^order`` between states."""
    return CostTable(partition, order).full()


def reach_index_sets(system: SwitchedSystem, partition: Partition, nominal_rows,
                     support: Box | None):
    """Nominal and support reachable sets for every (state, action) pair.

    ``support=None`` stands for unbounded noise support, in which case every
    state is reachable.
    """
    N = partition.n_states
    everything = np.arange(N, dtype=np.int64)
    u = partition.unsafe_id
    nominal_reach, support_reach = [], []
    img = _image_boxes(system, partition) if support is not None else None
    for q in range(N):
        nr, sr = [], []
        for a in range(system.n_modes):
            ids = nominal_rows[q][a][0]
            nr.append(ids)
            if q == u:
                sr.append(np.array([u], dtype=np.int64))
            elif support is None:
                sr.append(everything)
            else:
                states, leaves = partition.box_states(img[0][a, q] + support.lower,
                                                      img[1][a, q] + support.upper)
                if leaves:
                    states = np.append(states, u)
                sr.append(np.union1d(states, ids).astype(np.int64))
        nominal_reach.append(nr)
        support_reach.append(sr)
    return nominal_reach, support_reach


def build_abstraction(system: SwitchedSystem, partition: Partition,
                      ambiguity: AmbiguitySet) -> RobustAbstraction:
    """Assemble bounds, cost table, reach sets and transport budget."""
    _check_dims(system, partition, ambiguity.nominal)
    t0 = time.perf_counter()
    nom = nominal_bounds(system, partition, ambiguity.nominal)
    _, support_reach = reach_index_sets(system, partition, nom, ambiguity.support)
    rows = [[Row(nominal=nom[q][a][0], low=nom[q][a][1], high=nom[q][a][2],
                 support=support_reach[q][a])
             for a in range(system.n_modes)]
            for q in range(partition.n_states)]
    abst = RobustAbstraction(partition=partition, n_actions=system.n_modes, rows=rows,
                             cost=CostTable(partition, ambiguity.order),
                             budget=ambiguity.budget)
    abst.info["build_seconds"] = time.perf_counter() - t0
    return abst
