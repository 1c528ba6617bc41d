"""Domain types shared across the package.

Geometry (boxes and grid partitions), switched dynamics with interval
extensions, nominal noise models, Wasserstein ambiguity sets, the robust MDP
container and strategies.  Value functions are plain ``numpy`` vectors of
length ``N`` indexed by state id.

Cell ownership on the grid: along every axis a cell owns ``(l, u]``, except
the first cell of the axis which also owns its lower face.  A point on a
shared face is therefore located in the neighbour with the smaller index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import intervals


class InputError(ValueError):
    """Invalid argument supplied by the caller."""


class ModelError(RuntimeError):
    """The model violates a structural requirement (e.g. infeasible row)."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower).reshape(-1))
        hi = _frozen(np.atleast_1d(self.upper).reshape(-1))
        if lo.shape != hi.shape:
            raise InputError("box bounds have different lengths")
        if np.any(lo > hi):
            raise InputError(f"box lower bound exceeds upper bound: {lo} > {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


def _as_box(b) -> Box:
    if isinstance(b, Box):
        return b
    lo, hi = b
    return Box(lo, hi)


class Partition:
    """Uniform grid over a safe box with obstacle cells carved out.

    Safe cells get ids ``0 .. n_cells-1`` in C order of their grid index; the
    unsafe state ``q_u`` (everything outside the safe set, including carved
    cells) has id ``n_cells``.
    """

    def __init__(self, safe_box, counts: Sequence[int], target_boxes=(), obstacle_boxes=()):
        self.safe_box = _as_box(safe_box)
        self.counts = tuple(int(c) for c in counts)
        n = self.safe_box.dim
        if len(self.counts) != n or min(self.counts) < 1:
            raise InputError("grid counts must be positive, one per dimension")
        self.target_boxes = tuple(_as_box(b) for b in target_boxes)
        self.obstacle_boxes = tuple(_as_box(b) for b in obstacle_boxes)
        for b in self.target_boxes + self.obstacle_boxes:
            if b.dim != n:
                raise InputError("target/obstacle box dimension mismatch")

        self.edges = [np.linspace(self.safe_box.lower[d], self.safe_box.upper[d], self.counts[d] + 1)
                      for d in range(n)]
        grid_idx = np.indices(self.counts).reshape(n, -1).T
        glo = np.stack([self.edges[d][grid_idx[:, d]] for d in range(n)], axis=1)
        ghi = np.stack([self.edges[d][grid_idx[:, d] + 1] for d in range(n)], axis=1)

        # grid edges come from linspace, so compare region boxes with a
        # relative slack of a few ulps of the box size
        slack = 1e-9 * np.maximum(1.0, np.abs(self.safe_box.upper - self.safe_box.lower))
        carved = np.zeros(len(glo), dtype=bool)
        for ob in self.obstacle_boxes:
            carved |= np.all((glo < ob.upper - slack) & (ghi > ob.lower + slack), axis=1)

        n_cells = int((~carved).sum())
        if n_cells == 0:
            raise InputError("obstacles cover the whole safe set")
        self.unsafe_id = n_cells
        self.grid_to_state = np.full(len(glo), self.unsafe_id, dtype=np.int64)
        self.grid_to_state[~carved] = np.arange(n_cells)
        self.lower = _frozen(glo[~carved])
        self.upper = _frozen(ghi[~carved])
        self.grid_index = grid_idx[~carved]
        self._carved_lower = glo[carved]
        self._carved_upper = ghi[carved]

        is_target = np.zeros(n_cells, dtype=bool)
        for tb in self.target_boxes:
            is_target |= np.all((self.lower >= tb.lower - slack) & (self.upper <= tb.upper + slack),
                                axis=1)
        self.target_ids = _frozen(np.flatnonzero(is_target), dtype=np.int64)
        self.is_target = _frozen(np.append(is_target, False), dtype=bool)
        self.dist_to_unsafe = _frozen(self._distance_to_unsafe())

    @property
    def dim(self) -> int:
        return self.safe_box.dim

    @property
    def n_cells(self) -> int:
        return self.unsafe_id

    @property
    def n_states(self) -> int:
        return self.unsafe_id + 1

    @property
    def cells(self) -> list[Box]:
        return [Box(lo, hi) for lo, hi in zip(self.lower, self.upper)]

    @property
    def cell_width(self) -> np.ndarray:
        return (self.safe_box.upper - self.safe_box.lower) / np.array(self.counts)

    def cell(self, q: int) -> Box:
        if not 0 <= q < self.n_cells:
            raise InputError(f"{q} is not a safe cell id")
        return Box(self.lower[q], self.upper[q])

    def _distance_to_unsafe(self) -> np.ndarray:
        to_border = np.minimum(self.lower - self.safe_box.lower,
                               self.safe_box.upper - self.upper).min(axis=1)
        dist = np.maximum(to_border, 0.0)
        if len(self._carved_lower):
            g = box_gap(self.lower[:, None, :], self.upper[:, None, :],
                        self._carved_lower[None], self._carved_upper[None])
            dist = np.minimum(dist, np.sqrt((g ** 2).sum(-1)).min(axis=1))
        return dist

    def owner(self, t, d: int) -> np.ndarray:
        """Grid index along axis ``d`` owning coordinate ``t``.

        ``-1`` below the grid, ``counts[d]`` above it.
        """
        e = self.edges[d]
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(e, t, side="left") - 1
        return np.where(t == e[0], 0, k)

    def locate(self, x) -> np.ndarray | int:
        """State id of the point(s) ``x``; ``unsafe_id`` outside the safe set."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise InputError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        pts = x.reshape(-1, self.dim)
        ks = np.stack([self.owner(pts[:, d], d) for d in range(self.dim)], axis=1)
        inside = np.all((ks >= 0) & (ks < np.array(self.counts)), axis=1)
        out = np.full(len(pts), self.unsafe_id, dtype=np.int64)
        if inside.any():
            flat = np.ravel_multi_index(tuple(ks[inside].T), self.counts)
            out[inside] = self.grid_to_state[flat]
        if x.ndim == 1:
            return int(out[0])
        return out.reshape(x.shape[:-1])

    def box_states(self, lo, hi) -> tuple[np.ndarray, bool]:
        """States whose owned set meets the closed box ``[lo, hi]``.

        Returns the sorted safe cell ids and whether the box reaches ``q_u``.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        counts = np.array(self.counts)
        klo = np.array([self.owner(lo[d], d) for d in range(self.dim)])
        khi = np.array([self.owner(hi[d], d) for d in range(self.dim)])
        unsafe = bool(np.any(klo < 0) or np.any(khi >= counts))
        klo = np.maximum(klo, 0)
        khi = np.minimum(khi, counts - 1)
        if np.any(klo > khi):
            return np.empty(0, dtype=np.int64), True
        axes = [np.arange(a, b + 1) for a, b in zip(klo, khi)]
        flat = np.ravel_multi_index(tuple(g.ravel() for g in np.meshgrid(*axes, indexing="ij")),
                                    self.counts)
        states = self.grid_to_state[flat]
        if np.any(states == self.unsafe_id):
            unsafe = True
        return np.unique(states[states != self.unsafe_id]), unsafe

    def containing_cell(self, lo, hi) -> int:
        """Safe cell whose closure contains the closed box ``[lo, hi]``, or ``-1``.

        Closure containment differs from containment in the owned set only on
        cell faces, a null set for the continuous noise and states used here.
        """
        ks = []
        for d in range(self.dim):
            k = int(self.owner(hi[d], d))
            if k < 0 or k >= self.counts[d] or lo[d] < self.edges[d][k]:
                return -1
            ks.append(k)
        q = int(self.grid_to_state[np.ravel_multi_index(tuple(ks), self.counts)])
        return -1 if q == self.unsafe_id else q


def box_gap(lo1, hi1, lo2, hi2) -> np.ndarray:
    """Per-dimension gap between boxes (zero where they overlap or touch)."""
    return np.maximum(0.0, np.maximum(lo2 - hi1, lo1 - hi2))


# --------------------------------------------------------------------------
# dynamics


class AffineMode:
    """``x -> A x + b``."""

    def __init__(self, A, b=None):
        self.A = _frozen(np.atleast_2d(A))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise InputError("mode matrix must be square")
        self.b = _frozen(np.zeros(n) if b is None else np.reshape(b, n))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.A.T + self.b

    def image(self, lo, hi):
        return intervals.interval_affine(self.A, self.b, lo, hi)

    def __repr__(self):
        return f"AffineMode(A={self.A.tolist()}, b={self.b.tolist()})"


class SeparableTrigMode:
    """``x_d -> x_d + offset_d + amp_d * trig_d(x[src_d])`` per coordinate.

    ``terms`` holds one ``(offset, amp, "sin"|"cos", src)`` tuple per
    coordinate.  The interval extension is the exact hull whenever
    ``src_d != d`` for every coordinate.
    """

    _funcs = {"sin": (np.sin, intervals.interval_sin),
              "cos": (np.cos, intervals.interval_cos)}

    def __init__(self, terms):
        self.terms = tuple((float(o), float(a), str(f), int(s)) for o, a, f, s in terms)
        for _, _, f, s in self.terms:
            if f not in self._funcs or not 0 <= s < len(self.terms):
                raise InputError(f"bad trig term {f!r} on coordinate {s}")

    @property
    def dim(self) -> int:
        return len(self.terms)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for d, (off, amp, f, s) in enumerate(self.terms):
            out[..., d] = x[..., d] + off + amp * self._funcs[f][0](x[..., s])
        return out

    def image(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out_lo = np.empty_like(lo)
        out_hi = np.empty_like(hi)
        for d, (off, amp, f, s) in enumerate(self.terms):
            tlo, thi = self._funcs[f][1](lo[..., s], hi[..., s])
            tlo, thi = intervals.interval_scale(tlo, thi, amp)
            out_lo[..., d] = lo[..., d] + off + tlo
            out_hi[..., d] = hi[..., d] + off + thi
        return out_lo, out_hi

    def __repr__(self):
        return f"SeparableTrigMode({list(self.terms)})"


@dataclass(frozen=True)
class SwitchedSystem:
    """``x+ = f_u(x) + v`` with one mode object per action."""

    modes: tuple
    names: tuple = ()

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise InputError("a switched system needs at least one mode")
        dims = {m.dim for m in modes}
        if len(dims) != 1:
            raise InputError("all modes must share the state dimension")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "names", tuple(self.names) or tuple(str(i) for i in range(len(modes))))

    @property
    def dim(self) -> int:
        return self.modes[0].dim

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def step(self, x, u, noise):
        """Advance a batch of states ``x`` under per-row mode indices ``u``."""
        x = np.asarray(x, dtype=float)
        u = np.broadcast_to(np.asarray(u), x.shape[:-1])
        out = np.empty_like(x)
        for a in np.unique(u):
            sel = u == a
            out[sel] = self.modes[int(a)](x[sel])
        return out + noise


# --------------------------------------------------------------------------
# noise and ambiguity


@dataclass(frozen=True)
class EmpiricalNoise:
    """Uniform mixture of Dirac atoms (``M x n`` array)."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = _frozen(np.atleast_2d(self.atoms))
        if atoms.shape[0] < 1:
            raise InputError("empirical noise needs at least one atom")
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self.atoms), 1.0 / len(self.atoms))

    def support_box(self) -> Box:
        return Box(self.atoms.min(axis=0), self.atoms.max(axis=0))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.atoms[rng.integers(len(self.atoms), size=size)]


@dataclass(frozen=True)
class TruncatedGaussianNoise:
    """Independent Gaussian coordinates truncated at ``truncation`` std devs."""

    mean: np.ndarray
    variance: np.ndarray
    truncation: float = 4.0

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        var = _frozen(np.atleast_1d(self.variance))
        if mean.shape != var.shape:
            raise InputError("mean and variance must have the same length")
        if np.any(var <= 0) or not self.truncation > 0:
            raise InputError("variances and truncation must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "truncation", float(self.truncation))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def support_box(self) -> Box:
        r = self.truncation * self.std
        return Box(self.mean - r, self.mean + r)

    def axis_cdf(self, z, d: int):
        """CDF of coordinate ``d`` (truncated and renormalised)."""
        t = self.truncation
        s = np.clip((np.asarray(z, dtype=float) - self.mean[d]) / self.std[d], -t, t)
        lo, hi = stats.norm.cdf(-t), stats.norm.cdf(t)
        return (stats.norm.cdf(s) - lo) / (hi - lo)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        t = self.truncation
        z = stats.truncnorm.rvs(-t, t, size=(size, self.dim), random_state=rng)
        return self.mean + z * self.std


@dataclass(frozen=True)
class AmbiguitySet:
    """Wasserstein ball of order ``order`` and radius ``radius`` around ``nominal``.

    ``support=None`` means the true noise support is unbounded.
    """

    nominal: object
    radius: float
    order: float = 2.0
    support: Optional[Box] = None

    def __post_init__(self):
        if not self.radius >= 0:
            raise InputError("ambiguity radius must be non-negative")
        if not self.order >= 1:
            raise InputError("Wasserstein order must be >= 1")
        if self.support is not None:
            sup = _as_box(self.support)
            object.__setattr__(self, "support", sup)
            if sup.dim != self.nominal.dim:
                raise InputError("support box dimension mismatch")
            if not sup.contains_box(self.nominal.support_box()):
                raise InputError("nominal noise support is not inside the support box")

    @property
    def budget(self) -> float:
        return float(self.radius) ** float(self.order)

    @property
    def dim(self) -> int:
        return self.nominal.dim


# --------------------------------------------------------------------------
# abstraction containers


class CostTable:
    """Transport cost ``c(q, q') = inf ||x - y||^s`` between abstract states."""

    def __init__(self, partition: Partition, order: float):
        if not order >= 1:
            raise InputError("cost order must be >= 1")
        self.partition = partition
        self.order = float(order)

    def sub(self, rows, cols) -> np.ndarray:
        """Cost block ``c[rows][:, cols]`` (state ids, ``q_u`` allowed)."""
        p = self.partition
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        u = p.unsafe_id
        r_safe = np.where(rows == u, 0, rows)
        c_safe = np.where(cols == u, 0, cols)
        g = box_gap(p.lower[r_safe][:, None, :], p.upper[r_safe][:, None, :],
                    p.lower[c_safe][None], p.upper[c_safe][None])
        dist = np.sqrt((g ** 2).sum(-1))
        ru = rows == u
        cu = cols == u
        dist = np.where(ru[:, None], p.dist_to_unsafe[c_safe][None, :], dist)
        dist = np.where(cu[None, :], p.dist_to_unsafe[r_safe][:, None], dist)
        dist = np.where(ru[:, None] & cu[None, :], 0.0, dist)
        return dist ** self.order

    def full(self) -> np.ndarray:
        ids = np.arange(self.partition.n_states)
        return self.sub(ids, ids)


@dataclass(frozen=True)
class Row:
    """Sparse abstraction row for one state-action pair.

    ``nominal`` (reachable under the nominal noise) with matching interval
    bounds ``low``/``high``, and ``support`` (reachable under any noise with
    support in W); ``nominal`` is a subset of ``support``.
    """

    nominal: np.ndarray
    low: np.ndarray
    high: np.ndarray
    support: np.ndarray

    @property
    def nominal_pos(self) -> np.ndarray:
        return np.searchsorted(self.support, self.nominal)


@dataclass
class RobustAbstraction:
    partition: Partition
    n_actions: int
    rows: list  # rows[q][a] -> Row, for every state id including q_u
    cost: CostTable
    budget: float
    info: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return self.partition.n_states

    @property
    def target_ids(self) -> np.ndarray:
        return self.partition.target_ids

    @property
    def unsafe_id(self) -> int:
        return self.partition.unsafe_id

    def row(self, q: int, a: int) -> Row:
        return self.rows[q][a]

    def dense_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(N, m, N)`` arrays of the nominal interval bounds."""
        N, m = self.n_states, self.n_actions
        lo = np.zeros((N, m, N))
        hi = np.zeros((N, m, N))
        for q in range(N):
            for a in range(m):
                r = self.rows[q][a]
                lo[q, a, r.nominal] = r.low
                hi[q, a, r.nominal] = r.high
        return lo, hi

    def check(self, atol: float = 1e-9) -> None:
        """Raise ``ModelError`` if an invariant of the abstraction fails."""
        u = self.unsafe_id
        for q in range(self.n_states):
            for a in range(self.n_actions):
                r = self.rows[q][a]
                if np.any(r.low < -atol) or np.any(r.high > 1 + atol) or np.any(r.low > r.high + atol):
                    raise ModelError(f"bad interval bounds at ({q}, {a})")
                if r.low.sum() > 1 + atol or r.high.sum() < 1 - atol:
                    raise ModelError(f"infeasible interval row at ({q}, {a})")
                if not np.all(np.isin(r.nominal, r.support)):
                    raise ModelError(f"nominal reach set not inside support reach set at ({q}, {a})")
            ru = self.rows[u]
            if q == u and not all(np.array_equal(r.nominal, [u]) and r.low[0] == 1 for r in ru):
                raise ModelError("unsafe state is not absorbing")


# --------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class StationaryStrategy:
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table, dtype=np.int64))

    def action(self, q, k: int = 0):
        return self.table[q]

    def validate(self, n_actions: int) -> None:
        if np.any(self.table < 0) or np.any(self.table >= n_actions):
            raise ModelError("strategy action index out of range")


@dataclass(frozen=True)
class MarkovianStrategy:
    """Time-indexed strategy; ``table[k, q]`` is the action at step ``k``."""

    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(np.atleast_2d(self.table), dtype=np.int64))

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    def action(self, q, k: int = 0):
        if not 0 <= k < self.horizon:
            raise InputError(f"time step {k} outside the strategy horizon [0, {self.horizon})")
        return self.table[k, q]

    def validate(self, n_actions: int) -> None:
        if np.any(self.table < 0) or np.any(self.table >= n_actions):
            raise ModelError("strategy action index out of range")
