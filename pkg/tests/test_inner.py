import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_problem, random_row

from drsynth.inner import (InnerProblem, dual_g, dual_objective, imdp_inner_max, imdp_inner_min,
                           inner_max_dual, inner_max_lp, inner_min_dual, inner_min_lp,
                           membership_test)
from drsynth.model import InputError, ModelError
from drsynth.simplex import LPInfeasible, LPUnbounded, reference_lp


# -- interval (IMDP) solver --------------------------------------------------

def test_imdp_example():
    v, row = imdp_inner_min([0.1, 0.2, 0.1], [0.5, 0.7, 0.6], [0, 0.5, 1])
    assert row == pytest.approx([0.5, 0.4, 0.1])
    assert v == pytest.approx(0.3)


def test_imdp_constant_and_degenerate():
    assert imdp_inner_min([0.2, 0.3], [0.7, 0.8], [0.4, 0.4])[0] == pytest.approx(0.4)
    low = np.array([0.2, 0.5, 0.3])
    assert imdp_inner_max(low, low, [1, 2, 3])[0] == pytest.approx(low @ [1, 2, 3])


def test_imdp_infeasible_row():
    with pytest.raises(ModelError):
        imdp_inner_min([0.6, 0.6], [0.7, 0.7], [0, 1])
    with pytest.raises(ModelError):
        imdp_inner_min([0.1, 0.1], [0.2, 0.2], [0, 1])


@given(st.integers(0, 10_000))
def test_imdp_matches_reference_lp(seed):
    rng = np.random.default_rng(seed)
    J = int(rng.integers(1, 9))
    low, high = random_row(rng, J)
    v = rng.uniform(0, 1, J)
    for sign, fn in ((1.0, imdp_inner_min), (-1.0, imdp_inner_max)):
        res = reference_lp(sign * v, A_eq=np.ones((1, J)), b_eq=[1.0], bounds=list(zip(low, high)))
        assert fn(low, high, v)[0] == pytest.approx(sign * res.fun, abs=1e-9)


# -- primal LP ---------------------------------------------------------------

def single_nominal():
    return InnerProblem([1.0, 0.0], [1.0], [1.0], [[0.0], [1.0]], 0.5)


def test_lp_single_nominal_example():
    v, gamma = inner_min_lp(single_nominal())
    assert v == pytest.approx(0.5)
    assert gamma == pytest.approx([0.5, 0.5])


def test_lp_constant_values():
    rng = np.random.default_rng(0)
    low, high = random_row(rng, 4)
    prob = InnerProblem(np.full(4, 0.7), low, high, rng.uniform(0, 1, (4, 4)), 0.3)
    assert inner_min_lp(prob)[0] == pytest.approx(0.7)


def test_lp_zero_budget_collapse():
    rng = np.random.default_rng(2)
    low, high = random_row(rng, 5)
    C = rng.uniform(0.1, 1, (5, 5))
    np.fill_diagonal(C, 0)
    p = rng.uniform(0, 1, 5)
    prob = InnerProblem(p, low, high, C, 0.0, np.arange(5))
    assert inner_min_lp(prob)[0] == pytest.approx(imdp_inner_min(low, high, p)[0], abs=1e-9)


def test_lp_infeasible_row_is_model_error():
    with pytest.raises(ModelError):
        inner_min_lp(InnerProblem([0.0, 1.0], [0.7, 0.7], [0.8, 0.8], np.zeros((2, 2)), 0.1))


# -- dual --------------------------------------------------------------------

def test_dual_single_nominal_example():
    prob = single_nominal()
    assert inner_min_dual(prob) == pytest.approx(0.5, abs=1e-7)
    assert dual_g(prob, 1.0) == pytest.approx(0.5)
    assert dual_g(prob, 0.4) == pytest.approx(0.4 - 0.2)
    # G(lambda, mu) at the maximiser
    assert dual_objective(prob, 1.0, 1.0) == pytest.approx(0.5)


def test_dual_zero_budget_collapse():
    rng = np.random.default_rng(4)
    low, high = random_row(rng, 6)
    C = rng.uniform(0.05, 1, (6, 6))
    np.fill_diagonal(C, 0)
    p = rng.uniform(0, 1, 6)
    prob = InnerProblem(p, low, high, C, 0.0, np.arange(6))
    assert inner_min_dual(prob) == pytest.approx(imdp_inner_min(low, high, p)[0], abs=1e-8)
    assert inner_max_dual(prob) == pytest.approx(imdp_inner_max(low, high, p)[0], abs=1e-8)


def test_dual_zero_budget_with_touching_cells():
    # zero-cost transport between touching states is still available at budget 0
    prob = InnerProblem([1.0, 0.0], [1.0], [1.0], [[0.0], [0.0]], 0.0, np.array([0]))
    assert inner_min_dual(prob) == pytest.approx(0.0, abs=1e-9)
    assert inner_min_lp(prob)[0] == pytest.approx(0.0, abs=1e-9)


def test_dual_large_budget():
    prob = random_problem(11)
    big = InnerProblem(prob.values, prob.row_low, prob.row_high, prob.costs,
                       float(prob.costs.max()) + 1.0)
    assert inner_min_dual(big) == pytest.approx(prob.values.min(), abs=1e-7)
    assert inner_max_dual(big) == pytest.approx(prob.values.max(), abs=1e-7)


def test_dual_rejects_bad_tol():
    with pytest.raises(InputError):
        inner_min_dual(single_nominal(), tol=0.0)


@given(st.integers(0, 100_000))
def test_dual_matches_lp(seed):
    prob = random_problem(seed)
    assert inner_min_dual(prob) == pytest.approx(inner_min_lp(prob)[0], abs=1e-6)
    assert inner_max_dual(prob) == pytest.approx(inner_max_lp(prob)[0], abs=1e-6)


@given(st.integers(0, 100_000))
def test_dual_iterates_are_lower_bounds(seed):
    base = random_problem(seed)
    # without nominal positions the zero-budget shortcut is off and the search always runs
    prob = InnerProblem(base.values, base.row_low, base.row_high, base.costs, base.budget)
    lp = inner_min_lp(prob)[0]
    _, trace = inner_min_dual(prob, return_trace=True)
    assert len(trace) > 0
    assert max(g for _, g in trace) <= lp + 1e-9


@given(st.integers(0, 100_000), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_dual_monotone_in_budget(seed, b1, b2):
    prob = random_problem(seed)
    lo_b, hi_b = sorted((b1, b2))
    mk = lambda b: InnerProblem(prob.values, prob.row_low, prob.row_high, prob.costs, b)  # noqa: E731
    assert inner_min_dual(mk(hi_b)) <= inner_min_dual(mk(lo_b)) + 1e-7
    assert inner_max_dual(mk(hi_b)) >= inner_max_dual(mk(lo_b)) - 1e-7


@given(st.integers(0, 100_000), st.floats(0.0, 5.0))
def test_lambda_candidates_suffice(seed, mu):
    prob = random_problem(seed)
    g = dual_g(prob, mu)
    h = (prob.values[:, None] + mu * prob.costs).min(axis=0)
    grid = np.linspace(h.min() - 1.0, h.max() + 1.0, 2001)
    fine = max(dual_objective(prob, lam, mu) for lam in grid)
    assert fine <= g + 1e-9


# -- membership --------------------------------------------------------------

def test_membership_interval_point_is_member():
    prob = InnerProblem([0.0, 1.0], [0.2, 0.3], [0.6, 0.8], [[0.0, 1.0], [1.0, 0.0]], 0.0)
    assert membership_test(prob, [0.4, 0.6])


def test_membership_beyond_budget():
    prob = InnerProblem([0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [[0.0, 1.0], [1.0, 0.0]], 0.1)
    assert membership_test(prob, [0.9, 0.1])
    assert not membership_test(prob, [0.8, 0.2])


@given(st.integers(0, 100_000))
def test_lp_worst_row_is_member(seed):
    prob = random_problem(seed)
    v, gamma = inner_min_lp(prob)
    assert membership_test(prob, np.maximum(gamma, 0) / np.maximum(gamma, 0).sum(), tol=1e-7)
    assert gamma @ prob.values == pytest.approx(v, abs=1e-8)


# -- reference simplex -------------------------------------------------------

def test_reference_lp_examples():
    assert reference_lp([1.0], bounds=[(3.0, None)]).fun == pytest.approx(3.0)
    # two optimal vertices, unique value
    res = reference_lp([1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], bounds=[(0, None)] * 2)
    assert res.fun == pytest.approx(1.0)
    # single-nominal transport LP: variables gamma(2), gamma_hat(1), pi(2)
    c = [1.0, 0.0, 0.0, 0.0, 0.0]
    A_eq = [[0, 0, 1, 0, 0], [0, 0, 1, -1, -1], [-1, 0, 0, 1, 0], [0, -1, 0, 0, 1]]
    res = reference_lp(c, A_ub=[[0, 0, 0, 0, 1.0]], b_ub=[0.5], A_eq=A_eq, b_eq=[1, 0, 0, 0],
                       bounds=[(0, None)] * 5)
    assert res.fun == pytest.approx(0.5)


def test_reference_lp_failures():
    with pytest.raises(LPInfeasible):
        reference_lp([1.0], A_ub=[[1.0]], b_ub=[-1.0], bounds=[(0, None)])
    with pytest.raises(LPUnbounded):
        reference_lp([-1.0], bounds=[(0, None)])


@given(st.integers(0, 100_000))
def test_reference_lp_matches_highs(seed):
    from scipy.optimize import linprog
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 7)), int(rng.integers(0, 5))
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, n)
    b = A @ x0 + rng.uniform(0, 1, m)
    bounds = [(0.0, 2.0)] * n
    ref = linprog(c, A_ub=A if m else None, b_ub=b if m else None, bounds=bounds, method="highs")
    res = reference_lp(c, A_ub=A if m else None, b_ub=b if m else None, bounds=bounds)
    assert res.fun == pytest.approx(ref.fun, abs=1e-8)
