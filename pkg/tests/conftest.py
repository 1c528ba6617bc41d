import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from drsynth.inner import InnerProblem
from drsynth.model import CostTable, Partition, RobustAbstraction, Row

settings.register_profile(
    "repo", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


def hand_abstraction(partition, rows, budget=0.0, order=2.0):
    """Abstraction from ``rows[q][a] = (nominal, low, high[, support])`` lists.

    The ``q_u`` row (last) is added automatically.
    """
    u = partition.unsafe_id
    built = []
    for per_action in rows:
        r = []
        for spec in per_action:
            nom, low, high = (np.asarray(x) for x in spec[:3])
            sup = np.asarray(spec[3]) if len(spec) > 3 else nom
            order_idx = np.argsort(nom)
            r.append(Row(nominal=nom[order_idx].astype(np.int64), low=low[order_idx].astype(float),
                         high=high[order_idx].astype(float),
                         support=np.unique(sup).astype(np.int64)))
        built.append(r)
    m = len(rows[0])
    dirac = Row(np.array([u]), np.ones(1), np.ones(1), np.array([u]))
    built.append([dirac] * m)
    return RobustAbstraction(partition, m, built, CostTable(partition, order), budget)


def line_partition(n_cells=3, target=(2, 3), obstacles=()):
    return Partition(([0.0], [float(n_cells)]), [n_cells], [([target[0]], [target[1]])],
                     [([a], [b]) for a, b in obstacles])


@pytest.fixture
def loop_trap():
    """q0 and q1 bounce between each other under action 0; action 1 goes to the target."""
    p = line_partition(3)
    rows = [
        [([1], [1.0], [1.0]), ([2], [1.0], [1.0])],
        [([0], [1.0], [1.0]), ([2], [1.0], [1.0])],
        [([2], [1.0], [1.0]), ([2], [1.0], [1.0])],
    ]
    return hand_abstraction(p, rows)


def random_row(rng, J):
    """Feasible interval row on J states."""
    centre = rng.dirichlet(np.ones(J))
    low = np.clip(centre - rng.uniform(0, 0.3, J), 0, 1)
    high = np.clip(centre + rng.uniform(0, 0.3, J), 0, 1)
    if rng.random() < 0.2:
        low = high = centre
    return low, high


def random_problem(seed, I_max=12, zero_costs=True):
    rng = np.random.default_rng(seed)
    I = int(rng.integers(1, I_max + 1))
    J = int(rng.integers(1, I + 1))
    nominal_pos = np.sort(rng.choice(I, J, replace=False))
    pts = rng.uniform(0, 3, size=(I, 2))
    C = ((pts[:, None] - pts[None, nominal_pos]) ** 2).sum(-1)
    if zero_costs:
        C[rng.random(C.shape) < 0.2] = 0.0
    C[nominal_pos, np.arange(J)] = 0.0
    low, high = random_row(rng, J)
    p = rng.uniform(0, 1, I)
    if rng.random() < 0.3:
        p = np.round(p, 1)
    budget = float(rng.choice([0.0, rng.uniform(0, 0.1), rng.uniform(0, 2.0), 20.0]))
    return InnerProblem(p, low, high, C, budget, nominal_pos)
