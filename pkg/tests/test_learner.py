import math

import numpy as np
import pytest

from bgdce.estimator import estimate_bound
from bgdce.graph import path_vector, reachable_subgraph
from bgdce.instances import DD_BLUE, double_diamond, parallel_edges
from bgdce.learner import Learner, Schedule, best_fixed_cost, log_checkpoints, realized_regret
from bgdce.polytope import DagSpace, project_bounded_away, uniform_point


def test_nash_schedule_values():
    sc = Schedule("nash", 2, 2, 2.0)
    gamma, mu = sc.values(1)
    assert mu == pytest.approx(2 ** -1.4)
    assert mu == pytest.approx(0.3789, abs=1e-4)
    assert gamma == pytest.approx(math.sqrt(2 * mu / (8 * 64)))
    assert gamma == pytest.approx(0.03848, abs=1e-5)


def test_regret_schedule_values():
    sc = Schedule("regret", 1, 2, 1.0)
    assert sc.mu(16) == 0.25
    assert sc.gamma(16) == pytest.approx(0.25 / (4 * 1 * 1 * 16 ** 0.5))
    literal = Schedule("regret", 1, 2, 1.0, step_t_power=1.0)
    assert literal.gamma(16) == pytest.approx(0.25 / (4 * 16))


def test_nash_schedule_unit_constants():
    sc = Schedule("nash", 1, 1, 1.0)
    for t in (1, 2, 100, 10 ** 6):
        assert sc.mu(t) == pytest.approx(min(t ** -0.2, 0.5))


def test_gamma_m_power_override():
    a = Schedule("nash", 2, 3, 1.0)
    b = Schedule("nash", 2, 3, 1.0, gamma_m_power=3.0)
    assert b.gamma(5) / a.gamma(5) == pytest.approx(3 ** 1.5)


def test_schedules_monotone():
    for sc in (Schedule("nash", 3, 9, 2.0), Schedule("regret", 1, 4, 1.0), Schedule("nash", 1, 1, 0.1)):
        mus = [sc.mu(t) for t in range(1, 2000)]
        assert all(b <= a for a, b in zip(mus, mus[1:]))
        assert all(sc.gamma(t) > 0 for t in range(1, 2000))


def test_schedule_rejects_bad_input():
    with pytest.raises(ValueError):
        Schedule("fast", 1, 1, 1.0)
    with pytest.raises(ValueError):
        Schedule("nash", 1, 1, 1.0).mu(0)


def test_init_is_uniform():
    L = Learner(DagSpace.for_agent(parallel_edges(1), 0), Schedule("nash", 1, 2, 1.0))
    np.testing.assert_array_equal(L.alpha, [0.5, 0.5])
    L = Learner(DagSpace.for_agent(double_diamond(), 0, blue=DD_BLUE), Schedule("nash", 1, 9, 1.0))
    np.testing.assert_allclose(L.alpha, [1 / 3] * 3)
    assert L.t == 1
    assert L.space.constraints.shrink(0.5).violation(L.alpha) <= 1e-12


def test_update_requires_sample():
    L = Learner(DagSpace.for_agent(parallel_edges(1), 0), Schedule("nash", 1, 2, 1.0))
    with pytest.raises(RuntimeError):
        L.update(0.0)


def test_out_of_range_loss():
    L = Learner(DagSpace.for_agent(parallel_edges(1), 0), Schedule("nash", 1, 2, 1.0))
    L.sample()
    with pytest.raises(ValueError):
        L.update(2.5)


class Fixed:
    """Constant gamma, mu looked up per round; enough of the Schedule interface for a Learner."""

    c_max = 1.0

    def __init__(self, gamma, mus):
        self._g, self._mus = gamma, mus

    def mu(self, t):
        return self._mus.get(t, self._mus["default"])

    def gamma(self, t):
        return self._g

    def values(self, t):
        return self.gamma(t), self.mu(t)


def test_zero_gradient_keeps_point():
    space = DagSpace.for_agent(parallel_edges(1), 0)
    L = Learner(space, Fixed(0.1, {"default": 0.1}), np.random.default_rng(0))
    L.alpha = np.array([0.3, 0.7])
    L.sample()
    L.update(0.0)
    np.testing.assert_array_equal(L.alpha, [0.3, 0.7])


def test_hand_checked_step():
    space = DagSpace.for_agent(parallel_edges(1), 0)
    # mu = 0 on every round: pre-projection (0.3, 0.5), mean shift gives (0.4, 0.6)
    L = Learner(space, Fixed(0.1, {"default": 0.0}), np.random.default_rng(0))
    while L.sample() != (0,):
        L.support = None
    L.update(1.0)
    np.testing.assert_allclose(L.last_estimate, [2, 0])
    np.testing.assert_allclose(L.alpha, [0.4, 0.6], atol=1e-12)


def test_step_into_bounded_away_set():
    space = DagSpace.for_agent(parallel_edges(1), 0)
    out = project_bounded_away(space.constraints, [0.3, 0.5], 0.2)
    # (1-mu) * proj(((0.3, 0.5) - 0.1) / 0.8) + 0.1 = 0.8 * proj((0.25, 0.5)) + 0.1
    np.testing.assert_allclose(out, 0.8 * np.array([0.375, 0.625]) + 0.1)
    assert out.min() >= 0.1


def test_feasibility_and_estimate_bounds_along_a_run():
    space = DagSpace.for_agent(double_diamond(), 0, blue=DD_BLUE)
    sc = Schedule("regret", 1, 9, 1.0)
    L = Learner(space, sc, np.random.default_rng(3))
    r = np.random.default_rng(4)
    for t in range(1, 400):
        mu_t = L.mu
        p = L.sample()
        c = r.uniform(0, 1, 9)
        g = L.update(float(space.vector(p) @ c))
        assert np.linalg.norm(g) <= estimate_bound(1.0, 9, 1.0, mu_t)
        assert space.constraints.shrink(sc.mu(t + 1)).violation(L.alpha) <= 1e-7


def test_deterministic_replay():
    def run(seed):
        space = DagSpace.for_agent(double_diamond(), 0, blue=DD_BLUE)
        L = Learner(space, Schedule("nash", 1, 9, 1.0), np.random.default_rng(seed))
        c = np.linspace(0.1, 0.9, 9)
        traj = []
        for _ in range(300):
            p = L.sample()
            L.update(float(space.vector(p) @ c))
            traj.append(L.alpha.copy())
        return np.array(traj)
    a, b = run(7), run(7)
    assert a.tobytes() == b.tobytes()
    assert run(8).tobytes() != a.tobytes()


def test_realized_regret_examples():
    space = DagSpace.for_agent(parallel_edges(1), 0)
    costs = [[1, 2]] * 5
    played = [1] * 5
    assert all(v == 0 for v in realized_regret(space, played, costs).values())
    assert realized_regret(space, [2], [[1, 2]]) == {1: 1.0}
    reg = realized_regret(space, [2, 2, 1], [[1, 2], [1, 2], [0, 3]], checkpoints=[2, 3])
    assert reg == {2: 2.0, 3: 3.0}


def test_best_fixed_cost_on_subgraph():
    g = double_diamond()
    space = DagSpace.for_agent(g, 0)
    assert best_fixed_cost(space, np.ones(9)) == 5.0
    assert best_fixed_cost(reachable_subgraph(g, 0, 7), np.ones(9)) == 5.0


def test_log_checkpoints():
    pts = log_checkpoints(1000)
    assert pts[0] == 1 and pts[-1] == 1000
    assert 10 in pts and 100 in pts
    assert log_checkpoints(1) == [1]


def test_regret_sublinear_on_alternating_costs():
    space = DagSpace.for_agent(parallel_edges(1), 0)
    sc = Schedule("regret", 1, 2, 1.0)
    L = Learner(space, sc, np.random.default_rng(0))
    seq = [np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    played, costs = [], []
    for t in range(1000):
        c = seq[t % 3]
        p = L.sample()
        loss = float(space.vector(p) @ c)
        L.update(loss)
        played.append(loss)
        costs.append(c)
    reg = realized_regret(space, played, costs, checkpoints=[100, 1000])
    assert reg[1000] / 1000 < reg[100] / 100
