import numpy as np
import pytest

from bgdce import game as gm
from bgdce.graph import enumerate_paths, path_vector
from bgdce.instances import diamond, parallel_edges
from bgdce.oracle import (
    ExplicitGame, OracleSizeError, exact_expected_potential, exact_nash_gap, validation_battery,
)

LINEAR = np.array([[0, 1, 2], [0, 1, 2]], dtype=float)
TWO = (np.eye(2), np.eye(2))


def test_size_caps():
    with pytest.raises(OracleSizeError):
        ExplicitGame((np.eye(2),) * 5, np.zeros((2, 6)))
    with pytest.raises(OracleSizeError):
        ExplicitGame((np.eye(9),), np.zeros((9, 2)))
    with pytest.raises(OracleSizeError):
        ExplicitGame((np.eye(13)[:2],), np.zeros((13, 2)))
    with pytest.raises(OracleSizeError):
        exact_expected_potential(np.zeros((5, 2)), np.zeros((2, 6)))


def test_exact_potential_examples(rng):
    assert exact_expected_potential([[1, 0], [1, 0]], LINEAR) == 3.0
    assert exact_expected_potential([[0.5, 0.5], [0.5, 0.5]], LINEAR) == pytest.approx(2.5)
    costs = np.hstack([np.zeros((4, 1)), np.sort(rng.uniform(0, 1, (4, 3)), axis=1)])
    g = gm.CongestionGame.on_dag(diamond(3), costs)
    X = rng.dirichlet([1, 1], size=3)
    X = np.column_stack([X[:, 0], X[:, 1], X[:, 0], X[:, 1]])
    assert exact_expected_potential(X, costs) == pytest.approx(gm.expected_potential(g, X), abs=1e-12)


def test_exact_nash_gap_examples():
    g = ExplicitGame(TWO, LINEAR)
    assert exact_nash_gap(g, [[1, 0], [0, 1]]) == 0.0
    assert exact_nash_gap(g, [[0.5, 0.5], [0.5, 0.5]]) == pytest.approx(0.0, abs=1e-12)
    assert exact_nash_gap(g, [[1, 0], [1, 0]]) == pytest.approx(1.0)


def test_dominated_strategy_margin():
    # resource 0 costs 3 more than resource 1 at every load
    costs = np.array([[0, 4, 5], [0, 1, 2]], dtype=float)
    g = ExplicitGame(TWO, costs)
    # agent 0 on the dominated resource while agent 1 sits on the other: 4 vs 2
    assert exact_nash_gap(g, [[1, 0], [0, 1]]) == pytest.approx(2.0)
    # both spread over resource 1 only: agent deviating to 0 pays 4 > 2, no gain
    assert exact_nash_gap(g, [[0, 1], [0, 1]]) == pytest.approx(0.0)


def test_single_agent_gap_is_regret_to_shortest_path(rng):
    dag = diamond(1)
    paths = enumerate_paths(gm.CongestionGame.on_dag(dag, np.zeros((4, 2)), 1.0).spaces[0].sub)
    c = rng.uniform(0, 1, 4)
    V = np.array([path_vector(p, 4) for p in paths])
    g = ExplicitGame((V,), np.column_stack([np.zeros(4), c]))
    d = rng.dirichlet([1, 1])
    assert exact_nash_gap(g, [d]) == pytest.approx(d @ (V @ c) - (V @ c).min(), abs=1e-12)


def test_fast_gap_matches_exact_gap(rng):
    for _ in range(20):
        costs = np.hstack([np.zeros((4, 1)), np.sort(rng.uniform(0, 1, (4, 3)), axis=1)])
        g = gm.CongestionGame.on_dag(diamond(3), costs)
        paths = [enumerate_paths(sp.sub) for sp in g.spaces]
        dists = [rng.dirichlet(np.ones(len(p))) for p in paths]
        X = np.array([sum(w * path_vector(p, 4) for w, p in zip(d, ps)) for d, ps in zip(dists, paths)])
        ex = ExplicitGame(tuple(np.array([path_vector(p, 4) for p in ps]) for ps in paths), costs)
        assert gm.nash_gap(g, X) == pytest.approx(exact_nash_gap(ex, dists), abs=1e-10)


def test_validation_battery_passes():
    results = validation_battery(seed=3)
    failed = [r for r in results if not r["passed"]]
    assert not failed, failed
    assert len(results) >= 8
