"""Brute-force references for tiny instances and the cross-check battery.

Everything here enumerates explicitly (subsets of agents, joint pure
profiles, atoms of a support) and refuses instances beyond its size caps.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .estimator import estimate_cost, second_moment


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ExplicitGame:
    """``strategies[i]`` is a (k_i x m) 0/1 array; ``costs[e, l]`` for l = 0..n."""

    strategies: tuple
    costs: np.ndarray

    def __post_init__(self):
        strategies = tuple(np.atleast_2d(np.asarray(S, dtype=float)) for S in self.strategies)
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "costs", np.asarray(self.costs, dtype=float))
        if len(strategies) > 4:
            raise OracleSizeError("explicit games are limited to 4 agents")
        if any(S.shape[0] > 8 for S in strategies):
            raise OracleSizeError("explicit games are limited to 8 strategies per agent")
        if self.costs.shape[0] > 12:
            raise OracleSizeError("explicit games are limited to 12 resources")
        if self.costs.shape[1] != len(strategies) + 1:
            raise ValueError("cost tables need n + 1 entries")

    @property
    def n(self) -> int:
        return len(self.strategies)

    @property
    def m(self) -> int:
        return self.costs.shape[0]

    def profile_costs(self, choice) -> np.ndarray:
        """Cost of every agent under the joint pure profile ``choice`` (strategy indices)."""
        V = np.array([self.strategies[i][k] for i, k in enumerate(choice)])
        ell = V.sum(axis=0).astype(int)
        return V @ self.costs[np.arange(self.m), ell]


def exact_expected_potential(X, costs, max_agents: int = 4) -> float:
    """Subset-sum form of the expected potential, literally over all 2^n agent subsets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    costs = np.asarray(costs, dtype=float)
    n, m = X.shape
    if n > max_agents:
        raise OracleSizeError(f"{n} agents exceeds the subset-enumeration cap of {max_agents}")
    total = 0.0
    for e in range(m):
        for mask in itertools.product((0, 1), repeat=n):
            prob = 1.0
            for j, inside in enumerate(mask):
                prob *= X[j, e] if inside else 1.0 - X[j, e]
            total += prob * costs[e, :sum(mask) + 1].sum()
    return total


def exact_nash_gap(game: ExplicitGame, dists) -> float:
    """Nash gap of independent mixed strategies by full enumeration of joint profiles."""
    dists = [np.asarray(d, dtype=float) for d in dists]
    for i, d in enumerate(dists):
        if d.shape != (game.strategies[i].shape[0],):
            raise ValueError(f"agent {i}: distribution length does not match the strategy list")
    n = game.n
    expected = np.zeros(n)
    # deviation[i][k]: expected cost of agent i playing k against the others' mixtures.
    deviation = [np.zeros(S.shape[0]) for S in game.strategies]
    for choice in itertools.product(*(range(S.shape[0]) for S in game.strategies)):
        prob = np.prod([dists[i][k] for i, k in enumerate(choice)])
        if prob == 0.0:
            continue
        expected += prob * game.profile_costs(choice)
    for i in range(n):
        others = [range(S.shape[0]) for j, S in enumerate(game.strategies) if j != i]
        for rest in itertools.product(*others):
            prob = np.prod([dists[j][k] for j, k in zip([j for j in range(n) if j != i], rest)])
            if prob == 0.0:
                continue
            for k in range(game.strategies[i].shape[0]):
                choice = list(rest)
                choice.insert(i, k)
                deviation[i][k] += prob * game.profile_costs(choice)[i]
    return float(max(expected[i] - deviation[i].min() for i in range(n)))


def estimator_expectation(support, cost_vector) -> tuple[np.ndarray, float]:
    """Exact ``E[g]`` and ``E[|g|^2]`` of the spanner-coordinate estimator over a support."""
    c = np.asarray(cost_vector, dtype=float)
    N = second_moment(support)
    mean = np.zeros(support.coords.shape[1])
    sq = 0.0
    for p, coords, vec in zip(support.probs, support.coords, support.vectors):
        g = estimate_cost(float(vec @ c), coords, N)
        mean += p * g
        sq += p * float(g @ g)
    return mean, sq


def _check(name, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # report, keep running the battery
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return {"check": name, "passed": bool(ok), "detail": detail, "seconds": round(time.perf_counter() - t0, 3)}


def validation_battery(seed: int = 0) -> list[dict]:
    """Cross-check every fast path against its brute-force counterpart on small instances."""
    from . import game as gm
    from .graph import enumerate_paths, layered_dag, path_vector, reachable_subgraph, shortest_path
    from .instances import DD_BLUE, diamond, double_diamond, parallel_edges
    from .polytope import (
        DagSpace, caratheodory_dag, caratheodory_distribution, project_bounded_away, project_direct, random_flow,
    )
    from .spanner import build_dag_spanner, check_prefix_property, decompose_in_spanner

    rng = np.random.default_rng(seed)

    def dd_spanner():
        g = double_diamond()
        sp = build_dag_spanner(g, 0, 7, blue=DD_BLUE)
        names = [g.describe_path(b) for b in sp.basis]
        coefs = [decompose_in_spanner(sp, path_vector(p, g.m)) for p in enumerate_paths(sp.subgraph)]
        exact = all(np.allclose(c, np.round(c), atol=1e-9) and np.abs(c).max() <= 1 for c in coefs)
        ok = names == ["s-b-d-e-g-t", "s-c-d-e-g-t", "s-c-d-e-f-t"] and sp.prefix == (None, None, 1) and exact
        return ok, {"basis": names, "prefix": list(sp.prefix)}

    def spanner_fuzz():
        worst = 0.0
        for _ in range(40):
            dag = layered_dag(rng)
            sp = build_dag_spanner(dag, 0, dag.node_count - 1)
            paths = enumerate_paths(sp.subgraph, cap=300)
            for p in paths:
                a = decompose_in_spanner(sp, path_vector(p, dag.m))
                worst = max(worst, float(np.abs(a).max()))
            if not check_prefix_property(sp):
                return False, "prefix property violated"
        return worst <= 1 + 1e-9, {"max_abs_coefficient": worst}

    def caratheodory():
        worst, atoms_ok = 0.0, True
        for dag in (double_diamond(), diamond()):
            sub = reachable_subgraph(dag, *dag.agents[0])
            paths = enumerate_paths(sub)
            for _ in range(100):
                x = random_flow(sub, rng, paths)
                atoms = caratheodory_dag(sub, x)
                rec = sum(w * path_vector(p, dag.m) for p, w in atoms)
                worst = max(worst, float(np.abs(rec - x).max()))
                atoms_ok &= len(atoms) <= dag.m
        return worst <= 1e-8 and atoms_ok, {"max_recombination_error": worst}

    def projection_shift():
        worst = 0.0
        for dag in (double_diamond(), diamond(), parallel_edges(1)):
            cons = DagSpace.for_agent(dag, 0).constraints
            for _ in range(50):
                z = rng.normal(size=cons.s) * 1.5
                mu = float(rng.uniform(0, 0.5))
                worst = max(worst, float(np.abs(project_bounded_away(cons, z, mu) - project_direct(cons, z, mu)).max()))
        return worst <= 1e-7, {"max_difference": worst}

    def estimator():
        from .oracle import estimator_expectation
        worst = 0.0
        space = DagSpace.for_agent(double_diamond(), 0, blue=DD_BLUE)
        for _ in range(30):
            mu = float(rng.uniform(0.05, 0.5))
            z = decompose_in_spanner(space.spanner, random_flow(space.sub, rng))
            alpha = (1 - mu) * z + mu / space.s
            sup = caratheodory_distribution(space, alpha, mu)
            c = rng.uniform(0, 1, space.m)
            mean, _ = estimator_expectation(sup, c)
            worst = max(worst, float(np.abs(mean - space.spanner.matrix.T @ c).max()))
        return worst <= 1e-7, {"max_bias_on_basis": worst}

    def potentials():
        worst = 0.0
        for n in (1, 2, 3, 4):
            dag = diamond(agents=n)
            costs = np.hstack([np.zeros((4, 1)), np.sort(rng.uniform(0, 1, (4, n)), axis=1)])
            g = gm.CongestionGame.on_dag(dag, costs, 1.0)
            X = np.array([random_flow(sp.sub, rng) for sp in g.spaces])
            worst = max(worst, abs(gm.expected_potential(g, X) - exact_expected_potential(X, costs)))
        return worst <= 1e-12, {"max_difference": worst}

    def gradient():
        dag = double_diamond(agents=3)
        costs = np.hstack([np.zeros((9, 1)), np.sort(rng.uniform(0, 1, (9, 3)), axis=1)])
        g = gm.CongestionGame.on_dag(dag, costs, 1.0)
        X = np.array([random_flow(sp.sub, rng) for sp in g.spaces])
        worst, h = 0.0, 1e-5
        for i in range(3):
            grad = gm.potential_gradient(g, X, i)
            for e in range(9):
                Xp, Xm = X.copy(), X.copy()
                Xp[i, e] += h
                Xm[i, e] -= h
                fd = (gm.expected_potential(g, Xp) - gm.expected_potential(g, Xm)) / (2 * h)
                worst = max(worst, abs(fd - grad[e]) / max(1.0, abs(grad[e])))
        return worst <= 1e-6, {"max_relative_error": worst}

    def nash_gap():
        g = gm.CongestionGame.on_dag(parallel_edges(2), [[0, 1, 2], [0, 1, 2]])
        split = gm.nash_gap(g, [[1, 0], [0, 1]])
        mixed = gm.nash_gap(g, [[0.5, 0.5], [0.5, 0.5]])
        dag = diamond(agents=2)
        costs = np.hstack([np.zeros((4, 1)), np.sort(rng.uniform(0, 1, (4, 2)), axis=1)])
        gd = gm.CongestionGame.on_dag(dag, costs, 1.0)
        paths = [enumerate_paths(sp.sub) for sp in gd.spaces]
        dists = [rng.dirichlet(np.ones(len(p))) for p in paths]
        X = [sum(w * path_vector(p, 4) for w, p in zip(d, ps)) for d, ps in zip(dists, paths)]
        ex = ExplicitGame(tuple(np.array([path_vector(p, 4) for p in ps]) for ps in paths), costs)
        diff = abs(gm.nash_gap(gd, X) - exact_nash_gap(ex, dists))
        return max(abs(split), abs(mixed)) <= 1e-9 and diff <= 1e-10, \
            {"split_gap": split, "mixed_gap": mixed, "fast_vs_exact": diff}

    def shortest():
        worst = 0.0
        for _ in range(30):
            dag = layered_dag(rng)
            sub = reachable_subgraph(dag, 0, dag.node_count - 1)
            w = rng.normal(size=dag.m)
            brute = min(float(w[list(p)].sum()) for p in enumerate_paths(sub, cap=10_000))
            worst = max(worst, abs(shortest_path(sub, w)[1] - brute))
        return worst <= 1e-12, {"max_difference": worst}

    checks = [
        ("spanner_double_diamond", dd_spanner),
        ("spanner_1_fuzz", spanner_fuzz),
        ("caratheodory_recombination", caratheodory),
        ("projection_shift", projection_shift),
        ("estimator_orthogonal_bias", estimator),
        ("expected_potential_vs_subsets", potentials),
        ("gradient_vs_finite_differences", gradient),
        ("nash_gap", nash_gap),
        ("shortest_path_vs_enumeration", shortest),
    ]
    return [_check(name, fn) for name, fn in checks]
