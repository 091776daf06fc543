"""Congestion-game environment and the synchronized bandit round loop."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import Dag, shortest_path
from .learner import Learner, Schedule, best_fixed_cost, log_checkpoints
from .polytope import DagSpace


class GameError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CongestionGame:
    """``costs[e, l]`` is the cost of edge ``e`` under load ``l`` for ``l = 0..n``."""

    spaces: tuple
    costs: np.ndarray
    c_max: float
    dag: Dag | None = None

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        object.__setattr__(self, "costs", costs)
        n = len(self.spaces)
        if costs.ndim != 2 or costs.shape[1] != n + 1:
            raise GameError(f"cost tables must have n + 1 = {n + 1} entries per edge")
        for e, row in enumerate(costs):
            if row[0] != 0.0:
                raise GameError(f"edge {e}: cost at load 0 must be 0")
            if np.any(np.diff(row) < 0):
                raise GameError(f"edge {e}: cost table must be non-decreasing")
            if row.min() < 0 or row.max() > self.c_max:
                raise GameError(f"edge {e}: costs must lie in [0, c_max={self.c_max}]")
        if any(sp.m != costs.shape[0] for sp in self.spaces):
            raise GameError("every strategy space must use the game's edge set")

    @classmethod
    def on_dag(cls, dag: Dag, costs, c_max: float | None = None, blue=None) -> "CongestionGame":
        costs = np.asarray(costs, dtype=float)
        spaces = tuple(DagSpace.for_agent(dag, i, blue=blue) for i in range(len(dag.agents)))
        return cls(spaces, costs, float(costs.max()) if c_max is None else float(c_max), dag)

    @property
    def n(self) -> int:
        return len(self.spaces)

    @property
    def m(self) -> int:
        return self.costs.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        """``cumulative[e, l] = sum_{k <= l} c_e(k)``."""
        return np.cumsum(self.costs, axis=1)

    def vectors(self, profile) -> np.ndarray:
        """0/1 matrix (n x m) for a joint pure profile given as paths or vectors."""
        out = np.zeros((self.n, self.m))
        for i, p in enumerate(profile):
            out[i] = self.spaces[i].vector(p) if not isinstance(p, np.ndarray) else p
        return out


def loads(game: CongestionGame, profile) -> np.ndarray:
    return game.vectors(profile).sum(axis=0).astype(int)


def agent_cost(game: CongestionGame, profile, i: int) -> float:
    V = game.vectors(profile)
    ell = V.sum(axis=0).astype(int)
    return float(V[i] @ game.costs[np.arange(game.m), ell])


def rosenthal_potential(game: CongestionGame, profile) -> float:
    if game.n == 0:
        return 0.0
    ell = loads(game, profile)
    return float(game.cumulative[np.arange(game.m), ell].sum())


def load_pmf(probs) -> np.ndarray:
    """Poisson-binomial pmf for each row of ``probs`` (edges x agents).

    Returns an array of shape (edges, agents + 1).
    """
    P = np.atleast_2d(np.asarray(probs, dtype=float))
    pmf = np.zeros((P.shape[0], P.shape[1] + 1))
    pmf[:, 0] = 1.0
    for j in range(P.shape[1]):
        p = P[:, j:j + 1]
        pmf[:, 1:j + 2] = pmf[:, 1:j + 2] * (1 - p) + pmf[:, 0:j + 1] * p
        pmf[:, 0:1] *= (1 - p)
    return pmf


def expected_potential(game: CongestionGame, X) -> float:
    """Expected Rosenthal potential of independent mixed strategies with marginals ``X`` (n x m)."""
    X = np.asarray(X, dtype=float)
    pmf = load_pmf(X.T)
    return float(np.sum(pmf * game.cumulative))


def potential_gradient(game: CongestionGame, X, i: int) -> np.ndarray:
    """Coordinate e is ``E[c_e(L_e + 1)]`` with ``L_e`` the load of the other agents."""
    X = np.asarray(X, dtype=float)
    others = np.delete(X, i, axis=0)
    pmf = load_pmf(others.T)
    return np.sum(pmf * game.costs[:, 1:], axis=1)


def best_response(game: CongestionGame, X, i: int):
    grad = potential_gradient(game, X, i)
    space = game.spaces[i]
    if isinstance(space, DagSpace):
        return shortest_path(space.sub, grad)
    vals = space.vertices @ grad
    k = int(np.argmin(vals))
    return k, float(vals[k])


def nash_gap(game: CongestionGame, X) -> float:
    """Largest expected-cost improvement any agent gets by best-responding."""
    X = np.asarray(X, dtype=float)
    gap = -np.inf
    for i in range(game.n):
        grad = potential_gradient(game, X, i)
        _, br = best_response(game, X, i)
        gap = max(gap, float(grad @ X[i]) - br)
    return gap


@dataclass
class Trajectory:
    """Per-round metrics of one run; NaN marks rounds where a metric was not evaluated."""

    cost: np.ndarray
    mu: np.ndarray
    gamma: np.ndarray
    regret: np.ndarray
    nash_gap: np.ndarray
    potential: np.ndarray
    final_alpha: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.cost.shape[0]

    @property
    def n(self) -> int:
        return self.cost.shape[1]


def make_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-agent streams derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def run_dynamics(game: CongestionGame, schedules: Schedule | Sequence[Schedule], T: int, seed: int,
                 stride: int = 100, exact_regret: bool = False,
                 progress: Callable[[int, int], None] | None = None) -> Trajectory:
    """Every agent runs a learner and only observes its own total cost each round."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    n, m = game.n, game.m
    if isinstance(schedules, Schedule):
        schedules = [schedules] * n
    learners = [Learner(sp, sc, rng) for sp, sc, rng in zip(game.spaces, schedules, make_rngs(seed, n))]
    checkpoints = set(range(1, T + 1)) if exact_regret else set(log_checkpoints(T))
    cost = np.zeros((T, n))
    mus = np.zeros((T, n))
    gammas = np.zeros((T, n))
    regret = np.full((T, n), np.nan)
    gap = np.full(T, np.nan)
    pot = np.full(T, np.nan)
    totals = np.zeros((n, m))
    played = np.zeros(n)
    edge = np.arange(m)
    table = game.costs
    tick = max(1, T // 100)
    for t in range(1, T + 1):
        V = np.array([sp.vector(L.sample()) for sp, L in zip(game.spaces, learners)])
        ell = V.sum(axis=0).astype(int)
        # What each agent would pay on each edge given the others' choices.
        unilateral = table[edge, ell - V.astype(int) + 1]
        losses = np.einsum("ij,ij->i", V, unilateral)
        totals += unilateral
        played += losses
        cost[t - 1] = losses
        if t % stride == 0 or t == 1 or t == T:
            X = np.array([L.marginal() for L in learners])
            gap[t - 1] = nash_gap(game, X)
            pot[t - 1] = expected_potential(game, X)
        for i, L in enumerate(learners):
            gammas[t - 1, i], mus[t - 1, i] = L.schedule.values(t)
            L.update(float(losses[i]))
        if t in checkpoints:
            for i in range(n):
                regret[t - 1, i] = played[i] - best_fixed_cost(game.spaces[i], totals[i])
        if progress is not None and (t % tick == 0 or t == T):
            progress(t, T)
    return Trajectory(cost, mus, gammas, regret, gap, pot, [L.alpha.copy() for L in learners])


def stderr_progress(label: str = "") -> Callable[[int, int], None]:
    def report(t, T):
        print(f"\r{label}{100 * t // T:3d}%", end="\n" if t == T else "", file=sys.stderr, flush=True)
    return report
