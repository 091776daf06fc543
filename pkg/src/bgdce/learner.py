"""Per-agent bandit gradient descent with Caratheodory exploration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimator import estimate_cost, second_moment
from .graph import Subgraph, shortest_path
from .polytope import DagSpace, caratheodory_distribution, project_bounded_away, uniform_point

VARIANTS = ("nash", "regret")


@dataclass(frozen=True)
class Schedule:
    """Step sizes ``gamma_t`` and exploration levels ``mu_t``.

    ``nash``:   mu_t = min(n^(1/5) / (m^(7/5) t^(1/5) c_max^(1/5)), 1/2),
                gamma_t = sqrt(c_max mu_t / (theta n^3 m^p t)), p = ``gamma_m_power``.
    ``regret``: mu_t = 1 / (2 t^(1/4)),
                gamma_t = mu_t / (m^2 c_max theta t^q), q = ``step_t_power``.
    """

    variant: str
    n: int
    m: int
    c_max: float
    theta: float = 1.0
    gamma_m_power: float = 6.0
    step_t_power: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown schedule variant {self.variant!r}; expected one of {VARIANTS}")
        if self.n < 1 or self.m < 1 or self.c_max <= 0 or self.theta <= 0:
            raise ValueError("schedule constants must be positive")

    def mu(self, t: int) -> float:
        if t < 1:
            raise ValueError("rounds start at t = 1")
        if self.variant == "nash":
            return min(self.n ** 0.2 / (self.m ** 1.4 * t ** 0.2 * self.c_max ** 0.2), 0.5)
        return 1.0 / (2.0 * t ** 0.25)

    def gamma(self, t: int) -> float:
        mu = self.mu(t)
        if self.variant == "nash":
            return math.sqrt(self.c_max * mu / (self.theta * self.n ** 3 * self.m ** self.gamma_m_power * t))
        return mu / (self.m ** 2 * self.c_max * self.theta * t ** self.step_t_power)

    def values(self, t: int) -> tuple[float, float]:
        return self.gamma(t), self.mu(t)


class Learner:
    """State of one agent.  The agent sees only the scalar loss of what it played.

    Call :meth:`sample` to draw this round's strategy, then :meth:`update`
    with the realized loss.
    """

    def __init__(self, space, schedule: Schedule, rng: np.random.Generator | None = None):
        self.space = space
        self.schedule = schedule
        self.rng = rng if rng is not None else np.random.default_rng()
        self.alpha = uniform_point(space.s)
        self.t = 1
        self.cumulative_cost = 0.0
        self.support = None
        self.atom = None
        self.last_estimate = None
        self.loss_cap = space.m * schedule.c_max

    @property
    def mu(self) -> float:
        return self.schedule.mu(self.t)

    @property
    def gamma(self) -> float:
        return self.schedule.gamma(self.t)

    def marginal(self) -> np.ndarray:
        return self.space.spanner.matrix @ self.alpha

    def sample(self):
        self.support = caratheodory_distribution(self.space, self.alpha, self.mu, check=False)
        self.atom = self.support.sample(self.rng)
        return self.support.strategies[self.atom]

    def update(self, loss: float) -> np.ndarray:
        if self.support is None:
            raise RuntimeError("update() called before sample()")
        if not -1e-9 <= loss <= self.loss_cap + 1e-9:
            raise ValueError(f"loss {loss} outside [0, {self.loss_cap}]; check the cost table")
        gamma, mu = self.schedule.values(self.t)
        g = estimate_cost(loss, self.support.coords[self.atom], second_moment(self.support))
        self.alpha = project_bounded_away(self.space.constraints, self.alpha - gamma * g,
                                          self.schedule.mu(self.t + 1))
        self.t += 1
        self.cumulative_cost += loss
        self.last_estimate = g
        self.support = None
        return g


def best_fixed_cost(space, total_costs) -> float:
    if isinstance(space, DagSpace):
        return shortest_path(space.sub, total_costs)[1]
    if isinstance(space, Subgraph):
        return shortest_path(space, total_costs)[1]
    return float(np.min(space.vertices @ np.asarray(total_costs)))


def realized_regret(space, played_costs: Sequence[float], cost_vectors, checkpoints=None) -> dict[int, float]:
    """Cumulative regret against the best fixed strategy of each prefix.

    ``played_costs[t-1]`` is the loss paid at round t and ``cost_vectors[t-1]``
    the full cost vector of that round.  Returns ``{t: regret}`` for every
    round, or for ``checkpoints`` only.
    """
    played = np.cumsum(np.asarray(played_costs, dtype=float))
    totals = np.cumsum(np.asarray(cost_vectors, dtype=float), axis=0)
    T = len(played)
    ts = range(1, T + 1) if checkpoints is None else sorted(set(int(t) for t in checkpoints if 1 <= t <= T))
    return {t: float(played[t - 1] - best_fixed_cost(space, totals[t - 1])) for t in ts}


def log_checkpoints(T: int, per_decade: int = 10) -> list[int]:
    """Roughly logarithmically spaced rounds in [1, T], always including T."""
    pts = {1, T}
    k = 0
    while True:
        t = int(round(10 ** (k / per_decade)))
        if t > T:
            break
        pts.add(t)
        k += 1
    return sorted(pts)
