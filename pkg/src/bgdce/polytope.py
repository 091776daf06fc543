"""Caratheodory decompositions, exploration distributions and projections.

Learners live in spanner coordinates ``alpha``.  The feasible set ``D`` is
described by a :class:`Constraints` object (box, optional sum constraint,
and two-sided slabs on linear functionals of ``alpha``); its shrunken copy
``(1 - mu) D + (mu / s) 1`` is obtained with :meth:`Constraints.shrink`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .graph import FLOW_TOL, Dag, Path, Subgraph, agent_subgraph, flow_violation, path_vector
from .spanner import NotInPolytopeError, Spanner, brute_force_spanner, build_dag_spanner, decompose_in_spanner

NEG_CLAMP = 1e-9
SUPPORT_TOL = 1e-12
PRUNE_TOL = 1e-12
MEMBER_TOL = 1e-7


class ProjectionError(RuntimeError):
    def __init__(self, message, point=None, violation=None):
        super().__init__(message)
        self.point = point
        self.violation = violation


class DecompositionError(RuntimeError):
    """Internal invariant breach while peeling paths off a flow."""


@dataclass(frozen=True, eq=False)
class Constraints:
    lower: np.ndarray
    upper: np.ndarray
    total: float | None
    rows: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    mu: float = 0.0

    @property
    def s(self) -> int:
        return self.lower.size

    @cached_property
    def row_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.rows, self.rows)

    @classmethod
    def for_spanner(cls, sp: Spanner) -> "Constraints":
        """Basis polytope of a DAG spanner: box, unit source outflow, 0 <= (B alpha)_e <= 1."""
        rows = sp.matrix[np.abs(sp.matrix).sum(axis=1) > 0]
        k = rows.shape[0]
        return cls(np.full(sp.s, -sp.theta), np.full(sp.s, sp.theta), 1.0,
                   rows, np.zeros(k), np.ones(k))

    @classmethod
    def from_halfspaces(cls, sp: Spanner, A, d, A_eq=None, b_eq=None, total=None) -> "Constraints":
        """Basis polytope for ``{x : A x <= d, A_eq x = b_eq}`` pulled back through ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        rows = [A @ sp.matrix]
        lo = [np.full(A.shape[0], -np.inf)]
        hi = [np.asarray(d, dtype=float)]
        if A_eq is not None:
            A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
            rows.append(A_eq @ sp.matrix)
            lo.append(np.asarray(b_eq, dtype=float))
            hi.append(np.asarray(b_eq, dtype=float))
        return cls(np.full(sp.s, -sp.theta), np.full(sp.s, sp.theta), total,
                   np.vstack(rows), np.concatenate(lo), np.concatenate(hi))

    def shrink(self, mu: float) -> "Constraints":
        """Constraints of ``(1 - mu) D + (mu / s) 1``; ``self`` must be the unshrunk set."""
        if self.mu != 0.0:
            raise ValueError("shrink() expects the base constraint set")
        c = mu / self.s
        shift = c * self.rows.sum(axis=1)
        return replace(
            self,
            lower=(1 - mu) * self.lower + c,
            upper=(1 - mu) * self.upper + c,
            total=None if self.total is None else (1 - mu) * self.total + mu,
            row_lo=(1 - mu) * self.row_lo + shift,
            row_hi=(1 - mu) * self.row_hi + shift,
            mu=mu,
        )

    def violation(self, alpha) -> float:
        a = np.asarray(alpha, dtype=float)
        v = max(0.0, (self.lower - a).max(), (a - self.upper).max())
        if self.total is not None:
            v = max(v, abs(a.sum() - self.total))
        if self.rows.size:
            r = self.rows @ a
            v = max(v, (self.row_lo - r).max(), (r - self.row_hi).max())
        return float(v)


def project_base(cons: Constraints, z, tol: float = 1e-10, max_cycles: int = 20_000,
                 feas_tol: float = 1e-8) -> np.ndarray:
    """Euclidean projection onto the constraint set by Dykstra's cyclic algorithm.

    Sets are visited in the order box, sum hyperplane, slabs.  Iteration stops
    when a full cycle moves the iterate by less than ``tol`` and the iterate is
    feasible.
    """
    z = np.asarray(z, dtype=float)
    if cons.violation(z) <= 1e-12:
        return z.copy()
    s = cons.s
    if cons.total is not None:
        # If the hyperplane projection is feasible it is the answer.
        h = z - (z.sum() - cons.total) / s
        if cons.violation(h) <= 1e-12:
            return h

    rows, lo, hi, sq = cons.rows, cons.row_lo, cons.row_hi, cons.row_sq
    nrows = rows.shape[0]
    p_box = np.zeros(s)
    p_hyp = np.zeros(s)
    p_rows = np.zeros((nrows, s))
    x = z.copy()
    for _ in range(max_cycles):
        prev = x
        prev_box, prev_hyp, prev_rows = p_box, p_hyp, p_rows.copy()
        y = x + p_box
        x = np.clip(y, cons.lower, cons.upper)
        p_box = y - x
        if cons.total is not None:
            y = x + p_hyp
            x = y - (y.sum() - cons.total) / s
            p_hyp = y - x
        for k in range(nrows):
            y = x + p_rows[k]
            r = rows[k]
            v = r @ y
            if v < lo[k]:
                x = y + ((lo[k] - v) / sq[k]) * r
            elif v > hi[k]:
                x = y - ((v - hi[k]) / sq[k]) * r
            else:
                x = y
            p_rows[k] = y - x
        # x can come back to the same point while the corrections still drift,
        # so a small step alone is not convergence.
        if np.abs(x - prev).max() < tol and cons.violation(x) <= 0.1 * feas_tol:
            drift = max(np.abs(p_box - prev_box).max(), np.abs(p_hyp - prev_hyp).max(),
                        np.abs(p_rows - prev_rows).max(initial=0.0))
            if drift < tol:
                break
    else:
        viol = cons.violation(x)
        raise ProjectionError(f"Dykstra did not converge in {max_cycles} cycles (violation {viol:.3g})", x, viol)
    viol = cons.violation(x)
    if viol > feas_tol:
        raise ProjectionError(f"projection violates constraints by {viol:.3g}", x, viol)
    return x


def project_bounded_away(cons: Constraints, z, mu: float, **kw) -> np.ndarray:
    """Projection onto ``(1 - mu) D + (mu / s) 1`` through the affine change of variables."""
    if not 0.0 <= mu <= 0.5:
        raise ValueError("mu must lie in [0, 0.5]")
    z = np.asarray(z, dtype=float)
    c = mu / cons.s
    if mu == 0.0:
        return project_base(cons, z, **kw)
    return (1 - mu) * project_base(cons, (z - c) / (1 - mu), **kw) + c


def project_direct(cons: Constraints, z, mu: float, **kw) -> np.ndarray:
    """Dykstra run directly on the shrunken constraint set (cross-check for the affine route)."""
    return project_base(cons.shrink(mu), z, **kw)


def caratheodory_dag(sub: Subgraph, x, check: bool = True) -> list[tuple[Path, float]]:
    """Write a flow as a convex combination of at most m source-sink paths.

    Repeatedly takes the smallest-mass edge of the current support, routes a
    path through it inside the support and subtracts that mass along the path.
    ``check=False`` skips the conservation check for points built as ``B z``,
    which conserve flow by construction.
    """
    x = np.array(x, dtype=float)
    if x.min() < -NEG_CLAMP:
        raise NotInPolytopeError(f"negative edge mass {x.min():.3g}")
    x[x < 0] = 0.0
    if check:
        viol = flow_violation(sub, x)
        if viol > FLOW_TOL:
            raise NotInPolytopeError(f"point violates the flow constraints by {viol:.3g}")

    rem = np.where(sub.edge_mask, x, 0.0).tolist()
    atoms: list[tuple[Path, float]] = []
    out_s = sub.out[sub.source]
    while sum(rem[e] for e in out_s) > SUPPORT_TOL:
        live = [e for e in sub.edges if rem[e] > SUPPORT_TOL]
        e_min = min(live, key=lambda e: (rem[e], e))
        path = _path_through(sub, rem, e_min)
        w = rem[e_min]
        for e in path:
            rem[e] -= w
        rem[e_min] = 0.0
        atoms.append((path, w))
        if len(atoms) > sub.n_edges:
            raise DecompositionError("more atoms than edges; flow conservation is broken")
    return _normalize(atoms)


def _path_through(sub: Subgraph, rem: list[float], e_min: int) -> Path:
    tail, head = sub.tail(e_min), sub.head(e_min)
    if sub.n_nodes == 2:
        return (e_min,)

    def live(e):
        return rem[e] > SUPPORT_TOL

    # Nodes that reach the tail of e_min / the sink along live edges.
    to_tail = {tail}
    to_sink = {sub.sink}
    for v in reversed(sub.nodes):
        for e in sub.out[v]:
            if live(e):
                if sub.head(e) in to_tail:
                    to_tail.add(v)
                if sub.head(e) in to_sink:
                    to_sink.add(v)
    if sub.source not in to_tail or head not in to_sink:
        raise DecompositionError(f"no live source-sink path through edge {e_min}")
    path = []
    v = sub.source
    while v != tail:
        e = next(e for e in sub.out[v] if live(e) and sub.head(e) in to_tail)
        path.append(e)
        v = sub.head(e)
    path.append(e_min)
    v = head
    while v != sub.sink:
        e = next(e for e in sub.out[v] if live(e) and sub.head(e) in to_sink)
        path.append(e)
        v = sub.head(e)
    return tuple(path)


def _normalize(atoms):
    total = sum(w for _, w in atoms)
    kept = [(p, w) for p, w in atoms if w >= PRUNE_TOL]
    kept_total = sum(w for _, w in kept)
    if total <= 0 or (total - kept_total) > 1e-9 * total:
        raise DecompositionError("pruned atoms carried non-negligible mass")
    return [(p, w / kept_total) for p, w in kept]


def caratheodory_explicit(vertices, point, tol: float = 1e-9) -> list[tuple[int, float]]:
    """Basic feasible solution of ``sum_k l_k v_k = x, sum l = 1, l >= 0``.

    Phase-one simplex with Bland's rule.  Returns ``(vertex index, weight)``
    pairs; at most ``dim + 1`` are nonzero.
    """
    V = np.asarray(vertices, dtype=float)
    x = np.asarray(point, dtype=float)
    if V.shape[0] > 50:
        raise ValueError("explicit decomposition is limited to 50 vertices")
    K = V.shape[0]
    A = np.vstack([V.T, np.ones(K)])
    b = np.concatenate([x, [1.0]])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    r = A.shape[0]
    # Tableau columns: K originals, r artificials, rhs.
    T = np.zeros((r + 1, K + r + 1))
    T[:r, :K] = A
    T[:r, K:K + r] = np.eye(r)
    T[:r, -1] = b
    T[r, :K] = -A.sum(axis=0)
    T[r, -1] = -b.sum()
    basis = list(range(K, K + r))
    eps = 1e-12
    for _ in range(10_000):
        enter = next((j for j in range(K + r) if T[r, j] < -eps), None)
        if enter is None:
            break
        col = T[:r, enter]
        ratios = [(T[i, -1] / col[i], basis[i], i) for i in range(r) if col[i] > eps]
        if not ratios:
            raise RuntimeError("unbounded phase-one problem")
        best = min(q for q, _, _ in ratios)
        # Bland: among tied ratios, the smallest basic variable leaves.
        leave = min((t for t in ratios if t[0] <= best + eps), key=lambda t: t[1])[2]
        T[leave] /= T[leave, enter]
        for i in range(r + 1):
            if i != leave and T[i, enter] != 0.0:
                T[i] -= T[i, enter] * T[leave]
        basis[leave] = enter
    else:
        raise RuntimeError("simplex iteration cap reached")
    if -T[r, -1] > tol:
        raise NotInPolytopeError("point is not in the convex hull of the vertices")
    lam = np.zeros(K)
    for i, bv in enumerate(basis):
        if bv < K:
            lam[bv] = max(T[i, -1], 0.0)
    lam /= lam.sum()
    if np.abs(V.T @ lam - x).max() > 1e-8:
        raise NotInPolytopeError("decomposition does not reproduce the point")
    return [(k, float(lam[k])) for k in range(K) if lam[k] > PRUNE_TOL]


@dataclass(frozen=True, eq=False)
class MixedSupport:
    """Sparse distribution over pure strategies.

    The first ``n_cara`` atoms come from the Caratheodory decomposition (total
    mass ``1 - mu``); the rest are the spanner elements with mass ``mu / s``
    each.  ``coords[k]`` are the spanner coordinates of atom ``k`` and
    ``vectors[k]`` its 0/1 incidence vector.
    """

    strategies: tuple
    probs: np.ndarray
    coords: np.ndarray
    vectors: np.ndarray
    n_cara: int
    mu: float

    def __len__(self) -> int:
        return len(self.strategies)

    def marginal(self) -> np.ndarray:
        return self.probs @ self.vectors

    def sample(self, rng: np.random.Generator) -> int:
        """Index of an atom drawn by one inverse-CDF draw."""
        u = rng.random()
        k = int(np.searchsorted(np.cumsum(self.probs), u, side="right"))
        return min(k, len(self.probs) - 1)


class DagSpace:
    """Strategy space of one agent in a DAG game: subgraph, spanner and constraints."""

    def __init__(self, sub: Subgraph, spanner: Spanner | None = None, blue=None):
        self.sub = sub
        self.spanner = spanner or build_dag_spanner(sub, blue=blue)
        self.constraints = Constraints.for_spanner(self.spanner)
        self._vectors: dict[Path, np.ndarray] = {}
        self._coords: dict[Path, np.ndarray] = {}

    @classmethod
    def for_agent(cls, dag: Dag, agent: int, blue=None) -> "DagSpace":
        return cls(agent_subgraph(dag, agent), blue=blue)

    @property
    def s(self) -> int:
        return self.spanner.s

    @property
    def m(self) -> int:
        return self.sub.m

    @property
    def theta(self) -> float:
        return self.spanner.theta

    @property
    def basis_strategies(self) -> tuple:
        return self.spanner.basis

    def vector(self, path) -> np.ndarray:
        v = self._vectors.get(path)
        if v is None:
            v = self._vectors[path] = path_vector(path, self.m)
        return v

    def coords(self, path) -> np.ndarray:
        c = self._coords.get(path)
        if c is None:
            c = self._coords[path] = self.spanner.coords_of_path(path)
        return c

    def decompose(self, x, check: bool = True) -> list[tuple[Path, float]]:
        return caratheodory_dag(self.sub, x, check=check)

    def contains(self, x, tol: float = 1e-8) -> bool:
        return flow_violation(self.sub, x) <= tol

    def spanner_coords(self, x) -> np.ndarray:
        return decompose_in_spanner(self.spanner, x)


class ExplicitSpace:
    """Explicit list of 0/1 strategies with a user-supplied halfspace description."""

    def __init__(self, strategies, A, d, A_eq=None, b_eq=None, total=None, spanner: Spanner | None = None):
        self.vertices = np.asarray(strategies, dtype=float)
        self.spanner = spanner or brute_force_spanner(self.vertices)
        self._index = {tuple(v): k for k, v in enumerate(self.vertices)}
        self.constraints = Constraints.from_halfspaces(self.spanner, A, d, A_eq, b_eq, total)
        self._coords = np.linalg.lstsq(self.spanner.matrix, self.vertices.T, rcond=None)[0].T

    @property
    def s(self) -> int:
        return self.spanner.s

    @property
    def m(self) -> int:
        return self.vertices.shape[1]

    @property
    def theta(self) -> float:
        return self.spanner.theta

    @property
    def basis_strategies(self) -> tuple:
        return tuple(self._index[tuple(b)] for b in self.spanner.basis)

    def vector(self, k: int) -> np.ndarray:
        return self.vertices[k]

    def coords(self, k: int) -> np.ndarray:
        return self._coords[k]

    def decompose(self, x, check: bool = True) -> list[tuple[int, float]]:
        return caratheodory_explicit(self.vertices, x)


def caratheodory_distribution(space, alpha, mu: float, check: bool = True) -> MixedSupport:
    """Exploration distribution for a point ``alpha`` of ``(1 - mu) D + (mu / s) 1``.

    The shifted point ``(alpha - mu/s) / (1 - mu)`` is decomposed into pure
    strategies whose weights are scaled by ``1 - mu``; each spanner element
    then receives mass ``mu / s``.
    """
    alpha = np.asarray(alpha, dtype=float)
    s = space.s
    if check:
        cons = space.constraints.shrink(mu) if mu > 0 else space.constraints
        viol = cons.violation(alpha)
        if viol > MEMBER_TOL:
            raise NotInPolytopeError(f"alpha is outside the bounded-away polytope (violation {viol:.3g})")
    c = mu / s
    z = (alpha - c) / (1 - mu)
    atoms = space.decompose(space.spanner.matrix @ z, check=check)
    strategies = [a for a, _ in atoms]
    probs = [(1 - mu) * w for _, w in atoms]
    coords = [space.coords(a) for a in strategies]
    n_cara = len(strategies)
    if mu > 0:
        eye = np.eye(s)
        for h, b in enumerate(space.basis_strategies):
            strategies.append(b)
            probs.append(c)
            coords.append(eye[h])
    vectors = np.array([space.vector(a) for a in strategies])
    return MixedSupport(tuple(strategies), np.array(probs), np.array(coords), vectors, n_cara, mu)


def uniform_point(s: int) -> np.ndarray:
    return np.full(s, 1.0 / s)


def random_flow(sub: Subgraph, rng: np.random.Generator, paths: Sequence[Path] | None = None, k: int = 4) -> np.ndarray:
    """Random flow point: a Dirichlet mixture of random source-sink paths."""
    if paths is None:
        paths = [_random_path(sub, rng) for _ in range(k)]
    w = rng.dirichlet(np.ones(len(paths)))
    return sum(wi * path_vector(p, sub.m) for wi, p in zip(w, paths))


def _random_path(sub: Subgraph, rng: np.random.Generator) -> Path:
    path, v = [], sub.source
    while v != sub.sink:
        e = sub.out[v][int(rng.integers(len(sub.out[v])))]
        path.append(e)
        v = sub.head(e)
    return tuple(path)
