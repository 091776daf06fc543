"""Barycentric spanners for path polytopes.

``build_dag_spanner`` covers the red edges of a DAG one by one, reusing the
prefix of the most recent connected basis path, and yields an exact
1-spanner.  ``brute_force_spanner`` is an exhaustive search for tiny explicit
vertex sets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .graph import (
    FLOW_TOL,
    Dag,
    GraphError,
    Partition,
    Path,
    Subgraph,
    blue_path,
    blue_red_partition,
    flow_violation,
    path_vector,
    reachable_subgraph,
)


class SpannerError(ValueError):
    pass


class NotInPolytopeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spanner:
    """Basis of ``s`` strategies; column ``h`` of ``matrix`` is basis element ``h``.

    ``prefix[h]`` is the index of the basis path whose prefix ``h`` extends, or
    None.  DAG spanners also carry the subgraph, the blue/red partition and
    the red edges in topological order.
    """

    basis: tuple
    matrix: np.ndarray
    theta: float
    prefix: tuple[int | None, ...] | None = None
    subgraph: Subgraph | None = None
    partition: Partition | None = None

    @property
    def s(self) -> int:
        return self.matrix.shape[1]

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def red(self) -> tuple[int, ...] | None:
        return self.partition.red if self.partition else None

    @cached_property
    def red_inverse(self) -> np.ndarray:
        """Inverse of the red-coordinate block, ``I - P`` with ``P[prefix(h), h] = 1``."""
        inv = np.eye(self.s)
        for h, k in enumerate(self.prefix):
            if k is not None:
                inv[k, h] -= 1.0
        return inv

    @cached_property
    def red_slot(self) -> np.ndarray:
        """Edge index -> position among the red edges, or -1."""
        slot = np.full(self.m, -1, dtype=int)
        slot[list(self.red)] = np.arange(self.s)
        return slot

    @cached_property
    def _pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.matrix)

    def coords_of_path(self, path: Sequence[int]) -> np.ndarray:
        """Spanner coordinates of a pure strategy (DAG spanners only)."""
        slots = self.red_slot[list(path)]
        return self.red_inverse[:, slots[slots >= 0]].sum(axis=1)

    def to_dict(self, dag: Dag | None = None) -> dict:
        d = {
            "basis": [list(map(int, b)) for b in self.basis],
            "prefix": {str(h + 1): (None if k is None else k + 1) for h, k in enumerate(self.prefix or ())},
            "theta": self.theta,
        }
        if self.red is not None:
            d["red_edges"] = list(self.red)
        if dag is not None and dag.labels:
            d["basis_named"] = [dag.describe_path(b) for b in self.basis]
        return d


def _descendants(sub: Subgraph) -> dict[int, set[int]]:
    reach: dict[int, set[int]] = {}
    for v in reversed(sub.nodes):
        r = {v}
        for e in sub.out[v]:
            r |= reach[sub.head(e)]
        reach[v] = r
    return reach


def _connecting_path(sub: Subgraph, reach, start: int, goal: int) -> Path:
    # Greedy walk along edges whose head still reaches the goal: a DFS that never backtracks.
    path = []
    v = start
    while v != goal:
        e = next(e for e in sub.out[v] if goal in reach[sub.head(e)])
        path.append(e)
        v = sub.head(e)
    return tuple(path)


def build_dag_spanner(graph: Dag | Subgraph, source: int | None = None, sink: int | None = None,
                      blue: Mapping[int, int] | None = None) -> Spanner:
    """Exact 1-barycentric spanner of the s-t path polytope of a DAG.

    Red edges are covered in topological order.  For red edge ``e_h`` the
    previously covered red edges are scanned newest first; the first ``e_k``
    whose head reaches the tail of ``e_h`` donates its basis path up to and
    including ``e_k``, which is extended by a connecting path, ``e_h`` and the
    blue path to the sink.  Red edges leaving the source start a fresh path.
    """
    sub = graph if isinstance(graph, Subgraph) else reachable_subgraph(graph, source, sink)
    part = blue_red_partition(sub, blue)
    reach = _descendants(sub)
    basis: list[Path] = []
    prefix: list[int | None] = []
    for h, e in enumerate(part.red):
        tail, head = sub.tail(e), sub.head(e)
        suffix = blue_path(sub, part, head)
        for k in range(h - 1, -1, -1):
            ek = part.red[k]
            if tail in reach[sub.head(ek)]:
                cut = basis[k].index(ek) + 1
                path = basis[k][:cut] + _connecting_path(sub, reach, sub.head(ek), tail) + (e,) + suffix
                basis.append(path)
                prefix.append(k)
                break
        else:
            if tail != sub.source:
                # Every non-source node is reached from some earlier red edge out of the source.
                raise SpannerError(f"red edge {e} has no connected predecessor")
            basis.append((e,) + suffix)
            prefix.append(None)
    matrix = np.column_stack([path_vector(b, sub.m) for b in basis]) if basis else np.zeros((sub.m, 0))
    return Spanner(tuple(basis), matrix, 1.0, tuple(prefix), sub, part)


def check_telescoping(sp: Spanner, tol: float = 1e-12) -> bool:
    """Red part of column h minus red part of its prefix column is the h-th unit vector."""
    red = sp.matrix[list(sp.red), :]
    for h, k in enumerate(sp.prefix):
        diff = red[:, h] - (red[:, k] if k is not None else 0.0)
        if np.abs(diff - np.eye(sp.s)[h]).max() > tol:
            return False
    return True


def check_prefix_property(sp: Spanner) -> bool:
    """Connected red edges e_k < e_l never share a prefix."""
    sub = sp.subgraph
    reach = _descendants(sub)
    for k, l in itertools.combinations(range(sp.s), 2):
        ek, el = sp.red[k], sp.red[l]
        if sub.tail(el) in reach[sub.head(ek)] and sp.prefix[k] == sp.prefix[l]:
            return False
    return True


def fill(sub: Subgraph, partition: Partition, red_coords) -> np.ndarray:
    """Rebuild a full edge vector from its red coordinates by flow conservation."""
    red_coords = np.asarray(red_coords, dtype=float)
    if red_coords.shape != (len(partition.red),):
        raise ValueError(f"expected {len(partition.red)} red coordinates")
    x = np.zeros(sub.m)
    x[list(partition.red)] = red_coords
    for v in sub.nodes:
        if v in partition.blue:
            e = partition.blue[v]
            x[e] = sum(x[a] for a in sub.inn[v]) - sum(x[b] for b in sub.out[v] if b != e)
    return x


def decompose_in_spanner(sp: Spanner, x, tol: float = FLOW_TOL) -> np.ndarray:
    """Coefficients ``alpha`` with ``B alpha = x`` for a point of the polytope.

    DAG spanners use the triangular red-coordinate system; other spanners use
    the pseudo-inverse and verify the residual.
    """
    x = np.asarray(x, dtype=float)
    if sp.subgraph is not None:
        viol = flow_violation(sp.subgraph, x)
        if viol > tol:
            raise NotInPolytopeError(f"point violates the flow constraints by {viol:.3g}")
        return sp.red_inverse @ x[list(sp.red)]
    alpha = sp._pinv @ x
    resid = np.abs(sp.matrix @ alpha - x).max()
    if resid > 1e-8:
        raise NotInPolytopeError(f"point is outside the span of the spanner (residual {resid:.3g})")
    return alpha


def brute_force_spanner(vertices, max_vertices: int = 12, max_dim: int = 10) -> Spanner:
    """Exhaustive search for the subset with the smallest worst-case coefficient."""
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2:
        raise ValueError("vertices must be a 2-D array, one vertex per row")
    if V.shape[0] > max_vertices or V.shape[1] > max_dim:
        raise SpannerError(
            f"{V.shape[0]} vertices in dimension {V.shape[1]} is beyond the exhaustive search limits "
            f"({max_vertices}, {max_dim}); use build_dag_spanner for path polytopes")
    rank = np.linalg.matrix_rank(V)
    best = None
    for subset in itertools.combinations(range(V.shape[0]), rank):
        B = V[list(subset)].T
        if np.linalg.matrix_rank(B) < rank:
            continue
        coef = np.linalg.pinv(B) @ V.T
        if np.abs(B @ coef - V.T).max() > 1e-9:
            continue
        theta = float(np.abs(coef).max())
        if best is None or theta < best[0] - 1e-12:
            best = (theta, subset, B)
    if best is None:
        raise SpannerError("no spanning subset found")
    theta, subset, B = best
    if abs(theta - round(theta)) < 1e-9:  # pinv noise around exact coefficients
        theta = float(round(theta))
    return Spanner(tuple(tuple(V[i]) for i in subset), B, max(theta, 1.0))
