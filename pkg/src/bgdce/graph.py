"""Directed acyclic multigraphs, s-t path machinery and flow-polytope checks.

Edges are identified by their index in ``Dag.edges``; that index is also the
coordinate of the edge in every length-``m`` vector used by the package.
Paths are plain tuples of edge indices in traversal order.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

Path = tuple[int, ...]

FLOW_TOL = 1e-9


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


class EmptyStrategySpaceError(GraphError):
    """Raised when an agent has no source-to-sink path."""


class PathLimitError(GraphError):
    pass


class NoBluePathError(GraphError):
    pass


@dataclass(frozen=True)
class Dag:
    node_count: int
    edges: tuple[tuple[int, int], ...]
    agents: tuple[tuple[int, int], ...] = ()
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        object.__setattr__(self, "agents", tuple((int(s), int(t)) for s, t in self.agents))
        for k, (u, v) in enumerate(self.edges):
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise GraphError(f"edge {k} ({u}->{v}) references a node outside 0..{self.node_count - 1}")
            if u == v:
                raise CycleError(f"edge {k} is a self-loop on node {u}")
        for i, (s, t) in enumerate(self.agents):
            if not (0 <= s < self.node_count and 0 <= t < self.node_count):
                raise GraphError(f"agent {i} endpoints ({s}, {t}) outside the node range")
        if self.labels is not None and len(self.labels) != self.node_count:
            raise GraphError("labels must name every node")
        topological_sort(self)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def out_edges(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for k, (u, _) in enumerate(self.edges):
            out[u].append(k)
        return tuple(tuple(x) for x in out)

    @cached_property
    def in_edges(self) -> tuple[tuple[int, ...], ...]:
        inn: list[list[int]] = [[] for _ in range(self.node_count)]
        for k, (_, v) in enumerate(self.edges):
            inn[v].append(k)
        return tuple(tuple(x) for x in inn)

    def node_name(self, v: int) -> str:
        return self.labels[v] if self.labels else str(v)

    def describe_path(self, path: Sequence[int]) -> str:
        if not path:
            return ""
        nodes = [self.edges[path[0]][0]] + [self.edges[e][1] for e in path]
        return "-".join(self.node_name(v) for v in nodes)

    def to_dict(self) -> dict:
        d = {
            "nodes": self.node_count,
            "edges": [list(e) for e in self.edges],
            "agents": [{"s": s, "t": t} for s, t in self.agents],
        }
        if self.labels:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Dag":
        try:
            nodes = int(d["nodes"])
            edges = [tuple(e) for e in d["edges"]]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"graph JSON needs 'nodes' and 'edges': {exc}") from None
        if any(len(e) != 2 for e in edges):
            raise GraphError("every edge must be a [u, v] pair")
        agents = [(a["s"], a["t"]) for a in d.get("agents", [])]
        labels = tuple(d["labels"]) if d.get("labels") else None
        return cls(nodes, tuple(edges), tuple(agents), labels)

    @classmethod
    def load(cls, path) -> "Dag":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def topological_sort(dag: Dag) -> list[int]:
    """Kahn's algorithm; ties go to the smallest node id."""
    indeg = [0] * dag.node_count
    out: list[list[int]] = [[] for _ in range(dag.node_count)]
    for u, v in dag.edges:
        indeg[v] += 1
        out[u].append(v)
    heap = [v for v in range(dag.node_count) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) != dag.node_count:
        raise CycleError("graph contains a directed cycle")
    return order


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Nodes and edges of ``dag`` lying on at least one source-sink path.

    Edge indices are those of the parent graph.
    """

    dag: Dag
    source: int
    sink: int
    nodes: tuple[int, ...]
    edges: tuple[int, ...]
    out: Mapping[int, tuple[int, ...]] = field(repr=False)
    inn: Mapping[int, tuple[int, ...]] = field(repr=False)

    @property
    def m(self) -> int:
        """Edge count of the parent graph (vector length)."""
        return self.dag.m

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def position(self) -> dict[int, int]:
        return {v: k for k, v in enumerate(self.nodes)}

    @cached_property
    def edge_mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[list(self.edges)] = True
        return mask

    def head(self, e: int) -> int:
        return self.dag.edges[e][1]

    def tail(self, e: int) -> int:
        return self.dag.edges[e][0]


def reachable_subgraph(dag: Dag, source: int, sink: int) -> Subgraph:
    if source == sink:
        raise GraphError("source and sink must differ")
    order = topological_sort(dag)
    fwd = np.zeros(dag.node_count, dtype=bool)
    fwd[source] = True
    for u in order:
        if fwd[u]:
            for e in dag.out_edges[u]:
                fwd[dag.edges[e][1]] = True
    bwd = np.zeros(dag.node_count, dtype=bool)
    bwd[sink] = True
    for u in reversed(order):
        for e in dag.out_edges[u]:
            if bwd[dag.edges[e][1]]:
                bwd[u] = True
    if not (fwd[sink] and bwd[source]):
        raise EmptyStrategySpaceError(f"no path from node {source} to node {sink}")
    keep = fwd & bwd
    nodes = tuple(v for v in order if keep[v])
    edges = tuple(k for k, (u, v) in enumerate(dag.edges) if keep[u] and keep[v])
    out = {v: tuple(e for e in dag.out_edges[v] if keep[dag.edges[e][1]]) for v in nodes}
    inn = {v: tuple(e for e in dag.in_edges[v] if keep[dag.edges[e][0]]) for v in nodes}
    return Subgraph(dag, source, sink, nodes, edges, out, inn)


def agent_subgraph(dag: Dag, agent: int) -> Subgraph:
    s, t = dag.agents[agent]
    return reachable_subgraph(dag, s, t)


def enumerate_paths(sub: Subgraph, cap: int = 10_000) -> list[Path]:
    """All source-sink paths, lexicographic by edge index; refuses above ``cap``."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    paths: list[Path] = []
    stack: list[tuple[int, Path]] = [(sub.source, ())]
    while stack:
        v, prefix = stack.pop()
        if v == sub.sink:
            paths.append(prefix)
            if len(paths) > cap:
                raise PathLimitError(f"more than {cap} paths; use the DAG-native operations instead")
            continue
        for e in reversed(sub.out[v]):
            stack.append((sub.head(e), prefix + (e,)))
    return paths


def path_vector(path: Iterable[int], m: int) -> np.ndarray:
    x = np.zeros(m)
    x[list(path)] = 1.0
    return x


def shortest_path(sub: Subgraph, weights) -> tuple[Path, float]:
    """Minimum-weight source-sink path by one backward pass over the topological order.

    Weights may be negative.  Ties keep the lowest-index edge at each node.
    """
    w = np.asarray(weights, dtype=float)
    best = {sub.sink: 0.0}
    choice: dict[int, int] = {}
    for v in reversed(sub.nodes):
        if v == sub.sink:
            continue
        val = np.inf
        for e in sub.out[v]:
            cand = w[e] + best[sub.head(e)]
            if cand < val:
                val, choice[v] = cand, e
        best[v] = val
    path = []
    v = sub.source
    while v != sub.sink:
        e = choice[v]
        path.append(e)
        v = sub.head(e)
    return tuple(path), float(best[sub.source])


def flow_violation(sub: Subgraph, x) -> float:
    """Largest violation of the flow-polytope constraints (unit value) for ``x``.

    Mass on edges outside the subgraph counts as violation, as do entries
    outside [0, 1].
    """
    x = np.asarray(x, dtype=float)
    viol = 0.0
    if x.shape != (sub.m,):
        raise ValueError(f"expected a vector of length {sub.m}, got shape {x.shape}")
    outside = x[~sub.edge_mask]
    if outside.size:
        viol = max(viol, float(np.abs(outside).max()))
    viol = max(viol, float(max(0.0, -x.min())), float(max(0.0, x.max() - 1.0)))
    for v in sub.nodes:
        inflow = sum(x[e] for e in sub.inn[v])
        outflow = sum(x[e] for e in sub.out[v])
        if v == sub.source:
            r = outflow - 1.0
        elif v == sub.sink:
            r = inflow - 1.0
        else:
            r = inflow - outflow
        viol = max(viol, abs(r))
    return viol


def is_flow_point(sub: Subgraph, x, tol: float = FLOW_TOL) -> bool:
    return flow_violation(sub, x) <= tol


@dataclass(frozen=True)
class Partition:
    blue: Mapping[int, int]
    red: tuple[int, ...]

    @cached_property
    def blue_edges(self) -> frozenset[int]:
        return frozenset(self.blue.values())


def blue_red_partition(sub: Subgraph, blue: Mapping[int, int] | None = None) -> Partition:
    """Pick one blue outgoing edge per interior node; every other edge is red.

    By default the blue edge is the lowest-index outgoing edge.  ``blue`` may
    pin the choice for some nodes (node -> edge index).
    """
    blue = dict(blue or {})
    chosen = {}
    for v in sub.nodes:
        if v in (sub.source, sub.sink):
            if v in blue:
                raise GraphError(f"node {v} is a terminal and cannot carry a blue edge")
            continue
        if v in blue:
            if blue[v] not in sub.out[v]:
                raise GraphError(f"edge {blue[v]} is not an outgoing edge of node {v} in the subgraph")
            chosen[v] = blue[v]
        else:
            chosen[v] = min(sub.out[v])
    unknown = set(blue) - set(sub.nodes)
    if unknown:
        raise GraphError(f"blue override names nodes outside the subgraph: {sorted(unknown)}")
    taken = set(chosen.values())
    pos = sub.position
    red = sorted((e for e in sub.edges if e not in taken), key=lambda e: (pos[sub.tail(e)], e))
    return Partition(chosen, tuple(red))


def blue_path(sub: Subgraph, partition: Partition, v: int) -> Path:
    """Follow blue edges from ``v`` to the sink."""
    if v == sub.sink:
        return ()
    if v == sub.source:
        raise NoBluePathError("the source has no blue edge")
    if v not in partition.blue:
        raise GraphError(f"node {v} is not in the subgraph")
    path = []
    while v != sub.sink:
        e = partition.blue[v]
        path.append(e)
        v = sub.head(e)
    return tuple(path)


def count_paths(sub: Subgraph) -> int:
    """Number of source-sink paths, without enumerating them."""
    ways = {sub.sink: 1}
    for v in reversed(sub.nodes):
        if v != sub.sink:
            ways[v] = sum(ways[sub.head(e)] for e in sub.out[v])
    return ways[sub.source]


def layered_dag(rng: np.random.Generator, layers: int = 4, width: int = 3, max_edges: int = 25,
                skip_prob: float = 0.2, parallel_prob: float = 0.1, max_paths: int | None = None) -> Dag:
    """Random layered DAG with one source (node 0) and one sink (last node).

    Used by the test suite.  Every node gets at least one incoming and one
    outgoing edge, so the whole graph lies on source-sink paths.  Draws are
    repeated until the edge count is at most ``max_edges`` (and the path
    count at most ``max_paths`` when given).
    """
    while True:
        dag = _layered_once(rng, layers, width, skip_prob, parallel_prob)
        if dag.m > max_edges:
            continue
        if max_paths is None or count_paths(reachable_subgraph(dag, 0, dag.node_count - 1)) <= max_paths:
            return dag


def _layered_once(rng, layers, width, skip_prob, parallel_prob) -> Dag:
    sizes = [1] + [int(rng.integers(1, width + 1)) for _ in range(layers)] + [1]
    ids, start = [], 0
    for sz in sizes:
        ids.append(list(range(start, start + sz)))
        start += sz
    edges: list[tuple[int, int]] = []
    for li in range(len(sizes) - 1):
        cur, nxt = ids[li], ids[li + 1]
        for u in cur:
            edges.append((u, int(rng.choice(nxt))))
        for v in nxt:
            if not any(e[1] == v for e in edges):
                edges.append((int(rng.choice(cur)), v))
        for u in cur:
            for v in nxt:
                if rng.random() < 0.3 and (u, v) not in edges:
                    edges.append((u, v))
        if li + 2 < len(sizes):
            later = [w for layer in ids[li + 2:] for w in layer]
            for u in cur:
                if rng.random() < skip_prob:
                    edges.append((u, int(rng.choice(later))))
    for k in range(len(edges)):
        if rng.random() < parallel_prob:
            edges.append(edges[k])
    return Dag(start, tuple(edges), ((0, start - 1),))
