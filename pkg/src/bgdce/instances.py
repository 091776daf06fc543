"""Small named graphs used in tests, examples and the validation battery."""

from __future__ import annotations

from .graph import Dag

# Node ids for the eight-node example: s b c d e f g t.
DD_LABELS = ("s", "b", "c", "d", "e", "f", "g", "t")
DD_EDGES = (
    (0, 1),  # 0 s->b
    (0, 2),  # 1 s->c
    (1, 3),  # 2 b->d
    (2, 3),  # 3 c->d
    (3, 4),  # 4 d->e
    (4, 5),  # 5 e->f
    (4, 6),  # 6 e->g
    (5, 7),  # 7 f->t
    (6, 7),  # 8 g->t
)
# Blue choice making s->b, s->c and e->f the red edges.
DD_BLUE = {4: 6}


def double_diamond(agents: int = 1) -> Dag:
    return Dag(8, DD_EDGES, ((0, 7),) * agents, DD_LABELS)


def diamond(agents: int = 1) -> Dag:
    """s->a, s->b, a->t, b->t with nodes s=0, a=1, b=2, t=3."""
    return Dag(4, ((0, 1), (0, 2), (1, 3), (2, 3)), ((0, 3),) * agents, ("s", "a", "b", "t"))


def parallel_edges(agents: int = 2, k: int = 2) -> Dag:
    return Dag(2, ((0, 1),) * k, ((0, 1),) * agents, ("s", "t"))


def single_edge(agents: int = 1) -> Dag:
    return Dag(2, ((0, 1),), ((0, 1),) * agents, ("s", "t"))
