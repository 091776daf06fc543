import numpy as np
import pytest

from bgdce.graph import Dag, layered_dag, reachable_subgraph
from bgdce.instances import DD_BLUE, diamond, double_diamond, parallel_edges


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dd():
    return double_diamond()


@pytest.fixture
def dd_blue():
    return dict(DD_BLUE)


def edge(dag: Dag, name: str) -> int:
    """Edge index from a name like 's->b'."""
    u, v = name.split("->")
    lab = list(dag.labels)
    return dag.edges.index((lab.index(u), lab.index(v)))


def random_graphs(seed: int, count: int):
    r = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        dag = layered_dag(r, max_paths=300)
        out.append((dag, reachable_subgraph(dag, 0, dag.node_count - 1)))
    return out


TEST_GRAPHS = {
    "double_diamond": lambda: (double_diamond(), DD_BLUE),
    "diamond": lambda: (diamond(), None),
    "parallel3": lambda: (parallel_edges(1, 3), None),
}


# One line per acceptance criterion at the end of the run.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
