import numpy as np
import pytest

from lscale.graph import Graph, LabelSet, write_dataset
from lscale.synthetic import sbm_dataset


def random_graph(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph.from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sbm_data():
    return sbm_dataset(seed=0)


@pytest.fixture
def tiny_dataset(tmp_path):
    """12 nodes in two triangles-plus-tails with 2-D attributes."""
    edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5),
             (6, 7), (7, 8), (6, 8), (8, 9), (9, 10), (10, 11), (5, 6)]
    graph = Graph.from_edges(12, edges)
    labels = LabelSet.from_array([0] * 6 + [1] * 6)
    X = np.array([[1.0, 0.1 * i] for i in range(6)] + [[-1.0, 0.1 * i] for i in range(6)])
    write_dataset(tmp_path / "tiny", graph, X, labels)
    return tmp_path / "tiny", (graph, X, labels)
