import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from graphshrink import load_graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def grid_graph(rows, cols):
    idx = np.arange(rows * cols).reshape(rows, cols)
    edges = [(int(a), int(b)) for a, b in zip(idx[:, :-1].ravel(), idx[:, 1:].ravel())]
    edges += [(int(a), int(b)) for a, b in zip(idx[:-1, :].ravel(), idx[1:, :].ravel())]
    return load_graph(edges, rows * cols)


def random_graph(rng, p, m):
    """Random simple graph with up to `m` edges; may be disconnected."""
    pairs = set()
    while len(pairs) < m:
        u, v = rng.choice(p, size=2, replace=False)
        pairs.add((int(min(u, v)), int(max(u, v))))
    return load_graph(sorted(pairs), p)


# five vertices: vertex 0 alone, vertices 1..4 on a 4-cycle
FIG1_EDGES = [(1, 2), (2, 4), (4, 3), (3, 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
