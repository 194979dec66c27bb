import numpy as np
import pytest

from gglr.graphs import Graph


def line_graph(n, weights=None, spacing=1.0):
    """Path graph with 1-D coordinates 0, spacing, 2*spacing, ..."""
    if weights is None:
        weights = np.ones(n - 1)
    edges = [(i, i + 1, float(weights[i])) for i in range(n - 1)]
    coords = (np.arange(n, dtype=np.float64) * spacing)[:, None]
    return Graph(n, np.array(edges), coords=coords)


def ring_graph(n):
    edges = [(i, (i + 1) % n, 1.0) for i in range(n)]
    return Graph(n, np.array([(min(i, j), max(i, j), w) for i, j, w in edges]))


def complete_graph(n):
    edges = [(i, j, 1.0) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, np.array(edges))


def star_graph(n_leaves):
    edges = [(0, i, 1.0) for i in range(1, n_leaves + 1)]
    return Graph(n_leaves + 1, np.array(edges))


def fig_strip_graph():
    """Four nodes on an equilateral-triangle strip; two gradients computable."""
    coords = np.array([[0.0, 0.0], [0.5, 0.866], [1.0, 0.0], [1.5, 0.866]])
    edges = [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]
    return Graph(4, np.array(edges), coords=coords)


def random_geometric_graph(rng, n, dim, k=4, weight_kind="unit"):
    """kNN-style graph over random coordinates, guaranteed connected."""
    pts = rng.uniform(0.0, 1.0, size=(n, dim))
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    pairs = set()
    for i in range(n):
        for j in np.argsort(d2[i])[:k]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    # chain fallback keeps the graph connected regardless of geometry
    order = np.argsort(pts[:, 0], kind="stable")
    for a, b in zip(order[:-1], order[1:]):
        pairs.add((min(int(a), int(b)), max(int(a), int(b))))
    pairs = sorted(pairs)
    if weight_kind == "unit":
        w = np.ones(len(pairs))
    else:
        w = rng.uniform(0.2, 1.0, size=len(pairs))
    edges = np.array([(i, j, wk) for (i, j), wk in zip(pairs, w)])
    return Graph(n, edges, coords=pts)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
