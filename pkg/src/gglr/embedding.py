"""Latent-coordinate computation for graphs that arrive without coordinates,
plus the betweenness-variance gate that decides whether a graph is uniform
enough to embed at all.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionTooSmall, InvalidSpec, NotConnected, NotManifold
from .graphs import laplacian
from .sparsela import LinearOperator, SparseMatrix, smallest_eigenpairs

EXACT_BETWEENNESS_DIM = 64
DEFAULT_VBC_THRESHOLD = 1e-4


@dataclass(frozen=True)
class TwoHopMatrix:
    """Laplacian-like penalty over disconnected two-hop pairs.

    Every node i contributes an elementary Laplacian, scaled by 1/T_i, for
    each of its T_i two-hop-but-not-adjacent neighbors.
    """

    q: SparseMatrix
    t_counts: np.ndarray

    @property
    def is_zero(self):
        return self.q.nnz == 0 or float(np.abs(self.q.csr.data).max()) == 0.0


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray  # (N, K), columns orthonormal
    gamma: float
    epsilon: float


def _adjacency_sets(g):
    adj = [set() for _ in range(g.n)]
    for i, j in zip(g.edge_i, g.edge_j):
        adj[int(i)].add(int(j))
        adj[int(j)].add(int(i))
    return adj


def two_hop_sets(g):
    """For each node, the nodes reachable in exactly two hops that are not
    already adjacent (and are not the node itself)."""
    adj = _adjacency_sets(g)
    out = []
    for i in range(g.n):
        two = set()
        for j in adj[i]:
            two |= adj[j]
        two.discard(i)
        two -= adj[i]
        out.append(two)
    return out


def two_hop_matrix(g):
    if not g.is_connected():
        raise NotConnected("two-hop penalty requires a connected graph")
    tsets = two_hop_sets(g)
    t_counts = np.array([len(t) for t in tsets], dtype=np.int64)
    rows, cols, vals = [], [], []
    for i, tset in enumerate(tsets):
        if not tset:
            continue
        s = 1.0 / len(tset)
        for j in sorted(tset):
            rows += [i, j, i, j]
            cols += [i, j, j, i]
            vals += [s, s, -s, -s]
    q = SparseMatrix.from_triplets(rows, cols, vals, (g.n, g.n))
    return TwoHopMatrix(q=q, t_counts=t_counts)


def choose_gamma(l, q, epsilon):
    """Largest penalty weight that keeps every Gershgorin disc left-end of
    L - gamma Q + eps I at zero or above.

    Rows without two-hop structure impose no constraint. A zero Q yields
    gamma = 0 (the penalty is absent).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    qm = q.q if isinstance(q, TwoHopMatrix) else q
    diag = qm.diagonal()
    rowsum = qm.row_sums()
    denom = 2.0 * diag - rowsum  # Q_ii - sum_{j != i} Q_ij
    active = diag > 0
    if not np.any(active):
        return 0.0
    gamma = float(np.min(epsilon / denom[active]))

    a = _assemble_embedding_matrix(l, qm, gamma, epsilon)
    from .graphs import gershgorin_lower_bound

    assert gershgorin_lower_bound(a) >= -1e-12, "disc left-end slipped below zero"
    return gamma


def _assemble_embedding_matrix(l, qm, gamma, epsilon):
    csr = l.csr - gamma * qm.csr
    n = csr.shape[0]
    if epsilon != 0.0:
        csr = csr + epsilon * SparseMatrix.identity(n).csr
    return SparseMatrix(csr.tocsr())


def embed(g, k):
    """Latent coordinates from the spectrum of the certified-PSD objective
    matrix; one column per dimension, skipping the leading eigenvector."""
    if not g.is_connected():
        raise NotConnected("embedding requires a connected graph")
    if k < 1 or k > 8:
        raise DimensionTooSmall(f"embedding dimension {k} outside 1..8")
    if k + 1 >= g.n:
        raise DimensionTooSmall(f"need at least {k + 2} nodes for a {k}-D embedding")

    l = laplacian(g)
    q = two_hop_matrix(g)
    if q.is_zero:
        epsilon = 0.0
        gamma = 0.0
        a = l
    else:
        q_op = LinearOperator.from_matrix(q.q)
        pairs = smallest_eigenpairs(q_op, 2)
        epsilon = float(pairs[1][0])
        gamma = choose_gamma(l, q, epsilon)
        a = _assemble_embedding_matrix(l, q.q, gamma, epsilon)

    a_op = LinearOperator.from_matrix(a)
    pairs = smallest_eigenpairs(a_op, k + 1)
    coords = np.column_stack([v for _, v in pairs[1:]])
    return Embedding(coords=coords, gamma=gamma, epsilon=epsilon)


# ---------------------------------------------------------------------------
# Betweenness centrality and the manifold gate


def _brandes_sssp(adj, s):
    """BFS stage of Brandes' algorithm: visit order, path counts, parents."""
    n = len(adj)
    dist = [-1] * n
    sigma = [0] * n
    preds = [[] for _ in range(n)]
    dist[s] = 0
    sigma[s] = 1
    order = []
    queue = deque([s])
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return order, sigma, preds


def betweenness(g, exact=None):
    """Normalized betweenness centrality per node (unweighted shortest paths).

    Dependency accumulation runs in exact rational arithmetic on small
    graphs so results are reproducible to the bit; larger graphs use floats.
    Counts are over ordered (s, t) pairs, normalized by (N-1)(N-2).
    """
    n = g.n
    if not g.is_connected():
        raise NotConnected("betweenness requires a connected graph")
    if exact is None:
        exact = n <= EXACT_BETWEENNESS_DIM
    adj = [sorted(s) for s in _adjacency_sets(g)]
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    cb = [zero] * n
    for s in range(n):
        order, sigma, preds = _brandes_sssp(adj, s)
        delta = [zero] * n
        for w in reversed(order):
            coeff = (one + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                cb[w] += delta[w]
    norm = (n - 1) * (n - 2)
    if norm <= 0:
        return np.zeros(n)
    if exact:
        return np.array([float(c / norm) for c in cb])
    return np.array([c / norm for c in cb])


def vbc(g):
    """Variance of normalized betweenness centrality across nodes."""
    if g.n > 5000:
        raise InvalidSpec("all-pairs betweenness is limited to 5000 nodes")
    c = betweenness(g)
    return float(np.var(c))


def is_manifold_graph(g, threshold=DEFAULT_VBC_THRESHOLD):
    """Gate: uniform shortest-path load across nodes, measured by VBC.

    Returns (qualified, diagnostics).
    """
    value = vbc(g)
    return value <= threshold, {"vbc": value, "threshold": threshold}


def require_manifold(g, threshold=DEFAULT_VBC_THRESHOLD):
    ok, diag = is_manifold_graph(g, threshold)
    if not ok:
        raise NotManifold(diag["vbc"], threshold)
    return diag
