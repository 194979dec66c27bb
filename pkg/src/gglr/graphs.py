"""Undirected weighted graphs, combinatorial Laplacians, and bilateral
signal-dependent edge weights.
"""

from __future__ import annotations

import numpy as np

from .errors import DuplicateEdge, LengthMismatch, SelfLoop
from .sparsela import SparseMatrix


class Graph:
    """Undirected weighted graph, optionally with per-node latent coordinates
    and feature vectors.

    Edges are stored once with i < j. Base-graph weights must be
    non-negative; signed weights only ever appear inside derived operators,
    never here.
    """

    def __init__(self, n, edges, coords=None, features=None):
        self.n = int(n)
        e = np.asarray(edges, dtype=np.float64).reshape(-1, 3)
        ei = e[:, 0].astype(np.int64)
        ej = e[:, 1].astype(np.int64)
        ew = e[:, 2]
        lo = np.minimum(ei, ej)
        hi = np.maximum(ei, ej)
        if np.any(lo < 0) or np.any(hi >= self.n):
            raise IndexError("edge endpoint out of range")
        if np.any(lo == hi):
            raise SelfLoop("self-loops are not allowed")
        order = np.lexsort((hi, lo))
        self.edge_i = lo[order]
        self.edge_j = hi[order]
        self.edge_w = ew[order]
        keys = self.edge_i * self.n + self.edge_j
        if np.unique(keys).size != keys.size:
            raise DuplicateEdge("duplicate undirected edge")
        if not np.all(np.isfinite(self.edge_w)):
            raise ValueError("edge weights must be finite")
        if np.any(self.edge_w < 0):
            raise ValueError("base-graph edge weights must be non-negative")

        self.coords = None
        if coords is not None:
            c = np.asarray(coords, dtype=np.float64)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[0] != self.n:
                raise LengthMismatch("coordinate count must match node count")
            if not np.all(np.isfinite(c)):
                raise ValueError("coordinates must be finite")
            self.coords = c
        self.features = None
        if features is not None:
            f = np.asarray(features, dtype=np.float64)
            if f.ndim == 1:
                f = f[:, None]
            if f.shape[0] != self.n:
                raise LengthMismatch("feature count must match node count")
            self.features = f

    @property
    def m(self):
        return self.edge_i.size

    @property
    def coord_dim(self):
        return None if self.coords is None else self.coords.shape[1]

    def with_weights(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != self.edge_w.shape:
            raise LengthMismatch("weight vector must match edge count")
        g = Graph.__new__(Graph)
        g.n = self.n
        g.edge_i = self.edge_i
        g.edge_j = self.edge_j
        g.edge_w = w.copy()
        g.coords = self.coords
        g.features = self.features
        return g

    def with_coords(self, coords):
        return Graph(
            self.n,
            np.column_stack([self.edge_i, self.edge_j, self.edge_w]),
            coords=coords,
            features=self.features,
        )

    def neighbors(self):
        """Adjacency lists as a tuple of (neighbor, weight) index arrays."""
        adj = [[] for _ in range(self.n)]
        for k in range(self.m):
            i, j = int(self.edge_i[k]), int(self.edge_j[k])
            adj[i].append((j, self.edge_w[k]))
            adj[j].append((i, self.edge_w[k]))
        return adj

    def is_connected(self):
        if self.n == 0:
            return True
        adj = self.neighbors()
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return bool(seen.all())


def _check_signal(g, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise LengthMismatch(f"signal length {x.shape} does not match {g.n} nodes")
    return x


def laplacian(g):
    """Combinatorial Laplacian L = D - W as a sparse matrix."""
    i, j, w = g.edge_i, g.edge_j, g.edge_w
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-w, -w, w, w])
    return SparseMatrix.from_triplets(rows, cols, vals, (g.n, g.n))


def glr(g, x):
    """Quadratic smoothness sum over edges: sum w_ij (x_i - x_j)^2."""
    x = _check_signal(g, x)
    d = x[g.edge_i] - x[g.edge_j]
    return float(np.sum(g.edge_w * d * d))


def laplacian_apply_x(g, x):
    """L x without materializing L."""
    x = _check_signal(g, x)
    d = g.edge_w * (x[g.edge_i] - x[g.edge_j])
    out = np.zeros(g.n)
    np.add.at(out, g.edge_i, d)
    np.subtract.at(out, g.edge_j, d)
    return out


def bilateral_weights(g, x, sigma_x, sigma_f=None):
    """Edge weights exp(-|f_i-f_j|^2/sigma_f^2 - |x_i-x_j|^2/sigma_x^2).

    The feature term is dropped when the graph carries no features or
    sigma_f is None (equivalent to sigma_f -> infinity).
    """
    x = _check_signal(g, x)
    if sigma_x <= 0:
        raise ValueError("sigma_x must be positive")
    d = x[g.edge_i] - x[g.edge_j]
    expo = (d * d) / (sigma_x * sigma_x)
    if g.features is not None and sigma_f is not None:
        if sigma_f <= 0:
            raise ValueError("sigma_f must be positive")
        df = g.features[g.edge_i] - g.features[g.edge_j]
        expo = expo + np.sum(df * df, axis=1) / (sigma_f * sigma_f)
    return np.exp(-expo)


def sdglr_weights(g, x, sigma_x, sigma_f=None):
    """Graph with bilateral signal-dependent weights on the same edge set."""
    return g.with_weights(bilateral_weights(g, x, sigma_x, sigma_f=sigma_f))


def gershgorin_lower_bound(m):
    """Smallest Gershgorin disc left-end of a symmetric sparse matrix.

    A cheap certified lower bound on the smallest eigenvalue.
    """
    if isinstance(m, SparseMatrix):
        csr = m.csr
    else:
        csr = SparseMatrix.from_dense(m).csr
    if csr.shape[0] != csr.shape[1]:
        raise ValueError("matrix must be square")
    diag = csr.diagonal()
    absrow = np.asarray(abs(csr).sum(axis=1)).ravel()
    radii = absrow - np.abs(diag)
    return float(np.min(diag - radii)) if csr.shape[0] else 0.0
