"""Directed-acyclic gradient structure over a coordinate-endowed graph.

For every node that can reach enough lexicographically-larger neighbors,
a fixed set of out-edges is selected once; those edges define per-node
difference operators and coordinate matrices from which manifold gradients
are computed by weighted least squares.
"""

from __future__ import annotations

import heapq

import numpy as np

from .errors import (
    DegenerateCoordinates,
    LengthMismatch,
    NoCoordinates,
    NodeNotComputable,
    RankDeficient,
)
from .sparsela import SparseMatrix, left_pseudo_inverse


def acyclic_condition(p_i, p_j):
    """True iff the first coordinate where p_j differs from p_i is larger.

    Scanning in index order imposes a strict lexicographic order on nodes,
    which is what guarantees the selected out-edges can never close a cycle.
    Comparisons are exact: coordinates must not be perturbed on ingestion.
    """
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    if p_i.shape != p_j.shape:
        raise LengthMismatch("coordinate dimensions differ")
    for a, b in zip(p_i, p_j):
        if b > a:
            return True
        if b < a:
            return False
    return False


class DagGradientPlan:
    """Per-node out-edges plus everything needed to map signals to gradients.

    Arrays are indexed by position in ``sources`` (the computable set, in
    ascending node order):

    - ``targets[pos, m]``: node hit by the m-th out-edge of sources[pos]
    - ``dag_weights[pos, m]``: product of base weights along the discovery path
    - ``coord_mats[pos]``: (K+ x K) coordinate-difference matrix
    - ``grad_mats[pos]``: (K x K+) weighted least-squares solve matrix, or
      None where the target coordinates are collinear (rank-deficient)
    """

    def __init__(self, n, k, k_plus, sources, targets, dag_weights, coords):
        self.n = int(n)
        self.k = int(k)
        self.k_plus = int(k_plus)
        self.sources = np.asarray(sources, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64).reshape(-1, self.k_plus)
        self.dag_weights = np.asarray(dag_weights, dtype=np.float64).reshape(
            -1, self.k_plus
        )
        self.coords = coords
        self._pos = {int(v): p for p, v in enumerate(self.sources)}

        nv = self.sources.size
        self.coord_mats = np.empty((nv, self.k_plus, self.k))
        for p in range(nv):
            i = self.sources[p]
            self.coord_mats[p] = coords[i][None, :] - coords[self.targets[p]]

        # WLS solve matrices (W C)^† W, deferred rank errors per node
        self.grad_mats = np.zeros((nv, self.k, self.k_plus))
        self._rank_ok = np.ones(nv, dtype=bool)
        for p in range(nv):
            w = self.dag_weights[p]
            wc = w[:, None] * self.coord_mats[p]
            try:
                self.grad_mats[p] = left_pseudo_inverse(wc) * w[None, :]
            except RankDeficient:
                self._rank_ok[p] = False

    @property
    def computable(self):
        """Node ids with a full set of out-edges, ascending."""
        return self.sources

    @property
    def n_computable(self):
        return self.sources.size

    @property
    def slot_count(self):
        return self.n_computable * self.k

    def position(self, node):
        try:
            return self._pos[int(node)]
        except KeyError:
            raise NodeNotComputable(f"node {node} has no gradient") from None

    def reorder_indices(self):
        """Permutation taking node-major gradient slots to coordinate-major.

        Entry s of the result is the node-major slot feeding output slot s,
        where outputs are grouped as all first coordinates, then all second
        coordinates, and so on.
        """
        nv, k = self.n_computable, self.k
        out = np.empty(nv * k, dtype=np.int64)
        for kk in range(k):
            for p in range(nv):
                out[kk * nv + p] = p * k + kk
        return out

    def reorder_matrix(self):
        perm = self.reorder_indices()
        nslots = perm.size
        r = np.zeros((nslots, nslots))
        r[np.arange(nslots), perm] = 1.0
        return r

    def gradient_matrix(self):
        """The stacked gradient computation operator as a sparse matrix.

        Rows are node-major: row p*K + kk maps the signal to coordinate kk
        of the gradient at sources[p].
        """
        self._require_full_rank()
        rows, cols, vals = [], [], []
        for p in range(self.n_computable):
            i = int(self.sources[p])
            m = self.grad_mats[p]
            for kk in range(self.k):
                r = p * self.k + kk
                rows.append(r)
                cols.append(i)
                vals.append(float(m[kk].sum()))
                for t in range(self.k_plus):
                    rows.append(r)
                    cols.append(int(self.targets[p, t]))
                    vals.append(-float(m[kk, t]))
        return SparseMatrix.from_triplets(
            rows, cols, vals, (self.slot_count, self.n)
        )

    def _require_full_rank(self):
        if not self._rank_ok.all():
            bad = int(self.sources[np.flatnonzero(~self._rank_ok)[0]])
            raise RankDeficient(f"collinear gradient targets at node {bad}")

    def check_acyclic(self):
        """Topological sort over the selected out-edges; True iff acyclic."""
        indeg = np.zeros(self.n, dtype=np.int64)
        adj = [[] for _ in range(self.n)]
        for p in range(self.n_computable):
            i = int(self.sources[p])
            for j in self.targets[p]:
                adj[i].append(int(j))
                indeg[int(j)] += 1
        stack = [v for v in range(self.n) if indeg[v] == 0]
        seen = 0
        while stack:
            u = stack.pop()
            seen += 1
            for v in adj[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        return seen == self.n


def build_dag(g, k_plus=None):
    """Select out-edges for every node by expanding 1-hop frontiers.

    Candidates must satisfy the lexicographic coordinate condition relative
    to the source node; among candidates the closest in latent distance wins,
    ties broken by smaller node index. Each selection releases its own 1-hop
    neighbors into the candidate pool. Nodes that cannot reach ``k_plus``
    valid targets are excluded from the computable set.
    """
    if g.coords is None:
        raise NoCoordinates("graph has no latent coordinates")
    coords = g.coords
    k = coords.shape[1]
    if k_plus is None:
        k_plus = k
    if k_plus < k:
        raise ValueError(f"k_plus ({k_plus}) must be at least the coordinate dim ({k})")
    if np.all(coords == coords[0]):
        raise DegenerateCoordinates("all nodes share identical coordinates")

    adj = g.neighbors()
    sources, targets, dweights = [], [], []
    for i in range(g.n):
        sel, wsel = _expand_node(i, coords, adj, k_plus)
        if len(sel) == k_plus:
            sources.append(i)
            targets.append(sel)
            dweights.append(wsel)

    plan = DagGradientPlan(
        g.n,
        k,
        k_plus,
        np.array(sources, dtype=np.int64),
        np.array(targets, dtype=np.int64).reshape(-1, k_plus),
        np.array(dweights, dtype=np.float64).reshape(-1, k_plus),
        coords,
    )
    assert plan.check_acyclic(), "expansion produced a cycle"
    return plan


def _expand_node(i, coords, adj, k_plus):
    p_i = coords[i]
    heap = []
    seen = {i}
    for j, w in adj[i]:
        if j not in seen and acyclic_condition(p_i, coords[j]):
            d = float(np.linalg.norm(coords[j] - p_i))
            heapq.heappush(heap, (d, j, float(w)))
            seen.add(j)
    sel, wsel = [], []
    while heap and len(sel) < k_plus:
        _, jstar, path_w = heapq.heappop(heap)
        sel.append(jstar)
        wsel.append(path_w)
        for l, w in adj[jstar]:
            if l not in seen and acyclic_condition(p_i, coords[l]):
                d = float(np.linalg.norm(coords[l] - p_i))
                heapq.heappush(heap, (d, l, path_w * float(w)))
                seen.add(l)
    return sel, wsel


def gradient_operator_apply(plan, i, x):
    """Forward differences of x along node i's out-edges (length K+)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (plan.n,):
        raise LengthMismatch("signal length does not match node count")
    p = plan.position(i)
    return x[plan.sources[p]] - x[plan.targets[p]]


def manifold_gradient(plan, i, x):
    """Weighted least-squares gradient at node i (length K)."""
    p = plan.position(i)
    if not plan._rank_ok[p]:
        raise RankDeficient(f"collinear gradient targets at node {i}")
    return plan.grad_mats[p] @ gradient_operator_apply(plan, i, x)


class GradientField:
    """All computable gradients of one signal, node-major internally."""

    def __init__(self, plan, per_node):
        self.plan = plan
        self.per_node = per_node  # (n_computable, K)

    @property
    def alpha(self):
        """Stacked gradient vector in coordinate-major order."""
        flat = self.per_node.reshape(-1)
        return flat[self.plan.reorder_indices()]

    def at(self, node):
        return self.per_node[self.plan.position(node)]

    def norms(self):
        return np.linalg.norm(self.per_node, axis=1)


def gradient_field(plan, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (plan.n,):
        raise LengthMismatch("signal length does not match node count")
    plan._require_full_rank()
    fx = x[plan.sources][:, None] - x[plan.targets]
    per_node = np.einsum("nkp,np->nk", plan.grad_mats, fx)
    return GradientField(plan, per_node)
