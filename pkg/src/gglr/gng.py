"""Gradient graph, its Laplacian lifted back to the node domain, and the
resulting planar-promoting regularizer.

The node-domain operator is applied matrix-free: signal -> gradients ->
gradient-graph smoothing -> adjoint back to nodes. It is symmetric positive
semi-definite by construction even though the induced nodal graph is signed.
"""

from __future__ import annotations

import numpy as np

from .errors import LengthMismatch, NotOneDimensional
from .sparsela import LinearOperator, SparseMatrix, right_pseudo_inverse_apply


class GradientGraph:
    """Undirected positive graph over the computable node set.

    Edges are base-graph edges with both endpoints computable; endpoints are
    stored as positions into the plan's source ordering.
    """

    def __init__(self, plan, edge_a, edge_b, weights):
        self.plan = plan
        self.edge_a = np.asarray(edge_a, dtype=np.int64)
        self.edge_b = np.asarray(edge_b, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        if np.any(self.weights < 0):
            raise ValueError("gradient-graph weights must be non-negative")

    @property
    def node_ids(self):
        return self.plan.sources

    def without_nodes(self, removed_ids):
        """Drop all edges touching the given node ids (ids, not positions)."""
        if not removed_ids:
            return self
        removed_pos = {self.plan.position(i) for i in removed_ids}
        keep = np.array(
            [
                a not in removed_pos and b not in removed_pos
                for a, b in zip(self.edge_a, self.edge_b)
            ],
            dtype=bool,
        )
        return GradientGraph(
            self.plan, self.edge_a[keep], self.edge_b[keep], self.weights[keep]
        )

    def laplacian(self):
        nv = self.plan.n_computable
        a, b, w = self.edge_a, self.edge_b, self.weights
        rows = np.concatenate([a, b, a, b])
        cols = np.concatenate([b, a, a, b])
        vals = np.concatenate([-w, -w, w, w])
        return SparseMatrix.from_triplets(rows, cols, vals, (nv, nv))


def gradient_graph(plan, field, mode, base, sigma_alpha=None):
    """Connect computable node pairs that share a base edge.

    mode 'planar-fixed' copies the base edge weights; 'signal-dependent'
    weights each edge by exp(-|grad_i - grad_j|^2 / sigma_alpha^2).
    """
    pos = {int(v): p for p, v in enumerate(plan.sources)}
    ea, eb, bw = [], [], []
    for i, j, w in zip(base.edge_i, base.edge_j, base.edge_w):
        pi = pos.get(int(i))
        pj = pos.get(int(j))
        if pi is not None and pj is not None:
            ea.append(pi)
            eb.append(pj)
            bw.append(w)
    ea = np.asarray(ea, dtype=np.int64)
    eb = np.asarray(eb, dtype=np.int64)
    bw = np.asarray(bw, dtype=np.float64)

    if mode == "planar-fixed":
        weights = bw
    elif mode == "signal-dependent":
        if sigma_alpha is None or sigma_alpha <= 0:
            raise ValueError("signal-dependent mode requires sigma_alpha > 0")
        diff = field.per_node[ea] - field.per_node[eb]
        delta = np.sum(diff * diff, axis=1)
        weights = np.exp(-delta / (sigma_alpha * sigma_alpha))
    else:
        raise ValueError(f"unknown gradient-graph mode {mode!r}")
    return GradientGraph(plan, ea, eb, weights)


class GnlOperator:
    """Node-domain regularizer operator for one gradient graph."""

    def __init__(self, plan, ggraph):
        if ggraph.plan is not plan:
            raise ValueError("gradient graph was built for a different plan")
        self.plan = plan
        self.ggraph = ggraph
        self.gradient_laplacian = ggraph.laplacian()
        self.k = plan.k
        self.dim = plan.n

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise LengthMismatch("signal length does not match node count")
        plan = self.plan
        fx = x[plan.sources][:, None] - x[plan.targets]
        alpha = np.einsum("nkp,np->nk", plan.grad_mats, fx)
        z = np.empty_like(alpha)
        for kk in range(self.k):
            z[:, kk] = self.gradient_laplacian.apply(alpha[:, kk])
        u = np.einsum("nkp,nk->np", plan.grad_mats, z)
        out = np.zeros(self.dim)
        np.add.at(out, plan.sources, u.sum(axis=1))
        np.subtract.at(out, plan.targets.ravel(), u.ravel())
        return out

    def __call__(self, x):
        return self.apply(x)

    def as_linear_operator(self):
        return LinearOperator(self.dim, self.apply)

    def to_dense(self):
        """Densify by probing; intended for tests at small dimension."""
        if self.dim > 512:
            raise ValueError("refusing to densify an operator this large")
        return self.as_linear_operator().to_dense()


def gng_apply(op, x):
    return op.apply(x)


def gglr_value(op, x):
    """Quadratic regularizer value x' L x (non-negative up to round-off)."""
    x = np.asarray(x, dtype=np.float64)
    return float(x @ op.apply(x))


def gglr_edge_sum(op, x):
    """Same value computed edge by edge: sum w_ij |grad_i - grad_j|^2.

    Kept as an independent route for cross-checking the operator form.
    """
    from .daggrad import gradient_field

    field = gradient_field(op.plan, x)
    gg = op.ggraph
    diff = field.per_node[gg.edge_a] - field.per_node[gg.edge_b]
    return float(np.sum(gg.weights * np.sum(diff * diff, axis=1)))


def zero_eigenvectors_1d(op):
    """The two analytic zero-eigenvectors for one-dimensional coordinates.

    Returns (all-ones, minimum-norm preimage of the all-ones gradient).
    """
    if op.plan.k != 1:
        raise NotOneDimensional(f"coordinate dimension is {op.plan.k}, not 1")
    v1 = np.ones(op.dim)
    g = op.plan.gradient_matrix()
    v2 = right_pseudo_inverse_apply(g, np.ones(op.plan.n_computable))
    return v1, v2


def detect_false_gradients(field, multiplier=2.0):
    """Nodes whose gradient norm exceeds multiplier times the mean norm.

    A gradient straddling two distinct planar pieces is much larger than its
    within-piece neighbors; removing such nodes from the gradient graph
    before the final iterations avoids smearing across the discontinuity.
    """
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    norms = field.norms()
    if norms.size == 0:
        return set()
    threshold = multiplier * float(norms.mean())
    hits = np.flatnonzero(norms > threshold)
    return {int(field.plan.sources[p]) for p in hits}
