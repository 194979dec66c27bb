"""Quadratic restoration: observation models, the regularized solve, and the
outer signal-dependent iteration for denoising, interpolation and deblurring.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .daggrad import DagGradientPlan, build_dag, gradient_field
from .errors import (
    BreakdownNegativeCurvature,
    InvalidSpec,
    LengthMismatch,
    NoCoordinates,
    NonConvergence,
    NotAGrid,
    RankDeficient,
    SingularPhi,
)
from .gng import GnlOperator, detect_false_gradients, gglr_value, gradient_graph
from .graphs import laplacian, sdglr_weights
from .sparsela import LinearOperator, SparseMatrix, cg_solve

CONDITION_CHECK_DIM = 2000


class ObservationMap:
    """Signal-to-observation mapping: identity, node sampling, or blur."""

    def __init__(self, kind, n, mask=None, kernel=None):
        self.kind = kind
        self.n = int(n)
        if kind == "identity":
            self.m = self.n
        elif kind == "sampling":
            mask = np.unique(np.asarray(mask, dtype=np.int64))
            if mask.size == 0:
                raise InvalidSpec("sampling mask is empty")
            if mask.min() < 0 or mask.max() >= self.n:
                raise IndexError("sampling mask index out of range")
            self.mask = mask
            self.m = mask.size
        elif kind == "blur":
            if not isinstance(kernel, SparseMatrix):
                kernel = SparseMatrix.from_dense(kernel)
            self.kernel = kernel
            self.m, kn = kernel.shape
            if kn != self.n:
                raise LengthMismatch("blur kernel width must match signal length")
            if self.m > self.n:
                raise InvalidSpec("more observations than unknowns")
            if self.n <= CONDITION_CHECK_DIM:
                sv = np.linalg.svd(kernel.to_dense(), compute_uv=False)
                if sv[-1] <= 1e-10 * sv[0]:
                    raise RankDeficient("blur kernel rows are not independent")
        else:
            raise InvalidSpec(f"unknown observation kind {kind!r}")

    @classmethod
    def identity(cls, n):
        return cls("identity", n)

    @classmethod
    def sampling(cls, mask, n):
        return cls("sampling", n, mask=mask)

    @classmethod
    def blur(cls, kernel):
        kernel = kernel if isinstance(kernel, SparseMatrix) else SparseMatrix.from_dense(kernel)
        return cls("blur", kernel.shape[1], kernel=kernel)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "sampling":
            return x[self.mask]
        return self.kernel.apply(x)

    def lift(self, y):
        """Adjoint H'y; for sampling this zero-fills the missing nodes."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise LengthMismatch("observation length does not match the map")
        if self.kind == "identity":
            return y.copy()
        if self.kind == "sampling":
            out = np.zeros(self.n)
            out[self.mask] = y
            return out
        return self.kernel.rmatvec(y)

    def normal_apply(self, x):
        """H'H x."""
        return self.lift(self.apply(x))

    def project_row_space(self, v):
        """Orthogonal projection of v onto the row space of the map."""
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "identity":
            return v.copy()
        if self.kind == "sampling":
            out = np.zeros(self.n)
            out[self.mask] = v[self.mask]
            return out
        hht = LinearOperator(self.m, lambda t: self.apply(self.lift(t)))
        t = cg_solve(hht, self.apply(v), tol=1e-10, max_iter=20 * self.m)
        return self.lift(t)


@dataclass
class RestoreProblem:
    """One restoration instance: observation, mapping, and solver knobs.

    ``mu`` may be the string 'auto' (denoising only), in which case
    ``sigma_z`` must be given and the tradeoff module picks the value.
    ``anchor`` controls what the data term tracks in signal-dependent
    iterations: 'auto' keeps denoising anchored at the running iterate and
    everything else at the observation.
    """

    y: np.ndarray
    h: ObservationMap
    mu: object = 0.01
    sigma_alpha: float = 1.5
    mode: str = "signal-dependent"
    false_gradient_multiplier: float = 2.0
    warmup_iters: int = 5
    max_iters: int = 100
    conv_tol: float = 1e-6
    k_plus: int | None = None
    sigma_z: float | None = None
    sigma_x: float = 1.0
    sigma_f: float | None = None
    anchor: str = "auto"
    init_weights: str = "auto"
    cg_tol: float = 1e-8
    extras: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.shape != (self.h.m,):
            raise LengthMismatch("observation length does not match the map")
        if self.mode not in ("signal-dependent", "planar-fixed"):
            raise InvalidSpec(f"unknown mode {self.mode!r}")
        if self.mu != "auto" and float(self.mu) < 0:
            raise InvalidSpec("mu must be positive or 'auto'")
        if self.anchor not in ("auto", "observation", "previous"):
            raise InvalidSpec(f"unknown anchor policy {self.anchor!r}")


@dataclass
class RestoreReport:
    x_star: np.ndarray
    iterations: int
    objective_trace: list
    removed_false_gradients: set
    mu_used: float
    cg_stats: list
    converged: bool
    diagnostics: dict = dc_field(default_factory=dict)


class _CountingOperator:
    """Wraps an operator to count apply calls during one CG solve."""

    def __init__(self, op):
        self._op = op
        self.dim = op.dim
        self.calls = 0

    def apply(self, x):
        self.calls += 1
        return self._op.apply(x)


def _phi_operator(h, reg_ops, mu):
    def apply(x):
        out = h.normal_apply(x)
        for op in reg_ops:
            out = out + mu * op.apply(x)
        return out

    return LinearOperator(h.n, apply)


def _check_solvability(h, null_vectors):
    """Solvability preconditions: every zero-mode must stay observable and
    the projections onto the observation row space must stay independent."""
    cols = []
    for v in null_vectors:
        hv = h.apply(v)
        if float(np.linalg.norm(hv)) <= 1e-12 * max(1.0, float(np.linalg.norm(v))):
            raise SingularPhi("a regularizer zero-mode is unobservable")
        cols.append(h.project_row_space(v))
    m = np.column_stack(cols)
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise SingularPhi(
            "projected zero-modes are linearly dependent; the system is singular"
        )


def _planar_null_basis(n, coords):
    cols = [np.ones(n)]
    for k in range(coords.shape[1]):
        cols.append(coords[:, k].astype(np.float64))
    return cols


def _solve(h, reg_ops, mu, y_obs, null_vectors, tol, check_conditions=True):
    if check_conditions:
        if h.n <= CONDITION_CHECK_DIM:
            _check_solvability(h, null_vectors)
        else:
            warnings.warn(
                "solvability conditions unchecked above "
                f"dim {CONDITION_CHECK_DIM}; assuming they hold",
                RuntimeWarning,
            )
    rhs = h.lift(y_obs)
    phi = _CountingOperator(_phi_operator(h, reg_ops, mu))
    try:
        x = cg_solve(phi, rhs, tol=tol, max_iter=max(200, 10 * h.n))
    except BreakdownNegativeCurvature as exc:
        raise SingularPhi(f"CG breakdown: {exc}") from exc
    resid = float(np.linalg.norm(phi.apply(x) - rhs))
    rel = resid / max(1e-300, float(np.linalg.norm(rhs)))
    return x, (phi.calls, rel)


def solve_quadratic(h, op, mu, y, tol=1e-8, check_conditions=True):
    """Minimize |y - Hx|^2 + mu x'Lx for a fixed regularizer operator.

    Solves (H'H + mu L) x = H'y by conjugate gradients. Raises SingularPhi
    when the solvability conditions fail or CG certifies indefiniteness.
    """
    reg = op.as_linear_operator() if isinstance(op, GnlOperator) else op
    null = _planar_null_basis(h.n, op.plan.coords) if isinstance(op, GnlOperator) else []
    x, _ = _solve(h, [reg], float(mu), y, null, tol, check_conditions)
    return x


def _resolve_mu(problem, ops, y, h, null_vectors):
    if problem.mu != "auto":
        return float(problem.mu)
    if h.kind != "identity":
        raise InvalidSpec("mu='auto' is derived for denoising only; pass mu explicitly")
    if problem.sigma_z is None:
        raise InvalidSpec("mu='auto' requires sigma_z")
    from .tradeoff import fit_spectrum, minimize_mu

    combined = ops[0].as_linear_operator()
    for op in ops[1:]:
        combined = combined.plus(op.as_linear_operator())
    fit = fit_spectrum(
        combined, y, problem.sigma_z, null_vectors=null_vectors
    )
    return minimize_mu(fit)


def _anchor_policy(problem, h):
    if problem.anchor != "auto":
        return problem.anchor
    if problem.mode == "signal-dependent" and h.kind == "identity":
        return "previous"
    return "observation"


def _initial_weight_mode(problem, h):
    if problem.mode == "planar-fixed":
        return "planar-fixed"
    pick = problem.init_weights
    if pick == "auto":
        pick = "signal" if h.kind == "identity" else "base"
    return "signal-dependent" if pick == "signal" else "planar-fixed"


def restore(problem, g, plan=None):
    """Full restoration on a coordinate-endowed graph.

    Builds the gradient plan once, then alternates between refreshing
    gradient-graph weights (signal-dependent mode) and solving the quadratic
    problem. After the warmup iterations, outlier gradients are detected
    once and their nodes dropped from the gradient graph before the run
    continues to convergence.
    """
    h = problem.h
    if g.coords is None:
        raise NoCoordinates("restore requires coordinates; run the embedding first")
    if plan is None:
        plan = build_dag(g, problem.k_plus)
    x = h.lift(problem.y)
    fld = gradient_field(plan, x)

    sd = problem.mode == "signal-dependent"
    anchor = _anchor_policy(problem, h)
    weight_mode_first = _initial_weight_mode(problem, h)
    null = _planar_null_basis(g.n, g.coords)

    removed = set()
    removal_done = not sd
    trace, cg_stats = [], []
    mu = None
    converged = False
    iterations = 0

    for t in range(1, problem.max_iters + 1):
        iterations = t
        wmode = weight_mode_first if t == 1 else (
            "signal-dependent" if sd else "planar-fixed"
        )
        gg = gradient_graph(plan, fld, wmode, g, sigma_alpha=problem.sigma_alpha)
        if removed:
            gg = gg.without_nodes(removed)
        op = GnlOperator(plan, gg)
        if mu is None:
            mu = _resolve_mu(problem, [op], problem.y, h, null)

        y_anchor = x if (anchor == "previous" and t > 1) else problem.y
        try:
            x_new, stats = _solve(
                h, [op.as_linear_operator()], mu, y_anchor, null,
                problem.cg_tol, check_conditions=(t == 1),
            )
        except (SingularPhi, NonConvergence) as exc:
            exc.args = (f"iteration {t}: {exc}",)
            raise

        obj = float(np.sum((problem.y - h.apply(x_new)) ** 2)) + mu * gglr_value(
            op, x_new
        )
        trace.append(obj)
        cg_stats.append(stats)

        rel = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x)), 1e-30)
        x = x_new
        fld = gradient_field(plan, x)

        if not removal_done and (t >= problem.warmup_iters or rel < problem.conv_tol):
            removed = detect_false_gradients(fld, problem.false_gradient_multiplier)
            removal_done = True
            if removed:
                continue
        if rel < problem.conv_tol and removal_done:
            converged = True
            break

    return RestoreReport(
        x_star=x,
        iterations=iterations,
        objective_trace=trace,
        removed_false_gradients=removed,
        mu_used=mu,
        cg_stats=cg_stats,
        converged=converged,
        diagnostics={
            "n_computable": int(plan.n_computable),
            "anchor": anchor,
            "mode": problem.mode,
        },
    )


def restore_sdglr(problem, g):
    """Classic piecewise-constant baseline: same loop shape, but the
    regularizer is the base-graph Laplacian with bilateral weights."""
    h = problem.h
    x = h.lift(problem.y)
    anchor = _anchor_policy(problem, h)
    sd = problem.mode == "signal-dependent"
    if problem.mu == "auto":
        raise InvalidSpec("the baseline requires an explicit mu")
    mu = float(problem.mu)

    use_signal_init = _initial_weight_mode(problem, h) == "signal-dependent"
    trace, cg_stats = [], []
    converged = False
    iterations = 0

    for t in range(1, problem.max_iters + 1):
        iterations = t
        if sd and (t > 1 or use_signal_init):
            gw = sdglr_weights(g, x, problem.sigma_x, sigma_f=problem.sigma_f)
        else:
            gw = g
        lap_op = LinearOperator.from_matrix(laplacian(gw))
        y_anchor = x if (anchor == "previous" and t > 1) else problem.y
        rhs = h.lift(y_anchor)
        phi = _CountingOperator(
            LinearOperator(h.n, lambda v: h.normal_apply(v) + mu * lap_op.apply(v))
        )
        try:
            x_new = cg_solve(phi, rhs, tol=problem.cg_tol, max_iter=max(200, 10 * h.n))
        except BreakdownNegativeCurvature as exc:
            raise SingularPhi(f"iteration {t}: {exc}") from exc
        resid = float(np.linalg.norm(phi.apply(x_new) - rhs)) / max(
            1e-300, float(np.linalg.norm(rhs))
        )
        obj = float(np.sum((problem.y - h.apply(x_new)) ** 2)) + mu * float(
            x_new @ lap_op.apply(x_new)
        )
        trace.append(obj)
        cg_stats.append((phi.calls, resid))
        rel = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x)), 1e-30)
        x = x_new
        if rel < problem.conv_tol:
            converged = True
            break

    return RestoreReport(
        x_star=x,
        iterations=iterations,
        objective_trace=trace,
        removed_false_gradients=set(),
        mu_used=mu,
        cg_stats=cg_stats,
        converged=converged,
        diagnostics={"mode": "sdglr", "anchor": anchor},
    )


# ---------------------------------------------------------------------------
# Separable grids


def _grid_layout(g):
    """Map a 4-connected lattice graph to (width, height, node->(col,row))."""
    if g.coords is None or g.coords.shape[1] != 2:
        raise NotAGrid("grid restoration requires 2-D lattice coordinates")
    xs = np.unique(g.coords[:, 0])
    ys = np.unique(g.coords[:, 1])
    w, hgt = xs.size, ys.size
    if w < 2 or hgt < 2 or w * hgt != g.n:
        raise NotAGrid("coordinates do not form a full rectangular lattice")
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    col = np.array([xi[v] for v in g.coords[:, 0]], dtype=np.int64)
    row = np.array([yi[v] for v in g.coords[:, 1]], dtype=np.int64)
    cell = {}
    for node in range(g.n):
        key = (int(col[node]), int(row[node]))
        if key in cell:
            raise NotAGrid("duplicate lattice cell")
        cell[key] = node
    expected = set()
    for (c, r), node in cell.items():
        if c + 1 < w:
            a, b = node, cell[(c + 1, r)]
            expected.add((min(a, b), max(a, b)))
        if r + 1 < hgt:
            a, b = node, cell[(c, r + 1)]
            expected.add((min(a, b), max(a, b)))
    actual = set(zip(g.edge_i.tolist(), g.edge_j.tolist()))
    if actual != expected:
        raise NotAGrid("edge set is not the 4-connected lattice")
    return w, hgt, col, row, cell


def _axis_plan(g, col, row, cell, w, hgt, axis):
    """Directly assemble the 1-D slope plan along one lattice axis."""
    weight_of = {}
    for i, j, wt in zip(g.edge_i, g.edge_j, g.edge_w):
        weight_of[(int(i), int(j))] = float(wt)

    sources, targets, dweights = [], [], []
    for node in range(g.n):
        c, r = int(col[node]), int(row[node])
        if axis == 0 and c + 1 < w:
            tgt = cell[(c + 1, r)]
        elif axis == 1 and r + 1 < hgt:
            tgt = cell[(c, r + 1)]
        else:
            continue
        sources.append(node)
        targets.append([tgt])
        a, b = (node, tgt) if node < tgt else (tgt, node)
        dweights.append([weight_of[(a, b)]])

    coords_1d = g.coords[:, axis : axis + 1]
    return DagGradientPlan(
        g.n,
        1,
        1,
        np.array(sources, dtype=np.int64),
        np.array(targets, dtype=np.int64),
        np.array(dweights, dtype=np.float64),
        coords_1d,
    )


def separable_grid_restore(problem, g):
    """Restoration on a 4-connected grid with one slope operator per axis.

    The regularizer is the sum of the horizontal and vertical 1-D operators,
    which avoids any per-node pseudo-inverse while matching the general-path
    objective on lattices.
    """
    w, hgt, col, row, cell = _grid_layout(g)
    h = problem.h
    plans = [_axis_plan(g, col, row, cell, w, hgt, axis) for axis in (0, 1)]

    x = h.lift(problem.y)
    fields = [gradient_field(p, x) for p in plans]
    sd = problem.mode == "signal-dependent"
    anchor = _anchor_policy(problem, h)
    weight_mode_first = _initial_weight_mode(problem, h)
    null = [np.ones(g.n), g.coords[:, 0].copy(), g.coords[:, 1].copy()]

    removed = [set(), set()]
    removal_done = not sd
    trace, cg_stats = [], []
    mu = None
    converged = False
    iterations = 0

    for t in range(1, problem.max_iters + 1):
        iterations = t
        wmode = weight_mode_first if t == 1 else (
            "signal-dependent" if sd else "planar-fixed"
        )
        ops = []
        for axis in (0, 1):
            gg = gradient_graph(
                plans[axis], fields[axis], wmode, g, sigma_alpha=problem.sigma_alpha
            )
            if removed[axis]:
                gg = gg.without_nodes(removed[axis])
            ops.append(GnlOperator(plans[axis], gg))
        if mu is None:
            mu = _resolve_mu(problem, ops, problem.y, h, null)

        y_anchor = x if (anchor == "previous" and t > 1) else problem.y
        x_new, stats = _solve(
            h,
            [op.as_linear_operator() for op in ops],
            mu,
            y_anchor,
            null,
            problem.cg_tol,
            check_conditions=(t == 1),
        )
        reg = sum(gglr_value(op, x_new) for op in ops)
        obj = float(np.sum((problem.y - h.apply(x_new)) ** 2)) + mu * reg
        trace.append(obj)
        cg_stats.append(stats)

        rel = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x)), 1e-30)
        x = x_new
        fields = [gradient_field(p, x) for p in plans]

        if not removal_done and (t >= problem.warmup_iters or rel < problem.conv_tol):
            for axis in (0, 1):
                removed[axis] = detect_false_gradients(
                    fields[axis], problem.false_gradient_multiplier
                )
            removal_done = True
            if removed[0] or removed[1]:
                continue
        if rel < problem.conv_tol and removal_done:
            converged = True
            break

    return RestoreReport(
        x_star=x,
        iterations=iterations,
        objective_trace=trace,
        removed_false_gradients=removed[0] | removed[1],
        mu_used=mu,
        cg_stats=cg_stats,
        converged=converged,
        diagnostics={
            "grid": (w, hgt),
            "anchor": anchor,
            "mode": problem.mode,
            "separable": True,
        },
    )
