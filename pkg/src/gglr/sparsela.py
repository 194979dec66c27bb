"""Sparse and small-dense linear algebra used throughout the library.

Compressed-row matrices are backed by scipy; the iterative solvers
(conjugate gradients, extreme eigenpairs) are exposed with explicit error
semantics so callers can distinguish non-convergence from structural
problems such as indefinite operators or rank-deficient systems.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BreakdownNegativeCurvature,
    DimensionTooSmall,
    EigensolverFailure,
    NonConvergence,
    RankDeficient,
)

# Dense eigendecomposition is always available (and used as oracle) up to
# this dimension; iterative solvers fall back to it on small problems.
DENSE_FALLBACK_DIM = 2000

RCOND_THRESHOLD = 1e-10


class SparseMatrix:
    """Immutable compressed-row sparse matrix.

    Assembly goes through coordinate triplets; duplicates are summed and
    column indices are sorted per row, so the stored form is canonical.
    """

    def __init__(self, csr):
        if not sp.issparse(csr):
            raise TypeError("expected a scipy sparse matrix")
        m = sp.csr_matrix(csr)
        m.sum_duplicates()
        m.sort_indices()
        self._m = m

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= shape[0]):
            raise IndexError("row index out of bounds")
        if cols.size and (cols.min() < 0 or cols.max() >= shape[1]):
            raise IndexError("column index out of bounds")
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr())

    @classmethod
    def from_dense(cls, a):
        return cls(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"))

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self):
        return self._m.nnz

    @property
    def csr(self):
        return self._m

    def apply(self, x):
        return self._m @ np.asarray(x, dtype=np.float64)

    def rmatvec(self, y):
        return self._m.T @ np.asarray(y, dtype=np.float64)

    def transpose(self):
        return SparseMatrix(self._m.T.tocsr())

    def to_dense(self):
        return self._m.toarray()

    def diagonal(self):
        return self._m.diagonal()

    def row_sums(self):
        return np.asarray(self._m.sum(axis=1)).ravel()

    def is_symmetric(self, tol=1e-12):
        d = self._m - self._m.T
        if d.nnz == 0:
            return True
        scale = max(1.0, float(np.abs(self._m.data).max()))
        return float(np.abs(d.data).max()) <= tol * scale

    def __matmul__(self, x):
        return self.apply(x)


class LinearOperator:
    """Matrix-free symmetric operator: a dimension and an apply callable."""

    def __init__(self, dim, apply_fn):
        self.dim = int(dim)
        self._apply = apply_fn

    @classmethod
    def from_matrix(cls, m):
        if isinstance(m, SparseMatrix):
            if m.shape[0] != m.shape[1]:
                raise ValueError("operator requires a square matrix")
            return cls(m.shape[0], m.apply)
        a = np.asarray(m, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("operator requires a square matrix")
        return cls(a.shape[0], lambda x: a @ x)

    @classmethod
    def identity(cls, n):
        return cls(n, lambda x: np.array(x, dtype=np.float64, copy=True))

    def apply(self, x):
        return self._apply(np.asarray(x, dtype=np.float64))

    def __call__(self, x):
        return self.apply(x)

    def scaled(self, c):
        c = float(c)
        return LinearOperator(self.dim, lambda x: c * self.apply(x))

    def plus(self, other):
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return LinearOperator(self.dim, lambda x: self.apply(x) + other.apply(x))

    def to_dense(self):
        """Materialize by probing with basis vectors. Test/oracle use only."""
        n = self.dim
        out = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = self.apply(e)
            e[j] = 0.0
        return out

    def as_scipy(self):
        return spla.LinearOperator((self.dim, self.dim), matvec=self.apply)


def check_linearity(op, rng=None, trials=10, rtol=1e-10):
    """Probe apply(a x + b y) == a apply(x) + b apply(y) on random inputs."""
    rng = np.random.default_rng(0) if rng is None else rng
    for _ in range(trials):
        a, b = rng.standard_normal(2)
        x = rng.standard_normal(op.dim)
        y = rng.standard_normal(op.dim)
        lhs = op.apply(a * x + b * y)
        rhs = a * op.apply(x) + b * op.apply(y)
        scale = max(1.0, float(np.linalg.norm(rhs)))
        if np.linalg.norm(lhs - rhs) > rtol * scale:
            return False
    return True


def cg_solve(op, rhs, tol=1e-8, max_iter=None, x0=None):
    """Conjugate gradients for a symmetric positive-definite operator.

    Returns x with ``||op(x) - rhs|| <= tol * ||rhs||``.

    Raises:
        NonConvergence: iteration cap reached before the tolerance.
        BreakdownNegativeCurvature: a search direction with p'Ap <= 0 was
            found, which certifies the operator is not positive definite.
    """
    b = np.asarray(rhs, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite entries")
    n = op.dim
    if b.shape != (n,):
        raise ValueError("right-hand side has wrong length")
    if max_iter is None:
        max_iter = 10 * n

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    r = b - op.apply(x) if x0 is not None else b.copy()
    if float(np.linalg.norm(r)) <= target:
        return x
    p = r.copy()
    rs = float(r @ r)

    for it in range(max_iter):
        ap = op.apply(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise BreakdownNegativeCurvature(
                f"p'Ap = {pap:.3e} <= 0 at iteration {it}"
            )
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= target:
            # True residual check guards against accumulated drift
            true_r = b - op.apply(x)
            if float(np.linalg.norm(true_r)) <= max(target, 1e-13 * bnorm):
                return x
            r = true_r
            rs_new = float(r @ r)
            p = r.copy()
            rs = rs_new
            continue
        p = r + (rs_new / rs) * p
        rs = rs_new

    raise NonConvergence(
        f"CG did not reach tol {tol:.1e} in {max_iter} iterations "
        f"(residual {np.linalg.norm(b - op.apply(x)) / bnorm:.3e} relative)"
    )


def _dense_eigh(op):
    a = op.to_dense()
    a = 0.5 * (a + a.T)
    return np.linalg.eigh(a)


def _project_out(v, basis):
    for q in basis:
        v = v - (q @ v) * q
    return v


def _orthonormal_basis(vectors):
    basis = []
    for v in vectors:
        v = np.asarray(v, dtype=np.float64)
        v = _project_out(v, basis)
        nrm = float(np.linalg.norm(v))
        if nrm > 1e-12:
            basis.append(v / nrm)
    return basis


def smallest_eigenpairs(op, k, known_null=()):
    """k smallest eigenpairs of a symmetric PSD operator, ascending.

    Vectors in ``known_null`` are deflated (projected out) before the
    iteration, so returned pairs lie in their orthogonal complement.
    Uses a blocked LOBPCG iteration; small problems and iterative failures
    fall back to a dense eigendecomposition when dim <= DENSE_FALLBACK_DIM.
    """
    n = op.dim
    if k >= n:
        raise DimensionTooSmall(f"requested {k} eigenpairs of a dim-{n} operator")
    null_basis = _orthonormal_basis(known_null)
    q = len(null_basis)

    use_dense = n <= max(32, 8 * (k + q))
    if not use_dense:
        pairs = _lobpcg_smallest(op, k, null_basis)
        if pairs is not None:
            return pairs
        if n > DENSE_FALLBACK_DIM:
            raise NonConvergence(
                f"iterative eigensolver failed at dim {n} > {DENSE_FALLBACK_DIM}"
            )

    if n > DENSE_FALLBACK_DIM:
        raise EigensolverFailure(
            f"dense fallback unavailable for dim {n} > {DENSE_FALLBACK_DIM}"
        )
    wl, vl = _dense_eigh(op)
    out = []
    for i in range(n):
        v = _project_out(vl[:, i], null_basis)
        nrm = float(np.linalg.norm(v))
        if nrm < 1e-8:
            continue
        v = v / nrm
        lam = float(v @ op.apply(v))
        out.append((lam, v))
        if len(out) == k:
            break
    if len(out) < k:
        raise DimensionTooSmall(
            f"only {len(out)} eigenpairs outside the deflated span at dim {n}"
        )
    out.sort(key=lambda p: p[0])
    return out


def _lobpcg_smallest(op, k, null_basis):
    n = op.dim
    rng = np.random.default_rng(n * 1009 + k)
    x0 = rng.standard_normal((n, k))
    y = np.column_stack(null_basis) if null_basis else None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w, v = spla.lobpcg(
                op.as_scipy(),
                x0,
                Y=y,
                largest=False,
                tol=1e-10,
                maxiter=max(200, 4 * n),
            )
    except Exception:
        return None
    order = np.argsort(w)
    w = w[order]
    v = v[:, order]
    # Verify residuals before trusting the iterative result
    scale = max(1.0, float(np.max(np.abs(w))))
    for i in range(k):
        vi = _project_out(v[:, i], null_basis)
        nrm = float(np.linalg.norm(vi))
        if nrm < 1e-8:
            return None
        vi /= nrm
        r = op.apply(vi) - w[i] * vi
        if float(np.linalg.norm(r)) > 1e-6 * scale:
            return None
        v[:, i] = vi
    return [(float(w[i]), v[:, i].copy()) for i in range(k)]


def largest_eigenpair(op, tol=1e-8, max_iter=5000):
    """Largest eigenvalue and eigenvector of a symmetric PSD operator."""
    n = op.dim
    if n <= 64:
        w, v = _dense_eigh(op)
        return float(w[-1]), v[:, -1]
    rng = np.random.default_rng(n * 7919 + 1)
    v0 = rng.standard_normal(n)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w, v = spla.eigsh(op.as_scipy(), k=1, which="LA", v0=v0, tol=tol)
        return float(w[0]), v[:, 0]
    except Exception:
        pass
    # Power iteration backstop
    v = v0 / np.linalg.norm(v0)
    lam = 0.0
    for _ in range(max_iter):
        av = op.apply(v)
        nrm = float(np.linalg.norm(av))
        if nrm == 0.0:
            return 0.0, v
        v_new = av / nrm
        lam_new = float(v_new @ op.apply(v_new))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new, v_new
        v, lam = v_new, lam_new
    raise NonConvergence("power iteration did not converge for largest eigenvalue")


def largest_eigenvalue(op):
    return largest_eigenpair(op)[0]


def left_pseudo_inverse(m):
    """Left pseudo-inverse (C'C)^{-1} C' of a full-column-rank small matrix.

    Raises RankDeficient when the normal-equations matrix has reciprocal
    condition number below RCOND_THRESHOLD, which signals collinear sample
    points upstream.
    """
    c = np.asarray(m, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < c.shape[1]:
        raise ValueError("left pseudo-inverse requires a tall (or square) matrix")
    gram = c.T @ c
    sv = np.linalg.svd(gram, compute_uv=False)
    rcond = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
    if rcond < RCOND_THRESHOLD:
        raise RankDeficient(
            f"normal-equations rcond {rcond:.3e} below {RCOND_THRESHOLD:.0e}"
        )
    return np.linalg.solve(gram, c.T)


def right_pseudo_inverse_apply(g_rows, b, tol=1e-10):
    """Minimum-norm solution u of G u = b for a full-row-rank sparse G.

    Solves (G G') t = b by CG, then u = G' t.
    """
    g = g_rows if isinstance(g_rows, SparseMatrix) else SparseMatrix.from_dense(g_rows)
    nr, _ = g.shape
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (nr,):
        raise ValueError("right-hand side length must equal the row count")
    ggt = LinearOperator(nr, lambda t: g.apply(g.rmatvec(t)))
    try:
        t = cg_solve(ggt, b, tol=tol, max_iter=max(200, 20 * nr))
    except (BreakdownNegativeCurvature, NonConvergence) as exc:
        raise RankDeficient(f"G G' solve failed: {exc}") from exc
    u = g.rmatvec(t)
    resid = float(np.linalg.norm(g.apply(u) - b))
    if resid > 1e-8 * max(1.0, float(np.linalg.norm(b))):
        raise RankDeficient(f"residual {resid:.3e} after minimum-norm solve")
    return u
