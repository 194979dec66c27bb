"""MSE-minimizing choice of the fidelity/regularizer tradeoff for denoising.

The exact MSE of the quadratic denoiser decomposes over the regularizer's
eigenpairs into a bias term and a variance term. Approximating the interior
eigenvalues by a two-parameter power law fitted to the extreme ones yields a
pseudo-convex scalar function that is cheap to minimize.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum, InvalidSpec
from .gng import GnlOperator, zero_eigenvectors_1d
from .sparsela import largest_eigenpair, smallest_eigenpairs

ZERO_EIG_TOL = 1e-12


@dataclass(frozen=True)
class SpectralFit:
    """Power-law eigenvalue model lam(i) = a * i**b anchored at i=3 and i=N."""

    a: float
    b: float
    lambda3: float
    lambdaN: float
    rhoN: float
    sigma_z: float
    n: int

    def eigenvalue_model(self, i):
        return self.a * np.power(np.asarray(i, dtype=np.float64), self.b)


def mse_exact(eigs, x0, sigma_z, mu):
    """Exact mean squared error of the one-shot quadratic denoiser.

    ``eigs`` is the full eigendecomposition of the regularizer as a sequence
    of (eigenvalue, eigenvector) pairs. Zero eigenvalues contribute no bias
    and an unshrunk unit of variance each.
    """
    mu = float(mu)
    total = 0.0
    for lam, v in eigs:
        lam = float(lam)
        proj = float(np.dot(v, x0))
        if lam > ZERO_EIG_TOL and mu > 0:
            psi = 1.0 / (1.0 + 1.0 / (mu * lam))
            phi = 1.0 / (1.0 + mu * lam)
        else:
            psi = 0.0
            phi = 1.0
        total += psi * psi * proj * proj + sigma_z * sigma_z * phi * phi
    return total


def fit_spectrum(op, y, sigma_z, null_vectors=None):
    """Fit the power-law eigenvalue model from the two extreme eigenvalues.

    ``null_vectors`` are deflated before looking for the smallest non-zero
    eigenvalue; when omitted they default to the two analytic zero-modes of a
    1-D gradient operator. The bias scale rho_N is estimated from the noisy
    observation, the only signal available at solve time.
    """
    if null_vectors is None:
        if not isinstance(op, GnlOperator) or op.plan.k != 1:
            raise InvalidSpec(
                "automatic deflation needs a 1-D gradient operator; "
                "pass null_vectors explicitly"
            )
        v1, v2 = zero_eigenvectors_1d(op)
        null_vectors = [v1, v2]
    lin = op.as_linear_operator() if isinstance(op, GnlOperator) else op
    n = lin.dim

    lam3, _ = smallest_eigenpairs(lin, 1, known_null=null_vectors)[0]
    if lam3 <= ZERO_EIG_TOL:
        raise DegenerateSpectrum(
            f"smallest deflated eigenvalue {lam3:.3e}; gradient graph disconnected"
        )
    lam_n, v_n = largest_eigenpair(lin)

    b = float(np.log(lam3 / lam_n) / np.log(3.0 / n))
    a = float(lam3 / 3.0**b)
    y = np.asarray(y, dtype=np.float64)
    rho_n = float(lam_n * abs(np.dot(v_n, y)))
    return SpectralFit(
        a=a, b=b, lambda3=lam3, lambdaN=lam_n, rhoN=rho_n,
        sigma_z=float(sigma_z), n=n,
    )


def _model_eigs(fit):
    idx = np.arange(3, fit.n + 1, dtype=np.float64)
    return fit.a * idx**fit.b


def mse_approx(fit, mu):
    """Power-law approximation of the MSE core (constant terms dropped)."""
    mu = float(mu)
    if mu < 0:
        raise ValueError("mu must be non-negative")
    lams = _model_eigs(fit)
    num = mu * mu * fit.rhoN**2 + fit.sigma_z**2
    den = (1.0 + mu * lams) ** 2
    return float(np.sum(num / den))


def mse_approx_grad(fit, mu):
    """Analytic derivative of mse_approx with respect to mu."""
    mu = float(mu)
    lams = _model_eigs(fit)
    num = 2.0 * (mu * fit.rhoN**2 - fit.sigma_z**2 * lams)
    den = (1.0 + mu * lams) ** 3
    return float(np.sum(num / den))


def minimize_mu(fit, lo=1e-8, hi=1e4, grad_tol=1e-8):
    """Minimizer of the approximate MSE over [lo, hi].

    Golden-section search on log(mu) brackets the minimum of the
    pseudo-convex objective; derivative bisection then refines it to
    stationarity. A one-signed derivative means no interior minimum; the
    matching boundary is returned with a warning.
    """
    g_lo = mse_approx_grad(fit, lo)
    g_hi = mse_approx_grad(fit, hi)
    if g_lo >= 0 and g_hi >= 0:
        warnings.warn(
            "approximate MSE increases over the whole range; returning lower bound",
            RuntimeWarning,
        )
        return lo
    if g_lo <= 0 and g_hi <= 0:
        warnings.warn(
            "approximate MSE decreases over the whole range; returning upper bound",
            RuntimeWarning,
        )
        return hi

    # Golden-section bracket on log(mu)
    phi_ratio = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(lo), np.log(hi)
    c = b - phi_ratio * (b - a)
    d = a + phi_ratio * (b - a)
    fc = mse_approx(fit, np.exp(c))
    fd = mse_approx(fit, np.exp(d))
    for _ in range(200):
        if b - a < 1e-10:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi_ratio * (b - a)
            fc = mse_approx(fit, np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + phi_ratio * (b - a)
            fd = mse_approx(fit, np.exp(d))

    # Refine by bisection on the sign of the derivative
    left, right = np.exp(a), np.exp(b)
    while mse_approx_grad(fit, left) > 0 and left > lo:
        left = max(lo, left / 4.0)
    while mse_approx_grad(fit, right) < 0 and right < hi:
        right = min(hi, right * 4.0)
    for _ in range(200):
        mid = np.sqrt(left * right)
        g = mse_approx_grad(fit, mid)
        if abs(g) <= grad_tol * mse_approx(fit, mid) / mid:
            return float(mid)
        if g > 0:
            right = mid
        else:
            left = mid
    return float(np.sqrt(left * right))


def noise_std_mad(g, y):
    """Median-absolute-deviation noise estimate from edge differences.

    Helper only; never applied automatically because structured signals can
    bias it upward.
    """
    y = np.asarray(y, dtype=np.float64)
    d = y[g.edge_i] - y[g.edge_j]
    if d.size == 0:
        return 0.0
    mad = float(np.median(np.abs(d - np.median(d))))
    return mad * 1.4826 / np.sqrt(2.0)
