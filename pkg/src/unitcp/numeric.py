"""Distribution primitives used throughout the package.

Logit/expit, the standard normal CDF and quantile, and the beta
distribution in its mean/precision parametrization.  All functions are
pure, accept scalars or numpy arrays, and return scalars for scalar
input.  scipy.special does the heavy lifting; the wrappers add domain
checks and, for the beta quantile, a refinement loop that certifies the
inversion tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as sp

__all__ = [
    "BetaParams",
    "logit",
    "expit",
    "beta_pdf",
    "beta_cdf",
    "beta_quantile",
    "norm_cdf",
    "norm_quantile",
]

# machine epsilon; clamp target wherever a value must stay strictly inside (0,1)
EPS = float(np.finfo(float).eps)

# |beta_cdf(beta_quantile(u)) - u| is pushed below this
BETA_QUANTILE_TOL = 1e-10


@dataclass(frozen=True)
class BetaParams:
    """Beta distribution written as mean ``mu`` in (0,1) and precision ``phi`` > 0.

    The usual shape parameters are recovered as ``alpha = mu * phi`` and
    ``beta = (1 - mu) * phi``; the variance is ``mu * (1 - mu) / (1 + phi)``.
    """

    mu: float
    phi: float

    def __post_init__(self) -> None:
        mu = float(self.mu)
        phi = float(self.phi)
        if not (np.isfinite(mu) and 0.0 < mu < 1.0):
            raise ValueError(f"mu must lie strictly in (0, 1), got {self.mu!r}")
        if not (np.isfinite(phi) and phi > 0.0):
            raise ValueError(f"phi must be positive and finite, got {self.phi!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi", phi)

    @property
    def alpha(self) -> float:
        return self.mu * self.phi

    @property
    def beta(self) -> float:
        return (1.0 - self.mu) * self.phi

    @property
    def variance(self) -> float:
        return self.mu * (1.0 - self.mu) / (1.0 + self.phi)


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _require_open_unit(x, name: str) -> np.ndarray:
    arr = _as_float_array(x, name)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"{name} must lie strictly in (0, 1)")
    return arr


def _scalar_or_array(out: np.ndarray, like) -> float | np.ndarray:
    if np.isscalar(like) or np.ndim(like) == 0:
        return float(out)
    return out


def logit(y):
    """Log-odds log(y / (1 - y)) for y strictly inside the unit interval."""
    arr = _require_open_unit(y, "y")
    out = np.log(arr) - np.log1p(-arr)
    return _scalar_or_array(out, y)


def expit(x):
    """Inverse of :func:`logit`; 1 / (1 + exp(-x)).

    Returns the raw IEEE result.  Callers that need a value strictly inside
    (0,1) clamp at the point of use.
    """
    out = sp.expit(np.asarray(x, dtype=float))
    return _scalar_or_array(out, x)


def beta_log_pdf(y, mu, phi):
    """Log density of Beta(mu*phi, (1-mu)*phi), vectorized over all arguments.

    No domain checks: internal helper for likelihood code that has already
    validated (or clamped) its inputs.
    """
    a = mu * phi
    b = (1.0 - mu) * phi
    return (
        sp.gammaln(phi)
        - sp.gammaln(a)
        - sp.gammaln(b)
        + (a - 1.0) * np.log(y)
        + (b - 1.0) * np.log1p(-y)
    )


def beta_pdf(y, p: BetaParams):
    """Beta density at y for mean/precision parameters ``p``.

    Evaluated in log space with log-gamma and exponentiated at the end, so
    large precisions do not overflow intermediate gamma factors.
    """
    arr = _require_open_unit(y, "y")
    out = np.exp(beta_log_pdf(arr, p.mu, p.phi))
    return _scalar_or_array(out, y)


def beta_cdf(y, p: BetaParams):
    """Regularized incomplete beta function of y under ``p``."""
    arr = _require_open_unit(y, "y")
    out = sp.betainc(p.alpha, p.beta, arr)
    return _scalar_or_array(out, y)


def beta_quantile(u, p: BetaParams):
    """Inverse beta CDF: the y in (0,1) with beta_cdf(y, p) = u.

    Starts from scipy's inverse and polishes with safeguarded Newton steps
    (bracketed, so each iterate stays inside a shrinking interval known to
    contain the root) until the CDF residual is below 1e-10.
    """
    uu = _require_open_unit(u, "u")
    a, b = p.alpha, p.beta
    inner_lo = np.nextafter(0.0, 1.0)
    inner_hi = np.nextafter(1.0, 0.0)
    y = np.clip(sp.betaincinv(a, b, uu), inner_lo, inner_hi)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    flat_u = np.atleast_1d(uu)

    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    for _ in range(100):
        err = sp.betainc(a, b, y) - flat_u
        if np.all(np.abs(err) <= BETA_QUANTILE_TOL):
            break
        hi = np.where(err > 0.0, np.minimum(hi, y), hi)
        lo = np.where(err < 0.0, np.maximum(lo, y), lo)
        if np.all(np.nextafter(lo, 1.0) >= hi):
            break  # brackets exhausted double precision
        dens = np.exp(beta_log_pdf(y, p.mu, p.phi))
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - err / dens
        bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
        y = np.clip(np.where(bad, 0.5 * (lo + hi), newton), inner_lo, inner_hi)

    out = y.reshape(np.shape(uu))
    return _scalar_or_array(out, u)


def norm_cdf(x):
    """Standard normal CDF."""
    out = sp.ndtr(_as_float_array(x, "x"))
    return _scalar_or_array(out, x)


def norm_quantile(u):
    """Standard normal quantile, inverse of :func:`norm_cdf`."""
    arr = _require_open_unit(u, "u")
    out = sp.ndtri(arr)
    return _scalar_or_array(out, u)
