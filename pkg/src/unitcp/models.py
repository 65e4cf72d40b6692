"""Maximum likelihood regression for responses on the open unit interval.

Four families share one fitting interface:

* ``TRANSFORM_HOMO``    linear regression of logit(y) with constant error sd
* ``TRANSFORM_HETERO``  logit-scale regression with log-linear error sd
* ``BETA_MEAN``         beta regression, logit mean link, constant precision
* ``BETA_MEAN_DISP``    beta regression with log-linear precision

Dispersion parameters are always optimized on the log scale, so the
likelihood is unconstrained.  The homoscedastic transform family has a
closed-form MLE; the rest run quasi-Newton (BFGS) on the mean negative
log-likelihood with analytic gradients, convergence judged by a relative
gradient criterion, and a damped Newton fallback for stalled fits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.optimize
from scipy import special as sp

from .numeric import EPS, expit, logit

__all__ = [
    "ModelFamily",
    "ModelSpec",
    "Dataset",
    "FitOptions",
    "FittedModel",
    "FitError",
    "SingularDesign",
    "NonConvergence",
    "fit",
    "loglik",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class FitError(RuntimeError):
    """Base class for model fitting failures."""


class SingularDesign(FitError):
    """The design matrix (with implicit intercept) is rank deficient."""


class NonConvergence(FitError):
    """Raised where a converged fit is required but was not obtained."""


class ModelFamily(enum.Enum):
    TRANSFORM_HOMO = "m1"
    TRANSFORM_HETERO = "m2"
    BETA_MEAN = "m3"
    BETA_MEAN_DISP = "m4"

    @property
    def is_beta(self) -> bool:
        return self in (ModelFamily.BETA_MEAN, ModelFamily.BETA_MEAN_DISP)

    @property
    def models_dispersion(self) -> bool:
        """True when the dispersion submodel has covariate coefficients."""
        return self in (ModelFamily.TRANSFORM_HETERO, ModelFamily.BETA_MEAN_DISP)

    @classmethod
    def from_name(cls, name: str) -> "ModelFamily":
        key = name.strip().lower()
        for fam in cls:
            if key in (fam.value, fam.name.lower()):
                return fam
        raise ValueError(f"unknown model family {name!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Which regression family to fit."""

    family: ModelFamily


@dataclass(frozen=True)
class Dataset:
    """Responses strictly inside (0,1) plus a covariate matrix.

    The intercept column is implicit and must not be part of ``X``.
    """

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1 or X.ndim != 2:
            raise ValueError("y must be 1-d and X 2-d")
        if len(y) != X.shape[0]:
            raise ValueError(f"length mismatch: {len(y)} responses, {X.shape[0]} rows")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("dataset contains non-finite entries")
        if np.any(y <= 0.0) or np.any(y >= 1.0):
            raise ValueError("responses must lie strictly in (0, 1)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def augmented(self, y_new: float, x_new: np.ndarray) -> "Dataset":
        """Return a copy with one extra observation appended."""
        x_new = np.asarray(x_new, dtype=float).reshape(1, -1)
        return Dataset(np.append(self.y, float(y_new)), np.vstack([self.X, x_new]))


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the quasi-Newton fit.

    ``gtol`` bounds the relative gradient |g_i| * max(1,|x_i|) / max(1,|f|)
    of the mean log-likelihood at the reported optimum.  ``init`` warm-starts
    the optimizer (used heavily by full conformal prediction, which refits
    the same data plus one candidate point many times).
    """

    gtol: float = 1e-6
    max_iter: int = 500
    init: np.ndarray | None = None


@dataclass(frozen=True)
class FittedModel:
    """Estimated coefficients for one family.

    ``disp_intercept`` stores log(sigma) for the transform families and
    log(phi) for the beta families; ``disp_coef`` is identically zero when
    the family has no dispersion covariates.
    """

    spec: ModelSpec
    mean_intercept: float
    mean_coef: np.ndarray
    disp_intercept: float
    disp_coef: np.ndarray
    loglik: float
    converged: bool

    @property
    def family(self) -> ModelFamily:
        return self.spec.family

    @property
    def params(self) -> np.ndarray:
        """Packed parameter vector in the optimizer layout."""
        head = np.concatenate(([self.mean_intercept], self.mean_coef, [self.disp_intercept]))
        if self.family.models_dispersion:
            return np.concatenate([head, self.disp_coef])
        return head

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = len(self.mean_coef)
        if x.shape[-1] != p:
            raise ValueError(f"expected covariate vector(s) of length {p}, got shape {x.shape}")
        return x

    def predict_linear(self, x):
        """Mean prediction on the logit (real-line) scale.

        Only the transform families model the response on that scale.
        """
        if self.family.is_beta:
            raise ValueError("predict_linear is defined for the transform families only")
        x = self._check_x(x)
        return self.mean_intercept + x @ self.mean_coef

    def predict_mean(self, x):
        """Predicted conditional mean of y, strictly inside (0,1)."""
        x = self._check_x(x)
        eta = self.mean_intercept + x @ self.mean_coef
        return np.clip(expit(eta), EPS, 1.0 - EPS)

    def predict_phi(self, x):
        """Predicted beta precision (beta families only)."""
        if not self.family.is_beta:
            raise ValueError("predict_phi is defined for the beta families only")
        x = self._check_x(x)
        if self.family.models_dispersion:
            return np.exp(self.disp_intercept + x @ self.disp_coef)
        out = np.exp(self.disp_intercept)
        return np.full(x.shape[:-1], out) if x.ndim > 1 else out

    def predict_sigma(self, x):
        """Predicted conditional standard deviation.

        Transform families: the error sd on the logit scale.  Beta families:
        sqrt(mu (1 - mu) / (1 + phi)) on the original scale.
        """
        x = self._check_x(x)
        if self.family.is_beta:
            mu = self.predict_mean(x)
            phi = self.predict_phi(x)
            return np.sqrt(mu * (1.0 - mu) / (1.0 + phi))
        if self.family.models_dispersion:
            return np.exp(self.disp_intercept + x @ self.disp_coef)
        out = np.exp(self.disp_intercept)
        return np.full(x.shape[:-1], out) if x.ndim > 1 else out


def _split_params(params: np.ndarray, p: int, family: ModelFamily):
    """Unpack [mean_intercept, mean_coef, disp_intercept, (disp_coef)]."""
    params = np.asarray(params, dtype=float)
    want = p + 2 + (p if family.models_dispersion else 0)
    if params.shape != (want,):
        raise ValueError(f"expected {want} parameters for {family}, got shape {params.shape}")
    mean = params[: p + 1]
    disp_intercept = params[p + 1]
    disp_coef = params[p + 2 :] if family.models_dispersion else np.zeros(p)
    return mean, disp_intercept, disp_coef


class _Likelihood:
    """Per-dataset likelihood workspace.

    Precomputes the design matrix and response transforms once per fit, and
    provides batched likelihood values plus the analytic gradient of the
    mean negative log-likelihood (the optimizer's objective).
    """

    def __init__(self, data: Dataset, family: ModelFamily):
        self.family = family
        self.n, self.p = data.n, data.p
        self.Z = np.column_stack([np.ones(data.n), data.X])
        self.y = data.y
        if family.is_beta:
            self.log_y = np.log(data.y)
            self.log_1my = np.log1p(-data.y)
        else:
            self.z = logit(data.y)

    def _linear_parts(self, P: np.ndarray):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        mean_lin = self.Z @ P[:, : self.p + 1].T  # (n, k)
        if self.family.models_dispersion:
            disp_lin = self.Z @ P[:, self.p + 1 :].T
        else:
            disp_lin = np.broadcast_to(P[:, self.p + 1], (self.n, P.shape[0]))
        return mean_lin, disp_lin

    def value_batch(self, P: np.ndarray) -> np.ndarray:
        """Log-likelihood for each row of the parameter matrix ``P``."""
        mean_lin, disp_lin = self._linear_parts(P)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.family.is_beta:
                mu = np.clip(expit(mean_lin), EPS, 1.0 - EPS)
                phi = np.exp(disp_lin)
                a = mu * phi
                b = (1.0 - mu) * phi
                terms = (
                    sp.gammaln(phi)
                    - sp.gammaln(a)
                    - sp.gammaln(b)
                    + (a - 1.0) * self.log_y[:, None]
                    + (b - 1.0) * self.log_1my[:, None]
                )
            else:
                resid = (self.z[:, None] - mean_lin) * np.exp(-disp_lin)
                terms = -0.5 * LOG_2PI - disp_lin - 0.5 * resid * resid
            out = terms.sum(axis=0)
        return np.where(np.isfinite(out), out, -np.inf)

    def objective(self, x: np.ndarray) -> float:
        """Mean negative log-likelihood at a single parameter vector."""
        mean_lin = self.Z @ x[: self.p + 1]
        if self.family.models_dispersion:
            disp_lin = self.Z @ x[self.p + 1 :]
        else:
            disp_lin = x[self.p + 1]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.family.is_beta:
                mu = np.clip(sp.expit(mean_lin), EPS, 1.0 - EPS)
                phi = np.exp(disp_lin)
                a = mu * phi
                b = (1.0 - mu) * phi
                gl_phi = self.n * sp.gammaln(phi) if np.ndim(phi) == 0 else sp.gammaln(phi).sum()
                total = (
                    gl_phi
                    - sp.gammaln(a).sum()
                    - sp.gammaln(b).sum()
                    + (a - 1.0) @ self.log_y
                    + (b - 1.0) @ self.log_1my
                )
            else:
                resid = (self.z - mean_lin) * np.exp(-disp_lin)
                total = (
                    -0.5 * LOG_2PI * self.n
                    - (self.n * disp_lin if np.ndim(disp_lin) == 0 else disp_lin.sum())
                    - 0.5 * (resid @ resid)
                )
        out = -float(total) / self.n
        return out if np.isfinite(out) else np.inf

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Analytic gradient of the mean negative log-likelihood."""
        mean_lin = self.Z @ x[: self.p + 1]
        if self.family.models_dispersion:
            disp_lin = self.Z @ x[self.p + 1 :]
        else:
            disp_lin = x[self.p + 1]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.family.is_beta:
                mu = np.clip(sp.expit(mean_lin), EPS, 1.0 - EPS)
                phi = np.exp(disp_lin)
                a = mu * phi
                b = (1.0 - mu) * phi
                dig_a = sp.digamma(a)
                dig_b = sp.digamma(b)
                per_mean = phi * mu * (1.0 - mu) * (self.log_y - self.log_1my - dig_a + dig_b)
                per_disp = phi * (
                    sp.digamma(phi)
                    - mu * dig_a
                    - (1.0 - mu) * dig_b
                    + mu * self.log_y
                    + (1.0 - mu) * self.log_1my
                )
            else:
                sigma = np.exp(disp_lin)
                resid = (self.z - mean_lin) / sigma
                per_mean = resid / sigma
                per_disp = resid * resid - 1.0
            g_mean = self.Z.T @ per_mean
            if self.family.models_dispersion:
                g_disp = self.Z.T @ per_disp
            else:
                g_disp = np.array([per_disp.sum()])
            g = -np.concatenate([g_mean, g_disp]) / self.n
        return np.where(np.isfinite(g), g, 0.0)


def _loglik_batch(data: Dataset, family: ModelFamily, P: np.ndarray) -> np.ndarray:
    return _Likelihood(data, family).value_batch(P)


def loglik(data: Dataset, spec: ModelSpec, params) -> float:
    """Model log-likelihood at a packed parameter vector.

    Layout: mean intercept, mean coefficients, dispersion intercept, and
    (heteroscedastic families only) dispersion coefficients.  The transform
    families model logit(y) directly, without a change-of-variables term.
    Returns -inf for parameter values outside the valid region.
    """
    _split_params(params, data.p, spec.family)  # validates the layout
    packed = np.asarray(params, dtype=float)
    return float(_loglik_batch(data, spec.family, packed[None, :])[0])


def _relative_gradient(g: np.ndarray, x: np.ndarray, f: float) -> float:
    return float(np.max(np.abs(g) * np.maximum(1.0, np.abs(x))) / max(1.0, abs(f)))


def _fd_hessian(lik: _Likelihood, x: np.ndarray, step: float) -> np.ndarray:
    """Central differences of the analytic gradient."""
    d = len(x)
    h = step * np.maximum(1.0, np.abs(x))
    H = np.empty((d, d))
    for j in range(d):
        xp = x.copy()
        xp[j] += h[j]
        xm = x.copy()
        xm[j] -= h[j]
        H[:, j] = (lik.gradient(xp) - lik.gradient(xm)) / (2.0 * h[j])
    return 0.5 * (H + H.T)


def _newton_polish(lik: _Likelihood, x: np.ndarray, opts: "FitOptions") -> np.ndarray:
    """Damped Newton steps for fits where BFGS stalls short of the tolerance.

    Near these optima the objective can be flat to machine noise while the
    gradient is not yet converged, so line searches on function decrease
    make no progress.  Steps are instead accepted on relative-gradient
    decrease, with a noise-level guard against genuine objective increases.
    """
    f0 = lik.objective(x)
    slack = 1e3 * np.finfo(float).eps * max(1.0, abs(f0))
    rg = _relative_gradient(lik.gradient(x), x, f0)

    for _ in range(8):
        if rg <= opts.gtol:
            break
        g = lik.gradient(x)
        H = _fd_hessian(lik, x, 1e-5)
        try:
            direction = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            direction = -g
        if g @ direction >= 0.0:
            direction = -g
        moved = False
        t = 1.0
        for _ in range(20):
            x_try = x + t * direction
            f_try = lik.objective(x_try)
            if np.isfinite(f_try) and f_try <= f0 + slack:
                rg_try = _relative_gradient(lik.gradient(x_try), x_try, f_try)
                if rg_try < 0.9 * rg:
                    x, f0, rg = x_try, min(f0, f_try), rg_try
                    moved = True
                    break
            t *= 0.5
        if not moved:
            break
    return x


def _design(data: Dataset) -> np.ndarray:
    Z = np.column_stack([np.ones(data.n), data.X])
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise SingularDesign("design matrix with intercept is rank deficient")
    return Z


def _ols_logit(data: Dataset, Z: np.ndarray):
    z = logit(data.y)
    coef, *_ = np.linalg.lstsq(Z, z, rcond=None)
    resid = z - Z @ coef
    sigma2 = float(resid @ resid) / data.n  # maximum likelihood divisor
    return coef, max(sigma2, 1e-12)


def _initial_params(data: Dataset, family: ModelFamily, Z: np.ndarray) -> np.ndarray:
    coef, sigma2 = _ols_logit(data, Z)
    if family is ModelFamily.TRANSFORM_HETERO:
        return np.concatenate([coef, [0.5 * np.log(sigma2)], np.zeros(data.p)])
    # beta families: method-of-moments precision from the logit-scale residual
    # variance, var(y) ~= var(z) * (mu (1 - mu))^2 by the delta method
    mu = np.clip(expit(Z @ coef), EPS, 1.0 - EPS)
    phi_points = 1.0 / (sigma2 * mu * (1.0 - mu)) - 1.0
    phi0 = float(np.clip(np.mean(phi_points), 0.5, 1e4))
    if family is ModelFamily.BETA_MEAN:
        return np.concatenate([coef, [np.log(phi0)]])
    base = fit(data, ModelSpec(ModelFamily.BETA_MEAN))
    return np.concatenate(
        [[base.mean_intercept], base.mean_coef, [base.disp_intercept], np.zeros(data.p)]
    )


def fit(data: Dataset, spec: ModelSpec, opts: FitOptions | None = None) -> FittedModel:
    """Fit one family by maximum likelihood.

    The homoscedastic transform family is solved in closed form (OLS on the
    logit scale, residual variance with the maximum likelihood divisor).
    The others run BFGS on the mean negative log-likelihood; a fit that
    stalls is restarted once from its stopping point before being reported
    with ``converged=False``.  Never raises for non-convergence; raises
    :class:`SingularDesign` for a rank-deficient design.
    """
    opts = opts or FitOptions()
    if data.n < data.p + 2:
        raise FitError(f"need at least p + 2 = {data.p + 2} observations, got {data.n}")
    Z = _design(data)
    family = spec.family

    if family is ModelFamily.TRANSFORM_HOMO:
        coef, sigma2 = _ols_logit(data, Z)
        params = np.concatenate([coef, [0.5 * np.log(sigma2)]])
        return _build(data, spec, params, converged=True)

    x0 = np.asarray(opts.init, dtype=float) if opts.init is not None else _initial_params(data, family, Z)
    _split_params(x0, data.p, family)  # validates the layout
    lik = _Likelihood(data, family)

    best = x0
    for _ in range(2):
        res = scipy.optimize.minimize(
            lik.objective,
            best,
            jac=lik.gradient,
            method="BFGS",
            options={"gtol": 0.1 * opts.gtol, "maxiter": opts.max_iter},
        )
        if np.all(np.isfinite(res.x)) and lik.objective(res.x) <= lik.objective(best):
            best = res.x
        if _relative_gradient(lik.gradient(best), best, lik.objective(best)) <= opts.gtol:
            break
    else:
        best = _newton_polish(lik, best, opts)

    converged = _relative_gradient(lik.gradient(best), best, lik.objective(best)) <= opts.gtol
    return _build(data, spec, best, converged=converged)


def _build(data: Dataset, spec: ModelSpec, params: np.ndarray, converged: bool) -> FittedModel:
    mean, di, dc = _split_params(params, data.p, spec.family)
    return FittedModel(
        spec=spec,
        mean_intercept=float(mean[0]),
        mean_coef=np.array(mean[1:]),
        disp_intercept=float(di),
        disp_coef=np.array(dc),
        loglik=loglik(data, spec, params),
        converged=converged,
    )
