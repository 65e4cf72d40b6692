"""Split and full conformal prediction intervals on the unit interval.

Split conformal fits once on a random half of the data, takes the
conformal quantile of the calibration scores, and inverts the score
inequality in closed form.  Full conformal refits the model for candidate
responses and locates the inclusion region with an adaptive search: binary
search from a valid starting point when one is available, otherwise a
midpoint-refined coarse grid.  The beta families are searched directly in
(0,1); the transform families on a fixed logit-scale grid spanning an
extended classical prediction interval.  Indicator evaluations are
memoized per call.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .models import (
    Dataset,
    FitError,
    FitOptions,
    FittedModel,
    ModelSpec,
    NonConvergence,
    fit,
)
from .numeric import BetaParams, beta_quantile, expit, norm_cdf, norm_quantile
from .scores import ScoreKind, score

__all__ = [
    "Method",
    "PredictionInterval",
    "SplitConfig",
    "FullConfig",
    "IntervalSearchWarning",
    "conformal_quantile",
    "split_cp",
    "split_cp_batch",
    "indicator",
    "full_cp",
    "classical_gauss_interval",
]

# candidate grids never leave [expit(-LOGIT_LIMIT), expit(LOGIT_LIMIT)], which
# keeps expit() away from exact 0/1
LOGIT_LIMIT = 36.0

# quantile-score inversion clamps its CDF arguments here (matches the score clamp)
_U_CLIP = 1e-12


class IntervalSearchWarning(UserWarning):
    """The adaptive search saw evidence against a contiguous inclusion region."""


class Method(enum.Enum):
    SPLIT = "split"
    FULL = "full"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class PredictionInterval:
    """Interval for a future response, possibly empty.

    ``level`` records the requested coverage 1 - alpha and is never
    recomputed from the data.
    """

    lower: float
    upper: float
    level: float
    method: Method
    empty: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if not self.empty and not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError(f"invalid bounds ({self.lower}, {self.upper})")

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.upper - self.lower

    def contains(self, y: float) -> bool:
        return bool((not self.empty) and self.lower <= y <= self.upper)


@dataclass(frozen=True)
class SplitConfig:
    """Settings for split conformal prediction.

    ``split_fraction`` is the calibration share; with the 0.5 default and
    odd n the training half gets the extra point.
    """

    alpha: float
    split_fraction: float = 0.5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class FullConfig:
    """Settings for full conformal prediction.

    ``tolerance`` bounds the endpoint error of the direct (0,1) search used
    for the beta families; ``grid_step`` is the logit-scale spacing for the
    transform families; ``rho`` extends the classical interval on both sides
    to form the grid range.
    """

    alpha: float
    tolerance: float = 1e-4
    rho: float = 3.0
    grid_step: float = 1e-4

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.tolerance <= 0.0 or self.rho <= 0.0 or self.grid_step <= 0.0:
            raise ValueError("tolerance, rho and grid_step must be positive")


def conformal_quantile(scores, alpha: float) -> float:
    """The ceil((1 - alpha) (m + 1))-th smallest of m calibration scores.

    Returns +inf when that rank exceeds m, in which case the interval
    degenerates to the full candidate range.  Ties keep all copies.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    m = len(s)
    if m == 0:
        raise ValueError("need at least one calibration score")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = math.ceil((1.0 - alpha) * (m + 1))
    if k > m:
        return float("inf")
    return float(s[k - 1])


# ---------------------------------------------------------------------------
# split conformal prediction


def _split_fit(data: Dataset, spec: ModelSpec, kind: ScoreKind, cfg: SplitConfig):
    """Fit on the training half and return (model, conformal quantile)."""
    n = data.n
    n_cal = int(math.floor(n * cfg.split_fraction))
    n_cal = min(max(n_cal, 1), n - 1)
    perm = np.random.default_rng(cfg.rng_seed).permutation(n)
    cal_idx, train_idx = perm[:n_cal], perm[n_cal:]
    model = fit(Dataset(data.y[train_idx], data.X[train_idx]), spec)
    if not model.converged:
        raise NonConvergence("training fit did not converge")
    cal_scores = score(kind, data.y[cal_idx], model, data.X[cal_idx])
    return model, conformal_quantile(cal_scores, cfg.alpha)


def _invert_split(
    model: FittedModel, kind: ScoreKind, q: float, x_new, level: float
) -> PredictionInterval:
    """Closed-form solution of {y : score(y) <= q} for one new covariate."""
    if math.isinf(q):
        return PredictionInterval(0.0, 1.0, level, Method.SPLIT)
    if model.family.is_beta:
        mu = float(model.predict_mean(x_new))
        if kind is ScoreKind.PEARSON:
            half = q * float(model.predict_sigma(x_new))
            # additive form can escape the unit interval near the boundary
            return PredictionInterval(max(0.0, mu - half), min(1.0, mu + half), level, Method.SPLIT)
        params = BetaParams(mu, float(model.predict_phi(x_new)))
        u_lo = float(np.clip(norm_cdf(-q), _U_CLIP, 1.0 - _U_CLIP))
        u_hi = float(np.clip(norm_cdf(q), _U_CLIP, 1.0 - _U_CLIP))
        return PredictionInterval(
            float(beta_quantile(u_lo, params)),
            float(beta_quantile(u_hi, params)),
            level,
            Method.SPLIT,
        )
    center = float(model.predict_linear(x_new))
    half = q if kind is ScoreKind.RAW else q * float(model.predict_sigma(x_new))
    return PredictionInterval(
        float(expit(center - half)), float(expit(center + half)), level, Method.SPLIT
    )


def split_cp(
    data: Dataset, x_new, spec: ModelSpec, kind: ScoreKind, cfg: SplitConfig
) -> PredictionInterval:
    """Split conformal prediction interval for one new covariate vector."""
    model, q = _split_fit(data, spec, kind, cfg)
    return _invert_split(model, kind, q, np.asarray(x_new, dtype=float), 1.0 - cfg.alpha)


def split_cp_batch(
    data: Dataset, X_new, spec: ModelSpec, kind: ScoreKind, cfg: SplitConfig
) -> list[PredictionInterval]:
    """Split intervals for several covariate vectors from a single fit.

    Identical to calling :func:`split_cp` per row (the split and the fit
    depend only on the data and config), just without refitting.
    """
    model, q = _split_fit(data, spec, kind, cfg)
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    return [_invert_split(model, kind, q, x, 1.0 - cfg.alpha) for x in X_new]


# ---------------------------------------------------------------------------
# full conformal prediction


def indicator(
    aug_candidate: float,
    data: Dataset,
    x_new,
    spec: ModelSpec,
    kind: ScoreKind,
    alpha: float,
    opts: FitOptions | None = None,
) -> bool:
    """Conformal inclusion test for one candidate response.

    Appends (candidate, x_new) to the data, refits, and checks whether the
    candidate's score is within the ceil((1 - alpha)(n + 1))-th smallest of
    all n + 1 scores.  A fit that fails to converge raises rather than
    silently excluding the candidate.
    """
    y_cand = float(aug_candidate)
    if not 0.0 < y_cand < 1.0:
        raise ValueError("candidate must lie strictly in (0, 1)")
    aug = data.augmented(y_cand, np.asarray(x_new, dtype=float))
    model = fit(aug, spec, opts)
    if not model.converged:
        raise NonConvergence(f"augmented fit did not converge at candidate {y_cand:.6g}")
    all_scores = score(kind, aug.y, model, aug.X)
    k = math.ceil((1.0 - alpha) * aug.n)
    threshold = np.sort(all_scores)[k - 1]
    return bool(all_scores[-1] <= threshold)


def classical_gauss_interval(m: FittedModel, x_new, alpha: float) -> tuple[float, float]:
    """Classical normal prediction interval on the logit scale."""
    center = float(m.predict_linear(x_new))
    half = float(norm_quantile(1.0 - alpha / 2.0)) * float(m.predict_sigma(x_new))
    return center - half, center + half


class _Memo:
    """Optional cache around the inclusion indicator."""

    def __init__(self, func, enabled: bool):
        self._func = func
        self._cache: dict[float, bool] | None = {} if enabled else None

    def __call__(self, w: float) -> bool:
        if self._cache is not None and w in self._cache:
            return self._cache[w]
        out = self._func(w)
        if self._cache is not None:
            self._cache[w] = out
        return out


def _bisect_edge(include, lo: float, hi: float, lo_inside: bool, tol: float) -> float:
    """Locate a single inside/outside transition in (lo, hi).

    One endpoint is inside the inclusion region and the other outside;
    returns the inside endpoint of the final bracket, so the reported bound
    is certified included (within tol of the true boundary).
    """
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if include(mid) == lo_inside:
            lo = mid
        else:
            hi = mid
    return lo if lo_inside else hi


def _full_cp_beta(w0: float, cfg: FullConfig, include) -> PredictionInterval:
    level = 1.0 - cfg.alpha

    if include(w0):
        lower = _bisect_edge(include, 0.0, w0, lo_inside=False, tol=cfg.tolerance)
        upper = _bisect_edge(include, w0, 1.0, lo_inside=True, tol=cfg.tolerance)
        return PredictionInterval(lower, upper, level, Method.FULL)

    # exploratory search: coarse grid over (0,1) with the endpoints pinned
    # outside (exact 0/1 responses are outside every model's support)
    known = {0.0: False, 1.0: False, w0: False, 0.5: include(0.5)}
    while not any(known.values()):
        xs = sorted(known)
        inserted = False
        for a, b in zip(xs[:-1], xs[1:]):
            if b - a >= cfg.tolerance:
                mid = 0.5 * (a + b)
                known[mid] = include(mid)
                inserted = True
        if not inserted:
            return PredictionInterval(math.nan, math.nan, level, Method.FULL, empty=True)

    xs = sorted(known)
    trues = [w for w in xs if known[w]]
    t_lo, t_hi = trues[0], trues[-1]
    f_lo = max(w for w in xs if w < t_lo and not known[w])
    f_hi = min(w for w in xs if w > t_hi and not known[w])
    lower = _bisect_edge(include, f_lo, t_lo, lo_inside=False, tol=cfg.tolerance)
    upper = _bisect_edge(include, t_hi, f_hi, lo_inside=True, tol=cfg.tolerance)
    return PredictionInterval(lower, upper, level, Method.FULL)


def _full_cp_transform(
    base: FittedModel, x_new, cfg: FullConfig, include
) -> PredictionInterval:
    level = 1.0 - cfg.alpha
    lo_cl, hi_cl = classical_gauss_interval(base, x_new, cfg.alpha)
    width = hi_cl - lo_cl
    grid_lo = max(lo_cl - cfg.rho * width, -LOGIT_LIMIT)
    grid_hi = min(hi_cl + cfg.rho * width, LOGIT_LIMIT)
    step = cfg.grid_step
    count = int(math.floor((grid_hi - grid_lo) / step)) + 1

    def include_idx(i: int) -> bool:
        return include(float(expit(grid_lo + i * step)))

    known: dict[int, bool] = {}
    for i in sorted({0, (count - 1) // 2, count - 1}):
        known[i] = include_idx(i)

    # grid expansion with floor-midpoint index insertion
    while not any(known.values()):
        idxs = sorted(known)
        inserted = False
        for a, b in zip(idxs[:-1], idxs[1:]):
            if b - a > 1:
                mid = (a + b) // 2
                known[mid] = include_idx(mid)
                inserted = True
        if not inserted:
            return PredictionInterval(math.nan, math.nan, level, Method.FULL, empty=True)

    idxs = sorted(known)
    trues = [i for i in idxs if known[i]]
    t_lo, t_hi = trues[0], trues[-1]

    if t_lo == 0 or t_hi == count - 1:
        warnings.warn(
            "inclusion region reaches the extended grid boundary; consider a larger rho",
            IntervalSearchWarning,
        )

    def locate(f: int, t: int) -> int:
        # binary index search between a known-outside and known-inside index
        while abs(t - f) > 1:
            mid = (f + t) // 2
            if include_idx(mid):
                t = mid
            else:
                f = mid
        return t

    if t_lo > 0:
        f_lo = max(i for i in idxs if i < t_lo and not known[i])
        t_lo = locate(f_lo, t_lo)
    if t_hi < count - 1:
        f_hi = min(i for i in idxs if i > t_hi and not known[i])
        t_hi = locate(f_hi, t_hi)

    return PredictionInterval(
        float(expit(grid_lo + t_lo * step)),
        float(expit(grid_lo + t_hi * step)),
        level,
        Method.FULL,
    )


def _contiguity_probes(interval: PredictionInterval, include, tol: float) -> None:
    """Spot-check that the located region is a single interval.

    The search assumes the inclusion set is contiguous; three deterministic
    pseudo-random probes outside the returned bounds surface violations as
    a warning instead of silently mislocating the interval.
    """
    if interval.empty:
        return
    rng = np.random.default_rng(0)
    sides = []
    if interval.lower > 10.0 * tol:
        sides.append((tol, interval.lower - tol))
    if interval.upper < 1.0 - 10.0 * tol:
        sides.append((interval.upper + tol, 1.0 - tol))
    if not sides:
        return
    for k in range(3):
        lo, hi = sides[k % len(sides)]
        w = float(lo + (hi - lo) * rng.uniform(0.05, 0.9))
        try:
            hit = include(w)
        except FitError:  # diagnostics must not abort the interval
            warnings.warn(f"contiguity probe at {w:.4g} failed to fit", IntervalSearchWarning)
            continue
        if hit:
            warnings.warn(
                f"included point {w:.4g} found outside the returned bounds "
                f"({interval.lower:.4g}, {interval.upper:.4g})",
                IntervalSearchWarning,
            )
            return


def full_cp(
    data: Dataset,
    x_new,
    spec: ModelSpec,
    kind: ScoreKind,
    cfg: FullConfig,
    memoize: bool = True,
) -> PredictionInterval:
    """Full conformal prediction interval for one new covariate vector.

    ``memoize=False`` disables the per-call indicator cache and exists for
    testing; results are identical either way.
    """
    x_new = np.asarray(x_new, dtype=float)
    base = fit(data, spec)
    if not base.converged:
        raise NonConvergence("base fit did not converge")
    warm = FitOptions(init=base.params)

    include = _Memo(
        lambda w: indicator(w, data, x_new, spec, kind, cfg.alpha, opts=warm), memoize
    )

    if spec.family.is_beta:
        w0 = float(base.predict_mean(x_new))
        interval = _full_cp_beta(w0, cfg, include)
    else:
        interval = _full_cp_transform(base, x_new, cfg, include)

    probe_tol = cfg.tolerance if spec.family.is_beta else cfg.grid_step
    _contiguity_probes(interval, include, probe_tol)
    return interval
