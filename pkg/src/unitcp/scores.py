"""Non-conformity scores for the four regression families.

Three residual-based measures, each on the scale its model works on:

* ``RAW``       |logit(y) - linear prediction|, homoscedastic transform only
* ``PEARSON``   absolute residual divided by the predicted sd; logit scale
                for the heteroscedastic transform family, original scale for
                the beta families
* ``QUANTILE``  |normal quantile of the fitted CDF at y|; for the
                heteroscedastic transform family this coincides with the
                Pearson score, for the beta families the fitted CDF is the
                conditional beta distribution

All scores are nonnegative and finite for y strictly inside (0,1).
"""

from __future__ import annotations

import enum

import numpy as np
from scipy import special as sp

from .models import FittedModel, ModelFamily
from .numeric import logit

__all__ = ["ScoreKind", "score"]

# fitted-CDF values are clamped here before the normal quantile, which caps
# quantile scores at about 7.03 instead of letting far-tail points hit +/-inf
CDF_CLIP = 1e-12


class ScoreKind(enum.Enum):
    RAW = "raw"
    PEARSON = "pearson"
    QUANTILE = "quantile"

    @classmethod
    def from_name(cls, name: str) -> "ScoreKind":
        key = name.strip().lower()
        for kind in cls:
            if key == kind.value:
                return kind
        raise ValueError(f"unknown score kind {name!r}")

    def valid_for(self, family: ModelFamily) -> bool:
        if self is ScoreKind.RAW:
            return family is ModelFamily.TRANSFORM_HOMO
        return family is not ModelFamily.TRANSFORM_HOMO


def _check_kind(kind: ScoreKind, family: ModelFamily) -> None:
    if not kind.valid_for(family):
        raise ValueError(f"score kind {kind.value} is not defined for family {family.value}")


def _abs_normal_quantile_residual(t):
    """|Phi^-1(Phi(t))| computed through the lower tail.

    Going through the tail keeps the round trip accurate to machine
    precision even for large |t|, so the heteroscedastic-transform quantile
    score agrees with its Pearson score far beyond any clamp.
    """
    t_abs = np.abs(t)
    u = sp.ndtr(-t_abs)
    # u == 0 only when |t| is so large that the tail underflows; the exact
    # limit of the composition is |t| itself there
    safe = np.maximum(u, np.finfo(float).tiny)
    return np.where(u > 0.0, -sp.ndtri(safe), t_abs)


def score(kind: ScoreKind, y, m: FittedModel, x):
    """Non-conformity score of response(s) y at covariate(s) x under ``m``.

    Accepts a scalar y with a length-p covariate vector, or a vector y with
    a matching covariate matrix.
    """
    _check_kind(kind, m.family)
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0.0) or np.any(y_arr >= 1.0) or not np.all(np.isfinite(y_arr)):
        raise ValueError("responses must lie strictly in (0, 1)")

    if m.family.is_beta:
        if kind is ScoreKind.PEARSON:
            out = np.abs(y_arr - m.predict_mean(x)) / m.predict_sigma(x)
        else:
            mu = m.predict_mean(x)
            phi = m.predict_phi(x)
            u = sp.betainc(mu * phi, (1.0 - mu) * phi, y_arr)
            u = np.clip(u, CDF_CLIP, 1.0 - CDF_CLIP)
            out = np.abs(sp.ndtri(u))
    else:
        resid = logit(y_arr) - m.predict_linear(x)
        if kind is ScoreKind.RAW:
            out = np.abs(resid)
        elif kind is ScoreKind.PEARSON:
            out = np.abs(resid) / m.predict_sigma(x)
        else:
            out = _abs_normal_quantile_residual(resid / m.predict_sigma(x))

    if np.isscalar(y) or np.ndim(y) == 0:
        return float(out)
    return out
