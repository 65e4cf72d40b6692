"""Split and full conformal prediction mechanics."""

import math

import numpy as np
import pytest

from unitcp import (
    BetaParams,
    FullConfig,
    Method,
    ModelFamily,
    ModelSpec,
    PredictionInterval,
    Scenario,
    ScoreKind,
    SplitConfig,
    beta_quantile,
    classical_gauss_interval,
    conformal_quantile,
    expit,
    full_cp,
    indicator,
    norm_cdf,
    split_cp,
    split_cp_batch,
)
from unitcp.conformal import _invert_split, _split_fit
from unitcp.models import FitOptions, fit

from conftest import make_scenario_data
from test_models import M1, M2, M3, M4, make_model


# ---------------------------------------------------------------------------
# conformal quantile


def test_conformal_quantile_forced_examples():
    assert conformal_quantile(np.arange(1.0, 10.0), 0.1) == 9.0
    assert conformal_quantile([5.0, 1.0, 3.0], 0.5) == 3.0
    assert conformal_quantile([1.0, 2.0], 0.05) == math.inf


def test_conformal_quantile_keeps_ties():
    assert conformal_quantile([2.0, 2.0, 2.0, 7.0], 0.5) == 2.0


def test_conformal_quantile_errors():
    with pytest.raises(ValueError):
        conformal_quantile([], 0.1)
    with pytest.raises(ValueError):
        conformal_quantile([1.0], 0.0)


# ---------------------------------------------------------------------------
# split interval inversion


def test_invert_split_m1_example():
    m = make_model(M1, 0.0, np.zeros(3), np.log(0.63))
    iv = _invert_split(m, ScoreKind.RAW, 1.0, np.zeros(3), 0.9)
    assert iv.lower == pytest.approx(expit(-1.0), abs=1e-12)
    assert iv.upper == pytest.approx(expit(1.0), abs=1e-12)
    assert iv.lower == pytest.approx(0.26894, abs=5e-6)
    assert iv.upper == pytest.approx(0.73106, abs=5e-6)


def test_invert_split_m3_quantile_degenerate():
    m = make_model(M3, 0.4, [0.2, -0.1, 0.3], np.log(8.0))
    x = np.array([0.3, -0.2, 0.1])
    iv = _invert_split(m, ScoreKind.QUANTILE, 0.0, x, 0.9)
    median = float(beta_quantile(0.5, BetaParams(float(m.predict_mean(x)), 8.0)))
    assert iv.lower == pytest.approx(median, abs=1e-9)
    assert iv.upper == pytest.approx(median, abs=1e-9)


def test_invert_split_pearson_truncation():
    # mu=0.05, sigma=0.05 needs phi=18; q=2 pushes the lower bound below zero
    m = make_model(M3, float(np.log(0.05 / 0.95)), np.zeros(3), np.log(18.0))
    x = np.zeros(3)
    assert float(m.predict_mean(x)) == pytest.approx(0.05, abs=1e-12)
    assert float(m.predict_sigma(x)) == pytest.approx(0.05, abs=1e-12)
    iv = _invert_split(m, ScoreKind.PEARSON, 2.0, x, 0.9)
    assert iv.lower == 0.0
    assert iv.upper == pytest.approx(0.15, abs=1e-12)


def test_invert_split_infinite_quantile_gives_unit_interval():
    m = make_model(M3, 0.0, np.zeros(3), np.log(10.0))
    iv = _invert_split(m, ScoreKind.QUANTILE, math.inf, np.zeros(3), 0.95)
    assert (iv.lower, iv.upper) == (0.0, 1.0)


CASES = [
    (M1, Scenario.TRANSFORM_HOMO, 0.63, ScoreKind.RAW),
    (M2, Scenario.TRANSFORM_HETERO, None, ScoreKind.PEARSON),
    (M3, Scenario.BETA_MEAN, 10.0, ScoreKind.PEARSON),
    (M3, Scenario.BETA_MEAN, 10.0, ScoreKind.QUANTILE),
    (M4, Scenario.BETA_MEAN_DISP, None, ScoreKind.PEARSON),
    (M4, Scenario.BETA_MEAN_DISP, None, ScoreKind.QUANTILE),
]


def bisection_inversion(model, kind, q, x_new, tol=1e-9):
    """Numeric inversion of {y : score(y) <= q}, independent of closed forms."""
    from unitcp import score as score_fn

    def s(y):
        return score_fn(kind, y, model, x_new)

    lo_edge, hi_edge = 1e-12, 1.0 - 1e-12
    ys = np.linspace(lo_edge, hi_edge, 4001)
    vals = np.array([s(y) for y in ys])
    center = ys[int(np.argmin(vals))]

    def edge(a, b, inside_at_b):
        # score <= q at one end of (a, b), > q at the other
        for _ in range(80):
            mid = 0.5 * (a + b)
            if (s(mid) <= q) == inside_at_b:
                b = mid
            else:
                a = mid
        return 0.5 * (a + b)

    lower = lo_edge if s(lo_edge) <= q else edge(lo_edge, center, True)
    upper = hi_edge if s(hi_edge) <= q else edge(hi_edge, center, True)
    return min(lower, upper), max(lower, upper)


@pytest.mark.parametrize("spec,scenario,disp,kind", CASES)
def test_split_matches_bisection_inversion(spec, scenario, disp, kind):
    rng = np.random.default_rng(50)
    for rep in range(10):
        data, x_new, _ = make_scenario_data(scenario, 120, disp, seed=600 + rep)
        cfg = SplitConfig(alpha=float(rng.uniform(0.05, 0.3)), rng_seed=rep)
        iv = split_cp(data, x_new, spec, kind, cfg)
        model, q = _split_fit(data, spec, kind, cfg)
        lo, hi = bisection_inversion(model, kind, q, x_new)
        lo_clip, hi_clip = max(0.0, lo), min(1.0, hi)
        assert abs(iv.lower - lo_clip) < 1e-6
        assert abs(iv.upper - hi_clip) < 1e-6


def test_split_batch_matches_pointwise():
    data, _, _ = make_scenario_data(Scenario.BETA_MEAN, 150, 10.0, seed=31)
    X_new = np.random.default_rng(3).normal(size=(5, 3))
    cfg = SplitConfig(0.1, rng_seed=9)
    batch = split_cp_batch(data, X_new, M3, ScoreKind.QUANTILE, cfg)
    single = [split_cp(data, x, M3, ScoreKind.QUANTILE, cfg) for x in X_new]
    assert [(iv.lower, iv.upper) for iv in batch] == [(iv.lower, iv.upper) for iv in single]


def test_split_width_monotone_in_alpha():
    data, x_new, _ = make_scenario_data(Scenario.BETA_MEAN, 300, 10.0, seed=41)
    widths = [
        split_cp(data, x_new, M3, ScoreKind.QUANTILE, SplitConfig(a, rng_seed=4)).width
        for a in (0.05, 0.1, 0.2)
    ]
    assert widths[0] >= widths[1] >= widths[2]


def test_split_quantile_interval_needs_no_truncation():
    for rep in range(5):
        data, x_new, _ = make_scenario_data(Scenario.BETA_MEAN, 80, 2.0, seed=70 + rep)
        iv = split_cp(data, x_new, M3, ScoreKind.QUANTILE, SplitConfig(0.05, rng_seed=rep))
        assert 0.0 < iv.lower <= iv.upper < 1.0


# ---------------------------------------------------------------------------
# interval container


def test_prediction_interval_validation():
    with pytest.raises(ValueError):
        PredictionInterval(0.4, 0.2, 0.9, Method.SPLIT)
    with pytest.raises(ValueError):
        PredictionInterval(0.1, 0.2, 1.5, Method.SPLIT)
    empty = PredictionInterval(math.nan, math.nan, 0.9, Method.FULL, empty=True)
    assert empty.width == 0.0 and not empty.contains(0.5)
    iv = PredictionInterval(0.2, 0.6, 0.9, Method.SPLIT)
    assert iv.contains(0.2) and iv.contains(0.6) and not iv.contains(0.61)


# ---------------------------------------------------------------------------
# full conformal prediction


def test_indicator_deterministic_and_saturating(beta_mean_data):
    data, x_new, _ = beta_mean_data
    first = indicator(0.6, data, x_new, M3, ScoreKind.QUANTILE, 0.1)
    second = indicator(0.6, data, x_new, M3, ScoreKind.QUANTILE, 0.1)
    assert first == second
    tiny_alpha = 1.0 / (2.0 * (data.n + 1))
    assert indicator(0.999, data, x_new, M3, ScoreKind.QUANTILE, tiny_alpha)
    assert indicator(0.001, data, x_new, M3, ScoreKind.QUANTILE, tiny_alpha)


def test_indicator_true_near_center(beta_mean_data):
    data, x_new, _ = beta_mean_data
    base = fit(data, M3)
    center = float(base.predict_mean(x_new))
    assert indicator(center, data, x_new, M3, ScoreKind.QUANTILE, 0.2)


def test_indicator_candidate_domain(beta_mean_data):
    data, x_new, _ = beta_mean_data
    with pytest.raises(ValueError):
        indicator(0.0, data, x_new, M3, ScoreKind.QUANTILE, 0.1)


def test_classical_gauss_interval():
    m = make_model(M1, 0.0, np.zeros(3), 0.0)  # sigma = 1
    lo, hi = classical_gauss_interval(m, np.zeros(3), 0.05)
    assert lo == pytest.approx(-1.95996, abs=5e-5)
    assert hi == pytest.approx(1.95996, abs=5e-5)
    assert (lo + hi) / 2 == pytest.approx(0.0, abs=1e-12)
    m2 = make_model(M1, 0.0, np.zeros(3), np.log(2.0))
    lo2, hi2 = classical_gauss_interval(m2, np.zeros(3), 0.05)
    assert (hi2 - lo2) == pytest.approx(2.0 * (hi - lo), rel=1e-12)
    beta_model = make_model(M3, 0.0, np.zeros(3), np.log(10.0))
    with pytest.raises(ValueError):
        classical_gauss_interval(beta_model, np.zeros(3), 0.05)


def test_full_cp_memoization_transparency():
    data, x_new, _ = make_scenario_data(Scenario.BETA_MEAN, 60, 10.0, seed=33)
    cfg = FullConfig(0.1)
    a = full_cp(data, x_new, M3, ScoreKind.QUANTILE, cfg, memoize=True)
    b = full_cp(data, x_new, M3, ScoreKind.QUANTILE, cfg, memoize=False)
    assert (a.lower, a.upper, a.empty) == (b.lower, b.upper, b.empty)


def test_full_cp_nesting_in_alpha():
    data, x_new, _ = make_scenario_data(Scenario.BETA_MEAN, 60, 10.0, seed=34)
    wide = full_cp(data, x_new, M3, ScoreKind.QUANTILE, FullConfig(0.1))
    narrow = full_cp(data, x_new, M3, ScoreKind.QUANTILE, FullConfig(0.2))
    assert wide.lower <= narrow.lower + 1e-4
    assert narrow.upper <= wide.upper + 1e-4


@pytest.mark.parametrize("spec,scenario,disp,kind", [
    (M1, Scenario.TRANSFORM_HOMO, 0.63, ScoreKind.RAW),
    (M2, Scenario.TRANSFORM_HETERO, None, ScoreKind.PEARSON),
])
def test_full_cp_transform_families_run(spec, scenario, disp, kind):
    data, x_new, _ = make_scenario_data(scenario, 60, disp, seed=35)
    iv = full_cp(data, x_new, spec, kind, FullConfig(0.1))
    assert not iv.empty
    assert 0.0 < iv.lower < iv.upper < 1.0


def test_full_cp_matches_exhaustive_grid_small():
    data, x_new, _ = make_scenario_data(Scenario.BETA_MEAN, 30, 10.0, seed=36)
    iv = full_cp(data, x_new, M3, ScoreKind.QUANTILE, FullConfig(0.1))
    base = fit(data, M3)
    warm = FitOptions(init=base.params)
    grid = np.arange(0.01, 1.0, 0.01)
    hits = [w for w in grid
            if indicator(w, data, x_new, M3, ScoreKind.QUANTILE, 0.1, opts=warm)]
    assert hits
    assert abs(iv.lower - min(hits)) < 0.01 + 1e-4
    assert abs(iv.upper - max(hits)) < 0.01 + 1e-4


def test_full_cp_deterministic():
    data, x_new, _ = make_scenario_data(Scenario.BETA_MEAN, 50, 10.0, seed=37)
    a = full_cp(data, x_new, M3, ScoreKind.PEARSON, FullConfig(0.1))
    b = full_cp(data, x_new, M3, ScoreKind.PEARSON, FullConfig(0.1))
    assert (a.lower, a.upper) == (b.lower, b.upper)
