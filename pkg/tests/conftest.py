import numpy as np
import pytest

from unitcp import Dataset, Scenario, ScenarioConfig, gen_covariates, gen_response


def make_scenario_data(scenario, n, dispersion=None, seed=0):
    """Dataset of size n plus one held-out test pair from the scenario."""
    cfg = ScenarioConfig(scenario, n, dispersion, rng_seed=seed)
    rng = np.random.default_rng([seed, 0])
    X = gen_covariates(n + 1, rng)
    y = gen_response(cfg, X, rng)
    return Dataset(y[:-1], X[:-1]), X[-1], y[-1]


@pytest.fixture(scope="session")
def beta_mean_data():
    data, x_new, y_new = make_scenario_data(Scenario.BETA_MEAN, 200, 10.0, seed=7)
    return data, x_new, y_new
