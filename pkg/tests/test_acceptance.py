"""Monte-Carlo checks of the estimators on the bundled presets."""

import numpy as np
import pytest

from ConfigFile import load_sim_config
from Estimators import agls_fit, agls_scale_fit, agmle_ar1, agmle_hetero, ols_fit
from Simulator import gen_mixtures, gen_sources

pytestmark = pytest.mark.slow

SEEDS = range(20)
CRITERIA_SEEDS = 10


def mean_error(fit, truth):
    return float(np.mean(np.abs(fit.A_hat - truth.A)))


def simulate(preset, seed):
    cfg = load_sim_config(preset, seed=seed)
    lib = gen_sources(cfg)
    X, truth = gen_mixtures(lib, cfg)
    return X, lib, truth


@pytest.fixture(scope='module')
def iid_runs():
    runs = []
    for seed in SEEDS:
        X, lib, truth = simulate('synthetic-iid', seed)
        runs.append((truth, ols_fit(X, lib), agls_fit(X, lib), agmle_hetero(X, lib)))
    return runs


@pytest.fixture(scope='module')
def ar1_runs():
    runs = []
    for seed in SEEDS:
        X, lib, truth = simulate('synthetic-ar1', seed)
        runs.append((truth, ols_fit(X, lib), agmle_ar1(X, lib)))
    return runs


def test_iid_shift_experiment(iid_runs):
    agls_wins = mle_wins = sigma_ok = 0
    for truth, ols, agls, mle in iid_runs[:CRITERIA_SEEDS]:
        e_ols, e_agls, e_mle = mean_error(ols, truth), mean_error(agls, truth), mean_error(mle, truth)
        agls_wins += e_agls < e_ols
        mle_wins += e_mle <= e_agls
        sigma_ok += bool(np.all((mle.sigma_hat >= 0.6) & (mle.sigma_hat <= 1.4)))
    assert agls_wins >= 9
    assert mle_wins >= 9
    assert sigma_ok >= 8


def test_ar1_shift_experiment(ar1_runs):
    true_rho = np.array([0.5, 0.4])
    rho_ok = np.zeros(2, dtype=int)
    mle_wins = 0
    for truth, ols, mle in ar1_runs[:CRITERIA_SEEDS]:
        rho_ok += np.abs(mle.rho_hat - true_rho) <= 0.25
        mle_wins += mean_error(mle, truth) < mean_error(ols, truth)
    assert np.all(rho_ok >= 7)
    assert mle_wins >= 9


def test_compression_experiment():
    wins = 0
    for seed in range(CRITERIA_SEEDS):
        X, lib, truth = simulate('synthetic-scale', seed)
        ols_error = np.sum(np.abs(ols_fit(X, lib).A_hat - truth.A))
        scale_error = np.sum(np.abs(agls_scale_fit(X, lib).A_hat - truth.A))
        wins += scale_error < ols_error
    assert wins >= 9


def test_likelihood_loops_converge(iid_runs, ar1_runs):
    converged = sum(run[3].converged for run in iid_runs) + sum(run[2].converged for run in ar1_runs)
    assert converged >= 0.95 * (len(iid_runs) + len(ar1_runs))
    assert all(run[3].iterations <= 100 for run in iid_runs)


def test_confidence_intervals_cover_the_truth():
    covered = total = 0
    for seed in range(200):
        X, lib, truth = simulate('synthetic-iid', seed)
        fit = agmle_hetero(X, lib)
        covered += int(np.sum(np.abs(fit.A_hat - truth.A) <= fit.ci_half_width))
        total += truth.A.size
    assert covered >= 0.85 * total
