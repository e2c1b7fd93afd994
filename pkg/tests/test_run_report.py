import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from Estimators import FitResult
from RunReport import CI_FILE, TRUTH_FILE, RunReport, compare_reports

NAMES = ('water', 'lactate')


def make_report(method='agmle-ar1', with_truth=True, **overrides):
    rng = np.random.default_rng(0)
    A = rng.uniform(0.5, 1.5, (4, 2))
    values = dict(
        method=method, A_hat=A + 0.01 * rng.normal(size=(4, 2)), names=NAMES, row_ids=np.arange(4),
        truth=A if with_truth else None, sigma_hat=np.array([0.9, 1.1]), tau_hat=0.05, rho_hat=np.array([0.5, 0.4]),
        ci_half_width=np.full((4, 2), 0.02), Xi_hat=rng.normal(size=(4, 2)), iterations=7, converged=True,
        final_loglik=-1234.5678, wall_time=0.25, data_fingerprint='abc123', flagged_rows=(2,),
    )
    values.update(overrides)
    return RunReport(**values)


def test_save_and_load_reproduce_the_report(tmp_path):
    report = make_report()
    report.Xi_hat[1, 0] = np.nan
    report.save(str(tmp_path))
    loaded = RunReport.load(str(tmp_path))
    assert loaded.method == 'agmle-ar1'
    assert loaded.names == NAMES
    for attribute in ('A_hat', 'truth', 'sigma_hat', 'rho_hat', 'ci_half_width', 'Xi_hat', 'row_ids'):
        assert_array_equal(getattr(loaded, attribute), getattr(report, attribute))
    assert loaded.tau_hat == report.tau_hat
    assert loaded.scale_hat is None
    assert (loaded.iterations, loaded.converged, loaded.final_loglik) == (7, True, -1234.5678)
    assert loaded.data_fingerprint == 'abc123'
    assert loaded.flagged_rows == (2,)


def test_params_table_lists_only_estimated_parameters():
    hetero = make_report(method='agmle-hetero', rho_hat=None).params_table()
    assert 'rho_hat' not in set(hetero['parameter'])
    ar1 = make_report().params_table()
    assert list(ar1[ar1['parameter'] == 'rho_hat']['source']) == list(NAMES)
    assert list(ar1[ar1['parameter'] == 'tau_hat']['source']) == ['all']
    assert make_report(method='ols', sigma_hat=None, tau_hat=None, rho_hat=None).params_table().empty


def test_resaving_drops_stale_optional_files(tmp_path):
    make_report().save(str(tmp_path))
    assert os.path.exists(tmp_path / CI_FILE)
    make_report(method='ols', with_truth=False, ci_half_width=None).save(str(tmp_path))
    assert not os.path.exists(tmp_path / CI_FILE)
    assert not os.path.exists(tmp_path / TRUTH_FILE)
    loaded = RunReport.load(str(tmp_path))
    assert loaded.truth is None and loaded.errors() is None


def test_from_fit():
    fit = FitResult('agls', np.ones((3, 2)), Xi_hat=np.zeros((3, 2)), diagnostics={'flagged_rows': [1]})
    report = RunReport.from_fit(fit, NAMES, [5, 6, 7], truth=np.ones((3, 2)), wall_time=1.5)
    assert report.flagged_rows == (1,)
    assert_array_equal(report.errors(), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        RunReport.from_fit(fit, NAMES, [5, 6])


def test_compare_reports():
    ols = make_report(method='ols', A_hat=np.full((4, 2), 1.0))
    ar1 = make_report()
    summary, params, long = compare_reports([ols, ar1])
    assert list(summary['method']) == ['ols', 'agmle-ar1']
    assert summary['mean_abs_error'].iloc[1] < summary['mean_abs_error'].iloc[0]
    assert set(params['method']) == {'ols', 'agmle-ar1'}
    assert len(long) == 2 * 4 * 2
    assert list(long.columns) == ['row_id', 'source', 'method', 'estimate', 'truth']


def test_compare_restricts_to_shared_rows():
    full = make_report()
    part = make_report(method='agls', A_hat=full.A_hat[2:], truth=full.truth[2:], row_ids=[2, 3],
                       ci_half_width=None, Xi_hat=None)
    assert_array_equal(part.truth, full.truth[2:])
    summary, _, long = compare_reports([full, part])
    assert list(summary['rows']) == [2, 2]
    assert set(long['row_id']) == {2, 3}


def test_compare_rejects_unrelated_reports():
    report = make_report()
    with pytest.raises(ValueError):
        compare_reports([report])
    with pytest.raises(ValueError):
        compare_reports([report, make_report(data_fingerprint='other')])
    with pytest.raises(ValueError):
        compare_reports([report, make_report(names=('a', 'b'))])
    with pytest.raises(ValueError):
        compare_reports([report, make_report(row_ids=np.arange(10, 14))])
