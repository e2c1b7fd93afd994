import argparse
import os

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from MatrixIO import file_fingerprint, read_library_csv, read_matrix_csv, read_mixtures_csv, write_spectrum_csv
from Oracle import OracleConfig, oracle_fit
from Spectrum import Grid, Spectrum
import run
from run import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main, parse_rows

SHIFTED = """\
n_sources = 2
m_observations = {m}
seed = 3
grid.start = 0
grid.step = 1
grid.count = 200
shift.model = {shift}
shift.sigma.0 = 1
shift.sigma.1 = 1
noise.tau = {tau}
peak.0.0.center = 80
peak.0.0.width = 8
peak.0.0.height = 10
peak.1.0.shape = lorentzian
peak.1.0.center = 90
peak.1.0.width = 7
peak.1.0.height = 8
peak.1.1.center = 140
peak.1.1.width = 10
peak.1.1.height = 5
"""


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv('SPECFIT_LOG_DIR', str(tmp_path / 'logs'))
    monkeypatch.delenv('SPECFIT_THREADS', raising=False)
    return tmp_path


def simulate(tmp_path, name, m=12, shift='iid', tau=0.05):
    config = tmp_path / f'{name}.cfg'
    config.write_text(SHIFTED.format(m=m, shift=shift, tau=tau))
    out = str(tmp_path / name)
    assert main(['simulate', '--config', str(config), '--out', out]) == EXIT_OK
    return out


def test_parse_rows():
    assert parse_rows('0:5') == slice(0, 5)
    assert parse_rows(':7') == slice(None, 7)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_rows('5')


def test_simulate_preset_is_deterministic(tmp_path):
    assert main(['simulate', '--config', 'synthetic-iid', '--out', 'first']) == EXIT_OK
    assert main(['simulate', '--config', 'synthetic-iid', '--out', 'second']) == EXIT_OK
    X, row_ids = read_mixtures_csv('first/mixtures.csv')
    assert X.X.shape == (100, 1000)
    assert_array_equal(row_ids, np.arange(100))
    for name in ('mixtures.csv', 'truth_A.csv', 'truth_xi.csv'):
        assert file_fingerprint(os.path.join('first', name)) == file_fingerprint(os.path.join('second', name))
    truth_A, columns, _ = read_matrix_csv('first/truth_A.csv')
    assert columns == ['source_0', 'source_1']
    assert_array_equal(truth_A[:, 0], np.ones(100))
    assert os.path.isfile('first/config.txt') and os.path.isfile('first/sources_deriv.csv')


def test_default_output_directory():
    assert main(['simulate', '--config', 'synthetic-ar1', '--seed', '5']) == EXIT_OK
    assert os.path.isfile(os.path.join('data', 'synthetic-ar1', 'mixtures.csv'))


def test_ols_recovers_noise_free_weights(tmp_path):
    data = simulate(tmp_path, 'clean', shift='none', tau=0.0)
    assert main(['fit', 'ols', '--data', data]) == EXIT_OK
    A_hat, columns, _ = read_matrix_csv(os.path.join(data, 'fit_ols', 'fit_A.csv'))
    truth, _, _ = read_matrix_csv(os.path.join(data, 'truth_A.csv'))
    assert columns == ['source_0', 'source_1']
    assert_allclose(A_hat, truth, atol=1e-8)


def test_fit_then_compare(tmp_path, capsys):
    data = simulate(tmp_path, 'shifted')
    assert main(['fit', 'ols', '--data', data]) == EXIT_OK
    assert main(['fit', '--method', 'agls', '--data', data]) == EXIT_OK
    assert main(['fit', 'agmle-hetero', '--data', data, '--out', 'mle']) == EXIT_OK
    assert 'agmle-hetero' in capsys.readouterr().out
    reports = [os.path.join(data, 'fit_ols'), os.path.join(data, 'fit_agls'), 'mle']
    assert main(['compare', *reports, '--out', 'cmp']) == EXIT_OK
    summary = pd.read_csv(os.path.join('cmp', 'compare_summary.csv'))
    assert list(summary['method']) == ['ols', 'agls', 'agmle-hetero']
    assert np.all(np.isfinite(summary['mean_abs_error']))
    long = pd.read_csv(os.path.join('cmp', 'compare_long.csv'))
    assert len(long) == 3 * 12 * 2
    assert main(['report', 'mle']) == EXIT_OK


def test_oracle_on_row_slice_matches_library_call(tmp_path):
    data = simulate(tmp_path, 'oracle', m=8)
    assert main(['fit', 'oracle', '--data', data, '--rows', '0:5']) == EXIT_OK
    A_cli, _, row_ids = read_matrix_csv(os.path.join(data, 'fit_oracle', 'fit_A.csv'))
    assert_array_equal(row_ids, np.arange(5))
    X, _ = read_mixtures_csv(os.path.join(data, 'mixtures.csv'))
    lib = read_library_csv(os.path.join(data, 'sources.csv'))
    expected = oracle_fit(X.rows(0, 5), lib, OracleConfig())
    assert_allclose(A_cli, expected.A_hat, rtol=1e-12, atol=1e-14)
    Xi_cli, _, _ = read_matrix_csv(os.path.join(data, 'fit_oracle', 'fit_xi.csv'))
    assert_array_equal(Xi_cli, expected.Xi_hat)


def test_gls_with_explicit_noise_covariance(tmp_path):
    data = simulate(tmp_path, 'gls', m=6)
    cov = pd.DataFrame(np.eye(200), columns=[str(k) for k in range(200)])
    cov.insert(0, 'row_id', np.arange(200))
    cov.to_csv('cov.csv', index=False)
    assert main(['fit', 'gls', '--data', data, '--noise-cov', 'cov.csv', '--out', 'gls_eye']) == EXIT_OK
    assert main(['fit', 'ols', '--data', data]) == EXIT_OK
    gls, _, _ = read_matrix_csv(os.path.join('gls_eye', 'fit_A.csv'))
    ols, _, _ = read_matrix_csv(os.path.join(data, 'fit_ols', 'fit_A.csv'))
    assert_allclose(gls, ols, rtol=1e-10)


def test_sweep_writes_one_row_per_seed_and_method():
    assert main(['sweep', '--config', 'synthetic-ar1', '--seeds', '2', '--methods', 'ols', 'agls',
                 '--out', 'sweep']) == EXIT_OK
    table = pd.read_csv(os.path.join('sweep', 'sweep.csv'))
    assert len(table) == 4
    assert set(table['method']) == {'ols', 'agls'}


def test_invalid_input_exit_codes(tmp_path):
    assert main(['fit', 'ols', '--data', 'nowhere']) == EXIT_INVALID
    assert main(['fit', 'nonsense']) == EXIT_INVALID
    assert main(['fit', '--data', 'nowhere']) == EXIT_INVALID
    assert main(['simulate', '--config', 'no-such-preset']) == EXIT_INVALID

    data = simulate(tmp_path, 'single', m=4)
    assert main(['fit', 'ols', '--data', data]) == EXIT_OK
    assert main(['compare', os.path.join(data, 'fit_ols'), '--out', 'lonely']) == EXIT_INVALID
    assert not os.path.exists('lonely')


def test_duplicate_sources_exit_with_numerical_failure(tmp_path):
    data = simulate(tmp_path, 'dupes', m=4)
    grid = Grid(0.0, 1.0, 200)
    peak = np.exp(-(grid.nu - 80.0) ** 2 / 128.0)
    write_spectrum_csv('water.csv', Spectrum(grid, peak))
    write_spectrum_csv('water_again.csv', Spectrum(grid, peak))
    code = main(['fit', 'ols', '--data', data, '--source', 'water.csv', '--source', 'water_again.csv'])
    assert code == EXIT_NUMERICAL


def test_failed_simulation_leaves_no_partial_files(tmp_path, monkeypatch):
    def failing(path, *args, **kwargs):
        raise OSError(f"disk full writing {path}")

    monkeypatch.setattr(run, 'write_matrix_csv', failing)
    out = str(tmp_path / 'broken')
    assert main(['simulate', '--config', 'synthetic-iid', '--out', out]) == EXIT_INVALID
    assert os.listdir(out) == []
