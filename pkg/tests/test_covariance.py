import numpy as np
import pytest
from numpy.testing import assert_allclose

from Covariance import CovarianceModel, CovarianceSizeError, build_cov_ar1, build_cov_hetero, loglik
from Spectrum import Grid, MixtureSet, SourceLibrary


def explicit_covariance(A, D, sigma, tau, rho=None):
    """V assembled entry block by entry block from the model definition."""
    m, n = A.shape
    p = D.shape[1]
    rho = np.zeros(n) if rho is None else np.asarray(rho)
    V = np.zeros((m * p, m * p))
    for i in range(m):
        for j in range(m):
            block = np.zeros((p, p))
            for k in range(n):
                variance = sigma[k] ** 2 / (1 - rho[k] ** 2)
                block += variance * rho[k] ** abs(i - j) * A[i, k] * A[j, k] * np.outer(D[k], D[k])
            if i == j:
                block += tau ** 2 * np.eye(p)
            V[i * p:(i + 1) * p, j * p:(j + 1) * p] = block
    return V


def gaussian_density_log(r, V):
    sign, log_det = np.linalg.slogdet(V)
    assert sign > 0
    return -0.5 * log_det - 0.5 * r @ np.linalg.inv(V) @ r - 0.5 * r.size * np.log(2 * np.pi)


def test_zero_shift_variance_leaves_white_noise():
    rng = np.random.default_rng(0)
    model = CovarianceModel(rng.uniform(1, 2, (3, 2)), rng.normal(size=(2, 5)), [0.0, 0.0], 0.5)
    assert_allclose(model.dense(), 0.25 * np.eye(15))


def test_single_source_single_observation():
    d = np.array([[1.0, -2.0, 0.5]])
    model = CovarianceModel(np.array([[2.0]]), d, [0.3], 0.1)
    expected = 0.09 * 4.0 * np.outer(d[0], d[0]) + 0.01 * np.eye(3)
    assert_allclose(model.block(0), expected)
    assert_allclose(model.dense(), expected)


def test_eigenvalues_bounded_below_by_noise():
    rng = np.random.default_rng(1)
    for rho in (None, [0.6, -0.3]):
        model = CovarianceModel(rng.uniform(0.5, 1.5, (4, 2)), rng.normal(size=(2, 6)), [1.0, 0.7], 0.2, rho=rho)
        assert np.min(np.linalg.eigvalsh(model.dense())) >= 0.04 - 1e-10


def test_uncorrelated_ar1_equals_hetero():
    rng = np.random.default_rng(2)
    A, D = rng.uniform(0.5, 1.5, (3, 2)), rng.normal(size=(2, 4))
    hetero = CovarianceModel(A, D, [1.0, 0.5], 0.1)
    ar1 = CovarianceModel(A, D, [1.0, 0.5], 0.1, rho=[0.0, 0.0])
    assert_allclose(ar1.dense(), hetero.dense(), atol=1e-12)


def test_ar1_off_diagonal_block():
    d = np.array([[0.5, 1.0, -1.0]])
    A = np.array([[1.0], [2.0]])
    model = CovarianceModel(A, d, [0.8], 0.1, rho=[0.5])
    expected = 0.5 * 0.64 / 0.75 * 2.0 * np.outer(d[0], d[0])
    assert_allclose(model.block(0, 1), expected)
    assert_allclose(model.dense()[0:3, 3:6], expected)
    assert_allclose(model.dense(), explicit_covariance(A, d, [0.8], 0.1, [0.5]), atol=1e-14)


@pytest.mark.parametrize('rho', [None, [0.7, 0.2]])
def test_loglik_matches_density(rho):
    rng = np.random.default_rng(3)
    grid = Grid(0.0, 1.0, 3)
    for _ in range(20):
        lib = SourceLibrary.from_matrix(grid, rng.normal(size=(2, 3)))
        A = rng.uniform(0.5, 1.5, (2, 2))
        X = MixtureSet(grid, rng.normal(size=(2, 3)))
        sigma, tau = rng.uniform(0.2, 1.0, 2), rng.uniform(0.1, 0.5)
        V = explicit_covariance(A, lib.deriv_matrix, sigma, tau, rho)
        expected = gaussian_density_log((X.X - A @ lib.matrix).reshape(-1), V)
        assert_allclose(loglik(A, sigma, tau, rho, X, lib), expected, rtol=1e-8, atol=1e-9)


def test_loglik_noise_scaling():
    rng = np.random.default_rng(4)
    grid = Grid(0.0, 1.0, 5)
    lib = SourceLibrary.from_matrix(grid, rng.normal(size=(1, 5)))
    A = np.array([[1.0], [1.5]])
    X = MixtureSet(grid, rng.normal(size=(2, 5)))
    r = (X.X - A @ lib.matrix).reshape(-1)
    for tau in (0.3, 0.6):
        expected = -0.5 * r.size * np.log(2 * np.pi * tau ** 2) - 0.5 * (r @ r) / tau ** 2
        assert_allclose(loglik(A, [0.0], tau, None, X, lib), expected, rtol=1e-10)


@pytest.mark.parametrize('rho', [None, [0.5, -0.4]])
def test_structured_factorization_matches_dense(rho):
    rng = np.random.default_rng(5)
    A, D = rng.uniform(0.5, 1.5, (4, 2)), rng.normal(size=(2, 12))
    dense = CovarianceModel(A, D, [1.0, 0.6], 0.2, rho=rho)
    structured = CovarianceModel(A, D, [1.0, 0.6], 0.2, rho=rho, dense_limit=0)
    R = rng.normal(size=(4, 12))
    assert_allclose(structured.log_det(), dense.log_det(), rtol=1e-9)
    assert_allclose(structured.quadratic_form(R), dense.quadratic_form(R), rtol=1e-9)
    assert_allclose(structured.loglik(R), gaussian_density_log(R.reshape(-1), dense.dense()), rtol=1e-9)


def test_builders_and_guards():
    grid = Grid(0.0, 1.0, 100)
    lib = SourceLibrary.from_matrix(grid, np.random.default_rng(6).normal(size=(1, 100)))
    assert build_cov_hetero(np.ones((3, 1)), lib, [1.0], 0.1).is_block_diagonal
    assert not build_cov_ar1(np.ones((3, 1)), lib, [1.0], 0.1, [0.3]).is_block_diagonal
    with pytest.raises(CovarianceSizeError):
        build_cov_ar1(np.ones((201, 1)), lib, [1.0], 0.1, [0.3])
    with pytest.raises(ValueError):
        build_cov_ar1(np.ones((3, 1)), lib, [1.0], 0.1, [1.0])
    with pytest.raises(ValueError):
        build_cov_hetero(np.ones((3, 1)), lib, [0.0], 0.0)
    with pytest.raises(ValueError):
        build_cov_hetero(np.ones((3, 1)), lib, [-1.0], 0.1)
