#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Observation covariance induced by random source shifts.

Linearizing the shifted mixing model gives x_i = a_i S + sum_k a_ik xi_ik s'_k + noise,
so the covariance of vec(X) is tau^2 I plus a term driven by the shift law:

  i.i.d. shifts: block diagonal, V_i = tau^2 I + sum_k sigma_k^2 a_ik^2 s'_k^T s'_k
  AR(1) shifts:  V_ij = sum_k rho_k^|i-j| sigma_k^2 / (1 - rho_k^2) a_ik a_jk s'_k^T s'_k
                 + tau^2 I [i == j]

Both are tau^2 I plus a low-rank term. Small blocks are assembled and
Cholesky-factored; larger ones are factored from the low-rank factor so the
mp x mp matrix of the AR(1) model never has to be held in memory.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from Numerics import (RIDGE_ESCALATIONS, RIDGE_GROWTH, LowRankSpdFactorization, NotPositiveDefinite,
                      SpdFactorization, base_ridge, regularized_cholesky)
from Settings import parallel_map
from Spectrum import MixtureSet, SourceLibrary

logger = logging.getLogger('Estimators')

DENSE_LIMIT = 512
MAX_JOINT_ORDER = 20000

Factorization = Union[SpdFactorization, LowRankSpdFactorization]


class CovarianceSizeError(ValueError):
    pass


class CovarianceModel:
    """Covariance of vec(X) under the i.i.d. (rho is None) or AR(1) shift model.

    Args:
        A: Mixing matrix, shape (m, n)
        derivs: First derivatives of the sources, shape (n, p)
        sigma: Shift standard deviation per source (innovation std for AR(1))
        tau: Noise standard deviation
        rho: AR(1) coefficient per source, or None for i.i.d. shifts
        dense_limit: Largest block order assembled densely before factoring
        allow_degenerate: Accept sigma = 0 and tau = 0 together (a ridge is added)
        threads: Worker cap for factoring hetero blocks
    """

    def __init__(self, A: np.ndarray, derivs: np.ndarray, sigma: Sequence[float], tau: float,
                 rho: Optional[Sequence[float]] = None, dense_limit: int = DENSE_LIMIT,
                 allow_degenerate: bool = False, threads: Optional[int] = None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
        self.sigma = np.asarray(sigma, dtype=float).reshape(-1)
        self.tau = float(tau)
        self.rho = None if rho is None else np.asarray(rho, dtype=float).reshape(-1)
        self.dense_limit = int(dense_limit)

        m, n = self.A.shape
        if self.derivs.shape[0] != n:
            raise ValueError(f"mixing matrix has {n} sources but {self.derivs.shape[0]} derivatives were given")
        if self.sigma.shape != (n,):
            raise ValueError(f"sigma needs {n} entries, got {self.sigma.size}")
        if np.any(self.sigma < 0) or self.tau < 0:
            raise ValueError("sigma and tau must be non-negative")
        if not allow_degenerate and self.tau == 0 and not np.any(self.sigma > 0):
            raise ValueError("sigma and tau cannot all be zero")
        if self.rho is not None:
            if self.rho.shape != (n,):
                raise ValueError(f"rho needs {n} entries, got {self.rho.size}")
            if np.any(np.abs(self.rho) >= 1):
                raise ValueError(f"AR(1) coefficients must satisfy |rho| < 1, got {self.rho}")
            if m * self.p > MAX_JOINT_ORDER:
                raise CovarianceSizeError(
                    f"joint covariance of order {m * self.p} exceeds the limit of {MAX_JOINT_ORDER}")

        if self.is_block_diagonal:
            factored = parallel_map(self._factor_block, range(m), threads)
        else:
            factored = [self._factor_joint()]
        self._factors = [factorization for factorization, _ in factored]
        # largest noise variance added on top of tau^2 by regularization
        self.ridge_added = max(added for _, added in factored)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.derivs.shape[1]

    @property
    def is_block_diagonal(self) -> bool:
        return self.rho is None

    @property
    def shift_variance(self) -> np.ndarray:
        """Stationary variance of each source's shift."""
        if self.rho is None:
            return self.sigma ** 2
        return self.sigma ** 2 / (1.0 - self.rho ** 2)

    def block(self, i: int, j: Optional[int] = None) -> np.ndarray:
        """Dense p x p block V_ij (V_ii when j is omitted)."""
        j = i if j is None else j
        rho = np.zeros_like(self.sigma) if self.rho is None else self.rho
        weights = self.shift_variance * rho ** abs(i - j) * self.A[i] * self.A[j]
        V = (self.derivs.T * weights) @ self.derivs
        if i == j:
            V = V + self.tau ** 2 * np.eye(self.p)
        return V

    def dense(self) -> np.ndarray:
        """The full mp x mp covariance of vec(X), rows stacked in order."""
        m, p = self.m, self.p
        if self.is_block_diagonal:
            return scipy.linalg.block_diag(*[self.block(i) for i in range(m)])
        V = self.tau ** 2 * np.eye(m * p)
        for k in range(self.A.shape[1]):
            corr = scipy.linalg.toeplitz(self.rho[k] ** np.arange(m))
            rows = self.shift_variance[k] * np.outer(self.A[:, k], self.A[:, k]) * corr
            V += np.kron(rows, np.outer(self.derivs[k], self.derivs[k]))
        return V

    def factor(self, i: int = 0) -> Factorization:
        """Factorization of block i (i.i.d. model) or of the whole matrix (AR(1) model)."""
        return self._factors[i if self.is_block_diagonal else 0]

    def _low_rank_block(self, i: int) -> np.ndarray:
        return self.derivs.T * (self.sigma * self.A[i])

    def _low_rank_joint(self) -> np.ndarray:
        m = self.m
        columns = []
        for k in range(self.A.shape[1]):
            corr = scipy.linalg.toeplitz(self.rho[k] ** np.arange(m))
            L = scipy.linalg.cholesky(corr, lower=True)
            B = np.sqrt(self.shift_variance[k]) * self.A[:, k][:, None] * L
            columns.append(np.kron(B, self.derivs[k][:, None]))
        return np.hstack(columns)

    def _factor_block(self, i: int) -> Tuple[Factorization, float]:
        shift_trace = float(np.sum(self.sigma ** 2 * self.A[i] ** 2 * np.sum(self.derivs ** 2, axis=1)))
        return self._factorize(lambda: self.block(i), lambda: self._low_rank_block(i), shift_trace, self.p)

    def _factor_joint(self) -> Tuple[Factorization, float]:
        deriv_norms = np.sum(self.derivs ** 2, axis=1)
        shift_trace = float(np.sum(self.shift_variance * np.sum(self.A ** 2, axis=0) * deriv_norms))
        return self._factorize(self.dense, self._low_rank_joint, shift_trace, self.m * self.p)

    def _factorize(self, build_dense: Callable[[], np.ndarray], build_low_rank: Callable[[], np.ndarray],
                   shift_trace: float, q: int) -> Tuple[Factorization, float]:
        tau2 = self.tau ** 2
        eps = base_ridge(shift_trace + q * tau2, q)
        # a vanishing noise floor leaves V singular whenever the shift term has rank < q
        noise = tau2 if tau2 > eps else eps
        Z = None if q <= self.dense_limit else build_low_rank()
        if Z is None or Z.shape[1] > q:
            V = build_dense()
            if noise != tau2:
                V = V + (noise - tau2) * np.eye(q)
            factorization = regularized_cholesky(V)
            return factorization, noise - tau2 + factorization.ridge
        for attempt in range(RIDGE_ESCALATIONS + 1):
            try:
                return LowRankSpdFactorization(Z, noise), noise - tau2
            except NotPositiveDefinite:
                noise = max(noise, eps) * RIDGE_GROWTH
                logger.warning(f"Low-rank covariance regularized, noise variance raised to {noise:.3e}")
        raise NotPositiveDefinite(f"covariance of order {q} stays indefinite after {RIDGE_ESCALATIONS} ridge escalations")

    def log_det(self) -> float:
        return float(sum(f.log_det() for f in self._factors))

    def whiten(self, R: np.ndarray) -> np.ndarray:
        """Whiten a residual matrix (m, p); returns vec-ordered whitened values."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        if R.shape != (self.m, self.p):
            raise ValueError(f"residual of shape {R.shape} does not match covariance of {self.m}x{self.p} blocks")
        if self.is_block_diagonal:
            return np.concatenate([self._factors[i].whiten(R[i]) for i in range(self.m)])
        return self._factors[0].whiten(R.reshape(-1))

    def quadratic_form(self, R: np.ndarray) -> float:
        """vec(R)^T V^{-1} vec(R)."""
        w = self.whiten(R)
        return float(w @ w)

    def loglik(self, R: np.ndarray) -> float:
        """Gaussian log-likelihood of the residual matrix R = X - A S."""
        q = self.m * self.p
        return -0.5 * self.log_det() - 0.5 * self.quadratic_form(R) - 0.5 * q * np.log(2 * np.pi)


def build_cov_hetero(A: np.ndarray, S: SourceLibrary, sigma: Sequence[float], tau: float,
                     dense_limit: int = DENSE_LIMIT) -> CovarianceModel:
    """Block-diagonal covariance for i.i.d. Gaussian shifts."""
    return CovarianceModel(A, S.deriv_matrix, sigma, tau, dense_limit=dense_limit)


def build_cov_ar1(A: np.ndarray, S: SourceLibrary, sigma: Sequence[float], tau: float, rho: Sequence[float],
                  dense_limit: int = DENSE_LIMIT) -> CovarianceModel:
    """Full-block covariance for AR(1) shifts across observations."""
    return CovarianceModel(A, S.deriv_matrix, sigma, tau, rho=rho, dense_limit=dense_limit)


def loglik(A: np.ndarray, sigma: Sequence[float], tau: float, rho: Optional[Sequence[float]],
           X: MixtureSet, S: SourceLibrary, dense_limit: int = DENSE_LIMIT) -> float:
    """Log-likelihood of X under the shift covariance model with parameters (A, sigma, tau, rho)."""
    S.grid.require(X.grid, 'mixtures vs sources')
    A = np.atleast_2d(np.asarray(A, dtype=float))
    model = CovarianceModel(A, S.deriv_matrix, sigma, tau, rho=rho, dense_limit=dense_limit)
    return model.loglik(X.X - A @ S.matrix)
