#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Dense linear algebra used by every estimator.

Least squares goes through a pivoted QR factorization, symmetric positive
definite systems through Cholesky; explicit inverses are never formed.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

logger = logging.getLogger('Numerics')

PIVOT_RTOL = 1e-10
SYMMETRY_RTOL = 1e-9
RIDGE_RTOL = 1e-10
RIDGE_GROWTH = 100.0
RIDGE_ESCALATIONS = 3


class NumericalError(ArithmeticError):
    pass


class RankDeficient(NumericalError):
    def __init__(self, message: str, index: Optional[int] = None, partner: Optional[int] = None):
        super().__init__(message)
        self.index = index
        self.partner = partner


class NotPositiveDefinite(NumericalError):
    pass


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def lstsq(B: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients c minimizing ||y - c^T B||_2.

    Args:
        B: Basis, shape (k, p), one basis vector per row
        y: Target of shape (p,) or several targets as columns of shape (p, r)

    Returns:
        c of shape (k,) or (k, r)

    Raises:
        RankDeficient: when a pivot of the QR factorization of B^T falls
            below 1e-10 times the largest; `index` names the offending row,
            or is None when there are more rows than grid points.
    """
    B = _as_matrix(B, 'basis')
    y = np.asarray(y, dtype=float)
    k, p = B.shape
    if y.shape[0] != p:
        raise ValueError(f"target has {y.shape[0]} entries for a basis of length {p}")
    if k > p:
        raise RankDeficient(f"{k} basis rows cannot be independent in dimension {p}", index=None)

    Q, R, piv = scipy.linalg.qr(B.T, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    threshold = PIVOT_RTOL * diag[0] if diag[0] > 0 else np.inf
    bad = np.flatnonzero(diag < threshold) if diag[0] > 0 else np.arange(k)
    if bad.size:
        index = int(piv[bad[0]])
        raise RankDeficient(f"basis row {index} is linearly dependent on the others", index=index)

    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    c = np.empty_like(z)
    c[piv] = z
    return c


def check_symmetric(V: np.ndarray, name: str = 'matrix') -> np.ndarray:
    V = _as_matrix(V, name)
    if V.shape[0] != V.shape[1]:
        raise ValueError(f"{name} must be square, got shape {V.shape}")
    scale = np.max(np.abs(V)) if V.size else 0.0
    if np.max(np.abs(V - V.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return V


@dataclass(frozen=True, eq=False)
class SpdFactorization:
    """Cholesky factor L of V (+ ridge * I), V = L L^T."""

    matrix: np.ndarray
    factor: np.ndarray
    ridge: float = 0.0

    def solve(self, R: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve((self.factor, True), R)

    def whiten(self, R: np.ndarray) -> np.ndarray:
        """L^{-1} R, so that ||L^{-1} r||^2 = r^T V^{-1} r."""
        return scipy.linalg.solve_triangular(self.factor, R, lower=True)

    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.factor))))


def cholesky(V: np.ndarray, ridge: float = 0.0) -> SpdFactorization:
    V = check_symmetric(V)
    q = V.shape[0]
    target = V + ridge * np.eye(q) if ridge else V
    try:
        L = scipy.linalg.cholesky(target, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"matrix of order {q} is not positive definite: {e}")
    if not np.all(np.diag(L) > 0):
        raise NotPositiveDefinite(f"matrix of order {q} has a vanishing Cholesky pivot")
    return SpdFactorization(V, L, ridge)


def base_ridge(trace: float, q: int) -> float:
    """Starting ridge for regularized retries: 1e-10 * trace / q (unit scale when the trace vanishes)."""
    level = trace / q if trace > 0 else 1.0
    return RIDGE_RTOL * level


def regularized_cholesky(V: np.ndarray) -> SpdFactorization:
    """Cholesky of V, retrying with V + eps*I and eps grown 100x up to three times."""
    V = check_symmetric(V)
    try:
        return cholesky(V)
    except NotPositiveDefinite:
        pass
    eps = base_ridge(float(np.trace(V)), V.shape[0])
    for attempt in range(RIDGE_ESCALATIONS):
        try:
            factorization = cholesky(V, ridge=eps)
            logger.warning(f"Covariance regularized with ridge {eps:.3e} (attempt {attempt + 1})")
            return factorization
        except NotPositiveDefinite:
            eps *= RIDGE_GROWTH
    raise NotPositiveDefinite(f"matrix of order {V.shape[0]} stays indefinite after {RIDGE_ESCALATIONS} ridge escalations")


def spd_solve(V: np.ndarray, R: np.ndarray) -> np.ndarray:
    """V^{-1} R through a Cholesky factorization of V."""
    return cholesky(V).solve(np.asarray(R, dtype=float))


def log_det_spd(V: np.ndarray) -> float:
    return cholesky(V).log_det()


class LowRankSpdFactorization:
    """Factorization of V = ridge * I + Z Z^T without forming V.

    With the thin QR Z = Q R and the eigen-decomposition
    ridge * I + R R^T = E diag(lam) E^T, V acts as Q E diag(lam) E^T Q^T on
    the range of Q and as ridge * I on its orthogonal complement.
    """

    def __init__(self, Z: np.ndarray, ridge: float):
        Z = _as_matrix(Z, 'low-rank factor')
        q, r = Z.shape
        if r > q:
            raise ValueError(f"low-rank factor with {r} columns exceeds order {q}")
        if not ridge > 0:
            raise NotPositiveDefinite(f"ridge {ridge} must be positive for a low-rank factorization")
        self.order = q
        self.ridge = float(ridge)
        self.Q, R = scipy.linalg.qr(Z, mode='economic')
        core = self.ridge * np.eye(r) + R @ R.T
        lam, self.E = scipy.linalg.eigh(core)
        if r and not lam[0] > 0:
            raise NotPositiveDefinite(f"low-rank core has eigenvalue {lam[0]}")
        self.lam = lam

    def _split(self, R: np.ndarray):
        R = np.asarray(R, dtype=float)
        t = self.Q.T @ R
        return t, R - self.Q @ t

    def _apply(self, R: np.ndarray, power: float) -> np.ndarray:
        t, perp = self._split(R)
        core = self.E @ ((self.lam ** power)[:, None] * (self.E.T @ t.reshape(t.shape[0], -1)))
        return self.Q @ core.reshape(t.shape) + perp * self.ridge ** power

    def solve(self, R: np.ndarray) -> np.ndarray:
        return self._apply(R, -1.0)

    def whiten(self, R: np.ndarray) -> np.ndarray:
        """V^{-1/2} R (symmetric inverse square root)."""
        return self._apply(R, -0.5)

    def log_det(self) -> float:
        r = self.lam.size
        return float(np.sum(np.log(self.lam)) + (self.order - r) * np.log(self.ridge))
