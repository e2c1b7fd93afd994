#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Mixing-weight estimators for spectra with randomly shifted or compressed sources.

    ols_fit          ordinary least squares against the references
    gls_fit          generalized least squares with a known covariance Q
    agls_fit         least squares against references plus their derivatives
    agls_scale_fit   same, with nu-weighted derivatives for compression/expansion
    agmle_hetero     iterative maximum likelihood, i.i.d. Gaussian shifts
    agmle_ar1        iterative maximum likelihood, AR(1) shifts across observations
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from Covariance import DENSE_LIMIT, CovarianceModel
from Numerics import RankDeficient, cholesky, lstsq
from Settings import parallel_map
from Spectrum import MixtureSet, SourceLibrary

logger = logging.getLogger('Estimators')

DIVISION_GUARD = 1e-8
RHO_CLAMP = 0.99
RHO_DENOMINATOR_FLOOR = 1e-12
VARIANCE_FLOOR = 1e-12
Z_95 = 1.959964


@dataclass(frozen=True)
class EstimatorConfig:
    max_iterations: int = 100
    tol: float = 1e-6           # relative max-norm change of A between iterations
    taylor_order: int = 1
    trim: int = 2               # samples dropped at each end of the grid
    ci_z: float = Z_95
    rho_override: Optional[Tuple[float, ...]] = None
    dense_limit: int = DENSE_LIMIT
    threads: Optional[int] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.taylor_order not in (1, 2):
            raise ValueError(f"taylor_order must be 1 or 2, got {self.taylor_order}")
        if self.trim < 0:
            raise ValueError(f"trim must be non-negative, got {self.trim}")
        if not self.ci_z > 0:
            raise ValueError(f"ci_z must be positive, got {self.ci_z}")
        if self.rho_override is not None:
            rho = tuple(float(r) for r in self.rho_override)
            if any(abs(r) >= 1 for r in rho):
                raise ValueError(f"rho_override entries must satisfy |rho| < 1, got {rho}")
            object.__setattr__(self, 'rho_override', rho)


@dataclass
class FitResult:
    method: str
    A_hat: np.ndarray
    deriv_weights: Optional[np.ndarray] = None
    Xi_hat: Optional[np.ndarray] = None
    sigma_hat: Optional[np.ndarray] = None
    tau_hat: Optional[float] = None
    rho_hat: Optional[np.ndarray] = None
    ci_half_width: Optional[np.ndarray] = None
    scale_hat: Optional[np.ndarray] = None
    iterations: int = 1
    converged: bool = True
    final_loglik: Optional[float] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.A_hat = np.atleast_2d(np.asarray(self.A_hat, dtype=float))
        m, n = self.A_hat.shape
        for name in ('deriv_weights', 'Xi_hat', 'ci_half_width'):
            value = getattr(self, name)
            if value is not None and np.shape(value) != (m, n):
                raise ValueError(f"{name} has shape {np.shape(value)}, expected {(m, n)}")
        for name in ('sigma_hat', 'rho_hat', 'scale_hat'):
            value = getattr(self, name)
            if value is not None and np.shape(value) != (n,):
                raise ValueError(f"{name} has shape {np.shape(value)}, expected {(n,)}")
        if self.ci_half_width is not None and np.any(self.ci_half_width < 0):
            raise ValueError("confidence half-widths must be non-negative")
        if self.sigma_hat is not None and np.any(self.sigma_hat < 0):
            raise ValueError("sigma_hat must be non-negative")
        if self.tau_hat is not None and self.tau_hat < 0:
            raise ValueError("tau_hat must be non-negative")
        if self.rho_hat is not None and np.any(np.abs(self.rho_hat) >= 1):
            raise ValueError("rho_hat must satisfy |rho| < 1")

    @property
    def m(self) -> int:
        return self.A_hat.shape[0]

    @property
    def n(self) -> int:
        return self.A_hat.shape[1]


def _check_inputs(X: MixtureSet, S: SourceLibrary) -> None:
    S.grid.require(X.grid, 'mixtures vs sources')


def _trim_slice(p: int, trim: int) -> slice:
    if p - 2 * trim < 3:
        raise ValueError(f"trimming {trim} samples per end leaves fewer than 3 of {p} grid points")
    return slice(trim, p - trim)


def _collinear_partner(basis: np.ndarray, index: int) -> Optional[int]:
    norms = np.linalg.norm(basis, axis=1)
    if basis.shape[0] < 2 or norms[index] == 0:
        return None
    with np.errstate(divide='ignore', invalid='ignore'):
        cosine = np.abs(basis @ basis[index]) / (norms * norms[index])
    cosine[index] = -np.inf
    cosine[~np.isfinite(cosine)] = -np.inf
    return int(np.argmax(cosine))


def _solve_basis(basis: np.ndarray, targets: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    """lstsq against a labelled basis; rank failures name the offending element and its closest partner."""
    try:
        return lstsq(basis, targets)
    except RankDeficient as e:
        if e.index is None or e.index >= len(labels):
            raise
        partner = _collinear_partner(basis, e.index)
        message = f"basis element {labels[e.index]!r} is linearly dependent on the others"
        if partner is not None:
            message += f" (nearly collinear with {labels[partner]!r})"
        logger.error(message)
        raise RankDeficient(message, index=e.index, partner=partner)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """numerator / denominator where |denominator| > 1e-8, NaN elsewhere."""
    out = np.full(np.shape(numerator), np.nan)
    np.divide(numerator, denominator, out=out, where=np.abs(denominator) > DIVISION_GUARD)
    return out


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = max(np.max(np.abs(old)), np.finfo(float).tiny)
    return float(np.max(np.abs(new - old)) / scale)


def ols_fit(X: MixtureSet, S: SourceLibrary) -> FitResult:
    """A = argmin ||X - A S||^2, row by row."""
    _check_inputs(X, S)
    C = _solve_basis(S.matrix, X.X.T, S.names)
    return FitResult('ols', C.T)


def gls_fit(X: MixtureSet, S: SourceLibrary, Q: np.ndarray) -> FitResult:
    """A = X Q^-1 S^T (S Q^-1 S^T)^-1, computed by whitening with the Cholesky factor of Q."""
    _check_inputs(X, S)
    Q = np.asarray(Q, dtype=float)
    p = X.grid.count
    if Q.shape != (p, p):
        raise ValueError(f"covariance Q has shape {Q.shape}, expected {(p, p)}")
    factorization = cholesky(Q)
    C = _solve_basis(factorization.whiten(S.matrix.T).T, factorization.whiten(X.X.T), S.names)
    return FitResult('gls', C.T)


def residual_covariance(X: MixtureSet, S: SourceLibrary) -> np.ndarray:
    """Diagonal Q from the per-point variance of the OLS residual, for feasible GLS."""
    residual = X.X - ols_fit(X, S).A_hat @ S.matrix
    variance = np.mean(residual ** 2, axis=0)
    floor = VARIANCE_FLOOR * max(float(np.mean(variance)), 1.0)
    return np.diag(np.maximum(variance, floor))


def _augmented_fit(X: MixtureSet, S: SourceLibrary, cfg: EstimatorConfig, nu_weighted: bool):
    _check_inputs(X, S)
    cols = _trim_slice(X.grid.count, cfg.trim)
    nu = X.grid.nu[cols]
    blocks = [S.matrix[:, cols], S.deriv_matrix[:, cols]]
    if cfg.taylor_order == 2:
        blocks.append(S.second_deriv_matrix()[:, cols])
    if nu_weighted:
        blocks = [block * nu ** order for order, block in enumerate(blocks)]
    suffixes = ['', "'", "''"]
    stride = len(blocks)
    basis = np.vstack([block[j] for j in range(S.n) for block in blocks])
    labels = [name + suffixes[order] for name in S.names for order in range(stride)]

    C = _solve_basis(basis, X.X[:, cols].T, labels).T
    A_hat = C[:, 0::stride]
    deriv_weights = C[:, 1::stride]
    diagnostics = {'trim': cfg.trim, 'basis_size': basis.shape[0]}
    if stride == 3:
        diagnostics['second_weights'] = C[:, 2::stride]
    return A_hat, deriv_weights, diagnostics


def agls_fit(X: MixtureSet, S: SourceLibrary, cfg: Optional[EstimatorConfig] = None) -> FitResult:
    """Augmented least squares: fit each mixture with the references and their derivatives.

    The derivative coefficients estimate a_ij * xi_ij, so Xi_hat is their
    ratio to the weights wherever the weight is not negligible (NaN otherwise).
    """
    cfg = cfg or EstimatorConfig()
    A_hat, deriv_weights, diagnostics = _augmented_fit(X, S, cfg, False)
    return FitResult('agls', A_hat, deriv_weights=deriv_weights, Xi_hat=_ratio(deriv_weights, A_hat),
                     diagnostics=diagnostics)


def agls_scale_fit(X: MixtureSet, S: SourceLibrary, cfg: Optional[EstimatorConfig] = None) -> FitResult:
    """Augmented least squares for compression/expansion s_j(v_j nu), v_j = 1 + delta_j.

    The basis pairs each reference with nu * s'_j; the derivative coefficients
    estimate a_ij * delta_j and the scale of each source is the median over
    mixtures of 1 + deriv_weight / weight.
    """
    cfg = cfg or EstimatorConfig()
    A_hat, deriv_weights, diagnostics = _augmented_fit(X, S, cfg, True)
    delta = _ratio(deriv_weights, A_hat)
    scale_hat = np.array([
        1.0 + np.median(column[np.isfinite(column)]) if np.any(np.isfinite(column)) else np.nan
        for column in delta.T
    ])
    diagnostics['delta_hat'] = delta
    return FitResult('agls-scale', A_hat, deriv_weights=deriv_weights, scale_hat=scale_hat,
                     diagnostics=diagnostics)


def _estimate_shifts(X: np.ndarray, A: np.ndarray, S: np.ndarray, D: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Per-row least squares of the residual X - A S against the rows a_ik s'_k."""
    m, n = A.shape
    R = X - A @ S
    Xi = np.zeros((m, n))
    flagged = []
    for i in range(m):
        active = np.abs(A[i]) > DIVISION_GUARD
        if not np.any(active):
            continue
        gamma = A[i, active][:, None] * D[active]
        try:
            Xi[i, active] = lstsq(gamma, R[i])
        except RankDeficient:
            flagged.append(i)
    return Xi, flagged


def estimate_shifts(X: MixtureSet, A: np.ndarray, S: SourceLibrary) -> np.ndarray:
    """Shift estimates Xi (m, n) given weights A; rank-deficient rows are left at zero."""
    _check_inputs(X, S)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (X.m, S.n):
        raise ValueError(f"weights have shape {A.shape}, expected {(X.m, S.n)}")
    Xi, flagged = _estimate_shifts(X.X, A, S.matrix, S.deriv_matrix)
    if flagged:
        logger.warning(f"Shift estimation was rank deficient for rows {flagged}; their shifts are set to 0")
    return Xi


def ar1_regress(xi_col: Sequence[float]) -> float:
    """Lag-one regression coefficient sum xi_i xi_{i-1} / sum xi_{i-1}^2, clamped to [-0.99, 0.99]."""
    xi = np.asarray(xi_col, dtype=float).reshape(-1)
    if xi.size < 3:
        raise ValueError(f"AR(1) regression needs at least 3 values, got {xi.size}")
    denominator = float(np.sum(xi[:-1] ** 2))
    if denominator <= RHO_DENOMINATOR_FLOOR:
        return 0.0
    return float(np.clip(np.sum(xi[1:] * xi[:-1]) / denominator, -RHO_CLAMP, RHO_CLAMP))


def _variance_diagonal(whitened_design: np.ndarray) -> np.ndarray:
    G = whitened_design.T @ whitened_design
    G = 0.5 * (G + G.T)
    return np.diag(cholesky(G).solve(np.eye(G.shape[0])))


def _rowwise_gls(model: CovarianceModel, S: np.ndarray, X: np.ndarray, names: Sequence[str],
                 threads: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    def solve_row(i: int):
        factorization = model.factor(i)
        Sw = factorization.whiten(S.T)
        a = _solve_basis(Sw.T, factorization.whiten(X[i]), names)
        return a, _variance_diagonal(Sw)

    rows = parallel_map(solve_row, range(X.shape[0]), threads)
    return np.vstack([a for a, _ in rows]), np.vstack([v for _, v in rows])


def _joint_gls(model: CovarianceModel, S: np.ndarray, X: np.ndarray, names: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """GLS over vec(X) (rows stacked in order) with a design coupling every row."""
    m, n = X.shape[0], S.shape[0]
    design = np.kron(np.eye(m), S.T)
    factorization = model.factor()
    Dw = factorization.whiten(design)
    labels = [f"row {i} {name}" for i in range(m) for name in names]
    a = _solve_basis(Dw.T, factorization.whiten(X.reshape(-1)), labels)
    return a.reshape(m, n), _variance_diagonal(Dw).reshape(m, n)


@dataclass
class _Iterate:
    A: np.ndarray
    variance: Optional[np.ndarray]
    Xi: np.ndarray
    sigma: np.ndarray
    tau: float
    rho: Optional[np.ndarray]
    loglik: float
    flagged: List[int]
    ridge_added: float


def _agmle(X: MixtureSet, S: SourceLibrary, cfg: EstimatorConfig, ar1: bool) -> FitResult:
    _check_inputs(X, S)
    method = 'agmle-ar1' if ar1 else 'agmle-hetero'
    cols = _trim_slice(X.grid.count, cfg.trim)
    Xt, St, Dt = X.X[:, cols], S.matrix[:, cols], S.deriv_matrix[:, cols]
    if ar1 and cfg.rho_override is not None and len(cfg.rho_override) != S.n:
        raise ValueError(f"rho_override needs {S.n} entries, got {len(cfg.rho_override)}")

    def evaluate(A, variance):
        """Shift, noise and correlation estimates at A, with the covariance model they define."""
        Xi, flagged = _estimate_shifts(Xt, A, St, Dt)
        sigma = np.sqrt(np.mean(Xi ** 2, axis=0))
        residual = Xt - A @ St - (A * Xi) @ Dt
        tau = float(np.sqrt(np.mean(residual ** 2)))
        rho = None
        if ar1:
            if cfg.rho_override is not None:
                rho = np.array(cfg.rho_override)
            else:
                rho = np.array([ar1_regress(Xi[:, k]) for k in range(S.n)])
        model = CovarianceModel(A, Dt, sigma, tau, rho=rho, dense_limit=cfg.dense_limit,
                                allow_degenerate=True, threads=cfg.threads)
        state = _Iterate(A, variance, Xi, sigma, tau, rho, model.loglik(Xt - A @ St), flagged, model.ridge_added)
        return state, model

    A = _solve_basis(St, Xt.T, S.names).T
    variance = None
    best = None
    converged = False
    for iteration in range(1, cfg.max_iterations + 1):
        current, model = evaluate(A, variance)
        if best is None or current.loglik > best.loglik:
            best = current

        if ar1:
            A_new, variance = _joint_gls(model, St, Xt, S.names)
        else:
            A_new, variance = _rowwise_gls(model, St, Xt, S.names, cfg.threads)
        change = _relative_change(A_new, A)
        logger.debug(f"{method} iteration {iteration}: sigma={current.sigma}, tau={current.tau:.4g}, "
                     f"rho={current.rho}, loglik={current.loglik:.6g}, change={change:.3e}")
        A = A_new
        if change < cfg.tol:
            converged = True
            break

    if converged:
        final, _ = evaluate(A, variance)
        logger.info(f"{method} converged after {iteration} iterations")
    else:
        final = best
        logger.warning(f"{method} did not converge in {cfg.max_iterations} iterations; "
                       f"returning the highest-likelihood iterate")
    if final.flagged:
        logger.warning(f"{method}: shift estimation was rank deficient for rows {final.flagged}")

    ci = None if final.variance is None else cfg.ci_z * np.sqrt(np.maximum(final.variance, 0.0))
    return FitResult(method, final.A, Xi_hat=final.Xi, sigma_hat=final.sigma, tau_hat=final.tau,
                     rho_hat=final.rho, ci_half_width=ci, iterations=iteration, converged=converged,
                     final_loglik=final.loglik,
                     diagnostics={'trim': cfg.trim, 'flagged_rows': list(final.flagged), 'last_change': change,
                                  'ridge_added': final.ridge_added})


def agmle_hetero(X: MixtureSet, S: SourceLibrary, cfg: Optional[EstimatorConfig] = None) -> FitResult:
    """Augmented maximum likelihood for i.i.d. Gaussian shifts.

    Alternates between (1) shift estimates from the current weights,
    (2) sigma_k = sqrt(mean_i xi_ik^2) and tau = RMS of the residual left after
    the fitted shift term, and (3) per-row GLS with the block covariance V_i,
    starting from OLS and stopping when the relative change of A drops below
    cfg.tol. CI half-widths are z * sqrt(diag((S V_i^-1 S^T)^-1)).
    """
    return _agmle(X, S, cfg or EstimatorConfig(), ar1=False)


def agmle_ar1(X: MixtureSet, S: SourceLibrary, cfg: Optional[EstimatorConfig] = None) -> FitResult:
    """Augmented maximum likelihood for shifts following an AR(1) process across observations.

    Same loop as agmle_hetero with rho_k regressed from each column of the
    shift estimates (or taken from cfg.rho_override) and a single GLS over
    vec(X) with the full covariance.
    """
    return _agmle(X, S, cfg or EstimatorConfig(), ar1=True)


ESTIMATORS = {
    'ols': lambda X, S, cfg: ols_fit(X, S),
    'agls': agls_fit,
    'agls-scale': agls_scale_fit,
    'agmle-hetero': agmle_hetero,
    'agmle-ar1': agmle_ar1,
}
