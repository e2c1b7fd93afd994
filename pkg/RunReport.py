#!/usr/bin/env python
# -*- coding: utf-8 -*-

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from Estimators import FitResult
from MatrixIO import read_matrix_csv, read_table_csv, write_matrix_csv, write_table_csv

logger = logging.getLogger('CLI')

WEIGHTS_FILE = 'fit_A.csv'
PARAMS_FILE = 'fit_params.csv'
DIAG_FILE = 'fit_diag.csv'
CI_FILE = 'fit_ci.csv'
XI_FILE = 'fit_xi.csv'
TRUTH_FILE = 'fit_truth.csv'
ALL_SOURCES = 'all'
NONE = 'none'


def _optional_float(value: Optional[float]) -> str:
    return NONE if value is None else repr(float(value))


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text == NONE else float(text)


def _cell(text: str) -> float:
    # NaN is written as an empty cell
    return float(text) if text else np.nan


@dataclass
class RunReport:
    """Everything one estimator run leaves behind, as saved in a report directory."""

    method: str
    A_hat: np.ndarray
    names: Tuple[str, ...]
    row_ids: np.ndarray
    truth: Optional[np.ndarray] = None
    sigma_hat: Optional[np.ndarray] = None
    tau_hat: Optional[float] = None
    rho_hat: Optional[np.ndarray] = None
    scale_hat: Optional[np.ndarray] = None
    ci_half_width: Optional[np.ndarray] = None
    Xi_hat: Optional[np.ndarray] = None
    iterations: int = 1
    converged: bool = True
    final_loglik: Optional[float] = None
    wall_time: float = 0.0
    data_fingerprint: str = ''
    flagged_rows: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.A_hat = np.atleast_2d(np.asarray(self.A_hat, dtype=float))
        self.names = tuple(self.names)
        self.row_ids = np.asarray(self.row_ids).reshape(-1)
        m, n = self.A_hat.shape
        if len(self.names) != n or self.row_ids.size != m:
            raise ValueError(f"report of shape {(m, n)} has {len(self.names)} names and {self.row_ids.size} row ids")
        if self.truth is not None and np.shape(self.truth) != (m, n):
            raise ValueError(f"truth has shape {np.shape(self.truth)}, expected {(m, n)}")

    @classmethod
    def from_fit(cls, fit: FitResult, names: Sequence[str], row_ids: Sequence[int],
                 truth: Optional[np.ndarray] = None, wall_time: float = 0.0,
                 data_fingerprint: str = '') -> 'RunReport':
        return cls(
            method=fit.method, A_hat=fit.A_hat, names=tuple(names), row_ids=np.asarray(row_ids), truth=truth,
            sigma_hat=fit.sigma_hat, tau_hat=fit.tau_hat, rho_hat=fit.rho_hat, scale_hat=fit.scale_hat,
            ci_half_width=fit.ci_half_width, Xi_hat=fit.Xi_hat, iterations=fit.iterations,
            converged=fit.converged, final_loglik=fit.final_loglik, wall_time=wall_time,
            data_fingerprint=data_fingerprint,
            flagged_rows=tuple(int(r) for r in fit.diagnostics.get('flagged_rows', ())),
        )

    def errors(self) -> Optional[np.ndarray]:
        """|A_hat - A| per entry, or None without ground truth."""
        return None if self.truth is None else np.abs(self.A_hat - self.truth)

    def params_table(self) -> pd.DataFrame:
        rows = []
        for parameter in ('sigma_hat', 'rho_hat', 'scale_hat'):
            values = getattr(self, parameter)
            if values is not None:
                rows += [(parameter, name, float(v)) for name, v in zip(self.names, values)]
        if self.tau_hat is not None:
            rows.append(('tau_hat', ALL_SOURCES, float(self.tau_hat)))
        return pd.DataFrame(rows, columns=['parameter', 'source', 'value'])

    def diag_table(self) -> pd.DataFrame:
        rows = [
            ('method', self.method),
            ('iterations', str(int(self.iterations))),
            ('converged', str(bool(self.converged))),
            ('final_loglik', _optional_float(self.final_loglik)),
            ('wall_time', repr(float(self.wall_time))),
            ('data_fingerprint', self.data_fingerprint or NONE),
            ('flagged_rows', ' '.join(str(r) for r in self.flagged_rows) or NONE),
        ]
        return pd.DataFrame(rows, columns=['key', 'value'])

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        write_matrix_csv(os.path.join(directory, WEIGHTS_FILE), self.A_hat, self.names, self.row_ids)
        write_table_csv(os.path.join(directory, PARAMS_FILE), self.params_table())
        write_table_csv(os.path.join(directory, DIAG_FILE), self.diag_table())
        for filename, matrix in ((CI_FILE, self.ci_half_width), (XI_FILE, self.Xi_hat), (TRUTH_FILE, self.truth)):
            path = os.path.join(directory, filename)
            if matrix is not None:
                write_matrix_csv(path, matrix, self.names, self.row_ids)
            elif os.path.exists(path):
                os.remove(path)
        logger.info(f"Saved {self.method} report to {directory}")

    @classmethod
    def load(cls, directory: str) -> 'RunReport':
        A_hat, names, row_ids = read_matrix_csv(os.path.join(directory, WEIGHTS_FILE))
        diag = dict(read_table_csv(os.path.join(directory, DIAG_FILE), text=True).itertuples(index=False))
        params = read_table_csv(os.path.join(directory, PARAMS_FILE), text=True)

        def vector(parameter: str) -> Optional[np.ndarray]:
            rows = params[params['parameter'] == parameter]
            if rows.empty:
                return None
            values = dict(zip(rows['source'], rows['value']))
            return np.array([_cell(values[name]) for name in names])

        tau_rows = params[params['parameter'] == 'tau_hat']
        optional = {}
        for key, filename in (('ci_half_width', CI_FILE), ('Xi_hat', XI_FILE), ('truth', TRUTH_FILE)):
            path = os.path.join(directory, filename)
            optional[key] = read_matrix_csv(path)[0] if os.path.isfile(path) else None
        fingerprint = diag.get('data_fingerprint', NONE)
        flagged = diag.get('flagged_rows', NONE)
        return cls(
            method=diag['method'], A_hat=A_hat, names=tuple(names), row_ids=row_ids,
            sigma_hat=vector('sigma_hat'), rho_hat=vector('rho_hat'), scale_hat=vector('scale_hat'),
            tau_hat=None if tau_rows.empty else _cell(tau_rows['value'].iloc[0]),
            iterations=int(diag['iterations']), converged=diag['converged'] == 'True',
            final_loglik=_parse_optional_float(diag['final_loglik']), wall_time=float(diag['wall_time']),
            data_fingerprint='' if fingerprint == NONE else fingerprint,
            flagged_rows=() if flagged == NONE else tuple(int(r) for r in flagged.split()),
            **optional,
        )

    def summary_rows(self) -> List[Tuple[str, object]]:
        rows = [('method', self.method), ('rows', self.A_hat.shape[0]), ('sources', ', '.join(self.names)),
                ('iterations', self.iterations), ('converged', self.converged)]
        if self.final_loglik is not None:
            rows.append(('final log-likelihood', f"{self.final_loglik:.6f}"))
        for parameter in ('sigma_hat', 'rho_hat', 'scale_hat'):
            values = getattr(self, parameter)
            if values is not None:
                rows.append((parameter, ', '.join(f"{v:.4f}" for v in values)))
        if self.tau_hat is not None:
            rows.append(('tau_hat', f"{self.tau_hat:.4f}"))
        errors = self.errors()
        if errors is not None:
            rows.append(('mean |A error|', f"{np.mean(errors):.6f}"))
            rows.append(('max |A error|', f"{np.max(errors):.6f}"))
        if self.flagged_rows:
            rows.append(('flagged rows', ' '.join(str(r) for r in self.flagged_rows)))
        rows.append(('wall time [s]', f"{self.wall_time:.3f}"))
        return rows


def compare_reports(reports: Sequence[RunReport]) -> Tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """Side-by-side tables for reports on the same data.

    Returns the per-method summary (mean/max absolute weight error when truth
    is present), the parameter table and the long-format plot table
    (row_id, source, method, estimate, truth), restricted to the rows every
    report covers.
    """
    if len(reports) < 2:
        raise ValueError(f"comparison needs at least 2 reports, got {len(reports)}")
    fingerprints = {report.data_fingerprint for report in reports}
    if len(fingerprints) != 1:
        raise ValueError(f"reports were computed on different data (fingerprints {sorted(fingerprints)})")
    names = reports[0].names
    if any(report.names != names for report in reports):
        raise ValueError("reports disagree on the source names")
    common = set(reports[0].row_ids.tolist())
    for report in reports[1:]:
        common &= set(report.row_ids.tolist())
    if not common:
        raise ValueError("reports share no rows")
    common = np.array(sorted(common))

    summary, params, long_rows = [], [], []
    for report in reports:
        position = {int(r): i for i, r in enumerate(report.row_ids)}
        index = np.array([position[int(r)] for r in common])
        A = report.A_hat[index]
        truth = None if report.truth is None else report.truth[index]
        errors = None if truth is None else np.abs(A - truth)
        summary.append({
            'method': report.method,
            'rows': common.size,
            'mean_abs_error': np.nan if errors is None else float(np.mean(errors)),
            'max_abs_error': np.nan if errors is None else float(np.max(errors)),
            'iterations': report.iterations,
            'converged': report.converged,
            'final_loglik': np.nan if report.final_loglik is None else report.final_loglik,
            'wall_time': report.wall_time,
        })
        table = report.params_table()
        table.insert(0, 'method', report.method)
        params.append(table)
        for i, row_id in enumerate(common):
            for j, name in enumerate(names):
                long_rows.append((int(row_id), name, report.method, A[i, j],
                                  np.nan if truth is None else truth[i, j]))

    return (pd.DataFrame(summary),
            pd.concat(params, ignore_index=True),
            pd.DataFrame(long_rows, columns=['row_id', 'source', 'method', 'estimate', 'truth']))
