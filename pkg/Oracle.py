#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Exhaustive-search solver of the exact shifted mixing model.

For each mixture every tuple of candidate shifts (and, optionally, scales)
is tried: the references are resampled at the candidate distortion and the
weights solved by least squares. The tuple with the smallest residual wins.
Ties go to the tuple that is lexicographically smallest in |xi|.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from Estimators import FitResult
from Numerics import RankDeficient, lstsq
from Settings import parallel_map, thread_count
from Spectrum import MixtureSet, SourceLibrary, check_scale, check_shift, scale_resample, shift_resample

logger = logging.getLogger('Oracle')

MAX_SOURCES = 3
MAX_COMBINATIONS = 10 ** 6
TIE_RTOL = 1e-12
GRID_SLACK = 1e-9


@dataclass(frozen=True)
class OracleConfig:
    xi_max: float = 3.0
    xi_step: float = 0.25
    scale_low: Optional[float] = None
    scale_high: Optional[float] = None
    scale_step: Optional[float] = None
    per_row: bool = True
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.xi_step > 0:
            raise ValueError(f"xi_step must be positive, got {self.xi_step}")
        if self.xi_step > self.xi_max:
            raise ValueError(f"xi_step {self.xi_step} exceeds xi_max {self.xi_max}")
        scale = (self.scale_low, self.scale_high, self.scale_step)
        if any(value is not None for value in scale):
            if any(value is None for value in scale):
                raise ValueError("scale search needs scale_low, scale_high and scale_step together")
            check_scale(self.scale_low)
            check_scale(self.scale_high)
            if self.scale_low > self.scale_high or not self.scale_step > 0:
                raise ValueError(f"invalid scale range ({self.scale_low}, {self.scale_high}, step {self.scale_step})")

    @property
    def searches_scale(self) -> bool:
        return self.scale_step is not None

    def shift_candidates(self) -> np.ndarray:
        """k * xi_step for |k * xi_step| <= xi_max, ordered by |xi| then xi."""
        K = math.floor(self.xi_max / self.xi_step + GRID_SLACK)
        candidates = np.arange(-K, K + 1) * self.xi_step
        return candidates[np.lexsort((candidates, np.abs(candidates)))]

    def scale_candidates(self) -> np.ndarray:
        """Scales on the configured grid ordered by distance from 1; just [1] without a scale search."""
        if not self.searches_scale:
            return np.ones(1)
        K = math.floor((self.scale_high - self.scale_low) / self.scale_step + GRID_SLACK)
        candidates = self.scale_low + np.arange(K + 1) * self.scale_step
        return candidates[np.lexsort((candidates, np.abs(candidates - 1.0)))]


def _candidate_bases(S: SourceLibrary, scales: np.ndarray, shifts: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Distorted copy of every source for every (scale, shift) candidate.

    Returns one (c, p) array per source and the (c, 2) table of candidates,
    scale-major so that the identity scale is tried first.
    """
    pairs = np.array([(v, xi) for v in scales for xi in shifts])
    bases = []
    for source in S.sources:
        rows = []
        for v in scales:
            scaled = scale_resample(source, v)
            rows.extend(shift_resample(scaled, xi).values for xi in shifts)
        bases.append(np.vstack(rows))
    return bases, pairs


def _search(X: np.ndarray, bases: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best candidate tuple for each row of X (r, p).

    Returns the objective (r,), the winning candidate indices (r, n) and the
    weights (r, n).
    """
    r, n = X.shape[0], len(bases)
    count = bases[0].shape[0]
    best_obj = np.full(r, np.inf)
    best_idx = np.zeros((r, n), dtype=int)
    best_A = np.zeros((r, n))
    skipped = 0
    for combo in itertools.product(range(count), repeat=n):
        B = np.vstack([bases[j][c] for j, c in enumerate(combo)])
        try:
            C = lstsq(B, X.T)
        except RankDeficient:
            skipped += 1
            continue
        obj = np.sum((X - C.T @ B) ** 2, axis=1)
        better = obj < best_obj * (1.0 - TIE_RTOL)
        if np.any(better):
            best_obj[better] = obj[better]
            best_idx[better] = combo
            best_A[better] = C.T[better]
    if skipped:
        logger.debug(f"Skipped {skipped} rank-deficient candidate tuples")
    return best_obj, best_idx, best_A


def _search_shared(X: np.ndarray, bases: List[np.ndarray]) -> Tuple[float, Tuple[int, ...]]:
    """Best single candidate tuple for all rows of X, by summed objective."""
    count = bases[0].shape[0]
    best_total, best_combo = np.inf, None
    for combo in itertools.product(range(count), repeat=len(bases)):
        B = np.vstack([bases[j][c] for j, c in enumerate(combo)])
        try:
            C = lstsq(B, X.T)
        except RankDeficient:
            continue
        total = float(np.sum((X - C.T @ B) ** 2))
        if total < best_total * (1.0 - TIE_RTOL):
            best_total, best_combo = total, combo
    if best_combo is None:
        raise RankDeficient("every candidate tuple gave a rank-deficient basis")
    return best_total, best_combo


def oracle_fit(X: MixtureSet, S: SourceLibrary, cfg: Optional[OracleConfig] = None) -> FitResult:
    """Global minimizer of sum_i ||x_i - sum_j a_ij s_j(v_j (nu + xi_ij))||^2 over the candidate grid.

    With cfg.per_row (default) every mixture gets its own distortion tuple;
    otherwise one tuple is shared by all mixtures and the summed objective
    is minimized. Per-row objectives are returned in diagnostics['objective'].
    """
    cfg = cfg or OracleConfig()
    S.grid.require(X.grid, 'mixtures vs sources')
    n = S.n
    if n > MAX_SOURCES:
        raise ValueError(f"oracle search is limited to {MAX_SOURCES} sources, got {n}")
    check_shift(S.grid, cfg.xi_max)
    shifts, scales = cfg.shift_candidates(), cfg.scale_candidates()
    per_source = shifts.size * scales.size
    combinations = n * per_source ** n
    if combinations > MAX_COMBINATIONS:
        raise ValueError(f"oracle grid has {combinations} combinations per row, more than {MAX_COMBINATIONS}")

    bases, pairs = _candidate_bases(S, scales, shifts)
    logger.info(f"Oracle search over {per_source ** n} tuples for {X.m} rows "
                f"({'per row' if cfg.per_row else 'shared'})")

    if cfg.per_row:
        threads = thread_count() if cfg.threads is None else cfg.threads
        chunks = np.array_split(np.arange(X.m), max(1, min(threads, X.m)))
        results = parallel_map(lambda rows: _search(X.X[rows], bases), chunks, threads)
        objective = np.concatenate([obj for obj, _, _ in results])
        chosen = np.vstack([idx for _, idx, _ in results])
        A_hat = np.vstack([A for _, _, A in results])
        if not np.all(np.isfinite(objective)):
            raise RankDeficient("every candidate tuple gave a rank-deficient basis")
    else:
        total, combo = _search_shared(X.X, bases)
        chosen = np.tile(np.array(combo), (X.m, 1))
        B = np.vstack([bases[j][c] for j, c in enumerate(combo)])
        A_hat = lstsq(B, X.X.T).T
        objective = np.sum((X.X - A_hat @ B) ** 2, axis=1)
        logger.debug(f"Shared tuple objective {total:.6g}")

    Xi_hat = pairs[chosen, 1]
    row_scales = pairs[chosen, 0]
    diagnostics = {'objective': objective, 'candidates': per_source ** n}
    scale_hat = None
    if cfg.searches_scale:
        diagnostics['row_scales'] = row_scales
        scale_hat = np.median(row_scales, axis=0)
    return FitResult('oracle', A_hat, Xi_hat=Xi_hat, scale_hat=scale_hat, diagnostics=diagnostics)
