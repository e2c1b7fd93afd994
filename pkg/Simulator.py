#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Synthetic sources and distorted mixtures with known ground truth.

Mixtures follow the exact nonlinear model
    x_i = sum_j a_ij s_j(v_j (nu + xi_ij)) + N_i
evaluated with shift_resample/scale_resample, never with a Taylor
approximation. Shifts are i.i.d. Gaussian per source, an AR(1) process down
the observations (xi_0 = 0), or absent; scales are uniform per source or 1.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from Spectrum import Grid, MixtureSet, SourceLibrary, Spectrum, check_scale, scale_resample, shift_resample

logger = logging.getLogger('Simulator')

PEAK_SHAPES = ('gaussian', 'lorentzian')
SHIFT_MODELS = ('none', 'iid', 'ar1')
SCALE_MODELS = ('none', 'uniform')
MAX_REDRAWS = 100
MIN_WIDTH_STEPS = 3


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class PeakSpec:
    center: float
    width: float
    height: float
    shape: str = 'gaussian'

    def __post_init__(self):
        if self.shape not in PEAK_SHAPES:
            raise ValueError(f"peak shape must be one of {PEAK_SHAPES}, got {self.shape!r}")
        if not self.width > 0 or not self.height > 0:
            raise ValueError(f"peak width and height must be positive, got {self.width}, {self.height}")

    def evaluate(self, nu: np.ndarray) -> np.ndarray:
        if self.shape == 'gaussian':
            return self.height * np.exp(-(nu - self.center) ** 2 / (2 * self.width ** 2))
        return self.height * self.width ** 2 / ((nu - self.center) ** 2 + self.width ** 2)


@dataclass(frozen=True)
class SimConfig:
    n_sources: int
    m_observations: int
    grid: Grid
    peaks: Tuple[Tuple[PeakSpec, ...], ...]
    weight_low: float = 0.5
    weight_high: float = 1.5
    pinned_weights: Tuple[Optional[float], ...] = ()
    shift_model: str = 'none'
    sigma: Tuple[float, ...] = ()
    rho: Tuple[float, ...] = ()
    scale_model: str = 'none'
    scale_low: float = 0.8
    scale_high: float = 1.2
    tau: float = 0.0
    seed: int = 0

    def __post_init__(self):
        n = self.n_sources
        if n < 1 or self.m_observations < 1:
            raise ValueError("a simulation needs at least one source and one observation")
        peaks = tuple(tuple(source) for source in self.peaks)
        if len(peaks) != n or any(not source for source in peaks):
            raise ValueError(f"every one of the {n} sources needs at least one peak")
        lo, hi = self.grid.start, self.grid.start + self.grid.span
        for j, source in enumerate(peaks):
            for peak in source:
                if not lo <= peak.center <= hi:
                    raise ValueError(f"peak of source {j} at {peak.center} lies outside [{lo}, {hi}]")
                if peak.width < MIN_WIDTH_STEPS * self.grid.step:
                    raise ValueError(f"peak of source {j} is narrower than {MIN_WIDTH_STEPS} grid steps")
        object.__setattr__(self, 'peaks', peaks)

        if self.weight_low > self.weight_high:
            raise ValueError(f"weight range [{self.weight_low}, {self.weight_high}] is empty")
        pinned = tuple(self.pinned_weights) or (None,) * n
        if len(pinned) != n:
            raise ValueError(f"pinned_weights needs {n} entries, got {len(pinned)}")
        object.__setattr__(self, 'pinned_weights', pinned)

        if self.shift_model not in SHIFT_MODELS:
            raise ValueError(f"shift model must be one of {SHIFT_MODELS}, got {self.shift_model!r}")
        sigma = tuple(float(s) for s in self.sigma) or (0.0,) * n
        rho = tuple(float(r) for r in self.rho) or (0.0,) * n
        if len(sigma) != n or len(rho) != n:
            raise ValueError(f"sigma and rho need {n} entries each")
        if any(s < 0 for s in sigma):
            raise ValueError(f"shift deviations must be non-negative, got {sigma}")
        if any(abs(r) >= 1 for r in rho):
            raise ValueError(f"AR(1) coefficients must satisfy |rho| < 1, got {rho}")
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'rho', rho)

        if self.scale_model not in SCALE_MODELS:
            raise ValueError(f"scale model must be one of {SCALE_MODELS}, got {self.scale_model!r}")
        if self.scale_model == 'uniform':
            check_scale(self.scale_low)
            check_scale(self.scale_high)
            if self.scale_low > self.scale_high:
                raise ValueError(f"scale range ({self.scale_low}, {self.scale_high}) is empty")
        if self.tau < 0:
            raise ValueError(f"noise level tau must be non-negative, got {self.tau}")

    def with_seed(self, seed: int) -> 'SimConfig':
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    A: np.ndarray
    Xi: np.ndarray
    v: np.ndarray
    seed: int


def gen_sources(cfg: SimConfig) -> SourceLibrary:
    """Each source is the sum of its peaks on the configured grid."""
    nu = cfg.grid.nu
    sources = [
        Spectrum(cfg.grid, sum(peak.evaluate(nu) for peak in peaks), f"source_{j}")
        for j, peaks in enumerate(cfg.peaks)
    ]
    return SourceLibrary(tuple(sources))


def draw_shifts(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Shift matrix Xi (m, n) under the configured shift model.

    Draws with |xi| at or beyond a quarter of the grid span are redrawn; an
    entry needing more than 100 attempts aborts the simulation.
    """
    m, n = cfg.m_observations, cfg.n_sources
    limit = cfg.grid.span / 4
    sigma = np.array(cfg.sigma)
    Xi = np.zeros((m, n))
    if cfg.shift_model == 'none':
        return Xi

    def redraw(value: float, k: int, offset: float) -> float:
        attempts = 0
        while abs(value) >= limit:
            attempts += 1
            if attempts > MAX_REDRAWS:
                raise SimulationError(f"shift of source {k} exceeded {limit} after {MAX_REDRAWS} redraws; "
                                      f"sigma {sigma[k]} is too large for this grid")
            value = offset + sigma[k] * rng.standard_normal()
        return value

    if cfg.shift_model == 'iid':
        Xi = rng.standard_normal((m, n)) * sigma
        for i, k in zip(*np.nonzero(np.abs(Xi) >= limit)):
            Xi[i, k] = redraw(Xi[i, k], k, 0.0)
        return Xi

    rho = np.array(cfg.rho)
    previous = np.zeros(n)
    for i in range(m):
        Xi[i] = rho * previous + sigma * rng.standard_normal(n)
        for k in np.flatnonzero(np.abs(Xi[i]) >= limit):
            Xi[i, k] = redraw(Xi[i, k], k, rho[k] * previous[k])
        previous = Xi[i]
    return Xi


def gen_mixtures(lib: SourceLibrary, cfg: SimConfig) -> Tuple[MixtureSet, GroundTruth]:
    """Mixtures and the ground truth that produced them, reproducible from cfg.seed."""
    cfg.grid.require(lib.grid, 'simulation config vs sources')
    if lib.n != cfg.n_sources:
        raise ValueError(f"config has {cfg.n_sources} sources, library has {lib.n}")
    m, n, p = cfg.m_observations, cfg.n_sources, cfg.grid.count
    rng = np.random.default_rng(cfg.seed)

    A = rng.uniform(cfg.weight_low, cfg.weight_high, (m, n))
    for j, weight in enumerate(cfg.pinned_weights):
        if weight is not None:
            A[:, j] = weight
    Xi = draw_shifts(cfg, rng)
    if cfg.scale_model == 'uniform':
        v = rng.uniform(cfg.scale_low, cfg.scale_high, n)
    else:
        v = np.ones(n)
    noise = cfg.tau * rng.standard_normal((m, p))

    X = np.zeros((m, p))
    for j, source in enumerate(lib.sources):
        scaled = scale_resample(source, v[j])
        distorted = np.vstack([shift_resample(scaled, Xi[i, j]).values for i in range(m)])
        X += A[:, j:j + 1] * distorted
    X += noise

    logger.info(f"Simulated {m} mixtures of {n} sources on {p} points "
                f"(shifts: {cfg.shift_model}, scales: {cfg.scale_model}, tau={cfg.tau}, seed={cfg.seed})")
    return MixtureSet(cfg.grid, X), GroundTruth(A, Xi, v, cfg.seed)
