#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Sampled spectra on uniform grids.

Holds the value types shared by every other module (Grid, Spectrum,
SourceLibrary, MixtureSet) and the forward nonlinear operations the
estimators linearize: derivatives, shift resampling and scale resampling.
Shifts are measured in abscissa units.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger('Spectra')

GRID_RTOL = 1e-9
SCALE_RANGE = (0.5, 2.0)


class GridMismatchError(ValueError):
    def __init__(self, expected: 'Grid', got: 'Grid', context: str = ''):
        self.expected = expected
        self.got = got
        where = f" ({context})" if context else ''
        super().__init__(f"Grid mismatch{where}: expected {expected}, got {got}")


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class Grid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.start) or not np.isfinite(self.step):
            raise ValueError("grid start and step must be finite")
        if self.step <= 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.count}")
        object.__setattr__(self, 'count', int(self.count))

    @property
    def nu(self) -> np.ndarray:
        """Abscissae of the grid points."""
        return self.start + self.step * np.arange(self.count)

    @property
    def span(self) -> float:
        return self.step * (self.count - 1)

    def matches(self, other: 'Grid') -> bool:
        scale = max(abs(self.step), abs(self.start), abs(self.start + self.span))
        return (self.count == other.count
                and abs(self.step - other.step) <= GRID_RTOL * self.step
                and abs(self.start - other.start) <= GRID_RTOL * scale)

    def require(self, other: 'Grid', context: str = '') -> None:
        if not self.matches(other):
            raise GridMismatchError(self, other, context)

    def __str__(self):
        return f"Grid(start={self.start!r}, step={self.step!r}, count={self.count})"


@dataclass(frozen=True, eq=False)
class Spectrum:
    grid: Grid
    values: np.ndarray
    name: str = ''

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.shape[0] != self.grid.count:
            raise ValueError(f"spectrum has {values.size} values for a {self.grid.count}-point grid")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"spectrum {self.name!r} contains non-finite values")
        object.__setattr__(self, 'values', values)

    def with_values(self, values: np.ndarray) -> 'Spectrum':
        return Spectrum(self.grid, values, self.name)


def derivative(s: Spectrum) -> Spectrum:
    """First derivative by central differences, one-sided at the two endpoints."""
    return s.with_values(np.gradient(s.values, s.grid.step, edge_order=1))


def resample_at(s: Spectrum, abscissae: np.ndarray) -> Spectrum:
    """Linear interpolation of s at arbitrary abscissae, holding edge values outside the grid."""
    return s.with_values(np.interp(abscissae, s.grid.nu, s.values))


def check_shift(grid: Grid, xi: float) -> None:
    if not np.isfinite(xi) or abs(xi) >= grid.span / 4:
        raise ValueError(f"shift {xi} must satisfy |xi| < {grid.span / 4} (a quarter of the grid span)")


def check_scale(v: float) -> None:
    low, high = SCALE_RANGE
    if not np.isfinite(v) or not low < v < high:
        raise ValueError(f"scale {v} must lie in ({low}, {high})")


def shift_resample(s: Spectrum, xi: float) -> Spectrum:
    """Evaluate s(nu + xi) on the original grid."""
    check_shift(s.grid, xi)
    if xi == 0:
        return s
    return resample_at(s, s.grid.nu + xi)


def scale_resample(s: Spectrum, v: float) -> Spectrum:
    """Evaluate s(v * nu) on the original grid."""
    check_scale(v)
    if v == 1:
        return s
    return resample_at(s, v * s.grid.nu)


@dataclass(frozen=True, eq=False)
class SourceLibrary:
    """Ordered reference spectra on one grid with their cached first derivatives."""

    sources: Tuple[Spectrum, ...]
    derivatives: Tuple[Spectrum, ...] = field(init=False)

    def __post_init__(self):
        sources = tuple(self.sources)
        if not sources:
            raise ValueError("a source library needs at least one source")
        grid = sources[0].grid
        for index, source in enumerate(sources):
            grid.require(source.grid, f"source {index}")
        named = tuple(
            source if source.name else Spectrum(source.grid, source.values, f"source_{index}")
            for index, source in enumerate(sources)
        )
        object.__setattr__(self, 'sources', named)
        object.__setattr__(self, 'derivatives', tuple(derivative(source) for source in named))

    @classmethod
    def from_matrix(cls, grid: Grid, S: np.ndarray, names: Optional[Sequence[str]] = None) -> 'SourceLibrary':
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if names is None:
            names = [f"source_{j}" for j in range(S.shape[0])]
        return cls(tuple(Spectrum(grid, row, name) for row, name in zip(S, names)))

    @property
    def grid(self) -> Grid:
        return self.sources[0].grid

    @property
    def n(self) -> int:
        return len(self.sources)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(source.name for source in self.sources)

    @property
    def matrix(self) -> np.ndarray:
        """S, shape (n, p)."""
        return np.vstack([source.values for source in self.sources])

    @property
    def deriv_matrix(self) -> np.ndarray:
        """S', shape (n, p)."""
        return np.vstack([d.values for d in self.derivatives])

    def second_deriv_matrix(self) -> np.ndarray:
        return np.vstack([derivative(d).values for d in self.derivatives])


@dataclass(frozen=True, eq=False)
class MixtureSet:
    """Observation matrix X (m, p) on a grid."""

    grid: Grid
    X: np.ndarray

    def __post_init__(self):
        X = _frozen(np.atleast_2d(self.X))
        if X.ndim != 2 or X.shape[1] != self.grid.count:
            raise ValueError(f"mixture matrix of shape {X.shape} does not fit a {self.grid.count}-point grid")
        if not np.all(np.isfinite(X)):
            raise ValueError("mixture matrix contains non-finite values")
        object.__setattr__(self, 'X', X)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def rows(self, start: int, stop: int) -> 'MixtureSet':
        if not 0 <= start < stop <= self.m:
            raise ValueError(f"row slice {start}:{stop} outside 0:{self.m}")
        return MixtureSet(self.grid, self.X[start:stop])
