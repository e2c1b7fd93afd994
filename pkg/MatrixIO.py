#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""CSV files for spectra, mixtures and estimate matrices.

    spectrum    nu,value                       one row per grid point
    library     nu,<nu_0>,...,<nu_p-1>         one row per source, labelled by name
    mixtures    row_id,<nu_0>,...,<nu_p-1>     one row per mixture
    matrix      row_id,<column>,...            weights, shifts, truth tables

Floats are written with 17 significant digits and read back with
round-trip precision, so a write/read cycle reproduces every value exactly.
"""

import hashlib
import logging
import os
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from Spectrum import GRID_RTOL, Grid, MixtureSet, SourceLibrary, Spectrum

logger = logging.getLogger('CLI')

FLOAT_FORMAT = '%.17g'


def _label(value: float) -> str:
    return FLOAT_FORMAT % value


def _read(path: str) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"missing data file {path}")
    return pd.read_csv(path, float_precision='round_trip')


def _write(df: pd.DataFrame, path: str) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {df.shape[0]}x{df.shape[1]} table to {path}")


def grid_from_abscissae(nu: Sequence[float]) -> Grid:
    """The uniform grid through the given abscissae; rejects uneven spacing."""
    nu = np.asarray(nu, dtype=float)
    if nu.size < 3:
        raise ValueError(f"a grid needs at least 3 abscissae, got {nu.size}")
    step = (nu[-1] - nu[0]) / (nu.size - 1)
    expected = nu[0] + step * np.arange(nu.size)
    scale = max(abs(step), np.max(np.abs(nu)))
    if np.max(np.abs(nu - expected)) > GRID_RTOL * scale:
        raise ValueError("abscissae are not evenly spaced")
    return Grid(float(nu[0]), float(step), nu.size)


def _value_columns(df: pd.DataFrame, path: str) -> np.ndarray:
    try:
        return np.array([float(c) for c in df.columns[1:]])
    except ValueError:
        raise ValueError(f"{path}: header must list the grid abscissae after {df.columns[0]!r}")


def read_spectrum_csv(path: str, name: Optional[str] = None) -> Spectrum:
    df = _read(path)
    if list(df.columns) != ['nu', 'value']:
        raise ValueError(f"{path}: expected columns nu,value, got {','.join(df.columns)}")
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return Spectrum(grid_from_abscissae(df['nu'].to_numpy()), df['value'].to_numpy(dtype=float), name)


def write_spectrum_csv(path: str, s: Spectrum) -> None:
    _write(pd.DataFrame({'nu': s.grid.nu, 'value': s.values}), path)


def write_library_csv(path: str, grid: Grid, S: np.ndarray, names: Sequence[str]) -> None:
    df = pd.DataFrame(np.atleast_2d(S), columns=[_label(x) for x in grid.nu])
    df.insert(0, 'nu', list(names))
    _write(df, path)


def read_library_csv(path: str) -> SourceLibrary:
    df = _read(path)
    if df.columns[0] != 'nu':
        raise ValueError(f"{path}: first header cell must be 'nu'")
    grid = grid_from_abscissae(_value_columns(df, path))
    names = [str(name) for name in df['nu']]
    return SourceLibrary.from_matrix(grid, df.iloc[:, 1:].to_numpy(dtype=float), names)


def library_from_spectra(paths: Iterable[str]) -> SourceLibrary:
    """Library built from per-source nu,value files; each file name becomes the source name."""
    return SourceLibrary(tuple(read_spectrum_csv(path) for path in paths))


def write_mixtures_csv(path: str, X: MixtureSet, row_ids: Optional[Sequence[int]] = None) -> None:
    df = pd.DataFrame(X.X, columns=[_label(x) for x in X.grid.nu])
    df.insert(0, 'row_id', np.arange(X.m) if row_ids is None else list(row_ids))
    _write(df, path)


def read_mixtures_csv(path: str) -> Tuple[MixtureSet, np.ndarray]:
    """Mixtures and their row ids."""
    df = _read(path)
    if df.columns[0] != 'row_id':
        raise ValueError(f"{path}: first header cell must be 'row_id'")
    grid = grid_from_abscissae(_value_columns(df, path))
    return MixtureSet(grid, df.iloc[:, 1:].to_numpy(dtype=float)), df['row_id'].to_numpy()


def write_matrix_csv(path: str, M: np.ndarray, columns: Sequence[str], row_ids: Optional[Sequence[int]] = None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    df = pd.DataFrame(M, columns=list(columns))
    df.insert(0, 'row_id', np.arange(M.shape[0]) if row_ids is None else list(row_ids))
    _write(df, path)


def read_matrix_csv(path: str) -> Tuple[np.ndarray, List[str], np.ndarray]:
    """Matrix, column names and row ids of a row_id-indexed table."""
    df = _read(path)
    if df.columns[0] != 'row_id':
        raise ValueError(f"{path}: first header cell must be 'row_id'")
    return df.iloc[:, 1:].to_numpy(dtype=float), [str(c) for c in df.columns[1:]], df['row_id'].to_numpy()


def write_table_csv(path: str, df: pd.DataFrame) -> None:
    _write(df, path)


def read_table_csv(path: str, text: bool = False) -> pd.DataFrame:
    """A plain table; with text=True every cell is kept as the string written."""
    if not text:
        return _read(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"missing data file {path}")
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def file_fingerprint(*paths: str) -> str:
    """sha256 over the bytes of the given files, in order."""
    h = hashlib.sha256()
    for path in paths:
        with open(path, 'rb') as f:
            for chunk in iter(lambda: f.read(1 << 20), b''):
                h.update(chunk)
    return h.hexdigest()
