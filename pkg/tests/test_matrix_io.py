import numpy as np
import pytest
from numpy.testing import assert_array_equal

from MatrixIO import (file_fingerprint, grid_from_abscissae, library_from_spectra, read_library_csv, read_matrix_csv,
                      read_mixtures_csv, read_spectrum_csv, write_library_csv, write_matrix_csv, write_mixtures_csv,
                      write_spectrum_csv)
from Spectrum import Grid, MixtureSet, Spectrum


def test_mixtures_round_trip_exactly(tmp_path):
    rng = np.random.default_rng(0)
    grid = Grid(-3.5, 0.1, 40)
    X = MixtureSet(grid, rng.normal(size=(5, 40)) * 10.0 ** rng.integers(-8, 8, (5, 40)))
    path = str(tmp_path / 'mixtures.csv')
    write_mixtures_csv(path, X, row_ids=[10, 11, 12, 13, 14])
    read, row_ids = read_mixtures_csv(path)
    assert_array_equal(read.X, X.X)
    assert_array_equal(row_ids, [10, 11, 12, 13, 14])
    assert read.grid.matches(grid)


def test_matrix_round_trip_keeps_nan(tmp_path):
    M = np.array([[1.0 / 3.0, np.nan], [-2.5e-300, 7.0]])
    path = str(tmp_path / 'xi.csv')
    write_matrix_csv(path, M, ['water', 'lactate'])
    read, columns, row_ids = read_matrix_csv(path)
    assert columns == ['water', 'lactate']
    assert_array_equal(row_ids, [0, 1])
    assert np.isnan(read[0, 1])
    assert read[0, 0] == M[0, 0] and read[1, 0] == M[1, 0] and read[1, 1] == 7.0


def test_library_round_trip_keeps_names(tmp_path):
    grid = Grid(0.0, 0.5, 20)
    S = np.vstack([np.sin(grid.nu), np.cos(grid.nu)])
    path = str(tmp_path / 'sources.csv')
    write_library_csv(path, grid, S, ['water', 'lactate'])
    lib = read_library_csv(path)
    assert lib.names == ('water', 'lactate')
    assert_array_equal(lib.matrix, S)


def test_spectrum_files(tmp_path):
    grid = Grid(1.0, 0.25, 12)
    for name in ('alanine', 'glucose'):
        write_spectrum_csv(str(tmp_path / f'{name}.csv'), Spectrum(grid, np.arange(12.0)))
    lib = library_from_spectra([str(tmp_path / 'alanine.csv'), str(tmp_path / 'glucose.csv')])
    assert lib.names == ('alanine', 'glucose')
    assert read_spectrum_csv(str(tmp_path / 'alanine.csv'), name='ala').name == 'ala'


def test_uneven_or_malformed_files_are_rejected(tmp_path):
    path = tmp_path / 'uneven.csv'
    path.write_text("nu,value\n0,1\n1,2\n3,3\n")
    with pytest.raises(ValueError):
        read_spectrum_csv(str(path))
    with pytest.raises(ValueError):
        grid_from_abscissae([0.0, 1.0])
    bad = tmp_path / 'bad_header.csv'
    bad.write_text("id,0,1,2\n0,1,2,3\n")
    with pytest.raises(ValueError):
        read_mixtures_csv(str(bad))
    with pytest.raises(FileNotFoundError):
        read_mixtures_csv(str(tmp_path / 'absent.csv'))


def test_fingerprint_tracks_content(tmp_path):
    a, b = tmp_path / 'a.csv', tmp_path / 'b.csv'
    a.write_text("row_id,0\n0,1\n")
    b.write_text("row_id,0\n0,1\n")
    assert file_fingerprint(str(a)) == file_fingerprint(str(b))
    assert file_fingerprint(str(a), str(b)) != file_fingerprint(str(a))
    b.write_text("row_id,0\n0,2\n")
    assert file_fingerprint(str(a)) != file_fingerprint(str(b))
