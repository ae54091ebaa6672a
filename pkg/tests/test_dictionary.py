import json

import numpy as np
import pytest

from squintce.dictionary import (
    assemble_measurements,
    build_dft_wrd,
    build_learnable_wrd,
    dft_grid,
    init_learnable_grid,
    load_learnable_wrd,
    near_columns,
)
from squintce.frontend import gen_pilots
from squintce.geometry import ArrayGeometry, far_steering, near_steering, polar_to_cartesian, rayleigh_distance


def test_dft_grid_covers_period_once():
    g = dft_grid(8, 2)
    assert g.size == 16
    assert np.all((g >= -1) & (g < 1))
    assert np.allclose(np.sort(g), -1 + np.arange(16) / 8)
    assert g[0] == 0.0


def test_dft_grid_rejects_zero_redundancy():
    with pytest.raises(ValueError):
        dft_grid(8, 0)


def test_dft_wrd_columns_are_far_steering_vectors():
    geo = ArrayGeometry(8, 70e9, 10e9, 4)
    wrd = build_dft_wrd(geo, 2)
    assert wrd.columns.shape == (4, 8, 16)
    for v in (0, 3, 11):
        phi = np.arcsin(wrd.sin_grid[v])
        for k in range(1, 5):
            assert np.allclose(wrd.columns[k - 1, :, v], far_steering(geo, phi, k))


def test_rho_one_at_carrier_is_scaled_dft_matrix():
    geo = ArrayGeometry(8, 70e9, 0.0, 1)
    D = build_dft_wrd(geo, 1).columns[0]
    F = np.exp(-2j * np.pi * np.outer(np.arange(8), np.arange(8)) / 8)
    assert np.allclose(D, F)
    assert np.allclose(D.conj().T @ D, 8 * np.eye(8))


def test_frequency_flat_dictionary_repeats_centre_subcarrier():
    geo = ArrayGeometry(8, 70e9, 10e9, 5)
    flat = build_dft_wrd(geo, 2, freq_flat=True).columns
    dep = build_dft_wrd(geo, 2).columns
    for k in range(5):
        assert np.array_equal(flat[k], dep[2])
    assert not np.allclose(dep[0], dep[4])


def test_near_columns_match_near_steering():
    geo = ArrayGeometry(8, 70e9, 10e9, 3)
    d, a = np.array([0.5, 2.0]), np.array([0.3, -0.8])
    cols = near_columns(geo, d, a)
    for v in range(2):
        for k in range(1, 4):
            assert np.allclose(cols[k - 1, :, v], near_steering(geo, polar_to_cartesian(d[v], a[v]), k))


def test_near_columns_validation():
    geo = ArrayGeometry(4)
    with pytest.raises(ValueError):
        near_columns(geo, [1.0, 2.0], [0.1])
    with pytest.raises(ValueError):
        near_columns(geo, [0.0], [0.1])


def test_learnable_grid_json_roundtrip(tmp_path):
    geo = ArrayGeometry(8, n_subcarriers=4)
    d, a = init_learnable_grid(geo, 12, 3, min_distance_m=0.05)
    wrd = build_learnable_wrd(geo, d, a)
    path = tmp_path / "grid.json"
    wrd.save(path)
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and doc["V"] == 12
    back = load_learnable_wrd(geo, path)
    assert np.array_equal(back.distances, d) and np.array_equal(back.angles, a)
    assert np.array_equal(back.columns, wrd.columns)
    assert np.array_equal(load_learnable_wrd(geo, wrd.to_json()).columns, wrd.columns)


def test_learnable_grid_rejects_bad_documents():
    geo = ArrayGeometry(8)
    with pytest.raises(ValueError, match="version"):
        load_learnable_wrd(geo, json.dumps({"version": 2, "V": 1, "distances": [1.0], "angles_rad": [0.0]}))
    with pytest.raises(ValueError, match="length"):
        load_learnable_wrd(geo, json.dumps({"version": 1, "V": 2, "distances": [1.0], "angles_rad": [0.0]}))


def test_init_learnable_grid_ranges():
    geo = ArrayGeometry(64)
    d, a = init_learnable_grid(geo, 500, 0, min_distance_m=1.0)
    assert np.all((d >= 1.0) & (d <= 2 * rayleigh_distance(geo)))
    assert np.all(np.abs(a) <= np.pi / 2)
    with pytest.raises(ValueError):
        init_learnable_grid(geo, 0, 0)
    with pytest.raises(ValueError):
        init_learnable_grid(ArrayGeometry(4), 5, 0, min_distance_m=100.0)


def test_measurement_matrices_are_pilot_times_dictionary():
    geo = ArrayGeometry(8, 70e9, 10e9, 4)
    pilots = gen_pilots(geo, 6, 1)
    wrd = build_dft_wrd(geo, 2)
    ms = assemble_measurements(pilots, wrd)
    assert ms.shape == (4, 6, 16)
    S = pilots.composed()
    for k in range(4):
        assert np.allclose(ms.a[k], S[k] @ wrd.columns[k])
    with pytest.raises(ValueError):
        assemble_measurements(pilots, np.zeros((4, 7, 16)))
