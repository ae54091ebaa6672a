"""Wideband redundant dictionaries (WRDs) and per-subcarrier measurement matrices.

All dictionaries are stored as arrays shaped (K, N_AP, V): one N_AP x V
matrix per subcarrier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frontend import PilotBlock
from .geometry import ArrayGeometry, polar_to_cartesian, rayleigh_distance


def dft_grid(n_ap: int, redundancy: int) -> np.ndarray:
    """sin(AoD) grid of the DFT WRD.

    Grid point v (0-based) sits at virtual angle v / (rho N_AP) of a full
    period; with the half-wavelength phase step pi*sin(phi) that period is
    sin(phi) in [0, 2), folded onto [-1, 1).
    """
    if redundancy < 1:
        raise ValueError("redundancy must be >= 1")
    u = 2.0 * np.arange(redundancy * n_ap) / (redundancy * n_ap)
    return np.where(u >= 1.0, u - 2.0, u)


@dataclass(frozen=True)
class DftWrd:
    geometry: ArrayGeometry
    redundancy: int
    columns: np.ndarray  # (K, N_AP, rho*N_AP)
    sin_grid: np.ndarray

    @property
    def n_columns(self) -> int:
        return self.columns.shape[-1]

    def matrices(self) -> np.ndarray:
        return self.columns


def _far_columns(geometry: ArrayGeometry, sin_grid: np.ndarray, freq_flat: bool) -> np.ndarray:
    lam_k = geometry.subcarrier_wavelengths()
    if freq_flat:
        lam_k = np.full_like(lam_k, lam_k[geometry.center_subcarrier() - 1])
    ratio = geometry.wavelength_m / lam_k
    n = np.arange(geometry.n_ap)
    return np.exp(-1j * np.pi * ratio[:, None, None] * n[None, :, None] * sin_grid[None, None, :])


def build_dft_wrd(geometry: ArrayGeometry, redundancy: int, freq_flat: bool = False) -> DftWrd:
    """Far-field WRD; ``freq_flat`` freezes every subcarrier to the centre one."""
    grid = dft_grid(geometry.n_ap, redundancy)
    return DftWrd(geometry=geometry, redundancy=redundancy, columns=_far_columns(geometry, grid, freq_flat), sin_grid=grid)


def near_columns(geometry: ArrayGeometry, distances: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Near-field steering columns for AoD-distance pairs, shape (K, N_AP, V)."""
    distances = np.asarray(distances, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if distances.shape != angles.shape or distances.ndim != 1:
        raise ValueError("distances and angles must be 1-D arrays of equal length")
    if np.any(distances <= 0):
        raise ValueError("grid distances must be positive")
    x, y = polar_to_cartesian(distances, angles)
    dist = np.hypot(x[None, :], geometry.antenna_y[:, None] - y[None, :])  # (N_AP, V)
    rel = dist - dist[0]
    lam_k = geometry.subcarrier_wavelengths()
    return np.exp(-2j * np.pi * rel[None, :, :] / lam_k[:, None, None])


@dataclass(frozen=True)
class LearnableWrd:
    geometry: ArrayGeometry
    distances: np.ndarray
    angles: np.ndarray
    columns: np.ndarray = field(repr=False)

    @property
    def n_columns(self) -> int:
        return self.distances.size

    def matrices(self) -> np.ndarray:
        return self.columns

    def to_json(self) -> str:
        return json.dumps(
            {"version": 1, "V": int(self.distances.size), "distances": self.distances.tolist(), "angles_rad": self.angles.tolist()},
            indent=2,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def build_learnable_wrd(geometry: ArrayGeometry, distances, angles) -> LearnableWrd:
    distances = np.array(distances, dtype=float)
    angles = np.array(angles, dtype=float)
    return LearnableWrd(geometry, distances, angles, near_columns(geometry, distances, angles))


def load_learnable_wrd(geometry: ArrayGeometry, path_or_text) -> LearnableWrd:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and not path_or_text.lstrip().startswith("{")):
        text = Path(path_or_text).read_text()
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported WRD grid version {doc.get('version')!r}")
    if len(doc["distances"]) != doc["V"] or len(doc["angles_rad"]) != doc["V"]:
        raise ValueError("grid length does not match V")
    return build_learnable_wrd(geometry, doc["distances"], doc["angles_rad"])


def init_learnable_grid(geometry: ArrayGeometry, n_columns: int, rng, min_distance_m: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Random (distances, angles): log-uniform in [d_min, 2 R] and U(-pi/2, pi/2)."""
    if n_columns < 1:
        raise ValueError("need at least one column")
    rng = np.random.default_rng(rng)
    d_hi = 2 * rayleigh_distance(geometry)
    if min_distance_m >= d_hi:
        raise ValueError("min distance exceeds the sampling range")
    angles = rng.uniform(-np.pi / 2, np.pi / 2, size=n_columns)
    distances = np.exp(rng.uniform(np.log(min_distance_m), np.log(d_hi), size=n_columns))
    return distances, angles


@dataclass(frozen=True)
class MeasurementSet:
    a: np.ndarray  # (K, G, V)
    pilots: PilotBlock
    dictionary: np.ndarray  # (K, N_AP, V)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.a.shape


def assemble_measurements(pilots: PilotBlock, wrd) -> MeasurementSet:
    """A[k] = S[k] D[k] for every subcarrier."""
    d = wrd.matrices() if hasattr(wrd, "matrices") else np.asarray(wrd)
    s = pilots.composed()
    if d.ndim != 3 or d.shape[0] != s.shape[0] or d.shape[1] != s.shape[2]:
        raise ValueError(f"dictionary shape {d.shape} incompatible with pilots S[k] shape {s.shape}")
    return MeasurementSet(a=s @ d, pilots=pilots, dictionary=d)
