"""Array geometry, steering vectors and hybrid near/far-field wideband channels.

Subcarriers are indexed 1..K. Subcarrier k sits at
``f_k = f_c + (k - (K+1)/2) * f_s / K`` so the band is centred on the carrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array at the access point, half-wavelength spaced at f_c."""

    n_ap: int
    carrier_freq_hz: float = 70e9
    bandwidth_hz: float = 10e9
    n_subcarriers: int = 64

    def __post_init__(self):
        if self.n_ap < 2:
            raise ValueError(f"n_ap must be >= 2, got {self.n_ap}")
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.carrier_freq_hz <= 0 or self.bandwidth_hz < 0:
            raise ValueError("carrier must be positive and bandwidth non-negative")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def antenna_spacing_m(self) -> float:
        return (SPEED_OF_LIGHT / self.carrier_freq_hz) / 2

    @property
    def antenna_y(self) -> np.ndarray:
        """y-coordinates of antennas 1..N_AP (all antennas sit at x = 0)."""
        lam = self.wavelength_m
        i = np.arange(1, self.n_ap + 1)
        return -lam / 4 + (i - self.n_ap / 2) * lam / 2

    @property
    def antenna_positions(self) -> np.ndarray:
        return np.column_stack([np.zeros(self.n_ap), self.antenna_y])

    def subcarrier_freqs(self) -> np.ndarray:
        k = np.arange(1, self.n_subcarriers + 1)
        return self.carrier_freq_hz + (k - (self.n_subcarriers + 1) / 2) * self.bandwidth_hz / self.n_subcarriers

    def subcarrier_wavelengths(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.subcarrier_freqs()

    def center_subcarrier(self) -> int:
        """1-based index of the subcarrier closest to f_c (lower one for even K)."""
        return (self.n_subcarriers + 1) // 2


def _check_k(geometry: ArrayGeometry, k: int) -> None:
    if not 1 <= k <= geometry.n_subcarriers:
        raise IndexError(f"subcarrier index {k} outside 1..{geometry.n_subcarriers}")


def subcarrier_wavelength(geometry: ArrayGeometry, k: int) -> float:
    _check_k(geometry, k)
    f_k = geometry.carrier_freq_hz + (k - (geometry.n_subcarriers + 1) / 2) * geometry.bandwidth_hz / geometry.n_subcarriers
    return SPEED_OF_LIGHT / f_k


def polar_to_cartesian(distance_m, aod_rad):
    """Map AoD-distance pairs to scatterer coordinates.

    The AoD is measured so that a distant point at angle phi produces the
    planar-wave phase progression of :func:`far_steering` at the same phi, i.e.
    ``y = -d sin(phi)`` given the antenna indexing along +y.
    """
    d = np.asarray(distance_m, dtype=float)
    phi = np.asarray(aod_rad, dtype=float)
    return d * np.cos(phi), -d * np.sin(phi)


def near_steering(geometry: ArrayGeometry, position: Sequence[float], k: int) -> np.ndarray:
    """Spherical-wave steering vector, referenced to antenna 1."""
    _check_k(geometry, k)
    x, y = float(position[0]), float(position[1])
    if x <= 0:
        raise ValueError(f"near-field scatterer needs x > 0, got x={x}")
    dist = np.hypot(x, geometry.antenna_y - y)
    if np.any(dist == 0):
        raise ValueError("scatterer position coincides with an antenna")
    rel = dist - dist[0]
    return np.exp(-2j * np.pi * rel / subcarrier_wavelength(geometry, k))


def far_steering(geometry: ArrayGeometry, aod_rad: float, k: int) -> np.ndarray:
    """Planar-wave steering vector; phase step grows with f_k (beam squint)."""
    _check_k(geometry, k)
    ratio = geometry.wavelength_m / subcarrier_wavelength(geometry, k)
    n = np.arange(geometry.n_ap)
    return np.exp(-1j * n * np.pi * ratio * np.sin(aod_rad))


def rayleigh_distance(geometry: ArrayGeometry, aperture: Literal["full", "half"] = "full") -> float:
    """Far-field boundary 2 D^2 / lambda_c.

    ``aperture="full"`` uses the whole array aperture D = (N_AP - 1) d.
    ``aperture="half"`` uses D/2 (equivalently D^2 / (2 lambda_c)), the
    convention that yields ~8.8 m / ~35 m for 128 / 256 elements at 70 GHz.
    """
    d_ap = (geometry.n_ap - 1) * geometry.antenna_spacing_m
    if aperture == "half":
        d_ap = d_ap / 2
    elif aperture != "full":
        raise ValueError(f"unknown aperture convention {aperture!r}")
    return 2 * d_ap**2 / geometry.wavelength_m


@dataclass(frozen=True)
class Scatterer:
    gain: complex
    delay_s: float
    kind: Literal["far", "near"]
    aod_rad: float | None = None
    position_m: tuple[float, float] | None = None

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("delay must be non-negative")
        if self.kind == "far":
            if self.aod_rad is None or self.position_m is not None:
                raise ValueError("far scatterers carry aod_rad only")
        elif self.kind == "near":
            if self.position_m is None:
                raise ValueError("near scatterers need a position")
            if self.position_m[0] <= 0:
                raise ValueError("near scatterers need x > 0")
        else:
            raise ValueError(f"unknown scatterer kind {self.kind!r}")

    @property
    def distance_m(self) -> float | None:
        if self.position_m is None:
            return None
        return float(np.hypot(*self.position_m))


ScattererSet = tuple[Scatterer, ...]


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray  # (N_AP, K)
    scatterers: ScattererSet


def steering(geometry: ArrayGeometry, scatterer: Scatterer, k: int) -> np.ndarray:
    if scatterer.kind == "far":
        return far_steering(geometry, scatterer.aod_rad, k)
    return near_steering(geometry, scatterer.position_m, k)


def steering_matrix(geometry: ArrayGeometry, scatterers: Sequence[Scatterer]) -> np.ndarray:
    """Steering vectors of all paths on all subcarriers, shape (L, N_AP, K).

    Vectorised twin of :func:`far_steering` / :func:`near_steering`.
    """
    lam_k = geometry.subcarrier_wavelengths()
    lam_c = geometry.wavelength_m
    n = np.arange(geometry.n_ap)
    y_ant = geometry.antenna_y
    out = np.empty((len(scatterers), geometry.n_ap, geometry.n_subcarriers), dtype=complex)
    for l, s in enumerate(scatterers):
        if s.kind == "far":
            path = n * np.pi * lam_c * np.sin(s.aod_rad)
        else:
            x, y = s.position_m
            dist = np.hypot(x, y_ant - y)
            if np.any(dist == 0):
                raise ValueError("scatterer position coincides with an antenna")
            path = 2 * np.pi * (dist - dist[0])
        out[l] = np.exp(-1j * path[:, None] / lam_k[None, :])
    return out


def channel_matrix(geometry: ArrayGeometry, scatterers: Sequence[Scatterer], n_paths: int | None = None) -> ChannelRealization:
    """Frequency-domain downlink channel H (N_AP x K).

    ``n_paths`` overrides the L used in the sqrt(1/(L N_AP)) normalisation,
    which lets partial path sets superpose to the full channel.
    """
    scatterers = tuple(scatterers)
    if not scatterers:
        raise ValueError("channel needs at least one scatterer")
    L = len(scatterers) if n_paths is None else n_paths
    k = np.arange(1, geometry.n_subcarriers + 1)
    gains = np.array([s.gain for s in scatterers], dtype=complex)
    delays = np.array([s.delay_s for s in scatterers])
    delay_phase = np.exp(-2j * np.pi * np.outer(delays, k) * geometry.bandwidth_hz / geometry.n_subcarriers)
    a = steering_matrix(geometry, scatterers)
    h = np.einsum("l,lk,lnk->nk", gains, delay_phase, a) * np.sqrt(1.0 / (L * geometry.n_ap))
    return ChannelRealization(h=h, scatterers=scatterers)


@dataclass(frozen=True)
class ScattererProfile:
    """Sampling policy for one channel realisation."""

    n_far: int = 6
    n_near: int = 0
    max_aod_rad: float = np.pi / 3
    max_delay_s: float = 6.4e-9
    min_distance_m: float = 1.0
    max_distance_m: float | None = None  # None -> rayleigh_distance(geometry)

    @property
    def n_paths(self) -> int:
        return self.n_far + self.n_near

    @classmethod
    def far_only(cls, n: int = 6, **kw) -> "ScattererProfile":
        return cls(n_far=n, n_near=0, **kw)

    @classmethod
    def near_only(cls, n: int = 6, **kw) -> "ScattererProfile":
        return cls(n_far=0, n_near=n, **kw)

    @classmethod
    def hybrid(cls, n_far: int = 3, n_near: int = 3, **kw) -> "ScattererProfile":
        return cls(n_far=n_far, n_near=n_near, **kw)


def sample_scatterers(geometry: ArrayGeometry, profile: ScattererProfile, rng) -> ScattererSet:
    """Draw one scatterer set. Near paths come first, matching the hybrid sum.

    ``rng`` is a seed or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(rng)
    if profile.n_far < 0 or profile.n_near < 0 or profile.n_paths == 0:
        raise ValueError("profile needs at least one path")
    if profile.max_delay_s * geometry.bandwidth_hz > geometry.n_subcarriers:
        raise ValueError(
            f"max delay {profile.max_delay_s:g}s spans more than K={geometry.n_subcarriers} taps at f_s={geometry.bandwidth_hz:g}Hz"
        )
    d_max = rayleigh_distance(geometry) if profile.max_distance_m is None else profile.max_distance_m
    if profile.n_near and profile.min_distance_m >= d_max:
        raise ValueError(f"min distance {profile.min_distance_m} m not below the near-field bound {d_max:.3f} m")

    def gain():
        return complex(rng.normal() + 1j * rng.normal()) / np.sqrt(2)

    out = []
    for _ in range(profile.n_near):
        phi = rng.uniform(-profile.max_aod_rad, profile.max_aod_rad)
        dist = rng.uniform(profile.min_distance_m, d_max)
        x, y = polar_to_cartesian(dist, phi)
        out.append(Scatterer(gain=gain(), delay_s=rng.uniform(0, profile.max_delay_s), kind="near", position_m=(float(x), float(y))))
    for _ in range(profile.n_far):
        phi = rng.uniform(-profile.max_aod_rad, profile.max_aod_rad)
        out.append(Scatterer(gain=gain(), delay_s=rng.uniform(0, profile.max_delay_s), kind="far", aod_rad=float(phi)))
    return tuple(out)
