"""Beam squint and the near/far boundary on a wideband array.

A steering vector built at the carrier frequency drifts away from the true
one as the subcarrier moves toward the band edge. This script prints how
much array gain a frequency-flat beam keeps across the band, and contrasts
spherical and planar wavefronts inside the Rayleigh distance.
"""

import numpy as np

from squintce.geometry import (
    ArrayGeometry,
    far_steering,
    near_steering,
    polar_to_cartesian,
    rayleigh_distance,
)

geo = ArrayGeometry(n_ap=128, carrier_freq_hz=70e9, bandwidth_hz=10e9, n_subcarriers=64)
aod = np.deg2rad(40.0)
centre = far_steering(geo, aod, geo.n_subcarriers // 2 + 1)

print("normalised gain of a carrier-frequency beam at each band position")
for k in (1, 16, 33, 48, 64):
    a_k = far_steering(geo, aod, k)
    gain = abs(np.vdot(centre, a_k)) / (np.linalg.norm(centre) * np.linalg.norm(a_k))
    print(f"  subcarrier {k:2d}: {gain:.3f}")

# narrowband: the same sweep at 1/70 fractional bandwidth stays near unity
narrow = ArrayGeometry(128, 70e9, 1e9, 64)
edge = abs(np.vdot(far_steering(narrow, aod, 33), far_steering(narrow, aod, 1))) / 128
print(f"edge gain at 1 GHz bandwidth: {edge:.3f}")

d_ray = rayleigh_distance(geo)
print(f"\nRayleigh distance: {d_ray:.2f} m")
for dist in (0.1 * d_ray, 0.5 * d_ray, 2 * d_ray, 20 * d_ray):
    a_near = near_steering(geo, polar_to_cartesian(dist, aod), 33)
    a_far = far_steering(geo, aod, 33)
    match = abs(np.vdot(a_far, a_near)) / (np.linalg.norm(a_far) * np.linalg.norm(a_near))
    print(f"  distance {dist:7.2f} m: planar-model match {match:.3f}")
