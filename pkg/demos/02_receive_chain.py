"""Pilot measurements through the impaired receive chain.

Simulates one hybrid near/far channel, pushes the pilots through the
oversampled, IQ-imbalanced, low-resolution ADC path and compares the naive
de-quantized observation with the unquantized one.
"""

import numpy as np

from squintce.estimators import nmse, to_db
from squintce.frontend import QuantizerConfig, gen_pilots, receive
from squintce.geometry import ArrayGeometry, ScattererProfile, channel_matrix, sample_scatterers

rng = np.random.default_rng(7)
geo = ArrayGeometry(n_ap=64, bandwidth_hz=10e9, n_subcarriers=32)
profile = ScattererProfile.hybrid(3, 3, min_distance_m=0.05, max_delay_s=1.6e-9)
channel = channel_matrix(geo, sample_scatterers(geo, profile, rng))
print("scatterer kinds:", [s.kind for s in channel.scatterers])
print("near distances (m):", [round(s.distance_m, 2) for s in channel.scatterers if s.kind == "near"])

pilots = gen_pilots(geo, 16, rng)
print("pilot tensors", pilots.precoders.shape, pilots.symbols.shape)

for bits in (1, 2, 4, 8, None):
    cfg = QuantizerConfig.impaired(bits=bits) if bits else QuantizerConfig(oversampling=4)
    block = receive(channel, pilots, 10.0, cfg, np.random.default_rng(1))
    dist = to_db(nmse(block.freq, block.noisy))
    label = "inf" if bits is None else bits
    print(f"ADC bits {label!s:>3}: distortion vs unquantized pilots {float(dist):7.2f} dB")
