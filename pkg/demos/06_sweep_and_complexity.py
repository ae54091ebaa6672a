"""Deterministic NMSE sweep and closed-form operation counts.

Runs a small sweep through the harness, writes the CSV to a temporary
directory, and prints the per-estimator flop counts for the reference
configuration.
"""

import tempfile
from pathlib import Path

from squintce.harness import ExperimentConfig, complexity_report, read_metrics_csv, run_sweep

cfg = ExperimentConfig(
    n_ap=32,
    n_subcarriers=8,
    n_slots=16,
    redundancy=2,
    max_delay_s=None,
    snr_db=[0.0, 10.0],
    trials=40,
    estimators=["gmmv_amp", "somp"],
    dictionaries=["dft", "flat"],
    seed=11,
)
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "sweep.csv"
    res = run_sweep(cfg, out)
    for row in read_metrics_csv(out):
        print(f"{row['estimator']:9s} {row['dictionary']:5s} SNR {float(row['snr_db']):5.1f} dB -> {float(row['nmse_db']):7.2f} dB")
    if res.errors:
        print("failed cells:", res.errors)

print("\noperation counts at N_AP=128, G=32, K=64, rho=4, T=5")
for row in complexity_report(ExperimentConfig()):
    print(f"  {row['estimator']:10s} {row['flops']:.3e}")
