"""Experiment configuration, dataset generation, sweeps, metrics and operation counts.

Randomness is derived from one root seed with counter-based
``SeedSequence`` spawn keys, so every trial can be regenerated on its own
and results do not depend on how trials are spread over threads.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dictionary import assemble_measurements, build_dft_wrd, load_learnable_wrd
from .estimators import (
    DEFAULT_DAMPING,
    BernoulliGaussianPrior,
    gmmv_amp,
    measurement_scale,
    moment_prior,
    nmse,
    normalize_measurements,
    somp,
    sparse_to_channel,
)
from .frontend import PilotBlock, QuantizerConfig, gen_pilots, receive, write_rx_blocks
from .geometry import ArrayGeometry, ScattererProfile, channel_matrix, sample_scatterers

log = logging.getLogger(__name__)

ENV_OUTPUT_DIR = "SQUINTCE_OUTPUT_DIR"
ENV_THREADS = "SQUINTCE_THREADS"
CSV_SCHEMA_VERSION = 1
CHUNK_TRIALS = 25  # fixed work unit; independent of the thread count

ESTIMATORS = ("somp", "gmmv_amp", "gmmv_lamp")
DICTIONARIES = ("dft", "flat", "learnable")
POLICIES = ("far", "near", "hybrid")

# spawn-key namespaces under the root seed
_KEY_PILOTS = 0
_KEY_TRIAL = 1
_KEY_SAMPLE = 2


@dataclass
class ExperimentConfig:
    # geometry
    n_ap: int = 128
    carrier_freq_hz: float = 70e9
    bandwidth_hz: float = 10e9
    n_subcarriers: int = 64
    # scatterers
    policy: str = "far"
    n_paths: int = 6  # far/near policies
    n_far: int = 3  # hybrid policy
    n_near: int = 3
    max_aod_deg: float = 60.0
    max_delay_s: float | None = 6.4e-9  # clipped to K / f_s; None means K / f_s
    min_distance_m: float = 1.0
    # pilots and front end
    n_slots: int = 32
    n_rf: int = 2
    snr_db: list = field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0])
    front_end: str = "ideal"  # "ideal" (pass-through) or "impaired"
    adc_bits: int | None = 2
    oversampling: int = 4
    iq_gain_error: float = 0.1
    iq_phase_error_deg: float = 5.0
    # recovery
    estimators: list = field(default_factory=lambda: ["gmmv_amp"])
    dictionaries: list = field(default_factory=lambda: ["dft", "flat"])
    redundancy: int = 4
    grid_path: str | None = None  # learnable WRD grid JSON
    amp_iterations: int = 80
    damping: float = DEFAULT_DAMPING
    gamma: float | None = None  # None: 2 L / V
    epsilon: float | None = None  # None: moment-matched to the received energy
    layers: int = 5
    lamp_checkpoint: str | None = None
    # bookkeeping
    trials: int = 100
    seed: int = 0
    threads: int = 1
    record_wall_time: bool = False
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.geometry()
        self.profile()
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.front_end not in ("ideal", "impaired"):
            raise ValueError("front_end must be 'ideal' or 'impaired'")
        self.quantizer()
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}")
        for d in self.dictionaries:
            if d not in DICTIONARIES:
                raise ValueError(f"unknown dictionary {d!r}")
        if self.redundancy < 1 or self.n_slots < 1 or self.n_rf < 1:
            raise ValueError("redundancy, n_slots and n_rf must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if not self.snr_db:
            raise ValueError("snr grid is empty")

    # -- derived objects --

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_ap, self.carrier_freq_hz, self.bandwidth_hz, self.n_subcarriers)

    def profile(self) -> ScattererProfile:
        span = self.n_subcarriers / self.bandwidth_hz if self.bandwidth_hz > 0 else math.inf
        max_delay = span if self.max_delay_s is None else min(self.max_delay_s, span)
        kw = dict(max_aod_rad=np.deg2rad(self.max_aod_deg), max_delay_s=max_delay, min_distance_m=self.min_distance_m)
        if self.policy == "far":
            return ScattererProfile.far_only(self.n_paths, **kw)
        if self.policy == "near":
            return ScattererProfile.near_only(self.n_paths, **kw)
        return ScattererProfile.hybrid(self.n_far, self.n_near, **kw)

    def quantizer(self) -> QuantizerConfig:
        if self.front_end == "ideal":
            return QuantizerConfig()
        return QuantizerConfig(self.adc_bits, self.oversampling, self.iq_gain_error, np.deg2rad(self.iq_phase_error_deg))

    def pilots(self) -> PilotBlock:
        return gen_pilots(self.geometry(), self.n_slots, _rng(self.seed, _KEY_PILOTS), self.n_rf)

    # -- serialisation --

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def content_hash(self) -> str:
        """Hash of every field except execution-only settings."""
        d = self.to_dict()
        for k in ("threads", "output_dir"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_env(self, environ=None) -> "ExperimentConfig":
        """Apply the output-directory and thread-count environment overrides."""
        environ = os.environ if environ is None else environ
        changes = {}
        if environ.get(ENV_OUTPUT_DIR):
            changes["output_dir"] = environ[ENV_OUTPUT_DIR]
        if environ.get(ENV_THREADS):
            changes["threads"] = int(environ[ENV_THREADS])
        return dataclasses.replace(self, **changes)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def default_gamma(config: ExperimentConfig, n_columns: int) -> float:
    """Activity rate for a grid of ``n_columns``: each path leaks into about two columns."""
    return min(0.5, 2.0 * config.profile().n_paths / n_columns)


# --- trials and datasets ---------------------------------------------------------


@dataclass
class Trial:
    scatterers: tuple
    h: np.ndarray  # (N_AP, K)
    clean: np.ndarray  # (G, K)
    received: list  # per SNR: ReceivedBlock


def draw_trial(config: ExperimentConfig, pilots: PilotBlock, index: int, snrs=None, key=_KEY_TRIAL) -> Trial:
    """Channel of trial ``index`` plus one received block per SNR.

    The channel depends only on (seed, index), so all SNR points and all
    estimators see the same realisation.
    """
    geo = config.geometry()
    snrs = config.snr_db if snrs is None else snrs
    scat = sample_scatterers(geo, config.profile(), _rng(config.seed, key, index, 0))
    ch = channel_matrix(geo, scat)
    q = config.quantizer()
    blocks = [receive(ch, pilots, float(snr), q, _rng(config.seed, key, index, 1, j)) for j, snr in enumerate(snrs)]
    return Trial(scat, ch.h, blocks[0].clean, blocks)


def _file_sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def gen_dataset(config: ExperimentConfig, count: int, seed: int, out_dir) -> Path:
    """Write ``count`` samples at the first SNR of the grid to ``out_dir``.

    Files: one ``.npy`` file per array
    (channels, clean and received pilots, scatterer tables, pilots), the
    quantized time-domain blocks in the binary RX format (``rx.bin``) and a
    ``manifest.json`` carrying the config and a content hash over all files.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cfg = dataclasses.replace(config, seed=seed)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"dataset directory {out} is not writable: {exc}") from exc
    pilots = cfg.pilots()
    snr = float(cfg.snr_db[0])
    L = cfg.profile().n_paths
    arrays = {
        "h": np.empty((count, cfg.n_ap, cfg.n_subcarriers), complex),
        "y_clean": np.empty((count, cfg.n_slots, cfg.n_subcarriers), complex),
        "y": np.empty((count, cfg.n_slots, cfg.n_subcarriers), complex),
        "noise_power": np.empty(count),
        "scatterer_kind": np.empty((count, L), "U4"),
        "scatterer_gain": np.empty((count, L), complex),
        "scatterer_delay_s": np.empty((count, L)),
        "scatterer_aod_rad": np.full((count, L), np.nan),
        "scatterer_xy_m": np.full((count, L, 2), np.nan),
    }
    W = cfg.quantizer().oversampling
    rx = np.empty((count, cfg.n_slots, W, cfg.n_subcarriers), complex)
    for i in range(count):
        tr = draw_trial(cfg, pilots, i, [snr], key=_KEY_SAMPLE)
        blk = tr.received[0]
        arrays["h"][i], arrays["y_clean"][i], arrays["y"][i] = tr.h, blk.clean, blk.freq
        arrays["noise_power"][i] = blk.noise_power
        rx[i] = blk.time_quantized
        for l, s in enumerate(tr.scatterers):
            arrays["scatterer_kind"][i, l] = s.kind
            arrays["scatterer_gain"][i, l] = s.gain
            arrays["scatterer_delay_s"][i, l] = s.delay_s
            if s.kind == "far":
                arrays["scatterer_aod_rad"][i, l] = s.aod_rad
            else:
                arrays["scatterer_xy_m"][i, l] = s.position_m
    arrays["pilot_precoders"] = pilots.precoders
    arrays["pilot_symbols"] = pilots.symbols
    files = {}
    for name, arr in arrays.items():
        path = out / f"{name}.npy"
        np.save(path, arr, allow_pickle=False)
        files[path.name] = _file_sha(path)
    write_rx_blocks(out / "rx.bin", rx, cfg.n_ap, cfg.quantizer())
    files["rx.bin"] = _file_sha(out / "rx.bin")
    digest = hashlib.sha256(cfg.content_hash().encode())
    for name in sorted(files):
        digest.update(f"{name}:{files[name]}".encode())
    manifest = {
        "format_version": 1,
        "count": count,
        "seed": seed,
        "snr_db": snr,
        "policy": cfg.policy,
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "files": files,
        "content_hash": digest.hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(path) -> tuple[dict, dict]:
    """(manifest, arrays) of a directory written by :func:`gen_dataset`; hashes are verified."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    arrays = {}
    for name, sha in manifest["files"].items():
        if _file_sha(path / name) != sha:
            raise ValueError(f"{name} does not match its manifest hash")
        if name.endswith(".npy"):
            arrays[name[:-4]] = np.load(path / name, allow_pickle=False)
    return manifest, arrays


# --- estimation -----------------------------------------------------------------------


class CellError(ValueError):
    pass


@dataclass
class Recovery:
    """Dictionary-specific measurement setup shared by every trial of a cell."""

    dictionary: np.ndarray  # (K, N_AP, V)
    a: np.ndarray  # (K, G, V)
    lamp: object = None  # (operator, params) for gmmv_lamp


def build_recovery(config: ExperimentConfig, pilots: PilotBlock, dictionary: str, with_lamp: bool = False) -> Recovery:
    geo = config.geometry()
    lamp = None
    if with_lamp:
        from .lamp import GridOperator, load_checkpoint

        if config.lamp_checkpoint is None:
            raise CellError("gmmv_lamp needs lamp_checkpoint")
        params = load_checkpoint(config.lamp_checkpoint)
        meta = json.loads(Path(str(config.lamp_checkpoint) + ".json").read_text())
    if dictionary == "learnable":
        if with_lamp and params.grid is not None:
            from .dictionary import build_learnable_wrd

            wrd = build_learnable_wrd(geo, *params.grid)
        elif config.grid_path is not None:
            wrd = load_learnable_wrd(geo, config.grid_path)
        else:
            raise CellError("learnable dictionary needs grid_path or a checkpoint with a grid")
    else:
        wrd = build_dft_wrd(geo, config.redundancy, freq_flat=(dictionary == "flat"))
    ms = assemble_measurements(pilots, wrd)
    if with_lamp:
        T, G, V, K = params.shape
        if (K, G, V) != ms.a.shape:
            raise CellError(f"checkpoint (K, G, V) = {(K, G, V)} does not match measurements {ms.a.shape}")
        scale = meta.get("measurement_scale") or measurement_scale(ms.a)
        if params.grid is not None:
            lamp = (GridOperator(geo, pilots.composed(), scale), params, scale)
        else:
            lamp = (ms.a / scale, params, scale)
    return Recovery(ms.dictionary, ms.a, lamp)


def estimate_channels(config: ExperimentConfig, estimator: str, rec: Recovery, Y: np.ndarray) -> np.ndarray:
    """Spatial-frequency estimates (S, N_AP, K) for received pilots Y (S, G, K)."""
    if estimator == "gmmv_amp":
        Yn, An, _ = normalize_measurements(Y, rec.a)
        V = rec.a.shape[2]
        gamma = default_gamma(config, V) if config.gamma is None else config.gamma
        prior = BernoulliGaussianPrior(gamma, config.epsilon) if config.epsilon is not None else moment_prior(Yn, An, gamma)
        H = gmmv_amp(Yn, An, prior, config.amp_iterations, config.damping)
        return sparse_to_channel(H, rec.dictionary)
    if estimator == "somp":
        L = config.profile().n_paths
        return np.stack([sparse_to_channel(somp(y, rec.a, L), rec.dictionary) for y in Y])
    if estimator == "gmmv_lamp":
        from .lamp import lamp_dictionary, lamp_forward

        op, params, scale = rec.lamp
        H = lamp_forward(Y / scale, op, params).estimate
        return sparse_to_channel(H, lamp_dictionary(op, params, rec.dictionary))
    raise CellError(f"unknown estimator {estimator!r}")


# --- sweeps ------------------------------------------------------------------------------


@dataclass
class MetricsRecord:
    estimator: str
    dictionary: str
    snr_db: float
    bandwidth_hz: float
    n_ap: int
    g: int
    nmse_db: float
    trials: int
    wall_time_s: float | None
    seed: int

    def __post_init__(self):
        if not math.isfinite(self.nmse_db):
            raise ValueError("nmse_db must be finite")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


CSV_COLUMNS = [f.name for f in dataclasses.fields(MetricsRecord)]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@dataclass
class SweepResult:
    records: list[MetricsRecord]
    errors: dict  # "estimator/dictionary" -> message
    csv_path: Path | None = None


def run_sweep(config: ExperimentConfig, out_path=None) -> SweepResult:
    """NMSE for every (snr, estimator, dictionary) cell, averaged over trials.

    Trials run in fixed chunks of :data:`CHUNK_TRIALS` on ``config.threads``
    worker threads; per-trial NMSEs are stored by trial index and summed in
    index order with ``math.fsum``, so the CSV does not depend on threading.
    Cells whose estimator/dictionary cannot be set up are reported in
    ``errors`` and skipped.
    """
    pilots = config.pilots()
    cells, errors = {}, {}
    for d in config.dictionaries:
        for e in config.estimators:
            try:
                cells[(e, d)] = build_recovery(config, pilots, d, with_lamp=(e == "gmmv_lamp"))
            except (CellError, ValueError, OSError) as exc:
                errors[f"{e}/{d}"] = str(exc)
                log.warning("cell %s/%s skipped: %s", e, d, exc)
    n_snr = len(config.snr_db)
    results = {key: np.empty((n_snr, config.trials)) for key in cells}
    timings = {key: np.zeros(n_snr) for key in cells}

    def run_chunk(start: int):
        stop = min(start + CHUNK_TRIALS, config.trials)
        trials = [draw_trial(config, pilots, i) for i in range(start, stop)]
        H = np.stack([t.h for t in trials])
        out = {}
        for key, rec in cells.items():
            vals = np.empty((n_snr, stop - start))
            secs = np.zeros(n_snr)
            for j in range(n_snr):
                Y = np.stack([t.received[j].freq for t in trials])
                t0 = time.perf_counter()
                try:
                    est = estimate_channels(config, key[0], rec, Y)
                except (ValueError, np.linalg.LinAlgError) as exc:
                    out[key] = f"trial {start}..{stop - 1}, snr {config.snr_db[j]}: {exc}"
                    break
                secs[j] = time.perf_counter() - t0
                vals[j] = nmse(est, H)
            else:
                out[key] = (vals, secs)
        return start, stop, out

    starts = range(0, config.trials, CHUNK_TRIALS)
    if config.threads == 1:
        chunks = [run_chunk(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(run_chunk, starts))
    for start, stop, out in chunks:
        for key, res in out.items():
            if isinstance(res, str):
                errors.setdefault(f"{key[0]}/{key[1]}", res)
                continue
            results[key][:, start:stop] = res[0]
            timings[key] += res[1]
    for name in errors:
        results.pop(tuple(name.split("/")), None)

    records = []
    for j, snr in enumerate(config.snr_db):
        for (e, d), vals in results.items():
            mean = math.fsum(vals[j]) / config.trials
            records.append(
                MetricsRecord(
                    estimator=e,
                    dictionary=d,
                    snr_db=float(snr),
                    bandwidth_hz=float(config.bandwidth_hz),
                    n_ap=config.n_ap,
                    g=config.n_slots,
                    nmse_db=10 * math.log10(mean),
                    trials=config.trials,
                    wall_time_s=float(timings[(e, d)][j]) if config.record_wall_time else None,
                    seed=config.seed,
                )
            )
    res = SweepResult(records, errors)
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(records_to_csv(records))
        sidecar = {"schema_version": CSV_SCHEMA_VERSION, "columns": CSV_COLUMNS, "config_hash": config.content_hash(), "errors": errors}
        Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        res.csv_path = out_path
    return res


# --- operation counts --------------------------------------------------------------------


def somp_flops(G: int, V: int, K: int, I: int) -> float:
    return G * V * K * I + I**2 * (I + 1) ** 2 / 4 + G * I * (I + 1) * (2 * I + 1) / 3 + G * K * I * (I + 1) / 2 + V * K * I


def amp_flops(G: int, V: int, K: int, N: int, iterations: int) -> int:
    """GMMV-AMP and MMV-AMP share this count."""
    return G * V * K * iterations + G * N * K


def lamp_flops(G: int, V: int, K: int, N: int, layers: int) -> int:
    return (G * V * K + K * K) * layers + G * N * K


def complexity_report(config: ExperimentConfig, n_columns: int | None = None) -> list[dict]:
    """Closed-form operation counts of each estimator for this configuration."""
    G, K, N = config.n_slots, config.n_subcarriers, config.n_ap
    V = config.redundancy * N if n_columns is None else n_columns
    T0, T, I = config.amp_iterations, config.layers, config.profile().n_paths
    return [
        {"estimator": "somp", "iterations": I, "flops": somp_flops(G, V, K, I), "dominant_term": G * V * K * I},
        {"estimator": "mmv_amp", "iterations": T0, "flops": amp_flops(G, V, K, N, T0), "dominant_term": G * V * K * T0},
        {"estimator": "gmmv_amp", "iterations": T0, "flops": amp_flops(G, V, K, N, T0), "dominant_term": G * V * K * T0},
        {"estimator": "mmv_lamp", "iterations": T, "flops": G * V * K * T + G * N * K, "dominant_term": G * V * K * T},
        {"estimator": "gmmv_lamp", "iterations": T, "flops": lamp_flops(G, V, K, N, T), "dominant_term": G * V * K * T},
    ]
