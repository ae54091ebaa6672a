"""Pilot broadcast and the impaired UE receive chain.

Chain per pilot slot g: frequency-domain AWGN -> unitary IDFT -> W-times
oversampling -> IQ imbalance -> Q-bit ADC. :func:`naive_dequantize` folds the
oversampled branches back to one frequency-domain row.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ArrayGeometry, ChannelRealization

SUPPORTED_OVERSAMPLING = (1, 2, 4)


@dataclass(frozen=True)
class PilotBlock:
    precoders: np.ndarray  # (G, N_AP, N_RF), entries of modulus 1/sqrt(N_AP)
    symbols: np.ndarray  # (G, K, N_RF)

    @property
    def n_slots(self) -> int:
        return self.precoders.shape[0]

    @property
    def n_ap(self) -> int:
        return self.precoders.shape[1]

    @property
    def n_subcarriers(self) -> int:
        return self.symbols.shape[1]

    def composed(self) -> np.ndarray:
        """S[k] stacked as (K, G, N_AP); row g of S[k] is (F_RF[g] s[g,k])^T."""
        return np.einsum("gnr,gkr->kgn", self.precoders, self.symbols)


def gen_pilots(geometry: ArrayGeometry, g_count: int, rng, n_rf: int = 2) -> PilotBlock:
    if g_count < 1 or n_rf < 1:
        raise ValueError("need at least one pilot slot and one RF chain")
    rng = np.random.default_rng(rng)
    xi = rng.uniform(0, 2 * np.pi, size=(g_count, geometry.n_ap, n_rf))
    precoders = np.exp(1j * xi) / np.sqrt(geometry.n_ap)
    shape = (g_count, geometry.n_subcarriers, n_rf)
    symbols = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)
    return PilotBlock(precoders=precoders, symbols=symbols)


def noise_power_for_snr(clean: np.ndarray, snr_db: float) -> float:
    """Per-sample noise power so that mean |clean|^2 / sigma^2 hits snr_db."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(np.mean(np.abs(clean) ** 2) / 10 ** (snr_db / 10))


def simulate_rx(channel: ChannelRealization | np.ndarray, pilots: PilotBlock, snr_db: float, rng) -> tuple[np.ndarray, np.ndarray, float]:
    """Noiseless and noisy frequency-domain pilots, both (G, K), plus the noise power."""
    h = channel.h if isinstance(channel, ChannelRealization) else np.asarray(channel)
    if h.shape != (pilots.n_ap, pilots.n_subcarriers):
        raise ValueError(f"channel shape {h.shape} does not match pilots ({pilots.n_ap}, {pilots.n_subcarriers})")
    clean = np.einsum("nk,kgn->gk", h, pilots.composed())
    sigma2 = noise_power_for_snr(clean, snr_db)
    if sigma2 == 0.0:
        return clean, clean.copy(), 0.0
    rng = np.random.default_rng(rng)
    noise = (rng.normal(size=clean.shape) + 1j * rng.normal(size=clean.shape)) * np.sqrt(sigma2 / 2)
    return clean, clean + noise, sigma2


def freq_to_time(block: np.ndarray) -> np.ndarray:
    """Row-wise unitary inverse DFT (F_DFT^H applied to each row)."""
    return np.fft.ifft(block, axis=-1, norm="ortho")


def time_to_freq(block: np.ndarray) -> np.ndarray:
    return np.fft.fft(block, axis=-1, norm="ortho")


@dataclass(frozen=True)
class QuantizerConfig:
    bits: int | None = None  # None means infinite resolution
    oversampling: int = 1
    iq_gain_error: float = 0.0
    iq_phase_error_rad: float = 0.0

    def __post_init__(self):
        if self.bits is not None and not 1 <= self.bits <= 16:
            raise ValueError(f"bits must be in 1..16 or None, got {self.bits}")
        if self.oversampling not in SUPPORTED_OVERSAMPLING:
            raise ValueError(f"oversampling must be one of {SUPPORTED_OVERSAMPLING}")

    @classmethod
    def impaired(cls, bits: int = 2, oversampling: int = 4) -> "QuantizerConfig":
        """The impairment set used in the reference simulations."""
        return cls(bits=bits, oversampling=oversampling, iq_gain_error=0.1, iq_phase_error_rad=np.deg2rad(5.0))


def apply_iq_imbalance(samples: np.ndarray, config: QuantizerConfig) -> np.ndarray:
    za, zt = config.iq_gain_error, config.iq_phase_error_rad
    mu = np.cos(zt / 2) + 1j * za * np.sin(zt / 2)
    nu = za * np.cos(zt / 2) - 1j * np.sin(zt / 2)
    return mu * samples + nu * np.conj(samples)


def oversample(freq_row: np.ndarray, W: int) -> np.ndarray:
    """Band-limited W-times oversampling of one OFDM symbol.

    Zero-pads the K bins to W*K and takes the inverse DFT with the K-point
    unitary scaling, so every polyphase branch has the energy of ``freq_row``.
    Returns shape (..., W, K); branch w holds samples m*W + w.
    """
    if W not in SUPPORTED_OVERSAMPLING:
        raise ValueError(f"oversampling factor must be one of {SUPPORTED_OVERSAMPLING}, got {W}")
    freq_row = np.asarray(freq_row)
    K = freq_row.shape[-1]
    padded = np.zeros(freq_row.shape[:-1] + (W * K,), dtype=complex)
    padded[..., :K] = freq_row
    t = np.fft.ifft(padded, axis=-1) * (W * K) / np.sqrt(K)
    t = t.reshape(freq_row.shape[:-1] + (K, W))
    return np.swapaxes(t, -1, -2)


def quantizer_bounds(samples: np.ndarray) -> tuple[float, float]:
    """(Y_min, Y_max) over real and imaginary parts jointly."""
    s = np.asarray(samples)
    if s.size == 0:
        raise ValueError("cannot quantize an empty block")
    parts = np.concatenate([s.real.ravel(), s.imag.ravel()])
    return float(parts.min()), float(parts.max())


def quantize(samples: np.ndarray, config: QuantizerConfig, bounds: tuple[float, float] | None = None) -> np.ndarray:
    """Uniform 2^Q-level midrise quantizer on real and imaginary parts.

    Levels are ``Y_min + (m + 1/2) * step`` with ``step = (Y_max - Y_min) / 2^Q``.
    The range comes from the block itself unless ``bounds`` pins the codebook.
    """
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("cannot quantize an empty block")
    if config.bits is None:
        return samples.copy()
    lo, hi = quantizer_bounds(samples) if bounds is None else bounds
    if hi <= lo:
        return samples.copy()
    n_levels = 2**config.bits
    step = (hi - lo) / n_levels

    def q(x):
        m = np.clip(np.floor((x - lo) / step), 0, n_levels - 1)
        return lo + (m + 0.5) * step

    return q(samples.real) + 1j * q(samples.imag)


def naive_dequantize(quantized: np.ndarray) -> np.ndarray:
    """Fold W oversampled branches (..., W, K) back to one frequency row (..., K).

    Each branch is taken to the frequency domain, its fractional-delay phase
    ramp is removed and the branches are averaged.
    """
    quantized = np.asarray(quantized)
    W, K = quantized.shape[-2:]
    spectra = np.fft.fft(quantized, axis=-1, norm="ortho")
    ramp = np.exp(-2j * np.pi * np.outer(np.arange(W), np.arange(K)) / (W * K))
    return np.mean(spectra * ramp, axis=-2)


@dataclass(frozen=True)
class ReceivedBlock:
    freq: np.ndarray  # (G, K) after the receive chain and de-quantization
    time_quantized: np.ndarray  # (G, W, K)
    noise_power: float
    clean: np.ndarray  # (G, K) noiseless pilots
    noisy: np.ndarray  # (G, K) before the ADC path


def receive(channel: ChannelRealization | np.ndarray, pilots: PilotBlock, snr_db: float, config: QuantizerConfig, rng) -> ReceivedBlock:
    """Full UE chain; quantizer range is computed per OFDM symbol (per slot g)."""
    clean, noisy, sigma2 = simulate_rx(channel, pilots, snr_db, rng)
    t = oversample(noisy, config.oversampling)  # (G, W, K)
    t = apply_iq_imbalance(t, config)
    tq = np.stack([quantize(t[g], config) for g in range(t.shape[0])])
    return ReceivedBlock(freq=naive_dequantize(tq), time_quantized=tq, noise_power=sigma2, clean=clean, noisy=noisy)


# --- quantized time-domain dataset export --------------------------------

RX_MAGIC = b"SQRX"
RX_VERSION = 1
_RX_HEADER = struct.Struct("<4s6I")


def write_rx_blocks(path, blocks: np.ndarray, n_ap: int, config: QuantizerConfig) -> None:
    """Write quantized blocks of shape (count, G, W, K).

    Layout: magic "SQRX", then little-endian uint32 version, N_AP, K, G, W, Q
    (Q = 0 for infinite resolution). Each record follows as a float32 real
    plane then a float32 imaginary plane, both C-ordered (G, W, K).
    """
    blocks = np.asarray(blocks)
    if blocks.ndim != 4:
        raise ValueError("expected blocks shaped (count, G, W, K)")
    _, G, W, K = blocks.shape
    header = _RX_HEADER.pack(RX_MAGIC, RX_VERSION, n_ap, K, G, W, config.bits or 0)
    planes = np.stack([blocks.real, blocks.imag], axis=1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(planes.tobytes())


def read_rx_blocks(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _RX_HEADER.size:
        raise ValueError("file shorter than the header")
    magic, version, n_ap, K, G, W, Q = _RX_HEADER.unpack_from(raw)
    if magic != RX_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != RX_VERSION:
        raise ValueError(f"unsupported version {version}")
    record = 2 * G * W * K * 4
    body = len(raw) - _RX_HEADER.size
    if record == 0 or body % record:
        raise ValueError(f"payload of {body} bytes is not a whole number of {record}-byte records")
    planes = np.frombuffer(raw, dtype="<f4", offset=_RX_HEADER.size).reshape(-1, 2, G, W, K)
    blocks = planes[:, 0].astype(np.complex64)
    blocks.imag = planes[:, 1]
    meta = dict(version=version, n_ap=n_ap, n_subcarriers=K, n_slots=G, oversampling=W, bits=Q or None)
    return meta, blocks
