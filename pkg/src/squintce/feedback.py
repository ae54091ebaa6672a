"""Fixed-budget bit-vector CSI feedback built on the common sparse support.

Frame layout (bits, in order):

1. ``S`` row indices, ascending, ``ceil(log2 V)`` bits each, LSB first.
2. Two IEEE-754 float32 scale factors (real, imaginary), LSB first.
3. For each selected row in index order, for each subcarrier k, the real
   then imaginary ``Q_f``-bit code, LSB first. Codes index a uniform
   symmetric codebook spanning [-scale, scale] (midtread for Q_f >= 2).

Bits are packed little-endian within bytes (bit i of the frame is bit
``i % 8`` of byte ``i // 8``) and the unused tail bits of the last byte are
zero. A blob on disk is a little-endian uint32 frame length in bits followed
by the packed bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

SCALE_BITS = 32


class FramingError(ValueError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class FeedbackCodebook:
    support_size: int
    coeff_bits: int
    n_rows: int  # V
    n_subcarriers: int  # K

    def __post_init__(self):
        if not 1 <= self.support_size <= self.n_rows:
            raise ValueError("support size must lie in 1..V")
        if not 1 <= self.coeff_bits <= 32:
            raise ValueError("coefficient bits must lie in 1..32")

    @property
    def index_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.n_rows)))

    @property
    def n_bits(self) -> int:
        S, K, Q = self.support_size, self.n_subcarriers, self.coeff_bits
        return S * self.index_bits + 2 * S * K * Q + 2 * SCALE_BITS


@dataclass(frozen=True)
class BitVector:
    bits: np.ndarray  # uint8 array of 0/1, length codebook.n_bits
    codebook: FeedbackCodebook

    def __post_init__(self):
        if self.bits.shape != (self.codebook.n_bits,):
            raise ValueError(f"bit vector length {self.bits.size} != budget {self.codebook.n_bits}")

    def to_bytes(self) -> bytes:
        return struct.pack("<I", self.bits.size) + np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, codebook: FeedbackCodebook) -> "BitVector":
        if len(blob) < 4:
            raise FramingError("blob shorter than its length prefix", 0)
        (n_bits,) = struct.unpack_from("<I", blob)
        if n_bits != codebook.n_bits:
            raise FramingError(f"frame length {n_bits} does not match codebook budget {codebook.n_bits}", 0)
        n_bytes = (n_bits + 7) // 8
        if len(blob) - 4 != n_bytes:
            raise FramingError(f"expected {n_bytes} payload bytes, got {len(blob) - 4}", min(len(blob), 4 + n_bytes))
        bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8, offset=4), bitorder="little")
        if np.any(bits[n_bits:]):
            raise FramingError("non-zero padding bits", 4 + n_bytes - 1)
        return cls(bits[:n_bits].copy(), codebook)


def _uint_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.uint64)
    return ((values[..., None] >> np.arange(width, dtype=np.uint64)) & 1).astype(np.uint8).reshape(-1)


def _bits_to_uint(bits: np.ndarray, width: int) -> np.ndarray:
    b = bits.reshape(-1, width).astype(np.uint64)
    return np.sum(b << np.arange(width, dtype=np.uint64), axis=1)


def _float32_bits(x: float) -> np.ndarray:
    (u,) = struct.unpack("<I", struct.pack("<f", x))
    return _uint_to_bits(np.array([u]), SCALE_BITS)


def _bits_float32(bits: np.ndarray) -> float:
    (u,) = _bits_to_uint(bits, SCALE_BITS)
    return struct.unpack("<f", struct.pack("<I", int(u)))[0]


def _levels_half(bits: int) -> int:
    """Largest code offset from the centre: levels are m * s / half, |m| <= half."""
    return 1 if bits == 1 else 2 ** (bits - 1) - 1


def _coeff_encode(x: np.ndarray, scale: float, bits: int) -> np.ndarray:
    """Nearest-level codes of a symmetric uniform codebook spanning [-s, s].

    For Q >= 2 the codebook is midtread with 2^Q - 1 levels (zero included, the
    all-ones code unused); for Q = 1 it is the pair {-s, +s}. The outer levels
    sit exactly at +/- s, so re-encoding a decoded frame reproduces the same
    scale and codes, and a zero level means a weak coefficient is never made
    worse than dropping it.
    """
    if bits == 1:
        return (x >= 0).astype(np.uint64)
    half = _levels_half(bits)
    if scale == 0.0:
        return np.full(x.shape, half, dtype=np.uint64)
    m = np.clip(np.floor(x * (half / scale) + 0.5), -half, half)
    return (m + half).astype(np.uint64)


def _coeff_decode(codes: np.ndarray, scale: float, bits: int) -> np.ndarray:
    if bits == 1:
        return np.where(codes == 1, scale, -scale).astype(float)
    half = _levels_half(bits)
    return (codes.astype(float) - half) * (scale / half)


def select_support(H_sparse: np.ndarray, support_size: int) -> np.ndarray:
    """Rows with the largest energy across subcarriers, ties to the lowest index; ascending."""
    energy = np.sum(np.abs(H_sparse) ** 2, axis=1)
    order = np.argsort(-energy, kind="stable")
    return np.sort(order[:support_size])


def encode_csi(H_sparse: np.ndarray, codebook: FeedbackCodebook) -> BitVector:
    H_sparse = np.asarray(H_sparse)
    if H_sparse.shape != (codebook.n_rows, codebook.n_subcarriers):
        raise ValueError(f"sparse CSI shape {H_sparse.shape} does not match codebook ({codebook.n_rows}, {codebook.n_subcarriers})")
    rows = select_support(H_sparse, codebook.support_size)
    kept = H_sparse[rows]
    # float32 round-trip first so encoder and decoder use the identical scale
    s_re = float(np.float32(np.max(np.abs(kept.real))))
    s_im = float(np.float32(np.max(np.abs(kept.imag))))
    Q = codebook.coeff_bits
    codes = np.stack([_coeff_encode(kept.real, s_re, Q), _coeff_encode(kept.imag, s_im, Q)], axis=-1)
    # rows quantized entirely to zero carry no information; re-point them at the
    # lowest unused indices so that encoding a decoded frame gives the same bits
    dead = ~np.any(np.stack([_coeff_decode(codes[..., 0], s_re, Q), _coeff_decode(codes[..., 1], s_im, Q)]) != 0, axis=(0, 2))
    if np.any(dead):
        live = rows[~dead]
        fill = np.setdiff1d(np.arange(codebook.n_rows), live)[: int(dead.sum())]
        rows = np.concatenate([live, fill])
        codes = np.concatenate([codes[~dead], codes[dead]])
        order = np.argsort(rows)
        rows, codes = rows[order], codes[order]
    bits = np.concatenate([
        _uint_to_bits(rows, codebook.index_bits),
        _float32_bits(s_re),
        _float32_bits(s_im),
        _uint_to_bits(codes, Q),
    ])
    return BitVector(bits, codebook)


def decode_sparse(bv: BitVector) -> np.ndarray:
    """Reconstruct the (V, K) sparse matrix from a frame."""
    cb = bv.codebook
    bits = np.asarray(bv.bits)
    if bits.shape != (cb.n_bits,) or np.any(bits > 1):
        raise FramingError("bit vector is not a 0/1 frame of the codebook length", 0)
    S, K, Q, w = cb.support_size, cb.n_subcarriers, cb.coeff_bits, cb.index_bits
    pos = S * w
    rows = _bits_to_uint(bits[:pos], w).astype(int)
    for i, r in enumerate(rows):
        if r >= cb.n_rows:
            raise FramingError(f"row index {r} out of range for V={cb.n_rows}", (i * w) // 8)
    if np.any(np.diff(rows) <= 0):
        i = int(np.argmax(np.diff(rows) <= 0)) + 1
        raise FramingError("row indices are not strictly increasing", (i * w) // 8)
    s_re = _bits_float32(bits[pos : pos + SCALE_BITS])
    s_im = _bits_float32(bits[pos + SCALE_BITS : pos + 2 * SCALE_BITS])
    for j, s in enumerate((s_re, s_im)):
        if not math.isfinite(s) or s < 0:
            raise FramingError("invalid scale factor", (pos + j * SCALE_BITS) // 8)
    pos += 2 * SCALE_BITS
    codes = _bits_to_uint(bits[pos:], Q).reshape(S, K, 2)
    if Q > 1 and np.any(codes > 2 * _levels_half(Q)):
        i = int(np.argmax(codes.reshape(-1) > 2 * _levels_half(Q)))
        raise FramingError("unused coefficient code", (pos + i * Q) // 8)
    H = np.zeros((cb.n_rows, K), dtype=complex)
    H[rows] = _coeff_decode(codes[..., 0], s_re, Q) + 1j * _coeff_decode(codes[..., 1], s_im, Q)
    return H


def decode_csi(bv: BitVector, wrd) -> np.ndarray:
    """AP-side reconstruction of the spatial-frequency CSI (N_AP, K)."""
    D = wrd.matrices() if hasattr(wrd, "matrices") else np.asarray(wrd)
    H = decode_sparse(bv)
    if D.shape[0] != bv.codebook.n_subcarriers or D.shape[2] != bv.codebook.n_rows:
        raise ValueError(f"dictionary shape {D.shape} does not match the codebook")
    return np.einsum("knv,vk->nk", D, H)
