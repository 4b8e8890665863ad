"""Conventional comparison chain: Haar compression, Hamming(7,4), AES-128-CTR.

Bits are carried as ``uint8`` arrays holding 0/1, most significant bit
first within each byte or coefficient.

The Haar stage keeps every approximation coefficient after ``levels``
orthonormal average/difference splits and fills the remaining slots with
the largest-magnitude detail coefficients.  Coefficients are quantized to
``coeff_bits`` signed integers with a per-block max-abs scale.  Kept detail
positions and the scale travel as side information next to the payload,
the same way the codec's block header does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

STAGES = ("compressed", "fec_encoded", "encrypted")
NONCE_BYTES = 8
AES_KEY_BYTES = 16

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class HaarPlan:
    levels: int = 2
    kept_coeffs: int = 96
    coeff_bits: int = 16

    def __post_init__(self) -> None:
        if self.levels < 1 or self.kept_coeffs < 1:
            raise ValueError("levels and kept_coeffs must be positive")
        if not 2 <= self.coeff_bits <= 32:
            raise ValueError("coeff_bits must lie in [2, 32]")

    @property
    def compressed_bits(self) -> int:
        return self.kept_coeffs * self.coeff_bits


@dataclass(frozen=True)
class HaarSideInfo:
    n: int
    positions: np.ndarray  # kept detail indices, in detail-band order
    scale: float


@dataclass
class CodedBitstream:
    bits: np.ndarray
    stage: str
    side_info: HaarSideInfo | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        self.bits = _as_bits(self.bits)


def _as_bits(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if b.size and b.max() > 1:
        raise ValueError("bit vectors hold only 0 and 1")
    return b


# -- Haar ----------------------------------------------------------------

def haar_forward(x, levels: int) -> np.ndarray:
    """Orthonormal Haar analysis: ``[approx_L, detail_L, ..., detail_1]``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = x.size
    if n == 0 or n & (n - 1):
        raise ValueError("block length must be a power of two")
    if n >> levels == 0:
        raise ValueError(f"{levels} levels exceed a block of {n}")
    out = x.copy()
    m = n
    for _ in range(levels):
        a = out[:m:2] + out[1:m:2]
        d = out[:m:2] - out[1:m:2]
        out[: m // 2] = a / _SQRT2
        out[m // 2: m] = d / _SQRT2
        m //= 2
    return out


def haar_inverse(c, levels: int) -> np.ndarray:
    out = np.asarray(c, dtype=np.float64).reshape(-1).copy()
    n = out.size
    m = n >> levels
    for _ in range(levels):
        a = out[:m].copy()
        d = out[m: 2 * m].copy()
        out[0: 2 * m: 2] = (a + d) / _SQRT2
        out[1: 2 * m: 2] = (a - d) / _SQRT2
        m *= 2
    return out


def haar_compress(x, plan: HaarPlan = HaarPlan()) -> tuple[np.ndarray, HaarSideInfo]:
    """Quantized kept coefficients (approximation band first) and side info."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if plan.kept_coeffs > x.size:
        raise ValueError(f"kept_coeffs {plan.kept_coeffs} exceeds block length {x.size}")
    c = haar_forward(x, plan.levels)
    n_approx = x.size >> plan.levels
    if plan.kept_coeffs < n_approx:
        raise ValueError("kept_coeffs must cover the whole approximation band")
    detail = c[n_approx:]
    n_keep = plan.kept_coeffs - n_approx
    # stable sort so ties resolve to the lower index
    positions = np.sort(np.argsort(-np.abs(detail), kind="stable")[:n_keep])
    kept = np.concatenate([c[:n_approx], detail[positions]])
    top = (1 << (plan.coeff_bits - 1)) - 1
    peak = float(np.max(np.abs(kept)))
    scale = peak / top if peak > 0 else 1.0
    q = np.clip(np.rint(kept / scale), -top, top).astype(np.int64)
    return q, HaarSideInfo(x.size, positions.astype(np.int64), scale)


def haar_decompress(coeffs, side_info: HaarSideInfo, plan: HaarPlan = HaarPlan()) -> np.ndarray:
    q = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    n = side_info.n
    n_approx = n >> plan.levels
    pos = np.asarray(side_info.positions, dtype=np.int64)
    if q.size != n_approx + pos.size:
        raise ValueError("coefficient count does not match side info")
    if pos.size and (pos.min() < 0 or pos.max() >= n - n_approx or np.unique(pos).size != pos.size):
        raise ValueError("side info holds invalid detail positions")
    c = np.zeros(n)
    vals = q * side_info.scale
    c[:n_approx] = vals[:n_approx]
    c[n_approx + pos] = vals[n_approx:]
    return haar_inverse(c, plan.levels)


def coeffs_to_bits(q, coeff_bits: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.int64).reshape(-1)
    u = q & ((1 << coeff_bits) - 1)
    shifts = np.arange(coeff_bits - 1, -1, -1)
    return ((u[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_to_coeffs(bits, coeff_bits: int) -> np.ndarray:
    b = _as_bits(bits)
    if b.size % coeff_bits:
        raise ValueError(f"bit count {b.size} is not a multiple of {coeff_bits}")
    w = b.reshape(-1, coeff_bits).astype(np.int64)
    u = w @ (1 << np.arange(coeff_bits - 1, -1, -1))
    sign = 1 << (coeff_bits - 1)
    return np.where(u >= sign, u - (1 << coeff_bits), u)


# -- Hamming(7,4) ----------------------------------------------------------

# systematic: codeword = d1 d2 d3 d4 p1 p2 p3
_G = np.array([[1, 0, 0, 0, 1, 1, 0],
               [0, 1, 0, 0, 1, 0, 1],
               [0, 0, 1, 0, 0, 1, 1],
               [0, 0, 0, 1, 1, 1, 1]], dtype=np.uint8)
_H = np.array([[1, 1, 0, 1, 1, 0, 0],
               [1, 0, 1, 1, 0, 1, 0],
               [0, 1, 1, 1, 0, 0, 1]], dtype=np.uint8)
# syndrome (as 3-bit int) -> flipped position, -1 for clean
_SYNDROME_POS = np.full(8, -1)
for _j in range(7):
    _SYNDROME_POS[int(_H[0, _j]) << 2 | int(_H[1, _j]) << 1 | int(_H[2, _j])] = _j


def hamming74_encode(bits) -> np.ndarray:
    """Encode nibbles; input shorter than a multiple of 4 is zero-padded."""
    b = _as_bits(bits)
    pad = (-b.size) % 4
    if pad:
        b = np.concatenate([b, np.zeros(pad, dtype=np.uint8)])
    return ((b.reshape(-1, 4).astype(np.int64) @ _G) & 1).astype(np.uint8).reshape(-1)


def hamming74_decode(bits) -> tuple[np.ndarray, int]:
    """Syndrome decoding; returns the data bits and how many codewords were corrected."""
    b = _as_bits(bits)
    if b.size % 7:
        raise ValueError("Hamming(7,4) input length must be a multiple of 7")
    cw = b.reshape(-1, 7).copy()
    s = (cw.astype(np.int64) @ _H.T) & 1
    pos = _SYNDROME_POS[s[:, 0] << 2 | s[:, 1] << 1 | s[:, 2]]
    hit = np.flatnonzero(pos >= 0)
    cw[hit, pos[hit]] ^= 1
    return cw[:, :4].reshape(-1), int(hit.size)


# -- AES-128-CTR -----------------------------------------------------------

def _counter_block(nonce: bytes) -> bytes:
    nonce = bytes(nonce)
    if len(nonce) != NONCE_BYTES:
        raise ValueError(f"nonce must be {NONCE_BYTES} bytes")
    # high half is the per-block nonce, low half the block counter from 0
    return nonce + bytes(8)


def aes_ctr_apply(bits, key: bytes, nonce: bytes) -> np.ndarray:
    """XOR the AES-128-CTR keystream over a bit vector (zero-padded to bytes)."""
    key = bytes(key)
    if len(key) != AES_KEY_BYTES:
        raise ValueError("AES-128 needs a 16-byte key")
    b = _as_bits(bits)
    data = np.packbits(b).tobytes()
    enc = Cipher(algorithms.AES(key), modes.CTR(_counter_block(nonce))).encryptor()
    out = enc.update(data) + enc.finalize()
    return np.unpackbits(np.frombuffer(out, dtype=np.uint8))[: b.size]


def aes_block_encrypt(key: bytes, block: bytes) -> bytes:
    """One raw AES-128 block, computed as the first CTR keystream block."""
    block = bytes(block)
    if len(block) != 16:
        raise ValueError("AES block is 16 bytes")
    enc = Cipher(algorithms.AES(bytes(key)), modes.CTR(block)).encryptor()
    return enc.update(bytes(16)) + enc.finalize()


class NonceRegistry:
    """Rejects a second use of a nonce under one key."""

    def __init__(self) -> None:
        self._seen: set[tuple[bytes, bytes]] = set()

    def claim(self, key: bytes, nonce: bytes) -> None:
        item = (bytes(key), bytes(nonce))
        if item in self._seen:
            raise ValueError(f"nonce {bytes(nonce).hex()} already used with this key")
        self._seen.add(item)

    def __len__(self) -> int:
        return len(self._seen)


def block_nonce(block_id: int) -> bytes:
    return int(block_id).to_bytes(NONCE_BYTES, "big")


# -- composed pipeline -----------------------------------------------------

def soa_encode(x, plan: HaarPlan, key: bytes, nonce: bytes,
               registry: NonceRegistry | None = None) -> CodedBitstream:
    """Haar, then Hamming(7,4), then AES-CTR.  ``side_info`` rides along."""
    if registry is not None:
        registry.claim(key, nonce)
    q, side = haar_compress(x, plan)
    compressed = coeffs_to_bits(q, plan.coeff_bits)
    coded = hamming74_encode(compressed)
    return CodedBitstream(aes_ctr_apply(coded, key, nonce), "encrypted", side)


def soa_decode(bits, plan: HaarPlan, key: bytes, nonce: bytes,
               side_info: HaarSideInfo | None = None) -> np.ndarray:
    if isinstance(bits, CodedBitstream):
        side_info = side_info or bits.side_info
        bits = bits.bits
    if side_info is None:
        raise ValueError("SoA decode needs the Haar side info")
    coded = aes_ctr_apply(bits, key, nonce)
    data, _ = hamming74_decode(coded)
    n_bits = plan.compressed_bits
    if data.size < n_bits:
        raise ValueError("bitstream too short for the Haar plan")
    q = bits_to_coeffs(data[:n_bits], plan.coeff_bits)
    return haar_decompress(q, side_info, plan)
