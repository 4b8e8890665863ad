"""ENCRUST and L-ENCRUST encode/decode.

Encoding is ``y = A_i B x`` (ENCRUST, a fresh binary ``A_i`` per block) or
``y = A B x + c r_i`` (L-ENCRUST, fixed sparse ``A`` and ``B`` plus a fresh
mask ``r_i``), followed by 16-bit quantization.  Decoding projects out the
signal subspace to estimate the sparse channel error, subtracts it, then
recovers the block by a second l1 minimization in the DCT domain.

Per-block randomness comes from the keyed LFG stream: block ``k`` always
receives the same words for a given key, so a decoder can regenerate the
material from ``(key, block_id)`` alone.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import matgen
from .l1solver import BasisPursuitProblem, SolverConfig, SolverResult, dct_basis, solve_basis_pursuit
from .matgen import SensingMatrix
from .prng import DEFAULT_FP, KEY_BYTES, LfgGenerator

INT16_MAX = 32767
ADC_BITS = 11
SCHEMES = ("encrust", "l_encrust")


class CodecSetupError(ValueError):
    """The fixed matrices cannot support decoding (e.g. ``A`` is rank deficient)."""


@dataclass(frozen=True)
class CodecParams:
    """Block geometry and scheme choice.

    ``K`` (signal sparsity) does not appear: it only enters the design rule
    ``L = M + alpha2 * rho0`` through ``M``.
    """

    N: int = 256
    M: int = 96
    L: int = 150
    d: int = 15
    c: float = 1.0
    alpha2: float = 6.0
    scheme: str = "l_encrust"
    fp: int = DEFAULT_FP
    shift_bits: int = 8
    lsb_mask: int = 0x00FF
    # half-width of the mask entries; None derives it from a full-scale
    # constant input, max|A B 1| * (2**ADC_BITS - 1)
    mask_envelope: float | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (0 < self.M < self.N):
            raise ValueError("need 0 < M < N")
        if not self.M < self.L:
            raise ValueError("need M < L")
        if not 4 <= self.alpha2 <= 6:
            raise ValueError("alpha2 must lie in [4, 6]")

    @property
    def rho0(self) -> int:
        return error_capacity(self.L, self.M, self.alpha2)


@dataclass
class KeySchedule:
    lfg_key: bytes
    b_iv: int = 0xFFFF
    a_iv: int = 0xFFFF
    block_counter: int = 0

    def __post_init__(self) -> None:
        self.lfg_key = bytes(self.lfg_key)
        if len(self.lfg_key) != KEY_BYTES:
            raise ValueError(f"LFG key must be {KEY_BYTES} bytes")
        LfgGenerator.from_key(self.lfg_key)  # validates the rings
        if not (0 < self.b_iv <= 0xFFFF and 0 < self.a_iv <= 0xFFFF):
            raise ValueError("matrix ivs must be nonzero 16-bit values")

    def next_block_id(self) -> int:
        k = self.block_counter
        self.block_counter += 1
        return k


@dataclass
class MeasurementBlock:
    q: np.ndarray
    scale: float
    block_id: int

    HEADER = struct.Struct(">Id H")

    def __post_init__(self) -> None:
        q = np.asarray(self.q)
        if q.size and (q.min() < -32768 or q.max() > INT16_MAX):
            raise ValueError("samples must fit in 16 bits")
        self.q = q.astype(np.int16)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive")

    @property
    def L(self) -> int:
        return self.q.size

    def dequantize(self) -> np.ndarray:
        return dequantize16(self.q, self.scale)

    def header_bytes(self) -> bytes:
        return self.HEADER.pack(self.block_id, self.scale, self.L)

    def payload_bytes(self) -> bytes:
        return self.q.astype(">i2").tobytes()

    def to_bytes(self) -> bytes:
        return self.header_bytes() + self.payload_bytes()

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["MeasurementBlock", int]:
        """Parse one block starting at ``offset``; returns the block and the next offset."""
        h = cls.HEADER
        if len(data) - offset < h.size:
            raise ValueError("truncated block header")
        block_id, scale, n = h.unpack_from(data, offset)
        start = offset + h.size
        end = start + 2 * n
        if len(data) < end:
            raise ValueError("truncated block payload")
        q = np.frombuffer(data[start:end], dtype=">i2").astype(np.int16)
        return cls(q, scale, block_id), end

    def with_payload(self, payload: bytes) -> "MeasurementBlock":
        q = np.frombuffer(payload[: 2 * self.L], dtype=">i2").astype(np.int16)
        return MeasurementBlock(q, self.scale, self.block_id)


def read_blocks(data: bytes) -> list[MeasurementBlock]:
    blocks, off = [], 0
    while off < len(data):
        blk, off = MeasurementBlock.from_bytes(data, off)
        blocks.append(blk)
    return blocks


@dataclass
class DecodedBlock:
    x_hat: np.ndarray
    e_hat: np.ndarray
    error_support_size: int
    prd_vs_reference: float | None = None
    c_hat: float | None = None
    converged: bool = True


# -- quantization ----------------------------------------------------------

def quantize16(y) -> tuple[np.ndarray, float]:
    """Per-block max-abs 16-bit quantizer; an all-zero block gets scale 1."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot quantize non-finite values")
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    scale = peak / INT16_MAX if peak > 0 else 1.0
    q = np.clip(np.rint(y / scale), -INT16_MAX, INT16_MAX).astype(np.int16)
    return q, scale


def dequantize16(q, scale: float) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) * scale


def error_capacity(L: int, M: int, alpha2: float = 6.0) -> int:
    if L < M:
        raise ValueError("need L >= M")
    return int(math.floor((L - M) / alpha2))


# -- decoding stages -------------------------------------------------------

def projection_matrix(A_eff) -> SensingMatrix:
    """``I - A (A^T A)^-1 A^T``, built from an orthonormal basis of range(A)."""
    a = np.asarray(A_eff, dtype=np.float64)
    if not matgen.is_full_rank(a):
        raise CodecSetupError("projection needs a full column rank matrix")
    q, _ = np.linalg.qr(a)
    P = np.eye(a.shape[0]) - q @ q.T
    return SensingMatrix(0.5 * (P + P.T), "projection")


def estimate_error(P, y_rx, config: SolverConfig | None = None,
                   epsilon: float = 0.0):
    """Sparse error estimate from the projected measurements.

    Returns ``(e_hat, SolverResult)``.  ``epsilon > 0`` switches to the
    denoised constraint ``||P e - P y_rx|| <= epsilon``.
    """
    P = np.asarray(P, dtype=np.float64)
    y_rx = np.asarray(y_rx, dtype=np.float64)
    if P.shape != (y_rx.size, y_rx.size):
        raise ValueError("projection and measurement shapes disagree")
    b = P @ y_rx
    if np.linalg.norm(b) <= 1e-10 * max(1.0, float(np.linalg.norm(y_rx))):
        # y_rx already lies in range(A_eff) up to rounding: nothing to explain
        return np.zeros_like(y_rx), SolverResult(np.zeros_like(y_rx), 0, float(np.linalg.norm(b)), True)
    mode = "denoised" if epsilon > 0 else "exact"
    prob = BasisPursuitProblem(P, b, mode=mode, epsilon=epsilon, pinv=P)
    res = solve_basis_pursuit(prob, config)
    return res.solution, res


def correct_measurements(y_rx, e_hat) -> np.ndarray:
    y_rx = np.asarray(y_rx, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if y_rx.shape != e_hat.shape:
        raise ValueError("length mismatch")
    return y_rx - e_hat


def _augmented_basis(psi: np.ndarray) -> np.ndarray:
    n = psi.shape[0]
    out = np.zeros((n + 1, n + 1))
    out[0, 0] = 1.0
    out[1:, 1:] = psi
    return out


def reconstruct_signal(A_eff, B_eff, y_hat, psi, config: SolverConfig | None = None) -> DecodedBlock:
    """Solve ``min ||theta||_1`` s.t. ``A^T y_hat = A^T A B Psi theta``.

    When ``B_eff`` has one column more than ``psi`` the unknown is the
    augmented ``[c; x]``; its leading entry is returned as ``c_hat``.
    """
    A = np.asarray(A_eff, dtype=np.float64)
    B = np.asarray(B_eff, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if A.shape[0] != y_hat.size or A.shape[1] != B.shape[0]:
        raise ValueError("A, B and y_hat shapes disagree")
    augmented = B.shape[1] == psi.shape[0] + 1
    if not augmented and B.shape[1] != psi.shape[0]:
        raise ValueError("B columns must match the basis size")
    basis = _augmented_basis(psi) if augmented else psi
    AtA = A.T @ A
    C = AtA @ B @ basis
    b = A.T @ y_hat
    res = solve_basis_pursuit(BasisPursuitProblem(C, b), config)
    x = basis @ res.solution
    empty = np.zeros(y_hat.size)
    if augmented:
        return DecodedBlock(x[1:], empty, 0, c_hat=float(x[0]), converged=res.converged)
    return DecodedBlock(x, empty, 0, converged=res.converged)


# -- key stream ------------------------------------------------------------

class _BlockStream:
    """Random access to per-block LFG material via sparse checkpoints."""

    CHECKPOINT_EVERY = 32

    def __init__(self, key: bytes, per_block: int, skip_zero: bool) -> None:
        self.per_block = per_block
        self.skip_zero = skip_zero
        self._checkpoints = {0: LfgGenerator.from_key(key)}

    def _draw(self, gen: LfgGenerator) -> list[int]:
        if self.skip_zero:
            return gen.nonzero_words(self.per_block)
        return gen.words(self.per_block).tolist()

    def block(self, k: int) -> list[int]:
        if k < 0:
            raise ValueError("block ids are non-negative")
        base = max(c for c in self._checkpoints if c <= k)
        gen = self._checkpoints[base].clone()
        for j in range(base, k):
            self._draw(gen)
            if (j + 1) % self.CHECKPOINT_EVERY == 0 and (j + 1) not in self._checkpoints:
                self._checkpoints[j + 1] = gen.clone()
        return self._draw(gen)


# -- codec -----------------------------------------------------------------

class Codec:
    """Matrices and key stream for one ``(params, keys)`` pair.

    Construction does the expensive fixed setup once (``B``, and for
    L-ENCRUST also ``A`` with its rank check).  ``encode`` advances the key
    schedule's block counter; ``decode`` is read-only.
    """

    def __init__(self, params: CodecParams, keys: KeySchedule,
                 solver: SolverConfig | None = None) -> None:
        self.params = params
        self.keys = keys
        self.solver = solver or SolverConfig()
        p = params
        self.B = _sparse(keys.b_iv, p.fp, p.shift_bits, p.lsb_mask, p.d, p.M, p.N)
        self.psi = _dct(p.N)
        self.B_u = matgen.augment_compression_matrix(self.B)
        if p.scheme == "l_encrust":
            self.A = _sparse(keys.a_iv, p.fp, p.shift_bits, p.lsb_mask, p.d, p.L, p.M)
            if not matgen.is_full_rank(self.A):
                raise CodecSetupError(f"error recovery matrix A ({p.L}x{p.M}) is rank deficient")
            self.H = self.A.values @ self.B.values
            if p.mask_envelope is None:
                full_scale = (1 << ADC_BITS) - 1
                self.mask_envelope = float(np.max(np.abs(self.H.sum(axis=1)))) * full_scale
            else:
                self.mask_envelope = float(p.mask_envelope)
            self._stream = _BlockStream(keys.lfg_key, p.L, skip_zero=False)
        else:
            self.A = None
            self.H = None
            self.mask_envelope = None
            self._stream = _BlockStream(keys.lfg_key, p.L, skip_zero=True)

    # per-block material
    def mask(self, block_id: int) -> np.ndarray:
        words = np.asarray(self._stream.block(block_id), dtype=np.float64)
        return mask_from_words(words, self.mask_envelope)

    def error_matrix(self, block_id: int) -> SensingMatrix:
        """Effective error-recovery matrix for a block: ``A_i`` or ``A_u``."""
        p = self.params
        if p.scheme == "encrust":
            ivs = self._stream.block(block_id)
            return matgen.build_binary_matrix(ivs, p.fp, rows=p.L, cols=p.M)
        return matgen.augment_error_matrix(self.A, self.mask(block_id))

    def compression_matrix(self) -> SensingMatrix:
        return self.B_u if self.params.scheme == "l_encrust" else self.B

    def measure(self, x, block_id: int) -> np.ndarray:
        """Pre-quantization measurements of block ``block_id``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.params.N:
            raise ValueError(f"block length must be {self.params.N}")
        if self.params.scheme == "encrust":
            return self.error_matrix(block_id) @ (self.B @ x)
        return self.H @ x + self.params.c * self.mask(block_id)

    def encode(self, x, block_id: int | None = None) -> MeasurementBlock:
        if block_id is None:
            block_id = self.keys.next_block_id()
        q, scale = quantize16(self.measure(x, block_id))
        return MeasurementBlock(q, scale, block_id)

    def decode(self, y_rx, block_id: int, *, scale: float | None = None,
               reference=None) -> DecodedBlock:
        """Recover a block from (possibly corrupted) real-valued measurements.

        ``scale`` is the quantizer step when the measurements were quantized;
        it sets the denoising radius of the error estimate.
        """
        y_rx = np.asarray(y_rx, dtype=np.float64)
        if y_rx.size != self.params.L:
            raise ValueError(f"expected {self.params.L} measurements")
        A_eff = self.error_matrix(block_id)
        P = projection_matrix(A_eff)
        eps = math.sqrt(self.params.L) * scale / 2 if scale else 0.0
        e_hat, res_e = estimate_error(P, y_rx, self.solver, epsilon=eps)
        y_hat = correct_measurements(y_rx, e_hat)
        out = reconstruct_signal(A_eff, self.compression_matrix(), y_hat, self.psi, self.solver)
        out.e_hat = e_hat
        floor = (scale / 2) if scale else 1e-6 * max(1.0, float(np.max(np.abs(y_rx))))
        out.error_support_size = int(np.sum(np.abs(e_hat) > floor))
        out.converged = out.converged and res_e.converged
        if reference is not None:
            out.prd_vs_reference = _prd(reference, out.x_hat)
        return out

    def decode_block(self, block: MeasurementBlock, reference=None) -> DecodedBlock:
        return self.decode(block.dequantize(), block.block_id, scale=block.scale,
                           reference=reference)


def mask_from_words(words, envelope: float) -> np.ndarray:
    """Center 16-bit words and scale them to ``[-envelope, envelope)``."""
    return (np.asarray(words, dtype=np.float64) - 32768.0) * (envelope / 32768.0)


def _prd(x, x_hat) -> float:
    x = np.asarray(x, dtype=np.float64)
    den = np.sum(x * x)
    if den == 0:
        raise ValueError("reference has zero energy")
    return float(100.0 * np.sqrt(np.sum((x - np.asarray(x_hat)) ** 2) / den))


@functools.lru_cache(maxsize=64)
def _sparse(iv, fp, shift_bits, lsb_mask, d, rows, cols) -> SensingMatrix:
    return matgen.build_sparse_matrix(iv, fp, shift_bits, lsb_mask, d, rows, cols)


@functools.lru_cache(maxsize=8)
def _dct(n: int) -> np.ndarray:
    psi = dct_basis(n)
    psi.setflags(write=False)
    return psi


# -- functional surface ------------------------------------------------------

def make_codec(params: CodecParams, keys: KeySchedule,
               solver: SolverConfig | None = None) -> Codec:
    return Codec(params, keys, solver)


def encode_encrust(x, params: CodecParams, keys: KeySchedule) -> MeasurementBlock:
    if params.scheme != "encrust":
        params = replace(params, scheme="encrust")
    return Codec(params, keys).encode(x)


def encode_l_encrust(x, params: CodecParams, keys: KeySchedule) -> MeasurementBlock:
    if params.scheme != "l_encrust":
        params = replace(params, scheme="l_encrust")
    return Codec(params, keys).encode(x)


def decode(block: MeasurementBlock, params: CodecParams, keys: KeySchedule,
           reference=None) -> DecodedBlock:
    return Codec(params, keys).decode_block(block, reference)
