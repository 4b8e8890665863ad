"""Keyed bit and word generators.

Two generators live here:

* :class:`Lfsr16State`, the 16-bit shift register that drives both matrix
  construction routines.  It exposes the two update orders used by the
  sparse and the binary construction (they are *not* the same map).
* :class:`LfgGenerator`, a pair of cross-coupled lagged Fibonacci
  generators (trinomials x^7+x^3+1 and x^5+x^2+1) used for per-block
  initialization vectors and random mask vectors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

MASK16 = 0xFFFF
MSB16 = 0x8000

# x^16 + x^14 + x^13 + x^11 + 1, x^16 implicit in the register width
DEFAULT_FP = 0x6801

LFG1_LEN, LFG1_SHORT = 7, 3
LFG2_LEN, LFG2_SHORT = 5, 2
KEY_BYTES = 2 * (LFG1_LEN + LFG2_LEN)


@dataclass
class Lfsr16State:
    """16-bit shift register with feedback mask ``fp`` and state ``sr``."""

    fp: int
    sr: int

    def __post_init__(self) -> None:
        self.fp &= MASK16
        self.sr &= MASK16
        if self.sr == 0:
            raise ValueError("LFSR state must be nonzero (all-zero state is absorbing)")

    def step_galois(self) -> int:
        """Shift-then-xor update; returns the MSB tested before the shift."""
        if self.sr & MSB16:
            self.sr = ((self.sr << 1) ^ self.fp) & MASK16
            return 1
        self.sr = (self.sr << 1) & MASK16
        return 0

    def step_alg1(self) -> tuple[int, int]:
        """Sparse-construction update: xor *without* shifting when the MSB is
        set, capture the register for index extraction, then shift.

        Returns ``(msb, index_source)``.  Raises if the register collapses to
        zero, which happens from exactly one state (``sr ^ fp == 0x8000``).
        """
        if self.sr & MSB16:
            msb = 1
            self.sr ^= self.fp
        else:
            msb = 0
        source = self.sr
        self.sr = (self.sr << 1) & MASK16
        if self.sr == 0:
            raise ValueError("LFSR collapsed to the all-zero state; choose another iv")
        return msb, source

    def copy(self) -> "Lfsr16State":
        return Lfsr16State(self.fp, self.sr)


def lfsr_new(fp: int, iv: int) -> Lfsr16State:
    return Lfsr16State(fp, iv)


def lfsr_period(fp: int = DEFAULT_FP, iv: int = 1, limit: int = 1 << 16) -> int:
    """Number of Galois steps until ``iv`` recurs (0 if it never does within ``limit``)."""
    state = Lfsr16State(fp, iv)
    for n in range(1, limit + 1):
        state.step_galois()
        if state.sr == iv:
            return n
    return 0


@dataclass
class LfgGenerator:
    """Two lagged Fibonacci rings with nonlinear cross feedback.

    ``lfg1`` holds 7 words and ``lfg2`` holds 5.  ``pos1``/``pos2`` index
    the oldest word of each ring, which is the next one overwritten.
    """

    lfg1: list[int]
    lfg2: list[int]
    pos1: int = 0
    pos2: int = 0
    steps: int = field(default=0)

    def __post_init__(self) -> None:
        if len(self.lfg1) != LFG1_LEN or len(self.lfg2) != LFG2_LEN:
            raise ValueError("ring lengths must be 7 and 5")
        self.lfg1 = [w & MASK16 for w in self.lfg1]
        self.lfg2 = [w & MASK16 for w in self.lfg2]

    @classmethod
    def from_key(cls, key: bytes) -> "LfgGenerator":
        """Fill the rings from a 24-byte key, little-endian 16-bit words."""
        key = bytes(key)
        if len(key) != KEY_BYTES:
            raise ValueError(f"LFG key must be {KEY_BYTES} bytes, got {len(key)}")
        words = [int.from_bytes(key[i:i + 2], "little") for i in range(0, KEY_BYTES, 2)]
        lfg1, lfg2 = words[:LFG1_LEN], words[LFG1_LEN:]
        if not any(lfg1) or not any(lfg2):
            raise ValueError("each LFG ring needs at least one nonzero word")
        return cls(lfg1, lfg2)

    def _tap1(self, lag: int) -> int:
        return self.lfg1[(self.pos1 - lag) % LFG1_LEN]

    def _tap2(self, lag: int) -> int:
        return self.lfg2[(self.pos2 - lag) % LFG2_LEN]

    def next_word(self) -> int:
        a7, a3 = self._tap1(LFG1_LEN), self._tap1(LFG1_SHORT)
        b5, b2 = self._tap2(LFG2_LEN), self._tap2(LFG2_SHORT)
        fb1 = (a7 ^ ((b2 << 3) & MASK16)) ^ (a3 ^ ((b5 << 5) & MASK16))
        fb2 = (b5 ^ ((a3 << 2) & MASK16)) ^ (b2 ^ ((a7 << 7) & MASK16))
        self.lfg1[self.pos1] = fb1
        self.lfg2[self.pos2] = fb2
        self.pos1 = (self.pos1 + 1) % LFG1_LEN
        self.pos2 = (self.pos2 + 1) % LFG2_LEN
        self.steps += 1
        return fb1 ^ fb2

    def words(self, n: int) -> np.ndarray:
        return np.fromiter((self.next_word() for _ in range(n)), dtype=np.uint16, count=n)

    def nonzero_words(self, n: int) -> list[int]:
        """``n`` consecutive outputs, skipping zeros (usable as LFSR seeds)."""
        out: list[int] = []
        while len(out) < n:
            w = self.next_word()
            if w:
                out.append(w)
        return out

    def skip(self, n: int) -> None:
        for _ in range(n):
            self.next_word()

    def clone(self) -> "LfgGenerator":
        return copy.deepcopy(self)


def lfg_seed(key: bytes) -> LfgGenerator:
    return LfgGenerator.from_key(key)


def lfg_next(gen: LfgGenerator) -> int:
    return gen.next_word()


def parse_hex_key(text: str, nbytes: int) -> bytes:
    text = text.strip().lower().removeprefix("0x")
    if len(text) != 2 * nbytes:
        raise ValueError(f"expected {2 * nbytes} hex characters, got {len(text)}")
    return bytes.fromhex(text)
