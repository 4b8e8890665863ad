"""Sensing-matrix construction and diagnostics.

``build_sparse_matrix`` and ``build_binary_matrix`` are the two on-the-fly
constructions driven by :class:`~encrust.prng.Lfsr16State`.  Matrices are
held in :class:`SensingMatrix`, a thin immutable wrapper around a dense
``float64`` array that also remembers how it was made.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .prng import DEFAULT_FP, Lfsr16State

KINDS = ("binary", "sparse", "augmented", "projection", "product", "dense")


@dataclass(frozen=True)
class SensingMatrix:
    values: np.ndarray
    kind: str = "dense"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __matmul__(self, other):
        if isinstance(other, SensingMatrix):
            return SensingMatrix(self.values @ other.values, "product")
        return self.values @ np.asarray(other, dtype=np.float64)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def row_support(self, i: int) -> list[tuple[int, int]]:
        row = self.values[i]
        return [(int(j), int(row[j])) for j in np.flatnonzero(row)]

    def dump(self, fh: TextIO) -> None:
        """Write the plain-text dump: ``rows cols kind`` then one line per row.

        Sparse matrices list ``col:weight`` pairs; everything else is dense.
        """
        fh.write(f"{self.rows} {self.cols} {self.kind}\n")
        for i in range(self.rows):
            if self.kind == "sparse":
                fh.write(" ".join(f"{j}:{w}" for j, w in self.row_support(i)) + "\n")
            else:
                fh.write(" ".join(_fmt(v) for v in self.values[i]) + "\n")

    @classmethod
    def load(cls, fh: Iterable[str]) -> "SensingMatrix":
        it = iter(fh)
        header = next(it).split()
        if len(header) != 3:
            raise ValueError("matrix dump header must be 'rows cols kind'")
        rows, cols, kind = int(header[0]), int(header[1]), header[2]
        out = np.zeros((rows, cols))
        for i in range(rows):
            line = next(it).split()
            if kind == "sparse":
                for tok in line:
                    j, w = tok.split(":")
                    out[i, int(j)] = float(w)
            else:
                if len(line) != cols:
                    raise ValueError(f"row {i}: expected {cols} values, got {len(line)}")
                out[i] = [float(t) for t in line]
        return cls(out, kind)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class CoherenceReport:
    mu: float
    d: int | None = None
    reference_range: tuple[float, float] = (0.24, 0.32)


def build_sparse_matrix(
    iv: int,
    fp: int = DEFAULT_FP,
    shift_bits: int = 8,
    lsb_mask: int = 0x00FF,
    d: int = 15,
    rows: int = 96,
    cols: int = 256,
) -> SensingMatrix:
    """Row-sparse +/-1-accumulated matrix with ``d`` LFSR draws per row.

    The folded index ``(sr >> shift_bits) ^ (sr & lsb_mask)`` is reduced
    modulo ``cols`` so the construction also works for ``cols != 256``.
    Repeated draws of one column accumulate.
    """
    if d < 1 or rows < 1 or cols < 1:
        raise ValueError("d, rows and cols must be positive")
    reg = Lfsr16State(fp, iv)
    phi = np.zeros((rows, cols))
    for i in range(rows):
        for _ in range(d):
            msb, src = reg.step_alg1()
            j = ((src >> shift_bits) ^ (src & lsb_mask)) % cols
            phi[i, j] += -1.0 if msb else 1.0
    return SensingMatrix(phi, "sparse")


def build_binary_matrix(ivs: int | Sequence[int], fp: int = DEFAULT_FP,
                        rows: int = 150, cols: int = 96) -> SensingMatrix:
    """+/-1 matrix, one Galois LFSR step per entry.

    The register is re-seeded at the start of every row.  ``ivs`` is either
    a single seed reused for all rows or one seed per row.
    """
    if isinstance(ivs, (int, np.integer)):
        ivs = [int(ivs)] * rows
    if len(ivs) != rows:
        raise ValueError(f"need {rows} row seeds, got {len(ivs)}")
    phi = np.empty((rows, cols))
    for i, iv in enumerate(ivs):
        reg = Lfsr16State(fp, int(iv))
        phi[i] = [1.0 if reg.step_galois() else -1.0 for _ in range(cols)]
    return SensingMatrix(phi, "binary")


def augment_error_matrix(A: SensingMatrix, r) -> SensingMatrix:
    """``[r | A]``: the mask vector becomes column 0."""
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if r.shape[0] != A.rows:
        raise ValueError(f"mask length {r.shape[0]} does not match {A.rows} rows")
    return SensingMatrix(np.column_stack([r, A.values]), "augmented")


def augment_compression_matrix(B: SensingMatrix) -> SensingMatrix:
    m, n = B.shape
    out = np.zeros((m + 1, n + 1))
    out[0, 0] = 1.0
    out[1:, 1:] = B.values
    return SensingMatrix(out, "augmented")


def mutual_coherence(phi, psi, d: int | None = None) -> CoherenceReport:
    """Largest normalized inner product between sensing vectors and basis columns.

    The sensing vectors are the rows of ``phi`` (each lives in R^N, the
    space the basis columns span), so ``phi`` is ``M x N`` and ``psi`` is
    ``N x N``.
    """
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if phi.shape[1] != psi.shape[0]:
        raise ValueError("phi columns must match psi rows")
    row_norms = np.linalg.norm(phi, axis=1)
    if np.any(row_norms == 0):
        raise ValueError("sensing matrix has an all-zero row; coherence undefined")
    col_norms = np.linalg.norm(psi, axis=0)
    g = np.abs(phi @ psi) / np.outer(row_norms, col_norms)
    return CoherenceReport(float(g.max()), d)


def is_full_rank(A) -> bool:
    a = np.asarray(A, dtype=np.float64)
    rows, cols = a.shape
    if rows < cols:
        return False
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return False
    tol = max(rows, cols) * np.finfo(np.float64).eps * s[0]
    return int(np.sum(s > tol)) == cols
