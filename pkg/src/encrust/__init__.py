"""Compressive-sensing codecs with built-in secrecy and gross-error recovery.

The two schemes, ENCRUST and L-ENCRUST, live in :mod:`encrust.codec`.
Matrix construction (:mod:`encrust.matgen`), the keyed generators
(:mod:`encrust.prng`) and the l1 solver (:mod:`encrust.l1solver`) are
usable on their own.  :mod:`encrust.baseline`, :mod:`encrust.phy` and
:mod:`encrust.bench` hold the comparison chain, the channel model and the
experiment harness.
"""

from .codec import (Codec, CodecParams, CodecSetupError, DecodedBlock, KeySchedule,
                    MeasurementBlock, decode, encode_encrust, encode_l_encrust, make_codec)
from .l1solver import BasisPursuitProblem, SolverConfig, SolverResult, dct_basis, solve_basis_pursuit
from .matgen import SensingMatrix, build_binary_matrix, build_sparse_matrix, mutual_coherence
from .prng import LfgGenerator, Lfsr16State

__all__ = [
    "BasisPursuitProblem", "Codec", "CodecParams", "CodecSetupError", "DecodedBlock",
    "KeySchedule", "LfgGenerator", "Lfsr16State", "MeasurementBlock", "SensingMatrix",
    "SolverConfig", "SolverResult", "build_binary_matrix", "build_sparse_matrix", "dct_basis",
    "decode", "encode_encrust", "encode_l_encrust", "make_codec", "mutual_coherence",
    "solve_basis_pursuit",
]
