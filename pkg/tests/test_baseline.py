import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from encrust import baseline as bl
from encrust.ecg import synthetic_record

KEY = bytes(range(16))
PLAN = bl.HaarPlan()


@pytest.fixture(scope="module")
def x():
    return synthetic_record("104", 5).blocks()[0]


@given(arrays(np.float64, 256, elements=st.floats(-1e4, 1e4)), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_haar_parseval_and_inverse(v, levels):
    c = bl.haar_forward(v, levels)
    assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(v), rel=1e-9, abs=1e-9)
    assert np.allclose(bl.haar_inverse(c, levels), v, atol=1e-8)


def test_haar_constant_signal_is_dc_only():
    c = bl.haar_forward(np.full(16, 3.0), 2)
    assert np.allclose(c[:4], 6.0) and np.allclose(c[4:], 0.0)


def test_haar_by_hand():
    c = bl.haar_forward([1.0, 3.0, 5.0, 7.0], 1)
    s = np.sqrt(2)
    assert np.allclose(c, [4 / s, 12 / s, -2 / s, -2 / s])


def test_haar_validation():
    with pytest.raises(ValueError):
        bl.haar_forward(np.ones(6), 1)
    with pytest.raises(ValueError):
        bl.haar_forward(np.ones(4), 3)
    with pytest.raises(ValueError):
        bl.HaarPlan(coeff_bits=1)
    with pytest.raises(ValueError):
        bl.haar_compress(np.ones(256), bl.HaarPlan(kept_coeffs=32))


def test_compress_keeps_all_approximation_and_largest_details(x):
    q, side = bl.haar_compress(x, PLAN)
    assert q.size == 96 and side.positions.size == 32
    detail = np.abs(bl.haar_forward(x, 2)[64:])
    assert detail[side.positions].min() >= np.sort(detail)[-32] - 1e-9
    assert np.abs(q).max() == 32767


def test_compress_dc_only_is_exact():
    v = np.full(256, 1000.0)
    q, side = bl.haar_compress(v, PLAN)
    assert np.allclose(bl.haar_decompress(q, side, PLAN), v, rtol=1e-4)


def test_compression_quality_on_ecg(x):
    q, side = bl.haar_compress(x, PLAN)
    x_hat = bl.haar_decompress(q, side, PLAN)
    prd = 100 * np.linalg.norm(x - x_hat) / np.linalg.norm(x)
    assert prd < 1.0


def test_decompress_rejects_bad_side_info(x):
    q, side = bl.haar_compress(x, PLAN)
    bad = bl.HaarSideInfo(side.n, np.r_[side.positions[:-1], side.positions[0]], side.scale)
    with pytest.raises(ValueError):
        bl.haar_decompress(q, bad, PLAN)
    with pytest.raises(ValueError):
        bl.haar_decompress(q[:-1], side, PLAN)


@given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=40))
def test_coeff_bits_round_trip(vals):
    bits = bl.coeffs_to_bits(vals, 16)
    assert bits.size == 16 * len(vals)
    assert bl.bits_to_coeffs(bits, 16).tolist() == vals


def test_coeff_bits_msb_first():
    assert bl.coeffs_to_bits([-1, 1], 4).tolist() == [1, 1, 1, 1, 0, 0, 0, 1]
    with pytest.raises(ValueError):
        bl.bits_to_coeffs([1, 0, 1], 2)


# Hamming(7,4) ----------------------------------------------------------------------

def test_hamming_exhaustive():
    for nibble in itertools.product([0, 1], repeat=4):
        cw = bl.hamming74_encode(nibble)
        assert cw.size == 7 and cw[:4].tolist() == list(nibble)
        data, n = bl.hamming74_decode(cw)
        assert data.tolist() == list(nibble) and n == 0
        for j in range(7):
            bad = cw.copy()
            bad[j] ^= 1
            data, n = bl.hamming74_decode(bad)
            assert data.tolist() == list(nibble) and n == 1


def test_hamming_min_distance_three():
    words = [bl.hamming74_encode(n) for n in itertools.product([0, 1], repeat=4)]
    dists = [int(np.sum(a != b)) for a, b in itertools.combinations(words, 2)]
    assert min(dists) == 3


def test_hamming_padding_and_validation():
    assert bl.hamming74_encode([1, 0, 1]).size == 7
    with pytest.raises(ValueError):
        bl.hamming74_decode(np.zeros(8))
    with pytest.raises(ValueError):
        bl.hamming74_encode([2])


# AES-CTR ----------------------------------------------------------------------------

def test_aes_fips197_vector():
    key = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
    pt = bytes.fromhex("00112233445566778899aabbccddeeff")
    assert bl.aes_block_encrypt(key, pt).hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"


def test_ctr_keystream_is_counter_blocks():
    nonce = bl.block_nonce(7)
    ks = np.packbits(bl.aes_ctr_apply(np.zeros(256, dtype=np.uint8), KEY, nonce)).tobytes()
    assert ks[:16] == bl.aes_block_encrypt(KEY, nonce + (0).to_bytes(8, "big"))
    assert ks[16:] == bl.aes_block_encrypt(KEY, nonce + (1).to_bytes(8, "big"))


@given(arrays(np.uint8, st.integers(0, 300), elements=st.integers(0, 1)))
@settings(max_examples=30, deadline=None)
def test_ctr_is_an_involution(bits):
    once = bl.aes_ctr_apply(bits, KEY, bl.block_nonce(1))
    assert once.size == bits.size
    assert np.array_equal(bl.aes_ctr_apply(once, KEY, bl.block_nonce(1)), bits)


def test_ctr_output_is_balanced():
    out = bl.aes_ctr_apply(np.zeros(20000, dtype=np.uint8), KEY, bl.block_nonce(0))
    assert abs(out.mean() - 0.5) < 0.02


def test_ctr_validation():
    with pytest.raises(ValueError):
        bl.aes_ctr_apply([0, 1], bytes(5), bl.block_nonce(0))
    with pytest.raises(ValueError):
        bl.aes_ctr_apply([0, 1], KEY, b"abc")


def test_nonce_registry():
    reg = bl.NonceRegistry()
    reg.claim(KEY, bl.block_nonce(1))
    reg.claim(KEY, bl.block_nonce(2))
    reg.claim(bytes(16), bl.block_nonce(1))
    assert len(reg) == 3
    with pytest.raises(ValueError):
        reg.claim(KEY, bl.block_nonce(1))


# pipeline ------------------------------------------------------------------------------

def test_soa_bit_budget(x):
    coded = bl.soa_encode(x, PLAN, KEY, bl.block_nonce(0))
    assert PLAN.compressed_bits == 1536
    assert coded.bits.size == 2688 and coded.stage == "encrypted"


def test_soa_round_trip(x):
    coded = bl.soa_encode(x, PLAN, KEY, bl.block_nonce(0))
    q, side = bl.haar_compress(x, PLAN)
    assert np.allclose(bl.soa_decode(coded, PLAN, KEY, bl.block_nonce(0)),
                       bl.haar_decompress(q, side, PLAN))


def test_soa_corrects_one_flip_per_codeword(x):
    nonce = bl.block_nonce(3)
    coded = bl.soa_encode(x, PLAN, KEY, nonce)
    bits = coded.bits.copy()
    rng = np.random.default_rng(0)
    # CTR maps a ciphertext flip to the same plaintext position
    bits[np.arange(0, bits.size, 7) + rng.integers(0, 7, bits.size // 7)] ^= 1
    clean = bl.soa_decode(coded, PLAN, KEY, nonce)
    assert np.allclose(bl.soa_decode(bits, PLAN, KEY, nonce, coded.side_info), clean)


def test_soa_wrong_key_or_missing_side_info(x):
    coded = bl.soa_encode(x, PLAN, KEY, bl.block_nonce(0))
    bad = bl.soa_decode(coded, PLAN, bytes(16), bl.block_nonce(0))
    assert 100 * np.linalg.norm(x - bad) / np.linalg.norm(x) > 50
    with pytest.raises(ValueError):
        bl.soa_decode(coded.bits, PLAN, KEY, bl.block_nonce(0))


def test_soa_registry_blocks_reuse(x):
    reg = bl.NonceRegistry()
    bl.soa_encode(x, PLAN, KEY, bl.block_nonce(0), reg)
    with pytest.raises(ValueError):
        bl.soa_encode(x, PLAN, KEY, bl.block_nonce(0), reg)


def test_bitstream_validation():
    with pytest.raises(ValueError):
        bl.CodedBitstream([0, 1], "raw")
