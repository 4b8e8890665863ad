import numpy as np
import pytest

from encrust.ecg import (RECORD_IDS, EcgRecord, builtin_records, load_ecg, save_ecg,
                         synthetic_record)
from encrust.l1solver import dct_basis


def test_records_are_deterministic_11_bit():
    recs = builtin_records(10)
    assert [r.record_id for r in recs] == list(RECORD_IDS)
    for r in recs:
        assert r.samples.size == 3600
        assert 0 <= r.samples.min() and r.samples.max() < 2048
        assert np.array_equal(r.samples, synthetic_record(r.record_id, 10).samples)


def test_beats_have_plausible_rate():
    r = synthetic_record("100", 30)
    x = r.samples - np.median(r.samples)
    peaks = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]) & (x[1:-1] > 0.6 * x.max()))
    bpm = 60 * peaks.size / 30
    assert 60 < bpm < 90


def test_blocks_shape():
    r = synthetic_record("230", 2)
    assert r.blocks(256).shape == (720 // 256, 256)
    assert r.blocks(256, count=1).shape == (1, 256)


def test_unknown_record():
    with pytest.raises(KeyError):
        synthetic_record("999")


def test_record_range_checked():
    with pytest.raises(ValueError):
        EcgRecord("x", np.array([0, 2048]))


def test_save_load_round_trip(tmp_path):
    r = synthetic_record("111", 1)
    save_ecg(r, tmp_path / "r.txt")
    back = load_ecg(tmp_path / "r.txt")
    assert back.record_id == "111" and np.array_equal(back.samples, r.samples)


@pytest.mark.parametrize("text", ["", "1\n2\n", "# 100 360\n1\n", "# 100 360 11\n1\nfoo\n"])
def test_load_errors(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ValueError):
        load_ecg(p)


def test_ecg_is_compressible_in_dct():
    x = synthetic_record("100", 10).blocks()[2]
    theta = dct_basis(256).T @ x
    energy = np.sort(theta ** 2)[::-1]
    assert energy[:40].sum() / energy.sum() > 0.999


def test_slow_sine_concentrates_in_low_dct_bins():
    t = np.arange(256) / 360
    theta = dct_basis(256).T @ np.sin(2 * np.pi * t)
    share = np.sum(theta[:8] ** 2) / np.sum(theta ** 2)
    assert share > 0.99
