import math
from dataclasses import replace

import numpy as np
import pytest

from encrust import bench
from encrust.codec import CodecParams


def test_prd_examples():
    assert bench.prd([3, 4], [3, 0]) == pytest.approx(80.0)
    assert bench.prd([1, 2, 3], [1, 2, 3]) == 0.0
    assert bench.prd([1, 1], [0, 0]) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        bench.prd([0, 0], [1, 1])
    with pytest.raises(ValueError):
        bench.prd([1, 2], [1])


def test_parse_config():
    spec = bench.parse_config(
        "# comment\nexperiment = tx_efficiency\ntrials=7\nseed=0x10\nsnr_grid = -2:1:1.5\n"
        "M=106\nL=168\nscheme_set=soa\nrecords=100,104 # trailing\nretries_soa = 2\n")
    assert spec.experiment == "tx_efficiency" and spec.trials == 7 and spec.seed == 16
    assert spec.snr_grid == (-2.0, -0.5, 1.0)
    assert spec.params.M == 106 and spec.params.L == 168
    assert spec.scheme_set == ("soa",)
    assert spec.option("records") == "100,104" and spec.option("retries_soa") == "2"
    assert spec.option("retries_l_encrust") == "10"


def test_parse_config_list_grid_and_override():
    spec = bench.parse_config("experiment=prd_vs_snr\nsnr_grid=0, 3\n", experiment="tx_efficiency")
    assert spec.experiment == "tx_efficiency" and spec.snr_grid == (0.0, 3.0)


@pytest.mark.parametrize("text", [
    "trials=3\n",
    "experiment=tx_efficiency\nbogus=1\n",
    "experiment=tx_efficiency\nnot a pair\n",
    "experiment=nope\n",
    "experiment=tx_efficiency\nsnr_grid=0:3:0\n",
    "experiment=tx_efficiency\nscheme_set=qam\n",
    "experiment=tx_efficiency\ntrials=0\n",
])
def test_parse_config_errors(text):
    with pytest.raises(ValueError):
        bench.parse_config(text)


def test_default_specs():
    tx = bench.default_spec("tx_efficiency")
    assert tx.params.L == 168 and tx.option("records") == "100" and tx.option("block") == "0"
    assert bench.default_spec("prd_vs_snr").option("block") == "all"
    assert bench.default_spec("quantization_sweep").scheme_set == ("encrust", "l_encrust")
    with pytest.raises(ValueError):
        bench.default_spec("nope")


def test_experiment_keys_deterministic():
    a, b = bench.experiment_keys(3), bench.experiment_keys(3)
    assert a[0].lfg_key == b[0].lfg_key and a[1] == b[1] and len(a[1]) == 16
    assert bench.experiment_keys(4)[0].lfg_key != a[0].lfg_key


def test_csv_round_trip_and_order(tmp_path):
    rows = [
        bench.ResultRow("prd_vs_snr", "soa", 96, 0, 0, 1.0, 1, 2.5, None, {"b": 1, "a": "x"}),
        bench.ResultRow("prd_vs_snr", "soa", 96, 0, 0, -1.0, 0, 0.1, 100.0, {}),
        bench.ResultRow("coherence_sweep", "sparse", 96, 150, 3, None, 0, None, None, {"mu": 0.25}),
    ]
    text = bench.rows_to_csv(rows)
    lines = text.split("\r\n")
    assert lines[0] == ",".join(bench.CSV_COLUMNS)
    assert lines[1].startswith("coherence_sweep") and ",-1.0," in lines[2]
    assert "a=x;b=1" in text
    assert bench.rows_to_csv(rows[::-1]) == text
    bench.emit_csv(rows, tmp_path / "r.csv")
    back = bench.read_csv(tmp_path / "r.csv")
    assert bench.rows_to_csv(back) == text


def test_coherence_sweep_small():
    spec = bench.default_spec("coherence_sweep", trials=3, options={"d_grid": "1,12"})
    rows = bench.run_experiment(spec)
    kinds = [r.scheme for r in rows]
    assert kinds.count("sparse") == 2 and kinds.count("binary") == 1 and kinds.count("gaussian") == 3
    mu = {r.d: r.extra["mu"] for r in rows if r.scheme == "sparse"}
    assert mu[1] < 0.1 and 0.2 < mu[12] < 0.35
    assert all(0.2 < r.extra["mu"] < 0.35 for r in rows if r.scheme == "gaussian")


def _small(experiment, **kw):
    spec = bench.default_spec(experiment, trials=2, **kw)
    return bench.rows_to_csv(bench.run_experiment(spec)), bench.run_experiment(spec)


def test_tx_efficiency_small_is_deterministic():
    text, rows = _small("tx_efficiency", snr_grid=(-1.0, 6.0))
    assert text == _small("tx_efficiency", snr_grid=(-1.0, 6.0))[0]
    agg = {(r.scheme, r.snr_db): r for r in rows if r.trial == -1}
    assert set(agg) == {(s, g) for s in ("soa", "l_encrust") for g in (-1.0, 6.0)}
    assert agg[("soa", 6.0)].tx_efficiency_pct == 100.0
    assert agg[("l_encrust", 6.0)].tx_efficiency_pct == 100.0
    assert all(r.extra["trials"] == 2 for r in agg.values())
    per_trial = [r for r in rows if r.trial >= 0]
    assert all(r.tx_efficiency_pct in (0.0, 100.0) for r in per_trial)


def test_prd_vs_snr_small_pools_records():
    spec = bench.default_spec("prd_vs_snr", trials=5, snr_grid=(6.0,), scheme_set=("soa",))
    rows = [r for r in bench.run_experiment(spec) if r.trial >= 0]
    assert sorted(r.extra["record"] for r in rows) == sorted(bench.RECORD_IDS)
    assert all(r.prd < 1.0 for r in rows)


def test_soa_lost_frame_is_erased():
    spec = bench.default_spec("prd_vs_snr", trials=1, snr_grid=(-30.0,), scheme_set=("soa",))
    (row,) = [r for r in bench.run_experiment(spec) if r.trial == 0]
    assert row.extra["failed"] == 1
    assert row.prd == pytest.approx(100.0)


def test_quantization_sweep_small():
    spec = bench.default_spec("quantization_sweep", trials=1, scheme_set=("l_encrust",),
                              options={"m_grid": "96,126"})
    rows = bench.run_experiment(spec)
    agg = [r for r in rows if r.trial == -1]
    assert [r.M for r in sorted(agg, key=lambda r: r.M)] == [96, 126]
    assert all(r.prd < 5 and "prd_unquantized" in r.extra for r in agg)


def test_kpa_control_and_live():
    spec = bench.default_spec("attack_kpa", trials=1, options={"mask_scales": "0,1"})
    rows = bench.run_experiment(spec)
    err = {r.extra["mask_scale"]: r.extra["relative_error"] for r in rows}
    assert err[0.0] < 1e-6 and err[1.0] > 1


def test_kpa_validation():
    from encrust.codec import Codec
    keys, _ = bench.experiment_keys(0)
    codec = Codec(CodecParams(M=96, L=168), keys)
    with pytest.raises(ValueError):
        bench.attack_known_plaintext(np.ones((3, 256)), codec)
    with pytest.raises(np.linalg.LinAlgError):
        bench.attack_known_plaintext(np.ones((256, 256)), codec)
    with pytest.raises(ValueError):
        bench.attack_known_plaintext(np.eye(256), Codec(CodecParams(scheme="encrust"), keys))


def test_known_matrices_small():
    spec = bench.default_spec("attack_known_matrices", trials=2)
    rows = bench.run_experiment(spec)
    assert all(r.prd > 100 and r.extra["control_prd"] < 1 for r in rows)


def test_spec_validation():
    with pytest.raises(ValueError):
        bench.ExperimentSpec("tx_efficiency", options={"nope": "1"})
    with pytest.raises(ValueError):
        bench.ExperimentSpec("tx_efficiency", scheme_set=("x",))
    spec = bench.ExperimentSpec("tx_efficiency", params=replace(CodecParams(), M=100))
    assert spec.int_list("m_grid")[0] == 96 and math.isclose(spec.float_list("mask_scales")[1], 1e-4)
