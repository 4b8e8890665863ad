"""Experiment harness: sweeps, attacks, PRD and CSV output.

Every experiment is described by an :class:`ExperimentSpec` and returns a
list of :class:`ResultRow`.  Per-trial rows carry ``trial >= 0``; rows that
aggregate a (scheme, M, L, SNR) cell carry ``trial = -1`` and hold the mean
PRD and, for ``tx_efficiency``, the efficiency in percent.

Randomness is derived from ``spec.seed`` only.  Each trial seeds its own
generator from ``(seed, scheme, grid index, trial)``, so rows do not depend
on evaluation order.

Signal selection (``records``, ``block``): trial ``t`` uses record
``records[t % n]`` and, unless ``block`` pins one block, block
``t // n`` of that record.  With a pinned block every trial sends the same
signal block under a fresh block id, i.e. a fresh mask or error matrix and
fresh channel noise.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baseline, matgen, phy
from .codec import (Codec, CodecParams, KeySchedule, MeasurementBlock, correct_measurements,
                    estimate_error, mask_from_words, projection_matrix, reconstruct_signal)
from .ecg import RECORD_IDS, EcgRecord, load_ecg, synthetic_record
from .l1solver import dct_basis
from .prng import KEY_BYTES, LfgGenerator

EXPERIMENTS = ("coherence_sweep", "quantization_sweep", "prd_vs_snr", "tx_efficiency",
               "attack_kpa", "attack_known_matrices")
SCHEMES = ("soa", "encrust", "l_encrust")

PRD_SUCCESS = 1.0


def prd(x, x_hat) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x_hat = np.asarray(x_hat, dtype=np.float64).reshape(-1)
    if x.shape != x_hat.shape:
        raise ValueError("x and x_hat lengths differ")
    den = float(np.sum(x * x))
    if den == 0.0:
        raise ValueError("PRD undefined for an all-zero reference")
    return 100.0 * math.sqrt(float(np.sum((x - x_hat) ** 2)) / den)


# -- spec and rows -----------------------------------------------------------

_DEFAULT_OPTIONS = {
    "records": ",".join(RECORD_IDS),
    "block": "all",
    "seconds": "60",
    "data_dir": "",
    "retries_l_encrust": "10",
    "retries_soa": "0",
    "samples_per_chip": "2",
    "combining": "soft",
    "m_grid": "96,106,116,126,136,146",
    "d_grid": ",".join(str(d) for d in range(1, 21)),
    "mask_scales": "0,0.0001,0.001,0.01,0.1,1",
}


@dataclass
class ExperimentSpec:
    experiment: str
    params: CodecParams = field(default_factory=CodecParams)
    snr_grid: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    trials: int = 100
    seed: int = 0
    scheme_set: tuple[str, ...] = ("soa", "l_encrust")
    options: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        bad = set(self.scheme_set) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        unknown = set(self.options) - set(_DEFAULT_OPTIONS)
        if unknown:
            raise ValueError(f"unknown options {sorted(unknown)}")
        self.snr_grid = tuple(float(s) for s in self.snr_grid)
        self.scheme_set = tuple(self.scheme_set)

    def option(self, key: str) -> str:
        return self.options.get(key, _DEFAULT_OPTIONS[key])

    def int_list(self, key: str) -> list[int]:
        return [int(v) for v in self.option(key).split(",") if v.strip()]

    def float_list(self, key: str) -> list[float]:
        return [float(v) for v in self.option(key).split(",") if v.strip()]


@dataclass
class ResultRow:
    experiment: str
    scheme: str
    M: int
    L: int
    d: int
    snr_db: float | None
    trial: int
    prd: float | None
    tx_efficiency_pct: float | None = None
    extra: dict[str, object] = field(default_factory=dict)


CSV_COLUMNS = [f.name for f in fields(ResultRow)]

_PARAM_KEYS = {"N": int, "M": int, "L": int, "d": int, "c": float, "alpha2": float,
               "mask_envelope": float}


def _parse_grid(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive) or a comma list."""
    text = text.strip()
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(round(lo + i * step, 10) for i in range(n))
    return tuple(float(v) for v in text.split(",") if v.strip())


def parse_config(text: str, experiment: str | None = None) -> ExperimentSpec:
    """Build a spec from ``key=value`` lines (``#`` starts a comment)."""
    kw: dict = {}
    params: dict = {}
    options: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "experiment":
            kw["experiment"] = value
        elif key == "trials":
            kw["trials"] = int(value)
        elif key == "seed":
            kw["seed"] = int(value, 0)
        elif key == "snr_grid":
            kw["snr_grid"] = _parse_grid(value)
        elif key == "scheme_set":
            kw["scheme_set"] = tuple(s.strip() for s in value.split(",") if s.strip())
        elif key in _PARAM_KEYS:
            params[key] = _PARAM_KEYS[key](value)
        elif key in _DEFAULT_OPTIONS:
            options[key] = value
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    if experiment is not None:
        kw["experiment"] = experiment
    if "experiment" not in kw:
        raise ValueError("config names no experiment")
    return ExperimentSpec(params=CodecParams(**params), options=options, **kw)


def default_spec(experiment: str, **overrides) -> ExperimentSpec:
    """Default geometry and signal selection for each experiment."""
    base: dict = {"experiment": experiment}
    opts: dict[str, str] = {}
    if experiment == "tx_efficiency":
        base["params"] = CodecParams(M=96, L=168)
        opts.update(records="100", block="0")
    elif experiment == "prd_vs_snr":
        base["params"] = CodecParams(M=96, L=168)
    elif experiment == "quantization_sweep":
        base["params"] = CodecParams(M=96, L=168)
        base["scheme_set"] = ("encrust", "l_encrust")
    elif experiment == "attack_known_matrices":
        base["params"] = CodecParams(M=96, L=168)
        base["scheme_set"] = ("l_encrust",)
        opts.update(records="100", block="0")
    elif experiment == "attack_kpa":
        base["params"] = CodecParams(M=96, L=168)
        base["scheme_set"] = ("l_encrust",)
    elif experiment == "coherence_sweep":
        base["scheme_set"] = ()
    opts.update(overrides.pop("options", {}))
    base.update(overrides)
    return ExperimentSpec(options=opts, **base)


# -- shared plumbing ------------------------------------------------------------

def _rng(spec: ExperimentSpec, *path: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed & (2**63 - 1), *path])


def experiment_keys(seed: int) -> tuple[KeySchedule, bytes]:
    """LFG key schedule and AES key derived from the experiment seed."""
    rng = np.random.default_rng([seed & (2**63 - 1), 0xC0DE])
    while True:
        lfg = rng.bytes(KEY_BYTES)
        if any(lfg[:14]) and any(lfg[14:]):
            break
    return KeySchedule(lfg), rng.bytes(baseline.AES_KEY_BYTES)


def _records(spec: ExperimentSpec) -> list[EcgRecord]:
    ids = [r.strip() for r in spec.option("records").split(",") if r.strip()]
    data_dir = spec.option("data_dir")
    seconds = float(spec.option("seconds"))
    out = []
    for rid in ids:
        path = Path(data_dir) / f"{rid}.txt" if data_dir else None
        out.append(load_ecg(path) if path is not None and path.exists()
                   else synthetic_record(rid, seconds))
    if not out:
        raise ValueError("no records selected")
    return out


def _signal(spec: ExperimentSpec, records: list[EcgRecord], trial: int) -> tuple[str, int, np.ndarray]:
    n = len(records)
    rec = records[trial % n]
    blocks = rec.blocks(spec.params.N)
    if blocks.shape[0] == 0:
        raise ValueError(f"record {rec.record_id} is shorter than one block")
    pinned = spec.option("block")
    k = int(pinned) if pinned != "all" else (trial // n) % blocks.shape[0]
    if k >= blocks.shape[0]:
        raise ValueError(f"record {rec.record_id} has no block {k}")
    return rec.record_id, k, blocks[k]


def _payload_bits(blk: MeasurementBlock) -> np.ndarray:
    return np.unpackbits(np.frombuffer(blk.payload_bytes(), dtype=np.uint8))


def _channel(spec: ExperimentSpec, snr: float, scheme: str) -> phy.ChannelConfig:
    if scheme == "soa":
        retries, protocol = int(spec.option("retries_soa")), "full_frame"
    else:
        retries, protocol = int(spec.option("retries_l_encrust")), "header_only"
    return phy.ChannelConfig(snr_db=snr, max_retransmissions=retries, protocol=protocol,
                             samples_per_chip=int(spec.option("samples_per_chip")),
                             combining=spec.option("combining"))


def _codec_trial(codec: Codec, x, block_id: int, cfg: phy.ChannelConfig,
                 rng: np.random.Generator) -> tuple[float, phy.TransmissionReport, int]:
    """Encode, send the payload over the channel, decode.  Block headers
    travel out of band (they are protected like the frame headers)."""
    blk = codec.encode(x, block_id)
    rep = phy.transmit(_payload_bits(blk), cfg, rng)
    rx = blk.with_payload(np.packbits(rep.delivered_bits).tobytes())
    n_bad = int(np.count_nonzero(rx.q != blk.q))
    out = codec.decode_block(rx, reference=x)
    return out.prd_vs_reference, rep, n_bad


def _soa_trial(x, plan: baseline.HaarPlan, key: bytes, nonce: bytes, cfg: phy.ChannelConfig,
               rng: np.random.Generator) -> tuple[float, phy.TransmissionReport]:
    coded = baseline.soa_encode(x, plan, key, nonce)
    rep = phy.transmit(coded.bits, cfg, rng)
    x_hat = _soa_receive(rep, coded, plan, key, nonce)
    return prd(x, x_hat), rep


def _soa_receive(rep: phy.TransmissionReport, coded: baseline.CodedBitstream,
                 plan: baseline.HaarPlan, key: bytes, nonce: bytes) -> np.ndarray:
    """Decode, treating coefficients carried by lost frames as erased (zero)."""
    side = coded.side_info
    bits = baseline.aes_ctr_apply(rep.delivered_bits, key, nonce)
    data, _ = baseline.hamming74_decode(bits)
    q = baseline.bits_to_coeffs(data[: plan.compressed_bits], plan.coeff_bits)
    if rep.lost_frames:
        frame_bits = 8 * phy.MAX_PAYLOAD_BYTES
        erased = np.zeros(q.size, dtype=bool)
        for seq in rep.lost_frames:
            lo, hi = seq * frame_bits, (seq + 1) * frame_bits
            # coded bit range -> data bit range -> coefficient range
            lo_d, hi_d = (lo // 7) * 4, -(-hi // 7) * 4
            erased[lo_d // plan.coeff_bits: -(-hi_d // plan.coeff_bits)] = True
        q = np.where(erased[: q.size], 0, q)
    return baseline.haar_decompress(q, side, plan)


def _aggregate(rows: list[ResultRow], experiment: str) -> list[ResultRow]:
    cells: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        cells.setdefault((r.scheme, r.M, r.L, r.d, r.snr_db), []).append(r)
    out = []
    for (scheme, M, L, d, snr), group in cells.items():
        prds = [r.prd for r in group if r.prd is not None]
        eff = [r.tx_efficiency_pct for r in group if r.tx_efficiency_pct is not None]
        extra = {"trials": len(group)}
        if prds:
            extra["median_prd"] = float(np.median(prds))
        out.append(ResultRow(experiment, scheme, M, L, d, snr, -1,
                             float(np.mean(prds)) if prds else None,
                             float(np.mean(eff)) if eff else None, extra))
    return out


# -- sweeps ------------------------------------------------------------------

def run_coherence_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    p = spec.params
    psi = dct_basis(p.N)
    keys, _ = experiment_keys(spec.seed)
    rows = []
    for d in spec.int_list("d_grid"):
        phi = matgen.build_sparse_matrix(keys.b_iv, p.fp, p.shift_bits, p.lsb_mask, d, p.M, p.N)
        mu = matgen.mutual_coherence(phi, psi, d).mu
        rows.append(ResultRow(spec.experiment, "sparse", p.M, p.L, d, None, 0, None, None, {"mu": mu}))
    ivs = LfgGenerator.from_key(keys.lfg_key).nonzero_words(p.M)
    binary = matgen.build_binary_matrix(ivs, p.fp, rows=p.M, cols=p.N)
    rows.append(ResultRow(spec.experiment, "binary", p.M, p.L, p.N, None, 0, None, None,
                          {"mu": matgen.mutual_coherence(binary, psi).mu}))
    for t in range(spec.trials):
        g = _rng(spec, 7, t).standard_normal((p.M, p.N))
        rows.append(ResultRow(spec.experiment, "gaussian", p.M, p.L, p.N, None, t, None, None,
                              {"mu": matgen.mutual_coherence(g, psi).mu}))
    return rows


def run_quantization_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    keys, _ = experiment_keys(spec.seed)
    records = _records(spec)
    rows = []
    for s_idx, scheme in enumerate(spec.scheme_set):
        if scheme == "soa":
            continue
        for M in spec.int_list("m_grid"):
            params = replace(spec.params, M=M, scheme=scheme)
            codec = Codec(params, keys)
            for t in range(spec.trials):
                rid, k, x = _signal(spec, records, t)
                y = codec.measure(x, t)
                unq = codec.decode(y, t, reference=x).prd_vs_reference
                q = codec.decode_block(codec.encode(x, t), reference=x).prd_vs_reference
                rows.append(ResultRow(spec.experiment, scheme, M, params.L, params.d, None, t, q,
                                      None, {"prd_unquantized": unq, "record": rid, "block": k}))
    agg = []
    for r in _aggregate(rows, spec.experiment):
        group = [g.extra["prd_unquantized"] for g in rows if (g.scheme, g.M) == (r.scheme, r.M)]
        r.extra["prd_unquantized"] = float(np.mean(group))
        agg.append(r)
    return rows + agg


def _snr_sweep(spec: ExperimentSpec, efficiency: bool) -> list[ResultRow]:
    keys, aes_key = experiment_keys(spec.seed)
    records = _records(spec)
    plan = baseline.HaarPlan()
    rows = []
    for s_idx, scheme in enumerate(spec.scheme_set):
        codec = None
        if scheme != "soa":
            codec = Codec(replace(spec.params, scheme=scheme), keys)
        for g_idx, snr in enumerate(spec.snr_grid):
            cfg = _channel(spec, snr, scheme)
            for t in range(spec.trials):
                rng = _rng(spec, s_idx, g_idx, t)
                rid, k, x = _signal(spec, records, t)
                extra: dict[str, object] = {"record": rid, "block": k}
                if scheme == "soa":
                    value, rep = _soa_trial(x, plan, aes_key, baseline.block_nonce(t), cfg, rng)
                    M, L, d = plan.kept_coeffs, 0, 0
                else:
                    value, rep, n_bad = _codec_trial(codec, x, t, cfg, rng)
                    M, L, d = codec.params.M, codec.params.L, codec.params.d
                    extra["corrupted_samples"] = n_bad
                extra.update(frames_sent=rep.frames_sent, header_failures=rep.header_failures,
                             payload_bit_errors=rep.payload_bit_errors, failed=int(rep.failed))
                eff = None
                if efficiency:
                    ok = (not rep.failed) and value < PRD_SUCCESS
                    eff = 100.0 if ok else 0.0
                rows.append(ResultRow(spec.experiment, scheme, M, L, d, snr, t, value, eff, extra))
    return rows + _aggregate(rows, spec.experiment)


def run_prd_vs_snr(spec: ExperimentSpec) -> list[ResultRow]:
    return _snr_sweep(spec, efficiency=False)


def run_tx_efficiency(spec: ExperimentSpec) -> list[ResultRow]:
    """Success: the block arrives within the scheme's retry budget and
    decodes with PRD below 1.  SoA runs the unmodified link (any FCS error
    triggers retransmission, default budget 0); the codecs run the
    header-only rule."""
    return _snr_sweep(spec, efficiency=True)


# -- attacks -------------------------------------------------------------------

@dataclass
class KpaResult:
    h_estimate: np.ndarray
    h_true: np.ndarray
    relative_error: float

    @property
    def prd(self) -> float:
        return 100.0 * self.relative_error


def attack_known_plaintext(blocks, codec: Codec, block_ids=None, mask_scale: float = 1.0,
                           row: int = 0) -> KpaResult:
    """Estimate row ``row`` of ``H = A B`` from N plaintext/ciphertext pairs.

    The adversary stacks the plaintexts as rows of ``X``, collects entry
    ``row`` of each (noise-free, unquantized) ciphertext into ``d`` and
    solves ``X h = d``.  ``mask_scale`` multiplies the live mask, 0 gives
    the unmasked control.
    """
    if codec.params.scheme != "l_encrust":
        raise ValueError("the known-plaintext experiment targets L-ENCRUST")
    X = np.asarray(blocks, dtype=np.float64)
    n = codec.params.N
    if X.shape != (n, n):
        raise ValueError(f"need {n} plaintext blocks of length {n}")
    if not matgen.is_full_rank(X):
        raise np.linalg.LinAlgError("plaintext matrix is singular; draw other blocks")
    ids = list(range(n)) if block_ids is None else list(block_ids)
    H = codec.H
    d = np.array([H[row] @ X[i] + mask_scale * codec.params.c * codec.mask(ids[i])[row]
                  for i in range(n)])
    h_hat = np.linalg.solve(X, d)
    h = H[row]
    return KpaResult(h_hat, h.copy(), float(np.linalg.norm(h_hat - h) / np.linalg.norm(h)))


def attack_known_matrices(blocks, codec: Codec, rng: np.random.Generator,
                          block_ids=None, true_mask: bool = False) -> np.ndarray:
    """PRD per block for an adversary holding A and B but not the masks.

    The adversary guesses a uniformly random 16-bit word vector for each
    mask and runs the legitimate decoder with it.  ``true_mask`` hands over
    the real mask instead (control arm).
    """
    if codec.params.scheme != "l_encrust":
        raise ValueError("the known-matrices experiment targets L-ENCRUST")
    X = np.atleast_2d(np.asarray(blocks, dtype=np.float64))
    ids = list(range(X.shape[0])) if block_ids is None else list(block_ids)
    out = []
    for x, k in zip(X, ids):
        blk = codec.encode(x, k)
        if true_mask:
            r = codec.mask(k)
        else:
            r = mask_from_words(rng.integers(0, 1 << 16, codec.params.L), codec.mask_envelope)
        A_u = matgen.augment_error_matrix(codec.A, r)
        P = projection_matrix(A_u)
        y = blk.dequantize()
        eps = math.sqrt(codec.params.L) * blk.scale / 2
        e_hat, _ = estimate_error(P, y, codec.solver, epsilon=eps)
        dec = reconstruct_signal(A_u, codec.B_u, correct_measurements(y, e_hat), codec.psi, codec.solver)
        out.append(prd(x, dec.x_hat))
    return np.array(out)


def run_attack_kpa(spec: ExperimentSpec) -> list[ResultRow]:
    keys, _ = experiment_keys(spec.seed)
    p = replace(spec.params, scheme="l_encrust")
    codec = Codec(p, keys)
    records = _records(spec)
    pool = np.concatenate([r.blocks(p.N) for r in records])
    if pool.shape[0] < p.N:
        raise ValueError(f"need {p.N} blocks, records hold {pool.shape[0]}")
    rows = []
    for t in range(spec.trials):
        start = (t * p.N) % (pool.shape[0] - p.N + 1)
        X = pool[start: start + p.N]
        ids = range(t * p.N, (t + 1) * p.N)
        for scale in spec.float_list("mask_scales"):
            res = attack_known_plaintext(X, codec, ids, mask_scale=scale)
            rows.append(ResultRow(spec.experiment, "l_encrust", p.M, p.L, p.d, None, t, res.prd, None,
                                  {"mask_scale": scale, "relative_error": res.relative_error,
                                   "cond_X": float(np.linalg.cond(X))}))
    return rows


def run_attack_known_matrices(spec: ExperimentSpec) -> list[ResultRow]:
    keys, _ = experiment_keys(spec.seed)
    p = replace(spec.params, scheme="l_encrust")
    codec = Codec(p, keys)
    records = _records(spec)
    rows = []
    for t in range(spec.trials):
        rid, k, x = _signal(spec, records, t)
        adv = attack_known_matrices(x, codec, _rng(spec, 9, t), [t])[0]
        ctrl = attack_known_matrices(x, codec, _rng(spec, 9, t), [t], true_mask=True)[0]
        rows.append(ResultRow(spec.experiment, "l_encrust", p.M, p.L, p.d, None, t, adv, None,
                              {"control_prd": ctrl, "record": rid, "block": k}))
    return rows


_RUNNERS = {
    "coherence_sweep": run_coherence_sweep,
    "quantization_sweep": run_quantization_sweep,
    "prd_vs_snr": run_prd_vs_snr,
    "tx_efficiency": run_tx_efficiency,
    "attack_kpa": run_attack_kpa,
    "attack_known_matrices": run_attack_known_matrices,
}


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    return _RUNNERS[spec.experiment](spec)


# -- CSV ---------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _extra_cell(extra: dict) -> str:
    return ";".join(f"{k}={_cell(extra[k])}" for k in sorted(extra))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    ordered = sorted(rows, key=lambda r: (r.experiment, r.scheme, r.M, r.L, r.d,
                                          -math.inf if r.snr_db is None else r.snr_db, r.trial,
                                          _extra_cell(r.extra)))
    for r in ordered:
        w.writerow([r.experiment, r.scheme, r.M, r.L, r.d, _cell(r.snr_db), r.trial,
                    _cell(r.prd), _cell(r.tx_efficiency_pct), _extra_cell(r.extra)])
    return buf.getvalue()


def emit_csv(rows, path) -> None:
    Path(path).write_bytes(rows_to_csv(rows).encode("utf-8"))


def read_csv(path) -> list[ResultRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            extra: dict[str, object] = {}
            if rec["extra"]:
                for item in rec["extra"].split(";"):
                    k, v = item.split("=", 1)
                    extra[k] = _parse_scalar(v)
            out.append(ResultRow(rec["experiment"], rec["scheme"], int(rec["M"]), int(rec["L"]),
                                 int(rec["d"]), _opt_float(rec["snr_db"]), int(rec["trial"]),
                                 _opt_float(rec["prd"]), _opt_float(rec["tx_efficiency_pct"]), extra))
    return out


def _opt_float(s: str) -> float | None:
    return float(s) if s != "" else None


def _parse_scalar(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s
