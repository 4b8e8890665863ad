"""Command-line entry point.

Exit codes: 0 success, 2 usage, 3 I/O (missing, empty or truncated
files), 4 domain failure (e.g. a rank-deficient error-recovery matrix).
"""

from __future__ import annotations

import argparse
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, matgen, phy
from .codec import (Codec, CodecParams, CodecSetupError, KeySchedule, MeasurementBlock,
                    projection_matrix, read_blocks)
from .prng import KEY_BYTES, parse_hex_key

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _scheme(text: str) -> str:
    s = text.strip().lower().replace("-", "_")
    if s not in ("encrust", "l_encrust"):
        raise argparse.ArgumentTypeError(f"unknown scheme {text!r}")
    return s


def _hex16(text: str) -> int:
    v = int(text, 16)
    if not 0 < v <= 0xFFFF:
        raise argparse.ArgumentTypeError("iv must be a nonzero 16-bit value")
    return v


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", type=_scheme, default="l_encrust")
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--M", type=int, default=96)
    p.add_argument("--L", type=int, default=150)
    p.add_argument("--d", type=int, default=15)
    p.add_argument("--b-iv", type=_hex16, default=0xFFFF, help="hex iv for B")
    p.add_argument("--a-iv", type=_hex16, default=0xFFFF, help="hex iv for A (L-ENCRUST)")


def _add_key_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--key", help=f"{KEY_BYTES}-byte LFG key as hex")
    g.add_argument("--key-file", type=Path, help="file holding the hex key")


def _keys(args) -> KeySchedule:
    if args.key_file is not None:
        text = _read_text(args.key_file)
    else:
        text = args.key
    try:
        key = parse_hex_key(text, KEY_BYTES)
        return KeySchedule(key, b_iv=args.b_iv, a_iv=args.a_iv)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad key: {exc}") from None


def _codec(args) -> Codec:
    try:
        params = CodecParams(N=args.N, M=args.M, L=args.L, d=args.d, scheme=args.scheme)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    try:
        return Codec(params, _keys(args))
    except CodecSetupError as exc:
        raise CliError(EXIT_DOMAIN, str(exc)) from None


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror}") from None


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror}") from None


def _write(path: Path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror}") from None


def read_samples(path: Path) -> np.ndarray:
    """One integer per line; blank lines and ``#`` lines are skipped."""
    out = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise CliError(EXIT_IO, f"{path}:{lineno}: not an integer sample") from None
    return np.array(out, dtype=np.int64)


def format_samples(x) -> bytes:
    return "".join(f"{int(v)}\n" for v in np.rint(np.asarray(x))).encode()


def _parse_blocks(data: bytes) -> list[MeasurementBlock]:
    if not data:
        raise CliError(EXIT_IO, "empty block file")
    try:
        return read_blocks(data)
    except ValueError as exc:
        raise CliError(EXIT_IO, str(exc)) from None


# -- subcommands ------------------------------------------------------------

def cmd_encode(args) -> int:
    x = read_samples(args.inp)
    if x.size == 0:
        raise CliError(EXIT_IO, f"{args.inp}: no samples")
    if x.size % args.N:
        raise CliError(EXIT_IO, f"{args.inp}: {x.size} samples is not a multiple of N={args.N}")
    codec = _codec(args)
    out = bytearray()
    for i, blk in enumerate(x.reshape(-1, args.N)):
        out += codec.encode(blk.astype(np.float64), args.first_block + i).to_bytes()
    _write(args.out, bytes(out))
    print(f"encoded {x.size // args.N} block(s) -> {args.out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    blocks = _parse_blocks(_read_bytes(args.inp))
    codec = _codec(args)
    ref = None
    if args.reference is not None:
        ref = read_samples(args.reference)
        if ref.size != len(blocks) * args.N:
            raise CliError(EXIT_IO, "reference length does not match the decoded blocks")
    parts = []
    for blk in blocks:
        if blk.L != args.L:
            raise CliError(EXIT_DOMAIN, f"block {blk.block_id} has L={blk.L}, expected {args.L}")
        parts.append(codec.decode_block(blk).x_hat)
    x_hat = np.rint(np.concatenate(parts))
    _write(args.out, format_samples(x_hat))
    msg = f"decoded {len(blocks)} block(s) -> {args.out}"
    if ref is not None:
        msg += f"; PRD {bench.prd(ref, x_hat):.4f}"
    print(msg)
    return EXIT_OK


def cmd_simulate(args) -> int:
    """Send every block payload through the simulated 802.15.4 channel."""
    blocks = _parse_blocks(_read_bytes(args.inp))
    cfg = phy.ChannelConfig(snr_db=args.snr, rng_seed=args.seed,
                            max_retransmissions=args.max_retransmissions,
                            combining=args.combining)
    rng = np.random.default_rng(args.seed)
    out = bytearray()
    sent = errs = failed = 0
    for blk in blocks:
        bits = np.unpackbits(np.frombuffer(blk.payload_bytes(), dtype=np.uint8))
        rep = phy.transmit(bits, cfg, rng)
        sent += rep.frames_sent
        errs += rep.payload_bit_errors
        failed += int(rep.failed)
        out += blk.with_payload(np.packbits(rep.delivered_bits).tobytes()).to_bytes()
    _write(args.out, bytes(out))
    print(f"{len(blocks)} block(s), {sent} frame(s) sent, {errs} payload bit error(s), "
          f"{failed} failed block(s) -> {args.out}")
    return EXIT_OK


def _spec_from_args(args, experiment: str) -> bench.ExperimentSpec:
    try:
        if args.config is not None:
            spec = bench.parse_config(_read_text(args.config), experiment)
        else:
            spec = bench.default_spec(experiment)
        if args.trials is not None:
            spec = replace(spec, trials=args.trials)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    return spec


def _run_and_emit(spec: bench.ExperimentSpec, out_csv: Path | None) -> int:
    try:
        rows = bench.run_experiment(spec)
    except CodecSetupError as exc:
        raise CliError(EXIT_DOMAIN, str(exc)) from None
    text = bench.rows_to_csv(rows)
    if out_csv is None:
        sys.stdout.write(text)
    else:
        _write(out_csv, text.encode())
        print(f"{len(rows)} row(s) -> {out_csv}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.experiment not in bench.EXPERIMENTS:
        raise CliError(EXIT_USAGE, f"unknown experiment {args.experiment!r}; "
                                   f"choose from {', '.join(bench.EXPERIMENTS)}")
    return _run_and_emit(_spec_from_args(args, args.experiment), args.out_csv)


def cmd_attack(args) -> int:
    experiment = {"kpa": "attack_kpa", "known-matrices": "attack_known_matrices"}[args.kind]
    return _run_and_emit(_spec_from_args(args, experiment), args.out_csv)


def cmd_matrix_dump(args) -> int:
    codec = _codec(args)
    which = args.which
    if which == "B":
        m = codec.B
    elif which == "B_u":
        m = codec.B_u
    elif which in ("A", "H") and args.scheme != "l_encrust":
        raise CliError(EXIT_USAGE, f"{which} is fixed only for L-ENCRUST")
    elif which == "A":
        m = codec.A
    elif which == "H":
        m = matgen.SensingMatrix(codec.H, "product")
    elif which == "A_eff":
        m = codec.error_matrix(args.block)
    else:  # P
        m = projection_matrix(codec.error_matrix(args.block))
    buf = io.StringIO()
    m.dump(buf)
    if args.out is None:
        sys.stdout.write(buf.getvalue())
    else:
        _write(args.out, buf.getvalue().encode())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="encrust", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="samples file -> block file")
    _add_codec_flags(p)
    _add_key_flags(p)
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--first-block", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="block file -> samples file")
    _add_codec_flags(p)
    _add_key_flags(p)
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--reference", type=Path)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="pass a block file through the 802.15.4 channel")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-retransmissions", type=int, default=10)
    p.add_argument("--combining", choices=phy.COMBINING, default="soft")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run an experiment and write CSV")
    p.add_argument("--experiment", required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--out-csv", type=Path)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("attack", help="run a security experiment and write CSV")
    p.add_argument("--kind", choices=("kpa", "known-matrices"), required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--out-csv", type=Path)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("matrix-dump", help="write a codec matrix as text")
    _add_codec_flags(p)
    _add_key_flags(p, required=False)
    p.add_argument("--which", choices=("A", "B", "A_eff", "B_u", "H", "P"), default="B")
    p.add_argument("--block", type=int, default=0, help="block id for A_eff and P")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_matrix_dump, key=None)
    return ap


_DUMP_KEY = "01" * KEY_BYTES


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "matrix-dump" and args.key is None and args.key_file is None:
        # fixed matrices do not depend on the key; per-block ones do
        if args.which in ("A_eff", "P"):
            parser.error("--which A_eff/P needs --key or --key-file")
        args.key = _DUMP_KEY
    try:
        return args.func(args)
    except CliError as exc:
        print(f"encrust: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
