"""ECG records: the plain-text loader and seeded synthetic stand-ins.

Text format: a header line ``# record_id rate bits`` followed by one
integer ADC sample per line.  Samples are unsigned ADC codes in
``[0, 2**bits)``; for MIT-BIH exports that is the raw 11-bit value with the
1024 zero offset still in place.

The synthetic generator builds beats from a sum of Gaussian waves (P, Q,
R, S, T) on a jittered RR grid with baseline wander and sensor noise, then
maps millivolts to MIT-BIH style codes (200 ADC units per mV around 1024).
Each stand-in id gets its own rhythm and morphology so pooled statistics
are not dominated by one beat shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter

SAMPLE_RATE_HZ = 360
RESOLUTION_BITS = 11
ADC_ZERO = 1024
ADC_GAIN = 200.0  # units per mV

RECORD_IDS = ("100", "104", "111", "210", "230")


@dataclass(frozen=True)
class EcgRecord:
    record_id: str
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ
    resolution_bits: int = RESOLUTION_BITS

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=np.int64)
        hi = 1 << self.resolution_bits
        if s.size and (s.min() < 0 or s.max() >= hi):
            raise ValueError(f"samples outside the {self.resolution_bits}-bit range [0, {hi})")
        object.__setattr__(self, "samples", s)

    def blocks(self, n: int = 256, count: int | None = None) -> np.ndarray:
        """Consecutive non-overlapping blocks of length ``n`` as float rows."""
        total = self.samples.size // n
        if count is not None:
            total = min(total, count)
        return self.samples[: total * n].reshape(total, n).astype(np.float64)


def load_ecg(path) -> EcgRecord:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# record_id rate bits' header")
    head = lines[0][1:].split()
    if len(head) != 3:
        raise ValueError(f"{path}: header must be '# record_id rate bits'")
    record_id, rate, bits = head[0], int(head[1]), int(head[2])
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            samples.append(int(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not an integer sample: {line!r}") from None
    return EcgRecord(record_id, np.array(samples, dtype=np.int64), rate, bits)


def save_ecg(record: EcgRecord, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {record.record_id} {record.sample_rate_hz} {record.resolution_bits}\n")
        fh.writelines(f"{int(v)}\n" for v in record.samples)


# (angle offset in beat phase [rad], amplitude [mV], width [rad]) for P, Q, R, S, T
_NORMAL = ((-1.2, 0.15, 0.25), (-0.12, -0.12, 0.13), (0.0, 1.2, 0.13),
           (0.12, -0.25, 0.13), (1.6, 0.3, 0.4))

_PROFILES = {
    # heart rate [bpm], RR jitter (fraction), baseline [mV], wave table, noise [mV], extras
    "100": dict(hr=74, jitter=0.04, base=-0.3, waves=_NORMAL, noise=0.01),
    "104": dict(hr=72, jitter=0.05, base=-0.2, noise=0.03,
                waves=((-1.2, 0.05, 0.2), (-0.15, -0.3, 0.104), (0.0, 1.0, 0.182),
                       (0.18, -0.6, 0.182), (1.7, 0.35, 0.45))),
    "111": dict(hr=70, jitter=0.03, base=-0.4, noise=0.015,
                waves=((-1.3, 0.12, 0.25), (-0.2, -0.05, 0.13), (0.05, 0.9, 0.286),
                       (0.3, 0.3, 0.26), (1.6, -0.3, 0.45))),
    "210": dict(hr=90, jitter=0.18, base=-0.25, noise=0.02, pvc_rate=0.1,
                waves=((-1.2, 0.03, 0.3), (-0.1, -0.1, 0.13), (0.0, 1.1, 0.143),
                       (0.12, -0.3, 0.13), (1.5, 0.25, 0.4))),
    "230": dict(hr=80, jitter=0.05, base=-0.35, noise=0.012,
                waves=((-1.1, 0.12, 0.22), (-0.35, 0.25, 0.325), (0.0, 1.0, 0.156),
                       (0.14, -0.2, 0.13), (1.6, 0.3, 0.4))),
}

_PVC = ((-0.2, -0.3, 0.2), (0.05, 1.6, 0.25), (0.5, -0.6, 0.3), (1.7, -0.4, 0.5))


def synthetic_record(record_id: str = "100", seconds: float = 60.0, seed: int | None = None) -> EcgRecord:
    """Deterministic synthetic ECG for one of :data:`RECORD_IDS`."""
    if record_id not in _PROFILES:
        raise KeyError(f"no synthetic profile for record {record_id!r}")
    prof = _PROFILES[record_id]
    rng = np.random.default_rng(int(record_id) if seed is None else seed)
    n = int(seconds * SAMPLE_RATE_HZ)
    t = np.arange(n) / SAMPLE_RATE_HZ

    mean_rr = 60.0 / prof["hr"]
    beats = []
    tb = 0.3 * mean_rr
    while tb < seconds + mean_rr:
        rr = mean_rr * (1 + prof["jitter"] * rng.standard_normal())
        beats.append((tb, max(rr, 0.35 * mean_rr)))
        tb += beats[-1][1]

    mv = np.full(n, float(prof["base"]))
    for tb, rr in beats:
        waves = _PVC if rng.random() < prof.get("pvc_rate", 0.0) else prof["waves"]
        amp_j = 1 + 0.05 * rng.standard_normal()
        for ang, amp, width in waves:
            # beat phase scales with sqrt(RR) for the T wave, linearly for the rest
            centre = tb + ang / (2 * np.pi) * (rr ** 0.5 if ang > 1 else mean_rr)
            sigma = width / (2 * np.pi) * mean_rr
            lo = int(max(0, (centre - 5 * sigma) * SAMPLE_RATE_HZ))
            hi = int(min(n, (centre + 5 * sigma) * SAMPLE_RATE_HZ + 1))
            if lo >= hi:
                continue
            seg = t[lo:hi]
            mv[lo:hi] += amp * amp_j * np.exp(-0.5 * ((seg - centre) / sigma) ** 2)

    mv += 0.08 * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    mv += 0.03 * np.sin(2 * np.pi * 0.05 * t + rng.uniform(0, 2 * np.pi))
    # muscle/motion noise is band-limited; the white part is about one ADC step
    b, a = butter(2, 25.0 / (SAMPLE_RATE_HZ / 2))
    mv += prof["noise"] * lfilter(b, a, rng.standard_normal(n)) / np.sqrt(25.0 / (SAMPLE_RATE_HZ / 2))
    mv += 0.005 * rng.standard_normal(n)
    adc = np.clip(np.rint(ADC_ZERO + ADC_GAIN * mv), 0, (1 << RESOLUTION_BITS) - 1)
    return EcgRecord(record_id, adc.astype(np.int64))


def builtin_records(seconds: float = 60.0) -> list[EcgRecord]:
    return [synthetic_record(r, seconds) for r in RECORD_IDS]
