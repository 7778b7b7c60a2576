"""Trajectory CSV ingestion, synthetic measurement noise, and denoising metrics.

CSV layout (header required, ``\\n`` newlines, ``.`` decimal point)::

    vehicle_id,time_s,position_m[,speed_mps]
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, TextIO

import numpy as np

SAMPLING_TOL = 1e-9
HEADER = ["vehicle_id", "time_s", "position_m", "speed_mps"]


class TrajectoryFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    vehicle_id: str
    times: tuple
    positions: tuple
    speeds: Optional[tuple] = None

    def __post_init__(self):
        if len(self.times) != len(self.positions):
            raise ValueError("times and positions differ in length")
        if self.speeds is not None and len(self.speeds) != len(self.times):
            raise ValueError("speeds and times differ in length")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise ValueError(f"{self.vehicle_id}: times not strictly increasing at {b}")

    @property
    def interval(self) -> float:
        if len(self.times) < 2:
            return float("nan")
        return self.times[1] - self.times[0]

    def __len__(self):
        return len(self.times)

    def position_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)

    def with_positions(self, positions: Sequence[float]) -> "TrajectoryRecord":
        return replace(self, positions=tuple(float(x) for x in positions))

    def state_at(self, t: float):
        """Linearly interpolated (position, speed) at time ``t``."""
        times = np.asarray(self.times)
        pos = float(np.interp(t, times, self.positions))
        if self.speeds is not None:
            spd = float(np.interp(t, times, self.speeds))
        else:
            spd = float(np.interp(t, times, speed_profile(self)))
        return pos, max(spd, 0.0)


def parse_trajectory_csv(stream: TextIO) -> List[TrajectoryRecord]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise TrajectoryFormatError("line 1: missing header")
    header = [h.strip() for h in header]
    if header not in (HEADER[:3], HEADER):
        raise TrajectoryFormatError(f"line 1: unexpected header {header}")
    has_speed = len(header) == 4
    rows = {}
    lines = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TrajectoryFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t = float(row[1])
            x = float(row[2])
            v = float(row[3]) if has_speed else None
        except ValueError as exc:
            raise TrajectoryFormatError(f"line {lineno}: {exc}") from None
        if not all(math.isfinite(val) for val in (t, x) + ((v,) if has_speed else ())):
            raise TrajectoryFormatError(f"line {lineno}: non-finite value")
        vid = row[0].strip()
        rows.setdefault(vid, []).append((t, x, v))
        lines.setdefault(vid, []).append(lineno)

    records = []
    for vid in rows:
        order = sorted(range(len(rows[vid])), key=lambda k: rows[vid][k][0])
        samples = [rows[vid][k] for k in order]
        linenos = [lines[vid][k] for k in order]
        for k in range(1, len(samples)):
            if samples[k][0] <= samples[k - 1][0]:
                bad = max(linenos[k], linenos[k - 1])
                raise TrajectoryFormatError(
                    f"line {bad}: duplicate time {samples[k][0]} for vehicle {vid}")
        if len(samples) > 2:
            step = samples[1][0] - samples[0][0]
            for k in range(2, len(samples)):
                dt = samples[k][0] - samples[k - 1][0]
                if abs(dt - step) > SAMPLING_TOL * max(1.0, abs(samples[k][0])):
                    raise TrajectoryFormatError(
                        f"vehicle {vid}: non-uniform sampling, interval "
                        f"[{samples[k - 1][0]}, {samples[k][0]}] is {dt} s, expected {step} s")
        records.append(TrajectoryRecord(
            vehicle_id=vid,
            times=tuple(s[0] for s in samples),
            positions=tuple(s[1] for s in samples),
            speeds=tuple(s[2] for s in samples) if has_speed else None,
        ))
    return records


def read_trajectory_csv(path) -> List[TrajectoryRecord]:
    with open(path, newline="") as fh:
        return parse_trajectory_csv(fh)


def write_trajectory_csv(records: Iterable[TrajectoryRecord], stream: TextIO) -> None:
    records = list(records)
    with_speed = any(r.speeds is not None for r in records)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER if with_speed else HEADER[:3])
    for rec in records:
        speeds = rec.speeds
        if with_speed and speeds is None:
            speeds = speed_profile(rec)
        for k, (t, x) in enumerate(zip(rec.times, rec.positions)):
            row = [rec.vehicle_id, repr(float(t)), repr(float(x))]
            if with_speed:
                row.append(repr(float(speeds[k])))
            writer.writerow(row)


def serialize(records: Iterable[TrajectoryRecord]) -> str:
    buf = io.StringIO()
    write_trajectory_csv(records, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 1.0  # m
    impulse_prob: float = 0.0
    impulse_magnitude: float = 0.0  # m
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 <= self.impulse_prob <= 1.0:
            raise ValueError("impulse probability must lie in [0, 1]")


def inject_noise(rec: TrajectoryRecord, spec: NoiseSpec) -> TrajectoryRecord:
    """Gaussian jitter plus random-sign impulses on positions; speeds are dropped."""
    rng = np.random.default_rng(spec.seed)
    x = rec.position_array()
    n = len(x)
    noisy = x + rng.normal(0.0, spec.sigma, n) if spec.sigma > 0 else x.copy()
    if spec.impulse_prob > 0 and spec.impulse_magnitude != 0:
        hits = rng.random(n) < spec.impulse_prob
        signs = rng.choice([-1.0, 1.0], size=n)
        noisy = noisy + hits * signs * spec.impulse_magnitude
    return replace(rec, positions=tuple(float(v) for v in noisy), speeds=None)


def rmse(a: TrajectoryRecord, b: TrajectoryRecord) -> float:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not np.allclose(a.times, b.times, atol=SAMPLING_TOL, rtol=0):
        raise ValueError("records are not time-aligned")
    diff = a.position_array() - b.position_array()
    return float(np.sqrt(np.mean(diff * diff)))


def speed_profile(rec: TrajectoryRecord) -> np.ndarray:
    """Central differences of position, one-sided at both ends."""
    if len(rec) < 2:
        raise ValueError("need at least 2 samples for a speed profile")
    return np.gradient(rec.position_array(), np.asarray(rec.times, dtype=float), edge_order=1)


def synthetic_truth(seed: int, n_samples: int = 256, interval: float = 1.0,
                    vehicle_id: Optional[str] = None) -> TrajectoryRecord:
    """Smooth reference trajectory: an IDM follower behind a leader whose speed wanders.

    The leader speed is a seeded sum of slow sinusoids between roughly 8 and
    30 m/s, so the follower brakes and accelerates the way real traffic does.
    """
    from .idm import IdmParams
    from .sim import simulate_platoon

    rng = np.random.default_rng(seed)
    periods = rng.uniform(40.0, 160.0, 3)
    phases = rng.uniform(0.0, 2.0 * np.pi, 3)
    amps = rng.uniform(1.5, 4.0, 3)
    mean = rng.uniform(15.0, 22.0)

    def leader_speed(t):
        return mean + float(np.sum(amps * np.sin(2.0 * np.pi * t / periods + phases)))

    p = IdmParams(t_s=1.0)
    duration = (n_samples - 1) * interval
    times, pos, spd, _ = simulate_platoon(leader_speed, duration, p, dt=0.1,
                                          follower_speed=leader_speed(0.0),
                                          sample_every=interval)
    return TrajectoryRecord(
        vehicle_id=vehicle_id or f"truth{seed}",
        times=tuple(float(t) for t in times),
        positions=tuple(float(x) for x in pos),
        speeds=tuple(float(v) for v in spd),
    )
