"""Seeded inlet-flow disturbance profiles (g/s).

The profile shapes are plain defaults chosen to resemble four qualitative
cases: a sinusoid (SN), a constant that turns sinusoidal (LS), a combined
constant / rising / falling periodic profile (CM) and a clipped random walk
(RW). Every number is a field of :class:`ScenarioSpec`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import InputError

KINDS = ("SN", "LS", "CM", "RW")
FLOW_MIN, FLOW_MAX = 0.0, 70.0


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "SN"
    duration: float = 600.0
    pre_roll: float = 100.0
    sample_period: float = 2.0
    seed: int = 0
    measurement_sigma: float = 1.5
    # SN
    sn_offset: float = 35.0
    sn_amplitude: float = 15.0
    sn_period: float = 100.0
    # LS
    ls_level: float = 30.0
    ls_switch: float = 300.0
    ls_amplitude: float = 15.0
    ls_period: float = 100.0
    # CM
    cm_level: float = 30.0
    cm_start: float = 160.0
    cm_turn: float = 400.0
    cm_offset: float = 25.0
    cm_amplitude: float = 12.0
    cm_period: float = 80.0
    cm_slope: float = 0.05
    # RW
    rw_start: float = 35.0
    rw_sigma: float = 3.0

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KINDS:
            raise InputError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.duration <= 0 or self.pre_roll < 0 or self.sample_period <= 0:
            raise InputError("duration and sample_period must be > 0, pre_roll >= 0")
        if self.measurement_sigma < 0 or self.rw_sigma < 0:
            raise InputError("noise levels must be >= 0")


@dataclass(frozen=True)
class DisturbanceTrace:
    times: np.ndarray
    true_values: np.ndarray
    measured_values: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.true_values) == n == len(self.measured_values)):
            raise InputError("trace columns must have equal length")

    def index_of(self, t: float) -> int:
        i = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if not (0 <= i < len(self.times)) or abs(self.times[i] - t) > 1e-6:
            raise InputError(f"time {t} is not on the trace grid")
        return i

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "true", "measured"])
            for row in zip(self.times, self.true_values, self.measured_values):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "DisturbanceTrace":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "true", "measured"} <= set(reader.fieldnames):
                raise InputError(f"{path}: expected columns t,true,measured")
            rows = [(float(r["t"]), float(r["true"]), float(r["measured"])) for r in reader]
        if len(rows) < 2:
            raise InputError(f"{path}: need at least two rows")
        a = np.array(rows)
        return cls(a[:, 0], a[:, 1], a[:, 2])


def profile(spec: ScenarioSpec, t) -> np.ndarray:
    """Noise-free profile of the deterministic kinds, before clipping."""
    t = np.asarray(t, dtype=float)
    if spec.kind == "SN":
        return spec.sn_offset + spec.sn_amplitude * np.sin(2 * np.pi * t / spec.sn_period)
    if spec.kind == "LS":
        wave = spec.ls_amplitude * np.sin(2 * np.pi * (t - spec.ls_switch) / spec.ls_period)
        return np.where(t < spec.ls_switch, spec.ls_level, spec.ls_level + wave)
    if spec.kind == "CM":
        def rising(x):
            return (spec.cm_offset
                    + spec.cm_amplitude * np.sin(2 * np.pi * x / spec.cm_period)
                    + spec.cm_slope * (x - spec.cm_start))

        # falling region: the rising curve frozen at the turn, plus the
        # same sinusoid relative to its value there and a negative slope
        at_turn = rising(spec.cm_turn)
        wave = spec.cm_amplitude * (np.sin(2 * np.pi * t / spec.cm_period)
                                    - np.sin(2 * np.pi * spec.cm_turn / spec.cm_period))
        falling = at_turn + wave - spec.cm_slope * (t - spec.cm_turn)
        return np.where(t < spec.cm_start, spec.cm_level,
                        np.where(t < spec.cm_turn, rising(t), falling))
    raise InputError(f"{spec.kind} has no closed-form profile")


def generate(spec: ScenarioSpec, extra_time: float = 0.0) -> DisturbanceTrace:
    """Trace on ``[-pre_roll, duration + extra_time]`` sampled every ``sample_period``."""
    n_before = int(round(spec.pre_roll / spec.sample_period))
    n_after = int(round((spec.duration + extra_time) / spec.sample_period))
    times = np.arange(-n_before, n_after + 1) * spec.sample_period
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "RW":
        steps = rng.normal(0.0, spec.rw_sigma, size=len(times) - 1)
        true = np.empty(len(times))
        true[0] = np.clip(spec.rw_start, FLOW_MIN, FLOW_MAX)
        for i, s in enumerate(steps):
            true[i + 1] = min(max(true[i] + s, FLOW_MIN), FLOW_MAX)
    else:
        true = np.clip(profile(spec, times), FLOW_MIN, FLOW_MAX)
    measured = true + rng.normal(0.0, spec.measurement_sigma, size=len(times))
    return DisturbanceTrace(times, true, measured)


def spec_dict(spec: ScenarioSpec) -> dict:
    return asdict(spec)
