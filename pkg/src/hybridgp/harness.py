"""Closed-loop simulation of the tank heater under each controller variant.

At every control step the controller sees the measured flow history, builds
an envelope for the next ``Np`` steps, solves the robust MPC problem and
applies the first heater power to the true plant, which is driven by the
true (noise-free) flow. The flow acting over ``[t_k, t_k+1]`` is the sample
at ``t_k+1``, the first entry of the envelope.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from .control import ControlConfig, shift_warm_start, solve_rempc, worst_case_sequence
from .errors import ForecastError, InputError, NumericalError, SolverError, TrainingError
from .forecast import (
    NAR,
    ConfidenceSpec,
    Envelope,
    ForecastConfig,
    HybridState,
    envelope_from_posterior,
    hybrid_forecast,
    kc_forecast,
    nar_forecast,
)
from .gp import ForgettingWeights, GPDataset
from .plant import G_PER_KG, PlantParams, rk4_step
from .scenario import FLOW_MAX, FLOW_MIN, ScenarioSpec, generate

logger = logging.getLogger(__name__)

CONTROLLERS = ("Perfect", "FixedRange", "KC", "KCff", "NAR", "Hybrid", "Hybridff")
FORECASTING = ("KC", "KCff", "NAR", "Hybrid", "Hybridff")
RUN_COLUMNS = ("t", "T", "u", "mdot_true", "mdot_meas", "env_lo", "env_hi",
               "switch", "J_step", "solve_ms")
METRIC_FIELDS = ("avg_objective", "violation_degree_seconds", "total_heater_energy",
                 "switch_fraction_NAR", "peak_violation")


def controller_name(name: str) -> str:
    """Case-insensitive lookup of a controller name."""
    key = str(name).replace("-", "").replace("_", "").lower()
    for c in CONTROLLERS:
        if c.lower() == key:
            return c
    raise InputError(f"unknown controller {name!r}; expected one of {', '.join(CONTROLLERS)}")


@dataclass(frozen=True)
class SimConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    controller: str = "Hybrid"
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    delta1: float = float(np.sqrt(0.5))
    delta2: float = 1.0
    forgetting: ForgettingWeights = field(default_factory=ForgettingWeights)
    fixed_range: tuple = (FLOW_MIN, FLOW_MAX)
    T0: float = 60.0
    seed: int = 0
    record_timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "controller", controller_name(self.controller))
        object.__setattr__(self, "fixed_range", tuple(float(v) for v in self.fixed_range))
        h = self.control.h
        if not (np.isclose(h, self.forecast.sample_period)
                and np.isclose(h, self.scenario.sample_period)):
            raise InputError("control step, forecast sample period and scenario "
                             "sample period must agree")
        if self.forecast.Np != self.control.Np:
            raise InputError("forecast and control horizons must agree")
        if self.fixed_range[0] > self.fixed_range[1]:
            raise InputError("fixed range lower end exceeds upper end")
        if self.delta1 <= 0 or self.delta2 <= 0:
            raise InputError("switch thresholds must be > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.scenario.duration / self.control.h))

    def forecast_config(self) -> ForecastConfig:
        """Forecast settings for this controller (forgetting only for the ff variants)."""
        ff = self.forgetting if self.controller in ("KCff", "Hybridff") else None
        return replace(self.forecast, forgetting=ff, beta=self.control.beta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        """Build from a (possibly partial) nested dictionary."""
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        sub = {"scenario": ScenarioSpec, "control": ControlConfig, "plant": PlantParams}
        for key, typ in sub.items():
            if key in d:
                d[key] = _dataclass_from(typ, d[key])
        if "forecast" in d:
            fd = dict(d["forecast"])
            if fd.get("forgetting") is not None:
                fd["forgetting"] = _dataclass_from(ForgettingWeights, fd["forgetting"])
            d["forecast"] = _dataclass_from(ForecastConfig, fd)
        if "forgetting" in d:
            d["forgetting"] = _dataclass_from(ForgettingWeights, d["forgetting"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InputError(str(exc)) from exc


def _dataclass_from(typ, value):
    if isinstance(value, typ):
        return value
    if not isinstance(value, dict):
        raise InputError(f"{typ.__name__} config must be an object")
    names = {f.name for f in fields(typ)}
    unknown = set(value) - names
    if unknown:
        raise InputError(f"unknown {typ.__name__} keys: {sorted(unknown)}")
    try:
        return typ(**value)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


@dataclass(frozen=True)
class Metrics:
    avg_objective: float
    violation_degree_seconds: float
    total_heater_energy: float
    switch_fraction_NAR: float
    peak_violation: float

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in METRIC_FIELDS}


def write_atomic(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def step_objective(u, T, config: ControlConfig) -> np.ndarray:
    """Realized per-step cost: heater cost plus time-weighted violation."""
    u = np.asarray(u, dtype=float)
    T = np.asarray(T, dtype=float)
    J = u**2 + config.eta_lower * np.maximum(0.0, config.x_min - T) * config.h
    if config.x_max is not None:
        J = J + config.eta_upper * np.maximum(0.0, T - config.x_max) * config.h
    return J


def compute_metrics(T, u, J_step, switch, h: float, x_min: float) -> Metrics:
    T = np.asarray(T, dtype=float)
    u = np.asarray(u, dtype=float)
    viol = np.maximum(0.0, x_min - T)
    switched = [s for s in switch if s]
    frac = sum(s == NAR for s in switched) / len(switched) if switched else 0.0
    return Metrics(
        avg_objective=float(np.mean(J_step)),
        violation_degree_seconds=float(np.sum(viol) * h),
        total_heater_energy=float(np.sum(u) * h),
        switch_fraction_NAR=float(frac),
        peak_violation=float(np.max(viol)) if len(viol) else 0.0,
    )


@dataclass
class RunRecord:
    t: np.ndarray
    T: np.ndarray
    u: np.ndarray
    mdot_true: np.ndarray
    mdot_meas: np.ndarray
    env_lo: np.ndarray
    env_hi: np.ndarray
    switch: list
    J_step: np.ndarray
    solver_time: np.ndarray
    metrics: Metrics
    events: list = field(default_factory=list)
    record_timing: bool = False

    def rows(self):
        for i in range(len(self.t)):
            ms = repr(float(self.solver_time[i] * 1e3)) if self.record_timing else ""
            yield [
                repr(float(self.t[i])), repr(float(self.T[i])), repr(float(self.u[i])),
                repr(float(self.mdot_true[i])), repr(float(self.mdot_meas[i])),
                repr(float(self.env_lo[i])), repr(float(self.env_hi[i])),
                self.switch[i], repr(float(self.J_step[i])), ms,
            ]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        w.writerows(self.rows())
        text = buf.getvalue()
        if path is not None:
            write_atomic(path, text)
        return text

    def recompute_metrics(self, config: ControlConfig) -> Metrics:
        return compute_metrics(self.T, self.u, self.J_step, self.switch, config.h, config.x_min)


def _history(trace, idx, n):
    lo = idx - n + 1
    if lo < 0:
        raise InputError("not enough pre-roll history for the forecasters")
    return GPDataset.from_series(trace.times[lo: idx + 1], trace.measured_values[lo: idx + 1])


def run_closed_loop(config: SimConfig) -> RunRecord:
    """Simulate one controller on one disturbance realization."""
    fc = config.forecast_config()
    cc = config.control
    h, Np = cc.h, cc.Np
    need = (fc.history_length - 1) * h
    scen = replace(config.scenario, seed=config.seed,
                   pre_roll=max(config.scenario.pre_roll, need))
    trace = generate(scen, extra_time=Np * h)
    n = config.n_steps
    k0 = trace.index_of(0.0)
    spec = ConfidenceSpec(cc.beta)
    ctrl = config.controller

    cols = {c: np.zeros(n) for c in ("t", "T", "u", "mdot_true", "mdot_meas",
                                     "env_lo", "env_hi", "J_step", "solver_time")}
    switch = [""] * n
    events = []
    T = float(config.T0)
    prev_u = None
    hybrid_state = HybridState(config.delta1, config.delta2, rng_seed=config.seed * 100003)
    nar_warm = None

    for k in range(n):
        idx = k0 + k
        t_k = trace.times[idx]
        future = slice(idx + 1, idx + 1 + Np)
        step_times = trace.times[future]
        env = None
        try:
            if ctrl == "Perfect":
                env = Envelope.exact(step_times, trace.true_values[future])
            elif ctrl == "FixedRange":
                env = Envelope.fixed(step_times, *config.fixed_range)
            elif ctrl in ("KC", "KCff"):
                post, _ = kc_forecast(_history(trace, idx, fc.kc_history), fc, None,
                                      seed=(config.seed, k))
                env = envelope_from_posterior(post, spec, "KC")
            elif ctrl == "NAR":
                post, nar_warm = nar_forecast(_history(trace, idx, fc.nar_history), fc,
                                              warm=nar_warm, seed=config.seed)
                env = envelope_from_posterior(post, spec, "NAR")
            else:
                env, decision, hybrid_state = hybrid_forecast(
                    _history(trace, idx, fc.history_length), fc, hybrid_state)
                switch[k] = decision.choice
        except (ForecastError, TrainingError, NumericalError) as exc:
            events.append((float(t_k), f"forecast fallback: {exc}"))
            logger.info("t=%g forecast failed (%s); using the fixed range", t_k, exc)
            env = Envelope.fixed(step_times, *config.fixed_range)
            if ctrl in ("Hybrid", "Hybridff"):
                switch[k] = NAR

        if env.method == "FixedRange":
            mdot_plan = worst_case_sequence(env, "fixed_range", fixed_range=config.fixed_range,
                                            Np=Np)
        elif env.method == "Perfect":
            mdot_plan = worst_case_sequence(None, "perfect", trace=env.mean, Np=Np)
        else:
            mdot_plan = worst_case_sequence(env, "robust_upper", Np=Np)

        warm = shift_warm_start(prev_u) if prev_u is not None else None
        t0 = time.perf_counter()
        try:
            sol = solve_rempc(T, mdot_plan, config.plant, cc, warm_u=warm)
            u_k = float(sol.u_seq[0])
            prev_u = sol.u_seq
        except SolverError as exc:
            events.append((float(t_k), f"solver fallback: {exc}"))
            u_k = cc.u_max
            prev_u = None
        elapsed = time.perf_counter() - t0

        cols["t"][k] = t_k
        cols["T"][k] = T
        cols["u"][k] = u_k
        cols["mdot_true"][k] = trace.true_values[idx + 1]
        cols["mdot_meas"][k] = trace.measured_values[idx + 1]
        cols["env_lo"][k] = env.lower[0]
        cols["env_hi"][k] = env.upper[0]
        cols["solver_time"][k] = elapsed
        T = float(rk4_step(config.plant, T, u_k, trace.true_values[idx + 1] / G_PER_KG, h))

    cols["J_step"] = step_objective(cols["u"], cols["T"], cc)
    metrics = compute_metrics(cols["T"], cols["u"], cols["J_step"], switch, h, cc.x_min)
    return RunRecord(
        cols["t"], cols["T"], cols["u"], cols["mdot_true"], cols["mdot_meas"],
        cols["env_lo"], cols["env_hi"], switch, cols["J_step"], cols["solver_time"],
        metrics, events, config.record_timing,
    )


# -- batch experiments --------------------------------------------------------


def _run_metrics(config: SimConfig):
    try:
        return run_closed_loop(config).metrics, None
    except Exception as exc:  # reported as a marked row, not raised
        logger.exception("run failed: %s/%s seed %s", config.scenario.kind,
                         config.controller, config.seed)
        return None, f"{type(exc).__name__}: {exc}"


def _map(configs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_metrics, configs))
    return [_run_metrics(c) for c in configs]


@dataclass
class ComparisonTable:
    rows: list
    runs: dict  # (controller, seed) -> Metrics or None
    errors: dict

    def to_csv(self, path=None) -> str:
        return _table_csv(self.rows, path)


def _table_csv(rows, path):
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    text = buf.getvalue()
    if path is not None:
        write_atomic(path, text)
    return text


def _summarize(metrics_list):
    out = {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(m, name) for m in metrics_list])
        out[f"{name}_mean"] = float(np.mean(vals)) if len(vals) else float("nan")
        out[f"{name}_sd"] = float(np.std(vals)) if len(vals) else float("nan")
    return out


def compare_controllers(base: SimConfig, controllers: Sequence[str] = CONTROLLERS,
                        seeds: Sequence[int] = (0,), workers: int = 1) -> ComparisonTable:
    """Run every controller on the same disturbance realizations (one per seed)."""
    if not seeds:
        raise InputError("at least one seed is required")
    controllers = [controller_name(c) for c in controllers]
    configs = [replace(base, controller=c, seed=s) for c in controllers for s in seeds]
    results = _map(configs, workers)
    runs, errors = {}, {}
    for cfg, (m, err) in zip(configs, results):
        runs[(cfg.controller, cfg.seed)] = m
        if err:
            errors[(cfg.controller, cfg.seed)] = err
    ref = None
    if "Perfect" in controllers:
        ok = [runs[("Perfect", s)] for s in seeds if runs[("Perfect", s)] is not None]
        ref = float(np.mean([m.avg_objective for m in ok])) if ok else None
    rows = []
    for c in controllers:
        ok = [runs[(c, s)] for s in seeds if runs[(c, s)] is not None]
        row = {"controller": c, "n_runs": len(ok)}
        row.update(_summarize(ok))
        row["normalized_objective"] = (
            row["avg_objective_mean"] / ref if ref else float("nan"))
        row["status"] = "ok" if len(ok) == len(seeds) else "error"
        rows.append(row)
    return ComparisonTable(rows, runs, errors)


def sweep_training_horizon(base: SimConfig, factors: Sequence[int] = (1, 2, 3, 4),
                           seeds: Sequence[int] = (0,),
                           controllers: Sequence[str] = ("Hybrid", "Hybridff"),
                           workers: int = 1) -> ComparisonTable:
    """Re-run the scenario with the training horizon scaled by each factor.

    ``normalized_objective`` is relative to the controller's own result at the
    smallest factor.
    """
    if not factors or min(factors) < 1:
        raise InputError("factors must be >= 1")
    if not seeds:
        raise InputError("at least one seed is required")
    factors = list(factors)
    configs, keys = [], []
    for c in controllers:
        c = controller_name(c)
        for f in factors:
            fc = replace(base.forecast, Nt=base.forecast.Nt * int(f))
            for s in seeds:
                configs.append(replace(base, controller=c, seed=s, forecast=fc))
                keys.append((c, int(f), s))
    results = _map(configs, workers)
    runs = {k: m for k, (m, _) in zip(keys, results)}
    errors = {k: e for k, (_, e) in zip(keys, results) if e}
    rows = []
    f0 = min(factors)
    for c in dict.fromkeys(k[0] for k in keys):
        base_vals = [runs[(c, f0, s)] for s in seeds]
        for f in factors:
            ok = [runs[(c, f, s)] for s in seeds if runs[(c, f, s)] is not None]
            row = {"controller": c, "factor": int(f), "Nt": base.forecast.Nt * int(f),
                   "n_runs": len(ok)}
            row.update(_summarize(ok))
            ratios = [runs[(c, f, s)].avg_objective / b.avg_objective
                      for s, b in zip(seeds, base_vals)
                      if b is not None and runs[(c, f, s)] is not None and b.avg_objective > 0]
            row["normalized_objective"] = float(np.mean(ratios)) if ratios else float("nan")
            row["status"] = "ok" if len(ok) == len(seeds) else "error"
            rows.append(row)
    return ComparisonTable(rows, runs, errors)


def metrics_json(metrics: Metrics) -> str:
    return json.dumps(metrics.to_dict(), indent=2, sort_keys=False)
