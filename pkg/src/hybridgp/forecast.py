"""Long-horizon disturbance forecasting and uncertainty envelopes.

Two forecasters share the GP machinery in :mod:`hybridgp.gp`:

* kernel composition (KC): one GP over time with a linear + periodic +
  constant kernel, extrapolated over the whole horizon;
* nonlinear auto-regression (NAR): one independent GP per step ahead, each
  regressing the value ``chi`` steps ahead on the ``p`` most recent values.

The hybrid forecaster tries KC first and falls back to NAR when the KC
prediction looks implausible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ForecastError, InputError, NumericalError, TrainingError
from .gp import (
    LOG_BOUND,
    ForgettingWeights,
    GPDataset,
    Hyperparameters,
    NoiseModel,
    Posterior,
    TrainingResult,
    forgetting_diag,
    posterior,
    train,
)
from .kernels import RBF, Constant, Kernel, Sum, composite_kc

logger = logging.getLogger(__name__)

KC = "KC"
NAR = "NAR"


# -- confidence levels -------------------------------------------------------

# Acklam's rational approximation of the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _ndtri(p: float) -> float:
    if p < _P_LOW:
        q = np.sqrt(-2.0 * np.log(p))
        x = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = np.sqrt(-2.0 * np.log(1.0 - p))
        x = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # one Halley step against the exact CDF brings the error to ~1e-15
    from math import erfc, exp, pi, sqrt

    e = 0.5 * erfc(-x / sqrt(2.0)) - p
    u = e * sqrt(2.0 * pi) * exp(x * x / 2.0)
    return float(x - u / (1.0 + x * u / 2.0))


def critical_value(beta: float) -> float:
    """Two-sided normal critical value for confidence level ``beta``."""
    if not (0.0 < beta < 1.0):
        raise InputError(f"confidence level must lie in (0, 1), got {beta}")
    return _ndtri(1.0 - (1.0 - beta) / 2.0)


@dataclass(frozen=True)
class ConfidenceSpec:
    beta: float = 0.95

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise InputError(f"confidence level must lie in (0, 1), got {self.beta}")

    @property
    def alpha(self) -> float:
        return 1.0 - self.beta

    @property
    def z(self) -> float:
        return critical_value(self.beta)


@dataclass(frozen=True)
class Envelope:
    """Per-step disturbance bounds over the prediction horizon (g/s)."""

    step_times: np.ndarray
    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray
    variance: np.ndarray
    beta: float
    method: str = ""

    def __len__(self) -> int:
        return len(self.mean)

    @classmethod
    def fixed(cls, step_times, lo: float, hi: float, method: str = "FixedRange") -> "Envelope":
        t = np.asarray(step_times, dtype=float)
        n = len(t)
        return cls(t, np.full(n, lo), np.full(n, 0.5 * (lo + hi)), np.full(n, hi),
                   np.zeros(n), float("nan"), method)

    @classmethod
    def exact(cls, step_times, values, method: str = "Perfect") -> "Envelope":
        v = np.asarray(values, dtype=float)
        return cls(np.asarray(step_times, dtype=float), v.copy(), v.copy(), v.copy(),
                   np.zeros(len(v)), 1.0, method)


def envelope_from_posterior(post: Posterior, spec: ConfidenceSpec, method: str = "",
                            include_excess: bool = True) -> Envelope:
    """Bounds ``mean +/- z * sqrt(variance)`` at the requested confidence level.

    With ``include_excess`` the posterior's excess variance is added first.
    """
    var = post.predictive_variance if include_excess else post.variance
    half = spec.z * np.sqrt(var)
    times = post.query_points[:, 0] if post.query_points.ndim == 2 else post.query_points
    return Envelope(
        np.asarray(times, dtype=float).copy(),
        post.mean - half,
        post.mean.copy(),
        post.mean + half,
        var,
        spec.beta,
        method,
    )


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ForecastConfig:
    """Horizons are in steps of ``sample_period`` seconds.

    ``Nt`` is the training horizon (``Nt + 1`` samples), ``Np`` the prediction
    horizon and ``nar_order`` the number of lags in the NAR regressors.
    """

    Nt: int = 50
    Np: int = 25
    sample_period: float = 2.0
    nar_order: int = 3
    sigma2: float = 2.25
    forgetting: Optional[ForgettingWeights] = None
    beta: float = 0.95
    forgetting_in_prediction: bool = True
    switch_ratio_as_printed: bool = False
    excess_noise: bool = True
    kc_restarts: int = 3
    kc_maxiter: int = 200
    nar_restarts: int = 1
    nar_maxiter: int = 50

    def __post_init__(self):
        if self.Np < 1 or self.nar_order < 1:
            raise InputError("Np and nar_order must be >= 1")
        if self.Nt < self.nar_order + self.Np + 1:
            raise InputError("Nt must be >= nar_order + Np + 1")
        if self.sample_period <= 0 or self.sigma2 < 0:
            raise InputError("sample_period must be > 0 and sigma2 >= 0")
        if self.kc_restarts < 1 or self.nar_restarts < 1:
            raise InputError("restart counts must be >= 1")

    @property
    def kc_history(self) -> int:
        return self.Nt + 1

    @property
    def nar_history(self) -> int:
        return self.Nt + self.Np + self.nar_order

    @property
    def history_length(self) -> int:
        """Samples needed by every forecaster."""
        return max(self.kc_history, self.nar_history)


# -- kernel composition ------------------------------------------------------


def dominant_period(values, sample_period: float, lo: float, hi: float) -> float:
    """Period of the strongest periodogram line after removing a linear trend.

    Clipped to ``[lo, hi]``; the geometric mean of the two is returned for a
    signal without any oscillating power.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    fallback = float(np.sqrt(lo * hi))
    if n < 4:
        return fallback
    idx = np.arange(n)
    resid = v - np.polyval(np.polyfit(idx, v, 1), idx)
    power = np.abs(np.fft.rfft(resid))[1:] ** 2
    if power.size == 0 or not np.any(power > 1e-12 * max(np.sum(resid**2), 1e-300)):
        return fallback
    k = int(np.argmax(power)) + 1
    return float(np.clip((n - 1) * sample_period / k, lo, hi))


def kc_template(values: np.ndarray, config: ForecastConfig) -> Hyperparameters:
    s = max(float(np.std(values)), 0.1)
    window = config.Nt * config.sample_period
    period = dominant_period(values, config.sample_period, 4.0 * config.sample_period, window)
    kernel = composite_kc(
        linear_scale=window / s, periodic_scale=s, period=period, roughness=1.0, level=1.0
    )
    return Hyperparameters(kernel, NoiseModel(max(config.sigma2, 1e-3)))


def _kc_sampler(config: ForecastConfig, period_index: int):
    """Random starts around the template.

    The first draw keeps the period near the template's periodogram estimate;
    later draws take it log-uniformly between four samples and the window.
    """
    lo = np.log(4.0 * config.sample_period)
    hi = np.log(config.Nt * config.sample_period)
    drawn = 0

    def sample(rng, theta0):
        nonlocal drawn
        theta = theta0 + rng.uniform(-2.0, 2.0, size=theta0.shape)
        if drawn == 0:
            theta[period_index] = np.clip(theta0[period_index] + rng.uniform(-0.2, 0.2), lo, hi)
        else:
            theta[period_index] = rng.uniform(lo, hi)
        drawn += 1
        return theta

    return sample


def kc_forecast(
    history: GPDataset,
    config: ForecastConfig,
    warm: Optional[Hyperparameters] = None,
    seed=None,
) -> tuple[Posterior, TrainingResult]:
    """Train the composite kernel on the last ``Nt + 1`` samples and extrapolate.

    Inputs are shifted so the newest sample sits at time zero. With
    ``config.forgetting`` set, the age diagonal enters training and, unless
    ``forgetting_in_prediction`` is off, prediction as well.
    """
    n = config.kc_history
    if len(history) < n:
        raise InputError(f"KC needs {n} history samples, got {len(history)}")
    times = history.input_times[-n:]
    values = history.targets[-n:]
    now = float(times[-1])
    data = GPDataset.from_series(times - now, values)
    template = kc_template(values, config)
    period_index = 2  # Linear.scale, Periodic.scale, Periodic.period, ...
    bounds = [(-LOG_BOUND, LOG_BOUND)] * (template.kernel.n_params + 1)
    # periods beyond the window or below two samples are not identifiable
    bounds[period_index] = (np.log(2.0 * config.sample_period),
                            np.log(config.Nt * config.sample_period))
    result = train(
        template.kernel,
        data,
        forgetting=config.forgetting,
        restarts=config.kc_restarts,
        warm_start=warm,
        noise=template.noise,
        now=0.0,
        rng=np.random.default_rng(seed),
        sampler=_kc_sampler(config, period_index),
        maxiter=config.kc_maxiter,
        bounds=bounds,
    )
    hp = result.hyperparameters
    steps = np.arange(1, config.Np + 1) * config.sample_period
    extra = None
    if config.forgetting is not None and config.forgetting_in_prediction:
        extra = forgetting_diag(data.input_times, 0.0, config.forgetting)
    post = posterior(hp.kernel, hp.noise, data, steps[:, None], extra_diag=extra)
    excess = np.full(config.Np, _excess(hp, config))
    return Posterior(post.mean, post.cov, (now + steps)[:, None], excess), result


def _excess(hp: Hyperparameters, config: ForecastConfig) -> float:
    """Fitted noise beyond the known measurement noise."""
    if not config.excess_noise:
        return 0.0
    return max(hp.noise.sigma2 - config.sigma2, 0.0)


# -- nonlinear auto-regression -----------------------------------------------


def build_lag_matrix(history, chi: int, p: int, Nt: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressors and targets for the ``chi``-step-ahead model.

    Row ``r`` holds ``w[k-chi-r], ..., w[k-chi-r-p+1]`` and target ``r`` is
    ``w[k-r]``, where ``w[k]`` is the newest sample.
    """
    w = np.asarray(history, dtype=float).ravel()
    if chi < 1 or p < 1 or Nt < 0:
        raise InputError("chi and p must be >= 1, Nt >= 0")
    need = Nt + chi + p
    if len(w) < need:
        raise InputError(f"lag matrix needs {need} samples, got {len(w)}")
    k = len(w) - 1
    rows = np.arange(Nt + 1)[:, None]
    cols = np.arange(p)[None, :]
    X = w[k - chi - rows - cols]
    y = w[k - np.arange(Nt + 1)]
    return X, y


def nar_template(values: np.ndarray, config: ForecastConfig) -> Hyperparameters:
    s = max(float(np.std(values)), 0.1)
    kernel = Sum((RBF(s, s * np.sqrt(config.nar_order)), Constant(1.0)))
    return Hyperparameters(kernel, NoiseModel(max(config.sigma2, 1e-3)))


def _nar_step(values, times, chi, config, warm, seed):
    X, y = build_lag_matrix(values, chi, config.nar_order, config.Nt)
    k = len(values) - 1
    target_times = times[k - np.arange(config.Nt + 1)]
    data = GPDataset(X, y, target_times)
    template = nar_template(values, config)
    query = values[k - np.arange(config.nar_order)][None, :]
    now = float(times[-1])
    D_pred = None
    if config.forgetting is not None and config.forgetting_in_prediction:
        D_pred = forgetting_diag(target_times, now, config.forgetting)
    start = warm if warm is not None else template
    try:
        result = train(
            template.kernel, data, forgetting=config.forgetting,
            restarts=config.nar_restarts, warm_start=start, noise=template.noise,
            now=now, rng=np.random.default_rng(seed), maxiter=config.nar_maxiter,
        )
        hp = result.hyperparameters
    except (TrainingError, NumericalError) as exc:
        logger.warning("NAR step %d training failed (%s); using start values", chi, exc)
        hp = start
    post = posterior(hp.kernel, hp.noise, data, query, extra_diag=D_pred)
    return float(post.mean[0]), max(float(post.cov[0, 0]), 0.0), _excess(hp, config), hp


def nar_forecast(
    history,
    config: ForecastConfig,
    warm: Optional[Sequence[Optional[Hyperparameters]]] = None,
    times=None,
    seed: int = 0,
    order: Optional[Sequence[int]] = None,
) -> tuple[Posterior, tuple[Hyperparameters, ...]]:
    """Independent per-step GP models, assembled into a diagonal posterior.

    ``history`` is a value sequence (newest last) or a :class:`GPDataset`.
    Returns the posterior over the next ``Np`` steps and the fitted
    hyperparameters of each step model, usable as the next warm start.
    ``order`` only changes the sequence in which models are trained.
    """
    if isinstance(history, GPDataset):
        values, times = history.targets, history.input_times
    else:
        values = np.asarray(history, dtype=float).ravel()
        if times is None:
            times = (np.arange(len(values)) - (len(values) - 1)) * config.sample_period
    times = np.asarray(times, dtype=float)
    need = config.nar_history
    if len(values) < need:
        raise InputError(f"NAR needs {need} history samples, got {len(values)}")
    values, times = values[-need:], times[-need:]
    Np = config.Np
    warm = list(warm) if warm is not None else [None] * Np
    if len(warm) != Np:
        warm = [None] * Np
    means = np.zeros(Np)
    variances = np.zeros(Np)
    excess = np.zeros(Np)
    hps: list = [None] * Np
    for chi in order if order is not None else range(1, Np + 1):
        try:
            m, v, e, hp = _nar_step(values, times, chi, config, warm[chi - 1], (seed, chi))
        except NumericalError as exc:
            raise ForecastError(f"NAR step {chi} failed: {exc}") from exc
        means[chi - 1], variances[chi - 1], excess[chi - 1], hps[chi - 1] = m, v, e, hp
    step_times = times[-1] + np.arange(1, Np + 1) * config.sample_period
    post = Posterior(means, np.diag(variances), step_times[:, None], excess)
    return post, tuple(hps)


# -- switching ---------------------------------------------------------------


@dataclass(frozen=True)
class SwitchDecision:
    choice: str
    std_ratio_stat: float
    var_ratio_stat: float
    std_fail: bool = False
    var_fail: bool = False
    degenerate: bool = False


@dataclass(frozen=True)
class HybridState:
    """Values threaded between successive hybrid forecasts."""

    delta1: float = float(np.sqrt(0.5))
    delta2: float = 1.0
    cached_hyperparameters: Optional[Hyperparameters] = None
    rng_seed: int = 0
    nar_hyperparameters: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.delta1 <= 0 or self.delta2 <= 0:
            raise InputError("switch thresholds must be > 0")


def switch_decide(
    history_targets, post: Posterior, state: HybridState, as_printed: bool = False
) -> SwitchDecision:
    """Accept the KC prediction only if its spread and variance growth are plausible.

    ``s1 = |std(history) / std(mean) - 1|`` must not exceed ``delta1**2`` and
    ``s2 = |C[Np, Np] / C[1, 1] - 1|`` must not exceed ``delta2**2``. With
    ``as_printed`` the variance ratio is inverted to ``C[1, 1] / C[Np, Np]``.
    """
    if len(post) < 2:
        raise InputError("switching needs a posterior over at least 2 steps")
    h_std = float(np.std(np.asarray(history_targets, dtype=float)))
    m_std = float(np.std(post.mean))
    var = post.variance
    first, last = var[0], var[-1]
    num, den = (first, last) if as_printed else (last, first)
    degenerate = m_std == 0.0 or den == 0.0
    s1 = abs(h_std / m_std - 1.0) if m_std > 0 else float("inf")
    s2 = abs(num / den - 1.0) if den > 0 else float("inf")
    std_fail = not s1 <= state.delta1**2
    var_fail = not s2 <= state.delta2**2
    ok = not (std_fail or var_fail or degenerate)
    return SwitchDecision(KC if ok else NAR, float(s1), float(s2), std_fail, var_fail,
                          bool(degenerate))


def hybrid_forecast(
    history: GPDataset, config: ForecastConfig, state: HybridState
) -> tuple[Envelope, SwitchDecision, HybridState]:
    """One step of the hybrid predictor.

    KC runs first, warm-started from the cached hyperparameters. An accepted
    prediction caches its hyperparameters; a rejected one clears the cache,
    advances the seed and returns the NAR envelope instead.
    """
    spec = ConfidenceSpec(config.beta)
    n = config.kc_history
    try:
        post, result = kc_forecast(history, config, state.cached_hyperparameters, state.rng_seed)
        decision = switch_decide(
            history.targets[-n:], post, state, config.switch_ratio_as_printed
        )
    except (TrainingError, NumericalError) as exc:
        logger.info("KC forecast failed (%s); switching to NAR", exc)
        result = None
        decision = SwitchDecision(NAR, float("inf"), float("inf"), degenerate=True)

    if decision.choice == KC:
        env = envelope_from_posterior(post, spec, KC)
        return env, decision, replace(state, cached_hyperparameters=result.hyperparameters)

    nar_post, nar_hps = nar_forecast(
        history, config, warm=state.nar_hyperparameters, seed=state.rng_seed
    )
    env = envelope_from_posterior(nar_post, spec, NAR)
    new_state = replace(
        state,
        cached_hyperparameters=None,
        rng_seed=state.rng_seed + 1,
        nar_hyperparameters=nar_hps,
    )
    return env, decision, new_state
