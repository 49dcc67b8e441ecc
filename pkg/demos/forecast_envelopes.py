"""
Disturbance forecasts and envelopes
===================================

Forecast 50 s of inlet flow from 100 s of noisy history with the
kernel-composition (KC) and auto-regressive (NAR) forecasters, then let the
hybrid rule choose between them.
"""

import numpy as np

from hybridgp import (
    ConfidenceSpec,
    ForecastConfig,
    GPDataset,
    HybridState,
    ScenarioSpec,
    envelope_from_posterior,
    generate,
    hybrid_forecast,
    kc_forecast,
    nar_forecast,
)

cfg = ForecastConfig()  # 100 s training window, 50 s horizon, 2 s samples
trace = generate(ScenarioSpec("SN", seed=1, pre_roll=200.0))
now = trace.index_of(0.0)
n = cfg.history_length
history = GPDataset.from_series(trace.times[now - n + 1: now + 1],
                                trace.measured_values[now - n + 1: now + 1])
future = trace.true_values[now + 1: now + 1 + cfg.Np]
spec = ConfidenceSpec(0.95)


def summary(name, env):
    rmse = np.sqrt(np.mean((env.mean - future) ** 2))
    inside = np.mean((future >= env.lower) & (future <= env.upper))
    print(f"{name:4s} RMSE {rmse:5.2f} g/s   mean half-width {np.mean(env.upper - env.mean):5.2f}"
          f"   truth inside {100 * inside:5.1f}%")


post, fit = kc_forecast(history, cfg, seed=0)
summary("KC", envelope_from_posterior(post, spec))
print("     fitted period", round(fit.hyperparameters.kernel.children[1].period, 1), "s")

post, _ = nar_forecast(history, cfg, seed=0)
summary("NAR", envelope_from_posterior(post, spec))

env, decision, state = hybrid_forecast(history, cfg, HybridState())
print(f"hybrid picks {decision.choice}: std statistic {decision.std_ratio_stat:.2f}, "
      f"variance statistic {decision.var_ratio_stat:.2f}")
