"""Robust economic MPC for the tank heater.

Colder water comes in as the inlet flow grows, so for any water temperature
above the inlet temperature the worst disturbance in an interval is its upper
end. The inner maximization therefore collapses to evaluating the plant
under the envelope's upper bound, and the controller only minimizes over the
heater powers.

The soft-constraint slacks are eliminated in closed form: for a fixed
trajectory the cheapest feasible slack is the positive part of the violation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import InputError, SolverError
from .forecast import Envelope
from .plant import G_PER_KG, PlantParams, rk4_step_sensitivity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlConfig:
    Np: int = 25
    h: float = 2.0
    u_min: float = 0.0
    u_max: float = 10.0
    x_min: float = 55.0
    x_max: Optional[float] = None
    eta_lower: float = 10.0
    eta_upper: float = 0.0
    beta: float = 0.95
    max_iter: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise InputError("u_min must be < u_max")
        if self.Np < 1 or self.h <= 0:
            raise InputError("Np must be >= 1 and h > 0")
        if self.eta_lower < 0 or self.eta_upper < 0:
            raise InputError("violation weights must be >= 0")


@dataclass(frozen=True)
class ControlSolution:
    u_seq: np.ndarray
    predicted_T: np.ndarray
    J_total: float
    J_EC: float
    J_CV: float
    solver_iterations: int
    converged: bool


def worst_case_sequence(envelope: Optional[Envelope], mode: str = "robust_upper",
                        trace=None, fixed_range=(0.0, 70.0), Np: Optional[int] = None
                        ) -> np.ndarray:
    """Disturbance sequence (g/s) the controller plans against.

    ``robust_upper`` takes the envelope's upper bound, ``perfect`` the supplied
    true future ``trace`` and ``fixed_range`` the constant upper end of
    ``fixed_range``.
    """
    if mode == "robust_upper":
        if envelope is None:
            raise InputError("robust_upper needs an envelope")
        out = np.clip(np.asarray(envelope.upper, dtype=float), 0.0, None)
        if Np is not None and len(out) != Np:
            raise InputError(f"envelope has {len(out)} steps, expected {Np}")
        return out
    if mode == "perfect":
        if trace is None:
            raise InputError("perfect mode needs the future trace")
        out = np.asarray(trace, dtype=float).copy()
        if Np is not None and len(out) != Np:
            raise InputError(f"trace has {len(out)} steps, expected {Np}")
        return out
    if mode == "fixed_range":
        lo, hi = fixed_range
        if lo > hi:
            raise InputError("fixed range lower end exceeds upper end")
        n = Np if Np is not None else (len(envelope) if envelope is not None else None)
        if n is None:
            raise InputError("fixed_range needs Np or an envelope for its length")
        return np.full(n, float(hi))
    raise InputError(f"unknown worst-case mode {mode!r}")


def _rollout(u, mdot_kg, T0, params, h):
    n = len(u)
    T = np.empty(n)
    dT = np.empty(n)
    dQ = np.empty(n)
    x = T0
    for i in range(n):
        x, dT[i], dQ[i] = rk4_step_sensitivity(params, x, u[i], mdot_kg[i], h)
        T[i] = x
    return T, dT, dQ


def _violation_cost(T, config):
    J = config.eta_lower * np.maximum(0.0, config.x_min - T)
    if config.x_max is not None:
        J = J + config.eta_upper * np.maximum(0.0, T - config.x_max)
    return J


def evaluate_objective(u_seq, mdot_seq, T0: float, params: PlantParams,
                       config: ControlConfig):
    """Economic cost plus closed-form violation penalty over the horizon.

    ``mdot_seq`` is in g/s. Returns ``(J_total, J_EC, J_CV, predicted_T)``
    where ``predicted_T[i]`` is the temperature after step ``i``.
    """
    u = np.asarray(u_seq, dtype=float)
    w = np.asarray(mdot_seq, dtype=float)
    if len(u) != len(w):
        raise InputError("input and disturbance sequences differ in length")
    T, _, _ = _rollout(u, w / G_PER_KG, T0, params, config.h)
    J_EC = float(np.sum(u**2))
    J_CV = float(np.sum(_violation_cost(T, config)))
    return J_EC + J_CV, J_EC, J_CV, T


def _affine_map(mdot_kg, T0, params, h):
    """Predicted temperatures as ``G @ u + c``.

    RK4 applied to an ODE that is affine in ``T`` and ``Q`` is itself affine,
    so one rollout with ``u = 0`` plus the per-step sensitivities fixes the map.
    """
    n = len(mdot_kg)
    c, dT, dQ = _rollout(np.zeros(n), mdot_kg, T0, params, h)
    G = np.zeros((n, n))
    for j in range(n):
        col = dQ[j]
        G[j, j] = col
        for i in range(j + 1, n):
            col *= dT[i]
            G[i, j] = col
    return G, c


def _objective_and_grad(u, G, c, config):
    T = G @ u + c
    J = float(u @ u + np.sum(_violation_cost(T, config)))
    g_T = -config.eta_lower * (T < config.x_min)
    if config.x_max is not None:
        g_T = g_T + config.eta_upper * (T > config.x_max)
    return J, 2.0 * u + G.T @ g_T


def shift_warm_start(prev_u: Sequence[float]) -> np.ndarray:
    """Previous plan advanced one step, last entry repeated."""
    prev = np.asarray(prev_u, dtype=float)
    return np.append(prev[1:], prev[-1])


def solve_rempc(T0: float, disturbance, params: PlantParams, config: ControlConfig,
                warm_u=None) -> ControlSolution:
    """Minimize heater cost plus violations against a worst-case flow sequence.

    ``disturbance`` is either an :class:`Envelope` (its upper bound is used)
    or an explicit g/s sequence of length ``Np``. The result never scores
    worse than the start point.
    """
    if not np.isfinite(T0):
        raise InputError("initial temperature must be finite")
    if isinstance(disturbance, Envelope):
        mdot = worst_case_sequence(disturbance, "robust_upper", Np=config.Np)
    else:
        mdot = np.asarray(disturbance, dtype=float)
        if len(mdot) != config.Np:
            raise InputError(f"disturbance has {len(mdot)} steps, expected {config.Np}")
    G, c = _affine_map(mdot / G_PER_KG, T0, params, config.h)
    if warm_u is None:
        u0 = np.full(config.Np, 0.5 * (config.u_min + config.u_max))
    else:
        u0 = np.clip(np.asarray(warm_u, dtype=float), config.u_min, config.u_max)
        if len(u0) != config.Np:
            raise InputError("warm start length must equal Np")

    def fun(u):
        J, g = _objective_and_grad(u, G, c, config)
        if not np.isfinite(J):
            return 1e30, np.zeros_like(u)
        return J, g

    J0, _ = fun(u0)
    res = optimize.minimize(
        fun, u0, jac=True, method="L-BFGS-B",
        bounds=[(config.u_min, config.u_max)] * config.Np,
        options={"maxiter": config.max_iter, "ftol": config.tol, "gtol": 1e-9},
    )
    u_best, converged, nit = res.x, bool(res.success), int(res.nit)
    if not np.isfinite(res.fun) or res.fun >= 1e30:
        if J0 >= 1e30:
            raise SolverError("objective non-finite at every probe")
        u_best = u0
    elif res.fun > J0:
        u_best = u0
    u_best = np.clip(u_best, config.u_min, config.u_max)
    J, J_EC, J_CV, T = evaluate_objective(u_best, mdot, T0, params, config)
    return ControlSolution(u_best, T, J, J_EC, J_CV, nit, converged)
