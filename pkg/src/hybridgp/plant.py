"""Tank-heater plant: lumped energy balance and its RK4 discretization.

Units: temperature in degC, heater power in kW, inlet flow in kg/s. Flow
traces elsewhere in the package are in g/s; convert with ``G_PER_KG``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

G_PER_KG = 1000.0


@dataclass(frozen=True)
class PlantParams:
    M: float = 0.7854  # kg
    cp: float = 6.9244  # kJ/(kg K)
    T_inlet: float = 20.0  # degC
    T_amb: float = 15.0  # degC
    U_total: float = 1e-7  # kW/K

    def __post_init__(self):
        if min(self.M, self.cp, self.T_inlet, self.T_amb, self.U_total) <= 0:
            raise InputError("plant parameters must be positive")

    @property
    def heat_capacity(self) -> float:
        return self.M * self.cp


@dataclass
class PlantState:
    T: float


def temperature_derivative(params: PlantParams, T, Q, mdot):
    """dT/dt in K/s."""
    return (
        Q - mdot * params.cp * (T - params.T_inlet) - params.U_total * (T - params.T_amb)
    ) / params.heat_capacity


def rk4_step(params: PlantParams, T, Q, mdot, h: float):
    """Classical RK4 step with ``Q`` and ``mdot`` held over the step."""
    f = temperature_derivative
    k1 = f(params, T, Q, mdot)
    k2 = f(params, T + 0.5 * h * k1, Q, mdot)
    k3 = f(params, T + 0.5 * h * k2, Q, mdot)
    k4 = f(params, T + h * k3, Q, mdot)
    return T + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_sensitivity(params: PlantParams, T, Q, mdot, h: float):
    """RK4 step plus the exact derivatives of its output w.r.t. ``T`` and ``Q``.

    The vector field is affine in ``T`` and ``Q``, so the stage derivatives
    are constants: ``df/dT = -a`` and ``df/dQ = 1 / (M cp)``.
    """
    a = (mdot * params.cp + params.U_total) / params.heat_capacity
    b = 1.0 / params.heat_capacity
    ah = a * h
    dT = 1.0 - ah + ah**2 / 2.0 - ah**3 / 6.0 + ah**4 / 24.0
    dQ = h * b * (1.0 - ah / 2.0 + ah**2 / 6.0 - ah**3 / 24.0)
    return rk4_step(params, T, Q, mdot, h), dT, dQ


def equilibrium_temperature(params: PlantParams, Q, mdot):
    """Steady state of the continuous dynamics for constant inputs."""
    return (Q + mdot * params.cp * params.T_inlet + params.U_total * params.T_amb) / (
        mdot * params.cp + params.U_total
    )


def exact_step(params: PlantParams, T, Q, mdot, h: float):
    """Closed-form solution of the linear ODE after ``h`` seconds."""
    a = (mdot * params.cp + params.U_total) / params.heat_capacity
    T_inf = equilibrium_temperature(params, Q, mdot)
    return T_inf + (T - T_inf) * np.exp(-a * h)
