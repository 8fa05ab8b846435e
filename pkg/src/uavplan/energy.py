"""Rotary-wing propulsion power model and trajectory energy accounting.

Power at horizontal speed v has three components: blade profile power
``k_b * (1 + 3 v^2 / v_t^2)``, parasitic power ``0.5 * rho * s * d_r * A * v^3``,
and induced power ``k_i * sqrt(sqrt(1 + v^4 / (4 v0^4)) - v^2 / (2 v0^2))``.
A slack-variable surrogate replaces the induced factor by a free variable so
the convex trajectory subproblem can treat it linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnergyParams:
    """Propulsion model constants. Defaults are standard rotary-wing values."""

    blade_power: float = 79.86        # hover blade profile power, W
    induced_power: float = 88.63      # hover induced power, W
    air_density: float = 1.225        # kg/m^3
    rotor_solidity: float = 0.05
    drag_coefficient: float = 0.6
    rotor_area: float = 0.503         # m^2
    tip_speed: float = 120.0          # blade tip speed, m/s
    induced_speed: float = 4.03       # mean rotor induced speed in hover, m/s

    @property
    def parasite_coeff(self) -> float:
        """Coefficient of v^3 in the parasitic power term."""
        return 0.5 * self.air_density * self.rotor_solidity \
            * self.drag_coefficient * self.rotor_area

    @property
    def hover_power(self) -> float:
        return self.blade_power + self.induced_power

    def violations(self) -> list[str]:
        out = []
        for name in ("blade_power", "induced_power", "air_density",
                     "rotor_solidity", "drag_coefficient", "rotor_area",
                     "tip_speed", "induced_speed"):
            if getattr(self, name) <= 0:
                out.append(f"energy.{name} must be positive")
        return out


def induced_speed_factor(v, params: EnergyParams):
    """Exact induced-power factor at speed v.

    This is the closed-form value of the surrogate slack variable; it
    satisfies 1/f^2 = f^2 + v^2/v0^2.
    """
    v = np.asarray(v, dtype=float)
    a = v ** 2 / (2.0 * params.induced_speed ** 2)
    return np.sqrt(np.sqrt(1.0 + a ** 2) - a)


def propulsion_power(v, params: EnergyParams):
    """Propulsion power (W) at horizontal speed v (m/s). Vectorized."""
    v = np.asarray(v, dtype=float)
    blade = params.blade_power * (1.0 + 3.0 * v ** 2 / params.tip_speed ** 2)
    parasite = params.parasite_coeff * v ** 3
    induced = params.induced_power * induced_speed_factor(v, params)
    return blade + parasite + induced


def propulsion_power_slack(v, slack, params: EnergyParams):
    """Surrogate power where the induced factor is a free slack >= 0.

    Equals propulsion_power(v) when slack = induced_speed_factor(v);
    over-estimates it for any larger slack.
    """
    v = np.asarray(v, dtype=float)
    blade = params.blade_power * (1.0 + 3.0 * v ** 2 / params.tip_speed ** 2)
    parasite = params.parasite_coeff * v ** 3
    return blade + parasite + params.induced_power * np.asarray(slack, dtype=float)


def trajectory_energy(trajectory, grid, params: EnergyParams) -> float:
    """Total propulsion energy (J) of a discretized trajectory.

    Hover slots (zero displacement) cost hover power, not zero.
    """
    speeds = trajectory.speeds
    return float(grid.slot_length * np.sum(propulsion_power(speeds, params)))
