"""Ground-to-air channel: path loss, SINR, achievable rate, uploaded data.

Only distance-dependent path loss is modelled; everything is linear scale
internally (dB inputs are converted once at scenario parse time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry


@dataclass(frozen=True)
class ChannelParams:
    beta0: float           # linear power gain at 1 m reference distance
    alpha: float           # path-loss exponent, >= 2
    bandwidth: float       # B0, Hz
    noise_power: float     # sigma^2, W
    transmit_power: float  # P_t, W

    @property
    def c0(self) -> float:
        """Transmit SNR referenced to 1 m: P_t * beta0 / sigma^2."""
        return self.transmit_power * self.beta0 / self.noise_power

    def violations(self) -> list[str]:
        out = []
        for name in ("beta0", "alpha", "bandwidth", "noise_power", "transmit_power"):
            if getattr(self, name) <= 0:
                out.append(f"channel.{name} must be positive")
        if self.alpha < 2.0:
            out.append("channel.alpha must be >= 2")
        return out


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def path_loss(u1, sensor, altitude: float, params: ChannelParams) -> float:
    """Linear channel gain between a UAV at u1 and the sensor's true position."""
    u1 = np.asarray(u1, dtype=float)
    sq = float(np.sum((u1 - sensor.true_position) ** 2)) \
        + (altitude - sensor.height) ** 2
    if sq <= 0.0:
        raise DegenerateGeometry("UAV and sensor coincide; path loss undefined")
    return params.beta0 * sq ** (-params.alpha / 2.0)


def rate_from_sq_distance(sq_distance, params: ChannelParams, k_connected: int = 1,
                          interference: float = 0.0):
    """Rate (bits/s) given squared 3D distance(s). Vectorized over sq_distance."""
    sq = np.asarray(sq_distance, dtype=float)
    snr = params.transmit_power * params.beta0 * sq ** (-params.alpha / 2.0) \
        / (interference + params.noise_power)
    return (params.bandwidth / k_connected) * np.log2(1.0 + snr)


def rate(u1, sensor, k_connected: int, params: ChannelParams, altitude: float,
         interferers=()) -> float:
    """Achievable uplink rate (bits/s) from the sensor to the UAV.

    With a single connected sensor (k_connected = 1) there is no co-channel
    interference and the full bandwidth is used. The k_connected > 1 path
    splits bandwidth evenly and adds the interferers' received powers; it is
    experimental since the scheduler only ever connects one sensor per slot.
    """
    if k_connected < 1:
        raise ValueError("k_connected must be >= 1")
    u1 = np.asarray(u1, dtype=float)
    interference = 0.0
    if k_connected > 1:
        interference = sum(
            params.transmit_power * path_loss(u1, other, altitude, params)
            for other in interferers
        )
    sq = float(np.sum((u1 - sensor.true_position) ** 2)) \
        + (altitude - sensor.height) ** 2
    if sq <= 0.0:
        raise DegenerateGeometry("UAV and sensor coincide")
    return float(rate_from_sq_distance(sq, params, k_connected, interference))


def worst_case_sq_distance(u1, sensor, altitude: float):
    """Squared 3D distance to the farthest point of the sensor's uncertainty disk."""
    u1 = np.asarray(u1, dtype=float)
    horizontal = np.sqrt(np.sum((np.atleast_2d(u1) - sensor.rough_center) ** 2, axis=1))
    worst = (horizontal + sensor.uncertainty_radius) ** 2 \
        + (altitude - sensor.height) ** 2
    return worst if u1.ndim > 1 else float(worst[0])


def worst_case_rate(u1, sensor, params: ChannelParams, altitude: float) -> float:
    """Rate guaranteed for any true sensor position inside the uncertainty disk.

    Evaluates the rate at the farthest disk point from the UAV, i.e. at
    horizontal distance ||u1 - rough_center|| + r_u.
    """
    sq = worst_case_sq_distance(u1, sensor, altitude)
    return float(rate_from_sq_distance(sq, params))


def worst_case_rates(trajectory, scenario) -> np.ndarray:
    """(W, M) matrix of worst-case rates, slot w evaluated at waypoint w."""
    pts = trajectory.waypoints[1:]  # slot w uses u[w], w = 1..W
    altitude = scenario.fleet.altitude
    cols = []
    for sensor in scenario.sensors:
        sq = worst_case_sq_distance(pts, sensor, altitude)
        cols.append(rate_from_sq_distance(sq, scenario.channel))
    return np.column_stack(cols)


def uploaded_data(trajectory, schedule, scenario) -> np.ndarray:
    """Per-sensor uploaded bits over the whole task, using worst-case rates."""
    rates = worst_case_rates(trajectory, scenario)
    tau = scenario.grid.slot_length
    return tau * np.sum(rates * schedule.fractions, axis=0)
