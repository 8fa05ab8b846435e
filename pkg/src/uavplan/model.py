"""Domain types, scenario validation, and time discretization.

All quantities are SI base units (meters, seconds, watts, joules, bits).
Coordinates are planar; UAV altitude and sensor height are scalar
attributes, never a third coordinate component. Every type is immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelParams, db_to_linear, dbm_to_watt
from .energy import EnergyParams
from .errors import Infeasible, InvalidScenario
from .tdoa import NoiseModel

# Absolute tolerance for geometric/feasibility checks, in SI units.
GEOM_TOL = 1e-6
ROW_SUM_TOL = 1e-9


def _point(value) -> np.ndarray:
    pt = np.array(value, dtype=float).reshape(2)
    pt.flags.writeable = False
    return pt


@dataclass(frozen=True, eq=False)
class SensorSpec:
    """A ground sensor with an uncertain position.

    The true position is only used by the measurement simulator; planning
    sees the rough center and the uncertainty disk radius.
    """

    true_position: np.ndarray
    height: float
    rough_center: np.ndarray
    uncertainty_radius: float

    def __post_init__(self):
        object.__setattr__(self, "true_position", _point(self.true_position))
        object.__setattr__(self, "rough_center", _point(self.rough_center))

    def violations(self, label: str = "sensor") -> list[str]:
        out = []
        if self.uncertainty_radius < 0:
            out.append(f"{label}: uncertainty_radius must be >= 0")
        gap = float(np.linalg.norm(self.true_position - self.rough_center))
        if gap > self.uncertainty_radius + GEOM_TOL:
            out.append(f"{label}: true position lies {gap:.6g} m from the rough "
                       f"center, outside the uncertainty radius "
                       f"{self.uncertainty_radius:.6g} m")
        return out


@dataclass(frozen=True)
class TimeGrid:
    period: float       # T, s
    slot_count: int     # W
    slot_length: float  # tau, s

    def violations(self) -> list[str]:
        out = []
        if self.slot_count <= 0:
            out.append("grid.slot_count must be positive")
        if self.slot_length <= 0:
            out.append("grid.slot_length must be positive")
        if self.slot_count > 0 and self.slot_length > 0:
            if not math.isclose(self.period, self.slot_count * self.slot_length,
                                rel_tol=1e-12, abs_tol=1e-9):
                out.append(f"grid.period {self.period} != slot_count * slot_length "
                           f"= {self.slot_count * self.slot_length}")
        return out


@dataclass(frozen=True, eq=False)
class FleetSpec:
    uav_count: int        # N, including the data-collecting reference UAV
    altitude: float       # H, m
    start: np.ndarray     # u_s
    end: np.ndarray       # u_e
    v_max: float          # m/s
    r_max: float          # max distance auxiliary <-> reference UAV, m
    e_max: float          # per-UAV flight energy budget, J

    def __post_init__(self):
        object.__setattr__(self, "start", _point(self.start))
        object.__setattr__(self, "end", _point(self.end))

    def violations(self) -> list[str]:
        out = []
        if self.uav_count < 3:
            out.append("fleet.uav_count must be >= 3: two-dimensional "
                       "range-difference positioning needs at least three receivers")
        for name in ("v_max", "r_max", "e_max"):
            if getattr(self, name) <= 0:
                out.append(f"fleet.{name} must be positive")
        if self.altitude <= 0:
            out.append("fleet.altitude must be positive")
        return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """Full problem instance shared by every optimization stage."""

    sensors: tuple
    fleet: FleetSpec
    grid: TimeGrid
    channel: ChannelParams
    energy: EnergyParams
    noise: NoiseModel
    area_side: float          # L, m; area spans [0, L] x [-L/2, L/2]
    data_requirement: float   # I_min, bits per sensor
    k_max: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))

    @property
    def sensor_count(self) -> int:
        return len(self.sensors)


def _inside_area(point, side) -> bool:
    x, y = float(point[0]), float(point[1])
    return (-GEOM_TOL <= x <= side + GEOM_TOL
            and -side / 2 - GEOM_TOL <= y <= side / 2 + GEOM_TOL)


def validate_scenario(scenario: Scenario) -> Scenario:
    """Return the scenario iff every invariant holds; otherwise raise
    InvalidScenario listing every violation found. Idempotent."""
    violations: list[str] = []
    if scenario.sensor_count < 1:
        violations.append("scenario needs at least one sensor")
    if scenario.area_side <= 0:
        violations.append("area_side must be positive")
    if scenario.data_requirement <= 0:
        violations.append("data_requirement must be positive")
    if scenario.k_max < 1:
        violations.append("k_max must be >= 1")
    for i, sensor in enumerate(scenario.sensors):
        label = f"sensor[{i}]"
        violations.extend(sensor.violations(label))
        if scenario.area_side > 0:
            for attr in ("true_position", "rough_center"):
                if not _inside_area(getattr(sensor, attr), scenario.area_side):
                    violations.append(f"{label}.{attr} lies outside the "
                                      f"{scenario.area_side:g} m planning area")
        if sensor.height >= scenario.fleet.altitude:
            violations.append(f"{label}.height must stay below the flight altitude")
    violations.extend(scenario.fleet.violations())
    violations.extend(scenario.grid.violations())
    violations.extend(scenario.channel.violations())
    violations.extend(scenario.energy.violations())
    violations.extend(scenario.noise.violations())
    if violations:
        raise InvalidScenario(violations)
    return scenario


@dataclass(frozen=True, eq=False)
class Trajectory:
    """W+1 horizontal waypoints; index 0 is the start point so the speed of
    slot w (= ||u[w] - u[w-1]|| / tau) is well defined for w = 1..W."""

    waypoints: np.ndarray   # (W+1, 2)
    slot_length: float

    def __post_init__(self):
        pts = np.array(self.waypoints, dtype=float).reshape(-1, 2)
        pts.flags.writeable = False
        object.__setattr__(self, "waypoints", pts)

    @property
    def slot_count(self) -> int:
        return len(self.waypoints) - 1

    @property
    def displacements(self) -> np.ndarray:
        return np.diff(self.waypoints, axis=0)

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.displacements, axis=1) / self.slot_length

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(self.displacements, axis=1)))

    def violations(self, fleet: FleetSpec, grid: TimeGrid) -> list[str]:
        out = []
        if self.slot_count != grid.slot_count:
            out.append(f"trajectory has {self.slot_count} slots, grid has "
                       f"{grid.slot_count}")
        if np.linalg.norm(self.waypoints[0] - fleet.start) > GEOM_TOL:
            out.append("trajectory does not start at the fleet start point")
        if np.linalg.norm(self.waypoints[-1] - fleet.end) > GEOM_TOL:
            out.append("trajectory does not end at the fleet end point")
        step_limit = grid.slot_length * fleet.v_max + GEOM_TOL
        steps = np.linalg.norm(self.displacements, axis=1)
        for w in np.flatnonzero(steps > step_limit):
            out.append(f"slot {w + 1} moves {steps[w]:.6g} m, exceeding "
                       f"tau * v_max = {step_limit:.6g} m")
        return out


@dataclass(frozen=True, eq=False)
class Schedule:
    """W x M matrix of per-slot transmission fractions."""

    fractions: np.ndarray

    def __post_init__(self):
        x = np.array(self.fractions, dtype=float)
        if x.ndim != 2:
            raise ValueError("schedule must be a W x M matrix")
        if np.any(x < -ROW_SUM_TOL) or np.any(x > 1 + ROW_SUM_TOL):
            raise ValueError("schedule entries must lie in [0, 1]")
        if np.any(x.sum(axis=1) > 1 + ROW_SUM_TOL):
            raise ValueError("schedule row sums must not exceed 1")
        x = np.clip(x, 0.0, 1.0)
        x.flags.writeable = False
        object.__setattr__(self, "fractions", x)

    @property
    def slot_count(self) -> int:
        return self.fractions.shape[0]

    @property
    def sensor_count(self) -> int:
        return self.fractions.shape[1]


def straight_line_trajectory(fleet: FleetSpec, grid: TimeGrid) -> Trajectory:
    """W+1 equally spaced waypoints from start to end (constant speed)."""
    distance = float(np.linalg.norm(fleet.end - fleet.start))
    reach = grid.slot_count * grid.slot_length * fleet.v_max
    if distance > reach + GEOM_TOL:
        raise Infeasible(
            f"endpoints are {distance:.6g} m apart but at most {reach:.6g} m "
            f"is reachable in {grid.slot_count} slots at v_max")
    steps = np.linspace(0.0, 1.0, grid.slot_count + 1)[:, None]
    pts = fleet.start[None, :] * (1 - steps) + fleet.end[None, :] * steps
    return Trajectory(waypoints=pts, slot_length=grid.slot_length)


# ---------------------------------------------------------------------------
# JSON scenario files. Field names mirror the conventional symbols; gains in
# dB and powers in dBm are converted to linear scale here, once.

def scenario_from_dict(doc: dict) -> Scenario:
    sensors = tuple(
        SensorSpec(true_position=s["true_position"],
                   height=float(s.get("h_m", 0.0)),
                   rough_center=s["rough_center"],
                   uncertainty_radius=float(s["r_u"]))
        for s in doc["sensors"]
    )
    f = doc["fleet"]
    fleet = FleetSpec(uav_count=int(f["N"]), altitude=float(f["H"]),
                      start=f["u_s"], end=f["u_e"], v_max=float(f["V_max"]),
                      r_max=float(f["R_max"]), e_max=float(f["E_max"]))
    g = doc["grid"]
    grid = TimeGrid(period=float(g["T"]), slot_count=int(g["W"]),
                    slot_length=float(g["tau"]))
    c = doc["channel"]
    channel = ChannelParams(beta0=db_to_linear(float(c["beta0_db"])),
                            alpha=float(c["alpha"]),
                            bandwidth=float(c["B0"]),
                            noise_power=dbm_to_watt(float(c["sigma2_dbm"])),
                            transmit_power=float(c["P_t"]))
    e = doc.get("energy", {})
    energy = EnergyParams(
        blade_power=float(e.get("k_b", 79.86)),
        induced_power=float(e.get("k_i", 88.63)),
        air_density=float(e.get("rho", 1.225)),
        rotor_solidity=float(e.get("s", 0.05)),
        drag_coefficient=float(e.get("d_r", 0.6)),
        rotor_area=float(e.get("A", 0.503)),
        tip_speed=float(e.get("v_t", 120.0)),
        induced_speed=float(e.get("v0", 4.03)),
    )
    n = doc.get("noise", {})
    noise = NoiseModel(delta=float(n.get("delta", 1.0)),
                       covariance_mode=n.get("covariance_mode", "independent"))
    return Scenario(sensors=sensors, fleet=fleet, grid=grid, channel=channel,
                    energy=energy, noise=noise,
                    area_side=float(doc["L"]),
                    data_requirement=float(doc["I_min"]),
                    k_max=int(doc.get("K_max", 1)))


def load_scenario(path) -> Scenario:
    doc = json.loads(Path(path).read_text())
    return validate_scenario(scenario_from_dict(doc))


def with_overrides(scenario: Scenario, e_max=None, period=None, delta=None
                   ) -> Scenario:
    """Scenario copy with common sweep parameters replaced.

    Changing the period keeps the slot length and rescales the slot count,
    which must stay integral.
    """
    out = scenario
    if e_max is not None:
        out = replace(out, fleet=replace(out.fleet, e_max=float(e_max)))
    if period is not None:
        tau = out.grid.slot_length
        slots = float(period) / tau
        if abs(slots - round(slots)) > 1e-9:
            raise InvalidScenario([f"period {period} is not a multiple of the "
                                   f"slot length {tau}"])
        out = replace(out, grid=TimeGrid(period=float(period),
                                         slot_count=int(round(slots)),
                                         slot_length=tau))
    if delta is not None:
        out = replace(out, noise=replace(out.noise, delta=float(delta)))
    return out
