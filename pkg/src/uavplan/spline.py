"""Auxiliary-UAV trajectories: natural cubic splines through observation
points, plus kinematic/energy/range feasibility checking and repair."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .energy import EnergyParams, propulsion_power
from .errors import DuplicateKnotSlot, Unrepairable
from .model import GEOM_TOL, Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SplinePlan:
    """One auxiliary UAV's plan: knots (slot, point) and the sampled path."""

    knot_slots: tuple           # strictly increasing, starts at 0, ends at W
    knot_points: np.ndarray     # (K, 2)
    trajectory: Trajectory      # sampled at every slot

    @property
    def pop_slots(self) -> tuple:
        return self.knot_slots[1:-1]


def interpolation_matrix(knot_slots, slot_count: int) -> np.ndarray:
    """(W+1, K) operator mapping knot values to natural-spline samples.

    The spline is linear in its knot values, so sampling many candidate
    knot sets reduces to one matrix product.
    """
    slots = np.asarray(knot_slots, dtype=float)
    grid = np.arange(slot_count + 1, dtype=float)
    basis = np.empty((slot_count + 1, len(slots)))
    for k in range(len(slots)):
        unit = np.zeros(len(slots))
        unit[k] = 1.0
        basis[:, k] = CubicSpline(slots, unit, bc_type="natural")(grid)
    return basis


def _validate_knots(knot_slots, slot_count):
    slots = [int(s) for s in knot_slots]
    if len(set(slots)) != len(slots):
        raise DuplicateKnotSlot(f"duplicate knot slots in {slots}")
    if any(b <= a for a, b in zip(slots, slots[1:])):
        raise ValueError("knot slots must be strictly increasing")
    if slots[0] != 0 or slots[-1] != slot_count:
        raise ValueError("knots must include slot 0 and the final slot")
    return slots


def fit_spline(knots, grid) -> SplinePlan:
    """Natural cubic spline through (slot, point) knots, sampled per slot.

    knots is a sequence of (slot_index, 2D point) with slot 0 and W present.
    """
    slots = _validate_knots([s for s, _ in knots], grid.slot_count)
    points = np.array([p for _, p in knots], dtype=float).reshape(-1, 2)
    times = np.array(slots, dtype=float) * grid.slot_length
    sample_times = np.arange(grid.slot_count + 1) * grid.slot_length
    if len(slots) == 2:
        fracs = sample_times / times[-1] if times[-1] > 0 else sample_times * 0.0
        sampled = points[0] + fracs[:, None] * (points[1] - points[0])
    else:
        sampled = CubicSpline(times, points, axis=0, bc_type="natural")(sample_times)
    # pin the knots exactly; interpolation should already place them there
    for slot, point in zip(slots, points):
        sampled[slot] = point
    return SplinePlan(knot_slots=tuple(slots), knot_points=points,
                      trajectory=Trajectory(waypoints=sampled,
                                            slot_length=grid.slot_length))


@dataclass(eq=False)
class FeasibilityReport:
    speed_violations: list      # (slot, speed) above v_max
    energy: float
    energy_ok: bool
    range_violations_at_pops: list    # (slot, distance) beyond r_max
    range_violations_all: list        # advisory, every slot
    ok: bool


def check_feasibility(plan: SplinePlan, main: Trajectory, fleet,
                      energy_params: EnergyParams) -> FeasibilityReport:
    """Flag speed, energy, and link-range issues of a sampled plan.

    The link-range constraint is strict only at observation slots, where
    simultaneous reception is required; elsewhere it is advisory.
    """
    tau = plan.trajectory.slot_length
    speeds = plan.trajectory.speeds
    speed_violations = [(int(w + 1), float(speeds[w]))
                        for w in np.flatnonzero(speeds > fleet.v_max + GEOM_TOL)]
    energy = float(tau * np.sum(propulsion_power(speeds, energy_params)))
    separation = np.linalg.norm(plan.trajectory.waypoints - main.waypoints, axis=1)
    at_pops = [(int(s), float(separation[s])) for s in plan.pop_slots
               if separation[s] > fleet.r_max + GEOM_TOL]
    everywhere = [(int(s), float(separation[s]))
                  for s in np.flatnonzero(separation > fleet.r_max + GEOM_TOL)]
    ok = not speed_violations and energy <= fleet.e_max and not at_pops
    return FeasibilityReport(speed_violations=speed_violations,
                             energy=energy,
                             energy_ok=energy <= fleet.e_max,
                             range_violations_at_pops=at_pops,
                             range_violations_all=everywhere,
                             ok=ok)


def knots_reachable(knot_slots, knot_points, v_max: float, tau: float) -> bool:
    """Necessary condition: consecutive knots within v_max * elapsed time."""
    pts = np.asarray(knot_points, dtype=float)
    for (sa, a), (sb, b) in zip(zip(knot_slots, pts), zip(knot_slots[1:], pts[1:])):
        if np.linalg.norm(b - a) > (sb - sa) * tau * v_max + GEOM_TOL:
            return False
    return True


def repair_plan(plan: SplinePlan, fleet, grid, max_rounds: int = 10) -> SplinePlan:
    """Stretch time between speed-violating knots and re-fit.

    The knot interval containing the worst speed violation is widened by
    shifting later interior knots one slot later (or earlier knots one
    slot earlier when there is no room on the right). The repaired plan
    may therefore visit its knots at different slots than requested;
    residual violations surface via check_feasibility.
    """
    slots = list(plan.knot_slots)
    points = plan.knot_points
    path = float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))
    if path > grid.slot_count * grid.slot_length * fleet.v_max + GEOM_TOL:
        raise Unrepairable(
            f"knots need {path:.6g} m of travel but only "
            f"{grid.slot_count * grid.slot_length * fleet.v_max:.6g} m is "
            f"reachable in the horizon", plan=plan)

    def valid(candidate):
        return all(b > a for a, b in zip(candidate, candidate[1:]))

    current = plan
    for _round in range(max_rounds):
        speeds = current.trajectory.speeds
        bad = np.flatnonzero(speeds > fleet.v_max + GEOM_TOL)
        if bad.size == 0:
            return current
        worst = int(bad[np.argmax(speeds[bad])]) + 1
        seg = int(np.searchsorted(slots, worst, side="left")) - 1
        seg = min(max(seg, 0), len(slots) - 2)
        later = list(slots)
        for k in range(seg + 1, len(later) - 1):
            later[k] += 1
        earlier = list(slots)
        for k in range(1, seg + 1):
            earlier[k] -= 1
        if valid(later):
            slots = later
        elif valid(earlier):
            slots = earlier
        else:
            break
        current = fit_spline(list(zip(slots, points)), grid)
    speeds = current.trajectory.speeds
    if np.any(speeds > fleet.v_max + GEOM_TOL):
        raise Unrepairable("speed violations remain after "
                           f"{max_rounds} repair rounds", plan=current)
    return current
