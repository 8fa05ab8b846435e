"""Alternating optimization of the transmission schedule and the
reference UAV trajectory.

Each iteration solves the scheduling LP for the current trajectory, then
one convex trajectory subproblem expanded at that trajectory. Because the
LP is exact and the trajectory surrogate is tangent from below, the min
data ratio can never decrease across block solves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import channel, sca, schedule_lp
from .energy import trajectory_energy
from .errors import InitializationInfeasible
from .model import Scenario, Trajectory, straight_line_trajectory, validate_scenario

log = logging.getLogger(__name__)

EARLY_STOP_DELTA = 1e-4
EARLY_STOP_STREAK = 3


@dataclass(eq=False)
class BcdReport:
    lambda_history: list          # every block-solve min ratio, in order
    lp_lambdas: list              # min ratio after each LP solve
    sca_lambdas: list             # min ratio after each trajectory solve
    trajectory: Trajectory
    schedule: object
    uploaded_bits: np.ndarray
    energy_used: float
    iterations_run: int
    stopped_early: bool
    seed: int
    sca_logs: list = field(default_factory=list)  # (iteration, stage, ratio, kkt, energy)


def greedy_visit_trajectory(scenario: Scenario) -> Trajectory:
    """Alternative initializer that detours through the sensor centers in
    path order, falling back to the straight line when out of reach."""
    fleet, grid = scenario.fleet, scenario.grid
    direction = fleet.end - fleet.start
    span = np.linalg.norm(direction)
    order = sorted(scenario.sensors,
                   key=lambda s: float(np.dot(s.rough_center - fleet.start,
                                              direction)) / max(span, 1.0))
    knots = [fleet.start] + [s.rough_center for s in order] + [fleet.end]
    lengths = [np.linalg.norm(b - a) for a, b in zip(knots, knots[1:])]
    total = float(sum(lengths))
    budget = grid.slot_count * grid.slot_length * fleet.v_max
    if total > budget * (1 - 1e-6) or total == 0.0:
        log.info("greedy initializer needs %.6g m of %.6g m reachable; "
                 "using the straight line", total, budget)
        return straight_line_trajectory(fleet, grid)
    # arc-length parameterization sampled at constant speed
    stations = np.concatenate([[0.0], np.cumsum(lengths)])
    samples = np.linspace(0.0, total, grid.slot_count + 1)
    pts = np.empty((grid.slot_count + 1, 2))
    for i, s in enumerate(samples):
        k = min(int(np.searchsorted(stations, s, side="right")) - 1,
                len(lengths) - 1)
        seg = lengths[k]
        frac = 0.0 if seg == 0 else (s - stations[k]) / seg
        pts[i] = knots[k] + frac * (knots[k + 1] - knots[k])
    return Trajectory(waypoints=pts, slot_length=grid.slot_length)


def run_bcd(scenario: Scenario, l_max: int = 30, seed: int = 0, *,
            early_stop: bool = True, use_trust: bool = True,
            trust_radius: float = 50.0, init: str = "straight") -> BcdReport:
    """Run the block-coordinate loop for l_max iterations.

    With l_max = 0 only the initial trajectory and its LP schedule are
    reported. Early stopping (min-ratio improvement below 1e-4 for three
    consecutive iterations) is on by default and logged; disable it to
    force the full iteration budget.
    """
    validate_scenario(scenario)
    fleet, grid = scenario.fleet, scenario.grid
    if init == "greedy":
        trajectory = greedy_visit_trajectory(scenario)
    else:
        trajectory = straight_line_trajectory(fleet, grid)
    used = trajectory_energy(trajectory, grid, scenario.energy)
    if used > fleet.e_max:
        raise InitializationInfeasible(
            f"initial trajectory needs {used:.6g} J > budget {fleet.e_max:.6g} J")

    history: list[float] = []
    lp_lambdas: list[float] = []
    sca_lambdas: list[float] = []
    sca_logs: list[tuple] = []

    def lp_step(traj):
        rates = channel.worst_case_rates(traj, scenario)
        sol = schedule_lp.solve_schedule(rates, grid, scenario.data_requirement)
        lp_lambdas.append(sol.min_ratio)
        history.append(sol.min_ratio)
        return sol

    solution = lp_step(trajectory)
    iterations = 0
    stopped_early = False
    streak = 0
    for it in range(1, l_max + 1):
        expansion = sca.build_expansion(trajectory, scenario)
        sub = sca.solve_subproblem(solution.schedule, expansion, scenario,
                                   trust_radius=trust_radius,
                                   use_trust=use_trust)
        trajectory = sub.trajectory
        sca_lambdas.append(sub.min_ratio)
        history.append(sub.min_ratio)
        sca_logs.extend((it, *row) for row in sub.iteration_log)
        iterations = it
        previous = solution.min_ratio
        solution = lp_step(trajectory)
        if early_stop:
            streak = streak + 1 if solution.min_ratio - previous < EARLY_STOP_DELTA \
                else 0
            if streak >= EARLY_STOP_STREAK:
                stopped_early = True
                log.info("stopping after iteration %d: min ratio improved "
                         "< %g for %d consecutive iterations",
                         it, EARLY_STOP_DELTA, EARLY_STOP_STREAK)
                break

    uploaded = channel.uploaded_data(trajectory, solution.schedule, scenario)
    return BcdReport(lambda_history=history,
                     lp_lambdas=lp_lambdas,
                     sca_lambdas=sca_lambdas,
                     trajectory=trajectory,
                     schedule=solution.schedule,
                     uploaded_bits=uploaded,
                     energy_used=trajectory_energy(trajectory, grid, scenario.energy),
                     iterations_run=iterations,
                     stopped_early=stopped_early,
                     seed=seed,
                     sca_logs=sca_logs)
