"""Command-line pipeline: scheduling/trajectory optimization, observation
point placement, and Monte-Carlo positioning validation.

All results are CSV files with one header line and floats printed to nine
significant digits, so identical configurations and seeds reproduce
byte-identical outputs. Exit codes: 0 success, 1 usage error, 2 infeasible
problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bcd, channel, pso, spline, tdoa
from .energy import trajectory_energy
from .errors import (DegenerateGeometry, Infeasible, InitializationInfeasible,
                     InvalidScenario, NoConvergence, NoFeasibleParticle,
                     PlannerError, SingularGeometry, SubproblemInfeasible,
                     Unrepairable)
from .model import (Scenario, Trajectory, load_scenario, scenario_from_dict,
                    straight_line_trajectory, validate_scenario,
                    with_overrides)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3

_INFEASIBLE = (Infeasible, InitializationInfeasible, SubproblemInfeasible,
               NoFeasibleParticle, Unrepairable)
_NUMERICAL = (SingularGeometry, NoConvergence, DegenerateGeometry,
              np.linalg.LinAlgError)


@dataclass(eq=False)
class RunConfig:
    command: str
    scenario_path: str | None
    out_dir: Path
    seed: int = 0
    e_max_values: list = field(default_factory=list)
    period_values: list = field(default_factory=list)
    noise_values: list = field(default_factory=list)
    iterations: int | None = None
    early_stop: bool = True
    use_trust: bool = True
    trials: int = 2000
    pso_population: int | None = None
    pso_iterations: int | None = None
    demo: bool = False


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_sp1_outputs(out: Path, scenario: Scenario, report) -> None:
    traj = report.trajectory
    speeds = np.concatenate([[0.0], traj.speeds])
    write_csv(out / "trajectory.csv", ["slot", "x_m", "y_m", "speed_mps"],
              [(w, traj.waypoints[w, 0], traj.waypoints[w, 1], speeds[w])
               for w in range(traj.slot_count + 1)])
    x = report.schedule.fractions
    n_slots, n_sensors = x.shape
    write_csv(out / "schedule.csv",
              ["slot"] + [f"sensor_{m}" for m in range(n_sensors)],
              [(w + 1, *x[w]) for w in range(n_slots)])
    rates = channel.worst_case_rates(traj, scenario)
    scheduled = np.sum(rates * x, axis=1)
    write_csv(out / "rates.csv",
              ["slot"] + [f"rate_bps_sensor_{m}" for m in range(n_sensors)]
              + ["scheduled_rate_bps"],
              [(w + 1, *rates[w], scheduled[w]) for w in range(n_slots)])
    # history alternates schedule, trajectory, schedule, ...
    stages = []
    idx_lp = 0
    idx_sca = 0
    for k, value in enumerate(report.lambda_history):
        if k % 2 == 0:
            stages.append((idx_lp, "schedule", value))
            idx_lp += 1
        else:
            stages.append((idx_sca + 1, "trajectory", value))
            idx_sca += 1
    write_csv(out / "lambda_history.csv", ["iteration", "stage", "lambda"],
              stages)
    ratios = report.uploaded_bits / scenario.data_requirement
    write_csv(out / "uploaded.csv", ["sensor", "uploaded_bits", "ratio"],
              [(m, report.uploaded_bits[m], ratios[m])
               for m in range(n_sensors)])
    write_csv(out / "sca_iterations.csv",
              ["bcd_iteration", "stage", "lambda", "kkt_residual", "energy_j"],
              report.sca_logs)
    write_csv(out / "summary.csv", ["key", "value"],
              [("final_lambda", report.lambda_history[-1]),
               ("energy_used_j", report.energy_used),
               ("trajectory_length_m", report.trajectory.length()),
               ("iterations_run", report.iterations_run),
               ("stopped_early", int(report.stopped_early)),
               ("seed", report.seed)])


def _run_bcd(scenario: Scenario, config: RunConfig):
    l_max = 30 if config.iterations is None else config.iterations
    return bcd.run_bcd(scenario, l_max=l_max, seed=config.seed,
                       early_stop=config.early_stop,
                       use_trust=config.use_trust)


def _sweep_dirs(config: RunConfig):
    """Yield (out_dir, scenario_overrides) per sweep point."""
    emaxes = config.e_max_values or [None]
    periods = config.period_values or [None]
    single = len(emaxes) == 1 and len(periods) == 1
    for e_max in emaxes:
        for period in periods:
            if single:
                yield config.out_dir, e_max, period
            else:
                parts = []
                if e_max is not None:
                    parts.append(f"emax_{e_max:g}")
                if period is not None:
                    parts.append(f"period_{period:g}")
                yield config.out_dir / "_".join(parts), e_max, period


def cmd_optimize_sp1(config: RunConfig) -> int:
    base = load_scenario(config.scenario_path)
    for out, e_max, period in _sweep_dirs(config):
        scenario = validate_scenario(with_overrides(base, e_max=e_max,
                                                    period=period))
        report = _run_bcd(scenario, config)
        _write_sp1_outputs(out, scenario, report)
        log.info("wrote schedule/trajectory results to %s "
                 "(final min ratio %.6g)", out, report.lambda_history[-1])
    return EXIT_OK


def demo_scenario() -> Scenario:
    """Small static validation case: hovering reference UAV at the origin,
    a single sensor, three receivers, 50 m communication range."""
    doc = {
        "L": 1000.0,
        "I_min": 1.0e3,
        "K_max": 1,
        "sensors": [{"true_position": [22.0, 98.0], "h_m": 0.0,
                     "rough_center": [20.0, 100.0], "r_u": 10.0}],
        "fleet": {"N": 3, "H": 100.0, "u_s": [0.0, 0.0], "u_e": [0.0, 0.0],
                  "V_max": 30.0, "R_max": 50.0, "E_max": 1.0e5},
        "grid": {"T": 10.0, "W": 10, "tau": 1.0},
        "channel": {"beta0_db": -60.0, "alpha": 2.0, "B0": 1.0e6,
                    "sigma2_dbm": -110.0, "P_t": 0.1},
        "noise": {"delta": 1.0, "covariance_mode": "independent"},
    }
    return validate_scenario(scenario_from_dict(doc))


def _pops_pipeline(config: RunConfig):
    """Run the trajectory stage, then place observation points."""
    if config.demo:
        scenario = demo_scenario()
        trajectory = straight_line_trajectory(scenario.fleet, scenario.grid)
    else:
        scenario = load_scenario(config.scenario_path)
        e_max = config.e_max_values[0] if config.e_max_values else None
        period = config.period_values[0] if config.period_values else None
        scenario = validate_scenario(with_overrides(scenario, e_max=e_max,
                                                    period=period))
        report = _run_bcd(scenario, config)
        trajectory = report.trajectory
    params = pso.PsoParams(
        population=config.pso_population or pso.PsoParams.population,
        iterations=config.pso_iterations or pso.PsoParams.iterations)
    popset, history = pso.run_pso(trajectory, scenario, params, config.seed)
    return scenario, trajectory, popset, history


def _write_pops_outputs(out: Path, scenario: Scenario, trajectory: Trajectory,
                        popset, history) -> int:
    rows = []
    for entry in popset.entries:
        rows.append((entry.sensor_index, 0, entry.positioning_slot,
                     entry.main_point[0], entry.main_point[1],
                     entry.worst_crlb))
        for a, point in enumerate(entry.aux_points, start=1):
            rows.append((entry.sensor_index, a, entry.positioning_slot,
                         point[0], point[1], entry.worst_crlb))
    write_csv(out / "pops.csv",
              ["sensor", "uav", "slot", "x_m", "y_m", "worst_crlb_m2"], rows)
    write_csv(out / "pso_history.csv",
              ["iteration", "best_fitness", "avg_crlb_m2"], history)

    fleet, grid = scenario.fleet, scenario.grid
    aux_rows, feas_rows = [], []
    exit_code = EXIT_OK
    for a in range(fleet.uav_count - 1):
        knots = [(0, fleet.start)]
        for entry in sorted(popset.entries, key=lambda e: e.positioning_slot):
            knots.append((entry.positioning_slot, entry.aux_points[a]))
        knots.append((grid.slot_count, fleet.end))
        plan = spline.fit_spline(knots, grid)
        feas = spline.check_feasibility(plan, trajectory, fleet, scenario.energy)
        if feas.speed_violations:
            try:
                plan = spline.repair_plan(plan, fleet, grid)
                feas = spline.check_feasibility(plan, trajectory, fleet,
                                                scenario.energy)
            except Unrepairable:
                log.warning("auxiliary UAV %d plan is kinematically "
                            "unrepairable; writing best effort", a + 1)
        t = plan.trajectory
        speeds = np.concatenate([[0.0], t.speeds])
        separation = np.linalg.norm(t.waypoints - trajectory.waypoints, axis=1)
        aux_rows.extend((a + 1, w, t.waypoints[w, 0], t.waypoints[w, 1],
                         speeds[w], separation[w])
                        for w in range(t.slot_count + 1))
        feas_rows.append((a + 1, int(not feas.speed_violations), feas.energy,
                          int(feas.energy_ok),
                          int(not feas.range_violations_at_pops)))
    write_csv(out / "aux_trajectories.csv",
              ["uav", "slot", "x_m", "y_m", "speed_mps", "range_to_main_m"],
              aux_rows)
    write_csv(out / "aux_feasibility.csv",
              ["uav", "speed_ok", "energy_j", "energy_ok", "range_ok_at_pops"],
              feas_rows)
    write_csv(out / "pops_summary.csv", ["key", "value"],
              [("avg_worst_crlb_m2", popset.avg_worst_crlb),
               ("avg_worst_error_m", popset.avg_worst_error),
               ("fitness", popset.fitness),
               ("feasible", int(popset.feasible))])
    return exit_code


def cmd_optimize_pops(config: RunConfig) -> int:
    scenario, trajectory, popset, history = _pops_pipeline(config)
    return _write_pops_outputs(config.out_dir, scenario, trajectory,
                               popset, history)


def cmd_simulate(config: RunConfig) -> int:
    scenario, trajectory, popset, _history = _pops_pipeline(config)
    out = config.out_dir
    fleet = scenario.fleet

    # distance scan with a fixed formation trailing the scan direction,
    # which keeps the error growth steady over the whole range
    r = fleet.r_max
    ang = 5.0 * np.pi / 6.0
    offsets = np.array([[r * np.cos(ang), r * np.sin(ang)],
                        [r * np.cos(ang), -r * np.sin(ang)]])
    distances = list(range(10, 101, 10))
    rows = tdoa.rmse_vs_distance(distances, offsets, scenario.noise,
                                 trials=config.trials,
                                 altitude=fleet.altitude,
                                 master_seed=(config.seed, 1))
    write_csv(out / "rmse_vs_distance.csv",
              ["distance_m", "crlb_m2", "rmse_m", "trials"], rows)

    deltas = config.noise_values or [float(np.sqrt(v))
                                     for v in (1, 5, 9, 13, 17, 21, 25)]
    noise_rows = []
    for entry in popset.entries:
        sensor = scenario.sensors[entry.sensor_index]
        uavs = np.vstack([entry.main_point, entry.aux_points])
        pop_distance = float(np.linalg.norm(entry.main_point
                                            - sensor.rough_center))
        for k, delta in enumerate(deltas):
            noise = tdoa.NoiseModel(delta=float(delta),
                                    covariance_mode=scenario.noise.covariance_mode)
            if delta > 0:
                bound = tdoa.crlb_at_point(uavs, fleet.altitude,
                                           sensor.true_position, sensor.height,
                                           noise).bound
            else:
                bound = 0.0
            rmse, _ = tdoa.monte_carlo_rmse(
                uavs, fleet.altitude, sensor.true_position, sensor.height,
                noise, config.trials,
                (config.seed, 2, entry.sensor_index, k),
                initial_guess=sensor.rough_center)
            noise_rows.append((delta, delta ** 2, entry.sensor_index, bound,
                               rmse, config.trials, pop_distance))
    write_csv(out / "rmse_vs_noise.csv",
              ["delta_m", "delta2_m2", "sensor", "crlb_m2", "rmse_m",
               "trials", "pop_distance_m"], noise_rows)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list:
    return [float(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uavplan",
                     description="Joint multi-UAV data collection and sensor "
                                 "positioning planner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("optimize-sp1", "optimize schedule and trajectory"),
                           ("optimize-pops", "place positioning observation "
                                             "points"),
                           ("simulate", "Monte-Carlo positioning validation")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--emax", type=_float_list, default=None,
                       help="energy budget override(s), J, comma separated")
        p.add_argument("--period", type=_float_list, default=None,
                       help="task period override(s), s, comma separated")
        p.add_argument("--noise", type=_float_list, default=None,
                       help="range-difference noise stds, m, comma separated")
        p.add_argument("--iterations", type=int, default=None,
                       help="alternating-optimization iteration budget")
        p.add_argument("--no-early-stop", action="store_true")
        p.add_argument("--no-trust-region", action="store_true")
        p.add_argument("--trials", type=int, default=2000,
                       help="Monte-Carlo trials per point")
        p.add_argument("--pso-population", type=int, default=None)
        p.add_argument("--pso-iterations", type=int, default=None)
        p.add_argument("--demo", action="store_true",
                       help="use the built-in static single-sensor scenario")
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(command=args.command,
                     scenario_path=args.scenario,
                     out_dir=Path(args.out),
                     seed=args.seed,
                     e_max_values=args.emax or [],
                     period_values=args.period or [],
                     noise_values=args.noise or [],
                     iterations=args.iterations,
                     early_stop=not args.no_early_stop,
                     use_trust=not args.no_trust_region,
                     trials=args.trials,
                     pso_population=args.pso_population,
                     pso_iterations=args.pso_iterations,
                     demo=args.demo)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    config = config_from_args(args)
    if not config.demo and not config.scenario_path:
        parser.error("--scenario is required unless --demo is given")
    commands = {"optimize-sp1": cmd_optimize_sp1,
                "optimize-pops": cmd_optimize_pops,
                "simulate": cmd_simulate}
    try:
        return commands[config.command](config)
    except InvalidScenario as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INFEASIBLE as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
