"""Joint multi-UAV data-collection and sensor-positioning planner."""

from . import bcd, channel, energy, model, pso, sca, schedule_lp, spline, tdoa
from .errors import (DegenerateGeometry, DuplicateKnotSlot, Infeasible,
                     InitializationInfeasible, InvalidScenario, NoConvergence,
                     NoFeasibleParticle, PlannerError, SingularGeometry,
                     SubproblemInfeasible, Unrepairable)
from .model import (FleetSpec, Scenario, Schedule, SensorSpec, TimeGrid,
                    Trajectory, load_scenario, straight_line_trajectory,
                    validate_scenario)

__version__ = "0.1.0"

__all__ = [
    "bcd", "channel", "energy", "model", "pso", "sca", "schedule_lp",
    "spline", "tdoa",
    "FleetSpec", "Scenario", "Schedule", "SensorSpec", "TimeGrid",
    "Trajectory", "load_scenario", "straight_line_trajectory",
    "validate_scenario",
    "PlannerError", "InvalidScenario", "Infeasible", "DegenerateGeometry",
    "SingularGeometry", "NoConvergence", "SubproblemInfeasible",
    "InitializationInfeasible", "NoFeasibleParticle", "DuplicateKnotSlot",
    "Unrepairable",
]
