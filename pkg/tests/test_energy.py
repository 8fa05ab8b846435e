import math

import numpy as np
import pytest

from uavplan.energy import (EnergyParams, induced_speed_factor,
                            propulsion_power, propulsion_power_slack,
                            trajectory_energy)
from uavplan.model import FleetSpec, TimeGrid, Trajectory


def reference_power(v, p):
    """Direct transcription of the three-component power model."""
    blade = p.blade_power * (1 + 3 * v ** 2 / p.tip_speed ** 2)
    parasite = 0.5 * p.air_density * p.rotor_solidity * p.drag_coefficient \
        * p.rotor_area * v ** 3
    induced = p.induced_power * math.sqrt(
        math.sqrt(1 + v ** 4 / (4 * p.induced_speed ** 4))
        - v ** 2 / (2 * p.induced_speed ** 2))
    return blade + parasite + induced


def test_hover_power_is_blade_plus_induced():
    p = EnergyParams(blade_power=12.5, induced_power=7.25)
    assert propulsion_power(0.0, p) == 12.5 + 7.25


def test_default_hover_power_value():
    p = EnergyParams()
    assert propulsion_power(0.0, p) == pytest.approx(168.49, abs=1e-12)


def test_matches_reference_formula_across_speeds():
    p = EnergyParams()
    for v in np.linspace(0.0, 60.0, 121):
        assert propulsion_power(float(v), p) == pytest.approx(
            reference_power(float(v), p), rel=1e-12)


def test_high_speed_ratio_against_reference():
    p = EnergyParams()
    expected = reference_power(30.0, p) / reference_power(20.0, p)
    got = propulsion_power(30.0, p) / propulsion_power(20.0, p)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got > 1.0  # cubic drag dominates at speed


def test_power_curve_has_single_interior_minimum():
    p = EnergyParams()
    v = np.linspace(0.0, 60.0, 241)
    power = propulsion_power(v, p)
    diffs = np.sign(np.diff(power))
    changes = np.flatnonzero(np.diff(diffs) != 0)
    assert len(changes) == 1
    v_min = v[int(np.argmin(power))]
    assert 0.0 < v_min < 60.0
    assert power[0] > power.min()


def test_slack_substitution_identity():
    p = EnergyParams()
    v = np.linspace(0.0, 60.0, 301)
    exact = induced_speed_factor(v, p)
    substituted = propulsion_power_slack(v, exact, p)
    direct = propulsion_power(v, p)
    assert np.max(np.abs(substituted - direct) / direct) < 1e-12


def test_slack_defining_identity():
    p = EnergyParams()
    v = np.linspace(0.0, 60.0, 301)
    s = induced_speed_factor(v, p)
    lhs = 1.0 / s ** 2
    rhs = s ** 2 + v ** 2 / p.induced_speed ** 2
    assert np.max(np.abs(lhs - rhs) / rhs) < 1e-9


def test_slack_surrogate_edges():
    p = EnergyParams()
    assert propulsion_power_slack(0.0, 0.0, p) == p.blade_power
    exact = float(induced_speed_factor(12.0, p))
    assert propulsion_power_slack(12.0, exact + 0.3, p) \
        > propulsion_power_slack(12.0, exact, p)


def _grid(slots, tau=1.0):
    return TimeGrid(period=slots * tau, slot_count=slots, slot_length=tau)


def test_hover_trajectory_energy():
    p = EnergyParams()
    pts = np.zeros((101, 2))
    traj = Trajectory(waypoints=pts, slot_length=1.0)
    assert trajectory_energy(traj, _grid(100), p) == pytest.approx(16849.0, rel=1e-12)


def test_zero_length_segments_cost_hover_power():
    p = EnergyParams()
    pts = np.array([[0.0, 0.0], [5.0, 0.0], [5.0, 0.0]])
    traj = Trajectory(waypoints=pts, slot_length=1.0)
    expected = float(propulsion_power(5.0, p) + propulsion_power(0.0, p))
    assert trajectory_energy(traj, _grid(2), p) == pytest.approx(expected, rel=1e-12)


def test_energy_invariant_under_reversal():
    p = EnergyParams()
    rng = np.random.default_rng(7)
    pts = np.cumsum(rng.normal(scale=5.0, size=(21, 2)), axis=0)
    fwd = Trajectory(waypoints=pts, slot_length=1.0)
    bwd = Trajectory(waypoints=pts[::-1], slot_length=1.0)
    grid = _grid(20)
    assert trajectory_energy(fwd, grid, p) == pytest.approx(
        trajectory_energy(bwd, grid, p), rel=1e-12)
