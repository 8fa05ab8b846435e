import json
import math

import numpy as np
import pytest

from uavplan.errors import Infeasible, InvalidScenario
from uavplan.model import (FleetSpec, Schedule, Scenario, TimeGrid, Trajectory,
                           scenario_from_dict, straight_line_trajectory,
                           validate_scenario, with_overrides)

from conftest import SCENARIO_DIR, make_scenario, make_sensor


def test_reference_scenario_is_valid(table1_scenario):
    scenario = table1_scenario
    assert scenario.sensor_count == 5
    assert scenario.grid.slot_count == 100
    assert scenario.fleet.v_max == 30.0
    assert scenario.channel.c0 == pytest.approx(1e7, rel=1e-12)
    # re-validation returns the same object (idempotent)
    assert validate_scenario(scenario) is scenario


def test_inconsistent_grid_rejected():
    grid = TimeGrid(period=100.0, slot_count=100, slot_length=0.5)
    assert any("period" in v for v in grid.violations())
    good = make_scenario([make_sensor([10.0, 0.0])])
    from dataclasses import replace
    with pytest.raises(InvalidScenario) as err:
        validate_scenario(replace(good, grid=grid))
    assert any("period" in v for v in err.value.violations)


def test_two_uavs_rejected():
    with pytest.raises(InvalidScenario) as err:
        make_scenario([make_sensor([10.0, 0.0])], uav_count=2)
    assert any("uav_count" in v for v in err.value.violations)


def test_all_violations_reported_together():
    fleet = FleetSpec(uav_count=2, altitude=100.0, start=[0, 0], end=[100, 0],
                      v_max=30.0, r_max=50.0, e_max=1e5)
    bad = Scenario(sensors=(make_sensor([5.0, 0.0], radius=-1.0),),
                   fleet=fleet,
                   grid=TimeGrid(period=10.0, slot_count=20, slot_length=1.0),
                   channel=make_scenario([make_sensor([1, 0])]).channel,
                   energy=make_scenario([make_sensor([1, 0])]).energy,
                   noise=make_scenario([make_sensor([1, 0])]).noise,
                   area_side=1000.0, data_requirement=-5.0)
    with pytest.raises(InvalidScenario) as err:
        validate_scenario(bad)
    text = " ".join(err.value.violations)
    for fragment in ("uncertainty_radius", "uav_count", "period",
                     "data_requirement"):
        assert fragment in text


def test_true_position_outside_disk_rejected():
    with pytest.raises(InvalidScenario):
        make_scenario([make_sensor([20.0, 0.0], rough_center=[0.0, 0.0],
                                   radius=5.0)])


def test_straight_line_uniform_spacing():
    fleet = FleetSpec(uav_count=3, altitude=100.0, start=[0.0, 0.0],
                      end=[1000.0, 0.0], v_max=30.0, r_max=50.0, e_max=7e5)
    grid = TimeGrid(period=100.0, slot_count=100, slot_length=1.0)
    traj = straight_line_trajectory(fleet, grid)
    for w in (0, 1, 37, 100):
        assert np.allclose(traj.waypoints[w], [10.0 * w, 0.0], atol=1e-9)
    assert np.allclose(traj.speeds, 10.0, atol=1e-9)


def test_straight_line_degenerate():
    fleet = FleetSpec(uav_count=3, altitude=100.0, start=[0.0, 0.0],
                      end=[0.0, 0.0], v_max=30.0, r_max=50.0, e_max=7e5)
    grid = TimeGrid(period=10.0, slot_count=10, slot_length=1.0)
    traj = straight_line_trajectory(fleet, grid)
    assert np.all(traj.waypoints == 0.0)
    assert np.all(traj.speeds == 0.0)


def test_straight_line_out_of_reach():
    fleet = FleetSpec(uav_count=3, altitude=100.0, start=[0.0, 0.0],
                      end=[4000.0, 0.0], v_max=30.0, r_max=50.0, e_max=7e5)
    grid = TimeGrid(period=100.0, slot_count=100, slot_length=1.0)
    with pytest.raises(Infeasible):
        straight_line_trajectory(fleet, grid)


def test_trajectory_speed_violation_detected():
    fleet = FleetSpec(uav_count=3, altitude=100.0, start=[0.0, 0.0],
                      end=[40.0, 0.0], v_max=30.0, r_max=50.0, e_max=7e5)
    grid = TimeGrid(period=2.0, slot_count=2, slot_length=1.0)
    traj = Trajectory(waypoints=[[0, 0], [35, 0], [40, 0]], slot_length=1.0)
    problems = traj.violations(fleet, grid)
    assert len(problems) == 1 and "slot 1" in problems[0]
    ok = Trajectory(waypoints=[[0, 0], [20, 0], [40, 0]], slot_length=1.0)
    assert ok.violations(fleet, grid) == []


def test_schedule_validation():
    Schedule(fractions=np.full((4, 2), 0.5))  # row sums exactly 1
    with pytest.raises(ValueError):
        Schedule(fractions=np.full((4, 2), 0.6))
    with pytest.raises(ValueError):
        Schedule(fractions=np.array([[1.2, 0.0]]))
    with pytest.raises(ValueError):
        Schedule(fractions=np.array([[-0.1, 0.5]]))


def test_scenario_json_db_conversion(table1_scenario):
    assert table1_scenario.channel.beta0 == pytest.approx(1e-6, rel=1e-12)
    assert table1_scenario.channel.noise_power == pytest.approx(1e-14, rel=1e-12)


def test_with_overrides_period_rescales_slots(table1_scenario):
    longer = with_overrides(table1_scenario, period=200.0)
    assert longer.grid.slot_count == 200
    assert longer.grid.slot_length == 1.0
    with pytest.raises(InvalidScenario):
        with_overrides(table1_scenario, period=100.5)


def test_sensor_outside_area_rejected():
    with pytest.raises(InvalidScenario) as err:
        make_scenario([make_sensor([10.0, 1500.0])], area=1000.0)
    assert any("area" in v for v in err.value.violations)
