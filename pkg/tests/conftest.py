import json
from pathlib import Path

import numpy as np
import pytest

from uavplan import bcd
from uavplan.channel import ChannelParams
from uavplan.energy import EnergyParams
from uavplan.model import (FleetSpec, Scenario, SensorSpec, TimeGrid,
                           load_scenario, validate_scenario)
from uavplan.tdoa import NoiseModel

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"

TABLE1_CHANNEL = ChannelParams(beta0=1e-6, alpha=2.0, bandwidth=1e6,
                               noise_power=1e-14, transmit_power=0.1)


def make_sensor(true_position, rough_center=None, radius=0.0, height=0.0):
    rough = true_position if rough_center is None else rough_center
    return SensorSpec(true_position=true_position, height=height,
                      rough_center=rough, uncertainty_radius=radius)


def make_scenario(sensors, *, start=(0.0, 0.0), end=(400.0, 0.0), slots=20,
                  tau=1.0, v_max=30.0, r_max=50.0, e_max=1e5, altitude=100.0,
                  i_min=5e6, area=2000.0, delta=1.0, uav_count=3):
    return validate_scenario(Scenario(
        sensors=tuple(sensors),
        fleet=FleetSpec(uav_count=uav_count, altitude=altitude, start=start,
                        end=end, v_max=v_max, r_max=r_max, e_max=e_max),
        grid=TimeGrid(period=slots * tau, slot_count=slots, slot_length=tau),
        channel=TABLE1_CHANNEL,
        energy=EnergyParams(),
        noise=NoiseModel(delta=delta),
        area_side=area,
        data_requirement=i_min,
    ))


@pytest.fixture(scope="session")
def table1_scenario():
    return load_scenario(SCENARIO_DIR / "table1.json")


@pytest.fixture(scope="session")
def table1_bcd(table1_scenario):
    """Full-budget alternating optimization on the reference scenario.

    Session-scoped: several tests inspect the same run.
    """
    return bcd.run_bcd(table1_scenario, l_max=30, seed=0, early_stop=False)
