import math

import numpy as np
import pytest

from uavplan import channel
from uavplan.channel import ChannelParams, path_loss, rate, uploaded_data, \
    worst_case_rate
from uavplan.errors import DegenerateGeometry
from uavplan.model import Schedule, Trajectory

from conftest import TABLE1_CHANNEL, make_scenario, make_sensor


def reference_rate(horizontal, altitude, height, p, bandwidth_share=1):
    """Rate recomputed directly from the formula text."""
    d2 = horizontal ** 2 + (altitude - height) ** 2
    snr = p.transmit_power * p.beta0 * d2 ** (-p.alpha / 2) / p.noise_power
    return p.bandwidth / bandwidth_share * math.log2(1 + snr)


def test_path_loss_reference_distance():
    p = ChannelParams(beta0=3.5e-5, alpha=2.0, bandwidth=1e6,
                      noise_power=1e-14, transmit_power=0.1)
    sensor = make_sensor([7.0, -3.0], height=99.0)
    assert path_loss([7.0, -3.0], sensor, 100.0, p) == pytest.approx(
        3.5e-5, rel=1e-12)


def test_path_loss_direct_evaluation():
    sensor = make_sensor([50.0, 20.0])
    got = path_loss([50.0, 20.0], sensor, 100.0, TABLE1_CHANNEL)
    assert got == pytest.approx(1e-6 / 1e4, rel=1e-12)


def test_path_loss_inverse_square():
    sensor = make_sensor([0.0, 0.0])
    near = path_loss([0.0, 0.0], sensor, 100.0, TABLE1_CHANNEL)
    far = path_loss([0.0, 0.0], sensor, 200.0, TABLE1_CHANNEL)
    assert near / far == pytest.approx(4.0, rel=1e-12)


def test_path_loss_degenerate_geometry():
    sensor = make_sensor([1.0, 1.0], height=0.0)
    with pytest.raises(DegenerateGeometry):
        path_loss([1.0, 1.0], sensor, 0.0, TABLE1_CHANNEL)


def test_rate_directly_below():
    sensor = make_sensor([0.0, 0.0])
    got = rate([0.0, 0.0], sensor, 1, TABLE1_CHANNEL, 100.0)
    # transmit SNR at 1 m is 1e7, so the SINR 100 m below is 1e3
    assert TABLE1_CHANNEL.c0 == pytest.approx(1e7, rel=1e-12)
    assert got == pytest.approx(1e6 * math.log2(1 + 1e3), rel=1e-12)


def test_rate_zero_signal():
    p = ChannelParams(beta0=1e-6, alpha=2.0, bandwidth=1e6,
                      noise_power=1e-14, transmit_power=0.0)
    sensor = make_sensor([0.0, 0.0])
    assert rate([0.0, 0.0], sensor, 1, p, 100.0) == 0.0


def test_rate_decreases_with_distance():
    sensor = make_sensor([0.0, 0.0])
    rates = [rate([d, 0.0], sensor, 1, TABLE1_CHANNEL, 100.0)
             for d in (10.0, 100.0, 400.0)]
    assert rates[0] > rates[1] > rates[2]


def test_rate_matches_reference_on_random_geometries():
    rng = np.random.default_rng(3)
    for _ in range(100):
        pos = rng.uniform(-500, 500, size=2)
        spot = rng.uniform(-500, 500, size=2)
        h = rng.uniform(0.0, 5.0)
        sensor = make_sensor(spot, height=h)
        expected = reference_rate(float(np.linalg.norm(pos - spot)), 100.0, h,
                                  TABLE1_CHANNEL)
        assert rate(pos, sensor, 1, TABLE1_CHANNEL, 100.0) == pytest.approx(
            expected, rel=1e-12)


def test_worst_case_rate_degenerate_disk():
    sensor = make_sensor([30.0, 40.0], radius=0.0)
    assert worst_case_rate([0.0, 0.0], sensor, TABLE1_CHANNEL, 100.0) == \
        pytest.approx(rate([0.0, 0.0], sensor, 1, TABLE1_CHANNEL, 100.0),
                      rel=1e-12)


def test_worst_case_rate_at_disk_center():
    sensor = make_sensor([30.0, 40.0], rough_center=[30.0, 40.0], radius=10.0)
    got = worst_case_rate([30.0, 40.0], sensor, TABLE1_CHANNEL, 100.0)
    assert got == pytest.approx(
        reference_rate(10.0, 100.0, 0.0, TABLE1_CHANNEL), rel=1e-12)


def test_worst_case_rate_lower_bounds_disk():
    rng = np.random.default_rng(11)
    sensor = make_sensor([120.0, -40.0], rough_center=[118.0, -35.0], radius=9.0)
    u1 = np.array([60.0, 10.0])
    worst = worst_case_rate(u1, sensor, TABLE1_CHANNEL, 100.0)
    lowest_seen = np.inf
    for _ in range(1000):
        r = 9.0 * math.sqrt(rng.random())
        ang = rng.uniform(0, 2 * math.pi)
        true = np.array([118.0 + r * math.cos(ang), -35.0 + r * math.sin(ang)])
        value = reference_rate(float(np.linalg.norm(u1 - true)), 100.0, 0.0,
                               TABLE1_CHANNEL)
        lowest_seen = min(lowest_seen, value)
        assert worst <= value + 1e-9
    # the bound is attained on the far boundary of the disk
    direction = (np.array([118.0, -35.0]) - u1)
    far = np.array([118.0, -35.0]) + 9.0 * direction / np.linalg.norm(direction)
    at_far = reference_rate(float(np.linalg.norm(u1 - far)), 100.0, 0.0,
                            TABLE1_CHANNEL)
    assert worst == pytest.approx(at_far, rel=1e-12)
    assert lowest_seen >= worst


def _two_sensor_setup():
    sensors = [make_sensor([100.0, 50.0], radius=5.0, rough_center=[102.0, 48.0]),
               make_sensor([300.0, -40.0], radius=5.0, rough_center=[298.0, -38.0])]
    return make_scenario(sensors)


def test_uploaded_data_zero_schedule():
    scenario = _two_sensor_setup()
    traj = Trajectory(waypoints=np.linspace([0, 0], [400, 0], 21),
                      slot_length=1.0)
    sched = Schedule(fractions=np.zeros((20, 2)))
    assert np.all(uploaded_data(traj, sched, scenario) == 0.0)


def test_uploaded_data_single_slot_and_linearity():
    scenario = _two_sensor_setup()
    traj = Trajectory(waypoints=np.linspace([0, 0], [400, 0], 21),
                      slot_length=1.0)
    x = np.zeros((20, 2))
    x[4, 0] = 1.0
    full = uploaded_data(traj, Schedule(fractions=x), scenario)
    expected = worst_case_rate(traj.waypoints[5], scenario.sensors[0],
                               scenario.channel, 100.0)
    assert full[0] == pytest.approx(expected, rel=1e-12)
    assert full[1] == 0.0
    half = uploaded_data(traj, Schedule(fractions=0.5 * x), scenario)
    assert half[0] == pytest.approx(0.5 * full[0], rel=1e-12)


def test_uploaded_data_linear_in_schedule():
    scenario = _two_sensor_setup()
    traj = Trajectory(waypoints=np.linspace([0, 0], [400, 0], 21),
                      slot_length=1.0)
    rng = np.random.default_rng(5)
    a = rng.random((20, 2)) * 0.25
    b = rng.random((20, 2)) * 0.25
    ia = uploaded_data(traj, Schedule(fractions=a), scenario)
    ib = uploaded_data(traj, Schedule(fractions=b), scenario)
    iab = uploaded_data(traj, Schedule(fractions=a + b), scenario)
    assert np.allclose(iab, ia + ib, rtol=1e-12)
