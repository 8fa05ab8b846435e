"""Swarm placement of positioning observation points (POPs).

The reference UAV observes each sensor from the trajectory point nearest
to it. Auxiliary receivers are placed around those points, encoded per
particle as (distance, angle) offsets bounded by the communication range.
Fitness is the reciprocal of a penalized cost: the average worst-case
positioning bound over each sensor's uncertainty disk plus large
penalties when the implied auxiliary trajectories would be kinematically
or energetically infeasible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import spline, tdoa
from .energy import propulsion_power
from .errors import NoFeasibleParticle
from .model import Scenario, Trajectory

log = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class PsoParams:
    """Swarm settings; population >= 2 and iterations >= 1 for a real search
    (degenerate values are allowed for smoke runs)."""

    population: int = 50
    iterations: int = 200
    inertia_max: float = 0.9
    inertia_min: float = 0.4
    cognitive: float = 2.0      # pull toward a particle's own best
    social: float = 2.0         # pull toward the swarm best
    penalty_crlb: float = 1.0
    penalty_energy: float = 1e6
    penalty_speed: float = 1e6
    uncertainty_samples: int = 17


@dataclass(eq=False)
class SensorPops:
    sensor_index: int
    main_slot: int          # trajectory slot of the reference UAV's POP
    positioning_slot: int   # interior slot where all receivers convene
    main_point: np.ndarray
    aux_points: np.ndarray  # (N-1, 2)
    worst_crlb: float       # max over the sensor's uncertainty samples, m^2


@dataclass(eq=False)
class PopSet:
    entries: list
    avg_worst_crlb: float   # m^2; the quantity the swarm minimizes
    avg_worst_error: float  # m; mean per-sensor sqrt of the above
    fitness: float
    feasible: bool


def select_main_pops(trajectory: Trajectory, sensors):
    """Per sensor, the trajectory waypoint nearest its rough center.

    Ties break toward the earliest slot. Returns [(slot, point), ...].
    """
    out = []
    for sensor in sensors:
        dists = np.linalg.norm(trajectory.waypoints - sensor.rough_center, axis=1)
        slot = int(np.argmin(dists))
        out.append((slot, trajectory.waypoints[slot].copy()))
    return out


def sample_uncertainty_points(sensor, count: int = 17, seed: int = 0) -> np.ndarray:
    """Deterministic cover of the uncertainty disk.

    Always includes the center and (when count > 1) up to eight boundary
    points at 45-degree spacing; further points follow a golden-angle
    spiral whose phase is derived from the seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    center = np.asarray(sensor.rough_center, dtype=float)
    radius = float(sensor.uncertainty_radius)
    if radius == 0.0:
        return np.tile(center, (count, 1))
    pts = [center]
    n_boundary = min(count - 1, 8)
    for i in range(n_boundary):
        ang = 2.0 * math.pi * i / 8.0
        pts.append(center + radius * np.array([math.cos(ang), math.sin(ang)]))
    n_interior = count - len(pts)
    phase = (seed * GOLDEN_ANGLE) % (2.0 * math.pi)
    for i in range(1, n_interior + 1):
        r = radius * math.sqrt(i / (n_interior + 1.0))
        ang = phase + i * GOLDEN_ANGLE
        pts.append(center + r * np.array([math.cos(ang), math.sin(ang)]))
    return np.array(pts)


def inertia(iteration: int, params: PsoParams) -> float:
    """Linearly decreasing inertia weight over the iteration budget."""
    if params.iterations <= 0:
        return params.inertia_max
    frac = iteration / params.iterations
    return params.inertia_max - (params.inertia_max - params.inertia_min) * frac


def _assign_positioning_slots(desired, slot_count):
    """Strictly increasing interior slots (1..W-1) honoring slot order.

    Duplicate or boundary POP slots are shifted deterministically; raises
    if there are more sensors than interior slots.
    """
    order = sorted(range(len(desired)), key=lambda i: (desired[i], i))
    if len(desired) > slot_count - 1:
        raise NoFeasibleParticle(
            f"{len(desired)} sensors cannot each get a distinct interior "
            f"slot out of {slot_count - 1}")
    assigned = [0] * len(desired)
    prev = 0
    for rank, i in enumerate(order):
        slot = max(min(desired[i], slot_count - 1), 1, prev + 1)
        remaining = len(order) - rank - 1
        slot = min(slot, slot_count - 1 - remaining)
        if slot <= prev:
            slot = prev + 1
        assigned[i] = slot
        prev = slot
    return assigned


class PopsContext:
    """Shared, particle-independent data for fitness evaluation."""

    def __init__(self, trajectory: Trajectory, scenario: Scenario,
                 params: PsoParams, seed: int = 0):
        self.scenario = scenario
        self.params = params
        self.trajectory = trajectory
        fleet = scenario.fleet
        self.n_aux = fleet.uav_count - 1
        self.n_sensors = scenario.sensor_count
        pops = select_main_pops(trajectory, scenario.sensors)
        self.main_slots = [slot for slot, _ in pops]
        self.slots = _assign_positioning_slots(self.main_slots,
                                               trajectory.slot_count)
        if self.slots != self.main_slots:
            log.info("positioning slots adjusted from %s to %s to stay "
                     "interior and distinct", self.main_slots, self.slots)
        self.main_points = trajectory.waypoints[self.slots]     # (M, 2)
        self.samples = np.stack([
            sample_uncertainty_points(s, params.uncertainty_samples, seed)
            for s in scenario.sensors])                        # (M, S, 2)
        knot_slots = [0, *self.slots, trajectory.slot_count]
        self.knot_slots = knot_slots
        self.interp = spline.interpolation_matrix(knot_slots,
                                                  trajectory.slot_count)
        self.slot_gaps = np.diff(knot_slots).astype(float)      # (M+1,)
        self.endpoints = (fleet.start, fleet.end)

    def decode(self, positions: np.ndarray) -> np.ndarray:
        """(P, M, A, 2) offsets -> absolute auxiliary points (P, M, A, 2)."""
        d = positions[..., 0]
        theta = positions[..., 1]
        offsets = np.stack([d * np.cos(theta), d * np.sin(theta)], axis=-1)
        return self.main_points[None, :, None, :] + offsets

    def worst_bounds(self, aux: np.ndarray) -> np.ndarray:
        """(P, M) worst positioning bound over each sensor's disk samples."""
        scenario = self.scenario
        n_p = aux.shape[0]
        uavs = np.concatenate(
            [np.broadcast_to(self.main_points[None, :, None, :],
                             (n_p, self.n_sensors, 1, 2)), aux], axis=2)
        heights = np.array([s.height for s in scenario.sensors])
        if np.all(heights == 0.0):
            bounds = tdoa.crlb_trace_many(uavs[:, :, None, :, :],
                                          scenario.fleet.altitude,
                                          self.samples, 0.0, scenario.noise)
        else:
            bounds = np.stack([
                tdoa.crlb_trace_many(uavs[:, m, None, :, :],
                                     scenario.fleet.altitude,
                                     self.samples[m], heights[m],
                                     scenario.noise)
                for m in range(self.n_sensors)], axis=1)
        return bounds.max(axis=-1)

    def evaluate(self, positions: np.ndarray):
        """Batched fitness. positions has shape (P, M, A, 2).

        Returns (fitness, avg_worst_crlb, feasible) arrays of length P.
        """
        scenario = self.scenario
        params = self.params
        fleet = scenario.fleet
        aux = self.decode(positions)                            # (P, M, A, 2)
        n_p = aux.shape[0]
        worst = self.worst_bounds(aux)                          # (P, M)
        avg_crlb = worst.mean(axis=-1)                          # (P,)

        # feasibility of the implied auxiliary trajectories
        start, end = self.endpoints
        knots = np.concatenate([
            np.broadcast_to(start, (n_p, self.n_aux, 1, 2)),
            np.swapaxes(aux, 1, 2),                             # (P, A, M, 2)
            np.broadcast_to(end, (n_p, self.n_aux, 1, 2))], axis=2)
        hops = np.linalg.norm(np.diff(knots, axis=2), axis=-1)  # (P, A, M+1)
        reach = self.slot_gaps * scenario.grid.slot_length * fleet.v_max
        speed_bad = np.any(hops > reach + 1e-9, axis=(1, 2))
        sampled = np.einsum("wk,pakd->pawd", self.interp, knots)
        seg = np.diff(sampled, axis=2)
        speeds = np.linalg.norm(seg, axis=-1) / scenario.grid.slot_length
        energy = scenario.grid.slot_length * np.sum(
            propulsion_power(speeds, scenario.energy), axis=-1)  # (P, A)
        energy_bad = np.any(energy > fleet.e_max, axis=1)

        cost = (params.penalty_crlb * avg_crlb
                + params.penalty_energy * energy_bad.astype(float)
                + params.penalty_speed * speed_bad.astype(float))
        feasible = ~(speed_bad | energy_bad)
        return 1.0 / cost, avg_crlb, feasible


def fitness(particle_position, context: PopsContext) -> float:
    """Fitness of a single particle position of shape (M, N-1, 2)."""
    pos = np.asarray(particle_position, dtype=float)[None, ...]
    value, _, _ = context.evaluate(pos)
    return float(value[0])


@dataclass(eq=False)
class Swarm:
    positions: np.ndarray    # (P, M, A, 2): (distance, angle) per sensor/aux
    velocities: np.ndarray
    pbest_positions: np.ndarray
    pbest_fitness: np.ndarray


def step_swarm(swarm: Swarm, gbest_position: np.ndarray, iteration: int,
               params: PsoParams, r_max: float, master_seed: int) -> None:
    """One velocity/position update, in place.

    Random factors are drawn per dimension from per-particle streams keyed
    by (seed, iteration, particle), so results do not depend on how the
    update is parallelized. Distances clamp to [0, r_max]; angles wrap.
    """
    omega = inertia(iteration, params)
    n_p = swarm.positions.shape[0]
    shape = swarm.positions.shape[1:]
    for i in range(n_p):
        rng = np.random.default_rng((master_seed, iteration, i))
        r1 = rng.random(shape)
        r2 = rng.random(shape)
        swarm.velocities[i] = (omega * swarm.velocities[i]
                               + params.cognitive * r1
                               * (swarm.pbest_positions[i] - swarm.positions[i])
                               + params.social * r2
                               * (gbest_position - swarm.positions[i]))
    limit = np.array([r_max, 2.0 * math.pi])
    np.clip(swarm.velocities, -limit, limit, out=swarm.velocities)
    swarm.positions += swarm.velocities
    np.clip(swarm.positions[..., 0], 0.0, r_max, out=swarm.positions[..., 0])
    swarm.positions[..., 1] %= 2.0 * math.pi


def _init_swarm(n_particles, n_sensors, n_aux, r_max, master_seed) -> Swarm:
    positions = np.empty((n_particles, n_sensors, n_aux, 2))
    velocities = np.empty_like(positions)
    limit = np.array([r_max, 2.0 * math.pi])
    for i in range(n_particles):
        rng = np.random.default_rng((master_seed, 0, i))
        u = rng.random((n_sensors, n_aux, 2))
        positions[i] = u * limit
        v = rng.random((n_sensors, n_aux, 2))
        velocities[i] = (2.0 * v - 1.0) * limit
    return Swarm(positions=positions, velocities=velocities,
                 pbest_positions=positions.copy(),
                 pbest_fitness=np.full(n_particles, -np.inf))


def run_pso(trajectory: Trajectory, scenario: Scenario,
            params: PsoParams | None = None, seed: int = 0):
    """Optimize auxiliary POPs around the reference UAV's POPs.

    Returns (PopSet, history) where history rows are
    (iteration, best_fitness, avg_crlb_m2) for the best particle so far.
    The swarm best is monotone by construction. Raises NoFeasibleParticle
    if no particle ever satisfied the speed and energy penalties.
    """
    params = params or PsoParams()
    context = PopsContext(trajectory, scenario, params, seed)
    fleet = scenario.fleet
    swarm = _init_swarm(params.population, context.n_sensors, context.n_aux,
                        fleet.r_max, seed)
    fit, avg_crlb, feasible = context.evaluate(swarm.positions)
    swarm.pbest_fitness = fit.copy()
    best = int(np.argmax(fit))
    gbest_position = swarm.positions[best].copy()
    gbest_fitness = float(fit[best])
    gbest_crlb = float(avg_crlb[best])
    ever_feasible = bool(feasible.any())
    history = [(0, gbest_fitness, gbest_crlb)]

    for r in range(params.iterations):
        step_swarm(swarm, gbest_position, r, params, fleet.r_max, seed)
        fit, avg_crlb, feasible = context.evaluate(swarm.positions)
        improved = fit > swarm.pbest_fitness
        swarm.pbest_fitness[improved] = fit[improved]
        swarm.pbest_positions[improved] = swarm.positions[improved]
        ever_feasible = ever_feasible or bool(feasible.any())
        best = int(np.argmax(swarm.pbest_fitness))
        if swarm.pbest_fitness[best] > gbest_fitness:
            gbest_fitness = float(swarm.pbest_fitness[best])
            gbest_position = swarm.pbest_positions[best].copy()
        history.append((r + 1, gbest_fitness, _crlb_of(context, gbest_position)))

    gbest_crlb = _crlb_of(context, gbest_position)
    _, _, gbest_feasible = context.evaluate(gbest_position[None, ...])
    pops = _decode_popset(context, gbest_position, gbest_fitness,
                          bool(gbest_feasible[0]))
    if not ever_feasible:
        raise NoFeasibleParticle("no particle satisfied the speed/energy "
                                 "penalties in any iteration", best=pops)
    return pops, history


def _crlb_of(context: PopsContext, position: np.ndarray) -> float:
    _, avg_crlb, _ = context.evaluate(position[None, ...])
    return float(avg_crlb[0])


def _decode_popset(context: PopsContext, position: np.ndarray,
                   fitness_value: float, feasible: bool) -> PopSet:
    aux_batch = context.decode(position[None, ...])
    aux = aux_batch[0]                                 # (M, A, 2)
    worst = context.worst_bounds(aux_batch)[0]         # (M,)
    entries = [SensorPops(sensor_index=m,
                          main_slot=context.main_slots[m],
                          positioning_slot=context.slots[m],
                          main_point=context.main_points[m].copy(),
                          aux_points=aux[m].copy(),
                          worst_crlb=float(worst[m]))
               for m in range(context.n_sensors)]
    return PopSet(entries=entries,
                  avg_worst_crlb=float(worst.mean()),
                  avg_worst_error=float(np.sqrt(worst).mean()),
                  fitness=fitness_value,
                  feasible=feasible)
