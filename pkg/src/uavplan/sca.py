"""Convex trajectory subproblem built from tangent surrogate bounds.

For a fixed transmission schedule, the reference UAV's waypoints are
re-optimized by replacing the two non-convexities with first-order tangent
under-estimators taken at an expansion trajectory:

* the worst-case rate, linearized in the squared worst-case horizontal
  distance (coefficients A1, A2 evaluated at the expansion point), and
* the induced-power slack identity 1/s^2 = s^2 + v^2/v0^2, linearized in
  the slack and the speed.

Both bounds touch the true functions at the expansion point and never
exceed them, so each solve can only improve the true objective. The
resulting convex program is solved by an in-repo logarithmic-barrier
method with damped Newton steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .energy import (induced_speed_factor, propulsion_power_slack,
                     trajectory_energy)
from .errors import SubproblemInfeasible
from .model import Trajectory, straight_line_trajectory

log = logging.getLogger(__name__)

_CUBE_SMOOTH = 1e-6    # norm smoothing for the cubic drag term, meters
_DIST_SMOOTH = 1e-9    # norm smoothing for sensor distances, meters

_alpha_checked: set[float] = set()


@dataclass(frozen=True, eq=False)
class ScaExpansion:
    """Expansion-point data for one convex approximation step.

    rate_at_base[w-1, m] is the worst-case rate at waypoint w (B * A1);
    a2[w-1, m] is the magnitude of the rate's derivative in the squared
    worst-case horizontal distance, and worst_h_base the value of that
    squared distance at the expansion point. base_slack holds the exact
    induced-power factor of each slot's expansion speed.
    """

    base_waypoints: np.ndarray     # (W+1, 2)
    base_slack: np.ndarray         # (W,)
    rate_at_base: np.ndarray       # (W, M), bits/s
    a1: np.ndarray                 # (W, M), rate / bandwidth
    a2: np.ndarray                 # (W, M), >= 0
    worst_h_base: np.ndarray       # (W, M), (||u_w - c_m|| + r_m)^2
    centers: np.ndarray            # (M, 2) rough sensor centers
    radii: np.ndarray              # (M,) uncertainty radii
    slot_length: float
    induced_speed: float

    @property
    def base_displacements(self) -> np.ndarray:
        return np.diff(self.base_waypoints, axis=0)

    @property
    def base_speeds(self) -> np.ndarray:
        return np.linalg.norm(self.base_displacements, axis=1) / self.slot_length


def _worst_sq_horizontal(points, centers, radii) -> np.ndarray:
    """(||u - c_m|| + r_m)^2 for points (..., 2) against all sensors."""
    pts = np.asarray(points, dtype=float)
    d = np.linalg.norm(pts[..., None, :] - centers, axis=-1)
    return (d + radii) ** 2


def _check_rate_bound_shape(params, altitude, sensor_height):
    """Spot-check that the rate is convex in the squared distance.

    This holds analytically for path-loss exponent 2; for larger exponents
    it is verified numerically on a sample and a warning is emitted if the
    tangent bound would overshoot.
    """
    key = round(params.alpha, 12)
    if key in _alpha_checked or params.alpha <= 2.0:
        _alpha_checked.add(key)
        return
    _alpha_checked.add(key)
    h2 = (altitude - sensor_height) ** 2
    qs = np.geomspace(1.0, 1e6, 40) + h2
    rates = channel.rate_from_sq_distance(qs, params)
    curv = np.diff(rates, 2)
    if np.any(curv < -1e-9 * max(1.0, np.abs(rates).max())):
        log.warning("rate is not convex in squared distance for alpha=%.3g; "
                    "the tangent rate bound may overshoot", params.alpha)


def build_expansion(trajectory: Trajectory, scenario) -> ScaExpansion:
    """Evaluate the surrogate coefficients at an expansion trajectory.

    The worst-case sensor distance is refreshed here, so it always refers
    to the current expansion point.
    """
    params = scenario.channel
    altitude = scenario.fleet.altitude
    centers = np.array([s.rough_center for s in scenario.sensors], dtype=float)
    radii = np.array([s.uncertainty_radius for s in scenario.sensors], dtype=float)
    heights = np.array([s.height for s in scenario.sensors], dtype=float)
    _check_rate_bound_shape(params, altitude, float(heights.max(initial=0.0)))

    pts = trajectory.waypoints[1:]     # slot w lives at waypoint w
    worst_h = _worst_sq_horizontal(pts, centers, radii)          # (W, M)
    sq3d = worst_h + (altitude - heights) ** 2
    rate_at_base = channel.rate_from_sq_distance(sq3d, params)
    c0 = params.c0
    a2 = (params.alpha * c0 * math.log2(math.e) / 2.0) \
        / (sq3d * (sq3d ** (params.alpha / 2.0) + c0))
    slack = induced_speed_factor(trajectory.speeds, scenario.energy)
    return ScaExpansion(base_waypoints=trajectory.waypoints,
                        base_slack=slack,
                        rate_at_base=rate_at_base,
                        a1=rate_at_base / params.bandwidth,
                        a2=a2,
                        worst_h_base=worst_h,
                        centers=centers,
                        radii=radii,
                        slot_length=trajectory.slot_length,
                        induced_speed=scenario.energy.induced_speed)


def rate_lower_bound(u, expansion: ScaExpansion, slot: int, sensor: int,
                     bandwidth: float) -> float:
    """Tangent under-estimator of the worst-case rate at waypoint position u.

    Exactly equals the worst-case rate when u is the expansion waypoint.
    """
    w = slot - 1
    center = expansion.centers[sensor]
    radius = expansion.radii[sensor]
    h = (float(np.linalg.norm(np.asarray(u, dtype=float) - center)) + radius) ** 2
    return float(expansion.rate_at_base[w, sensor]
                 - bandwidth * expansion.a2[w, sensor]
                 * (h - expansion.worst_h_base[w, sensor]))


def slack_lower_bound(speed: float, slack: float, expansion: ScaExpansion,
                      slot: int) -> float:
    """Tangent under-estimator of slack^2 + speed^2 / v0^2 at the expansion."""
    w = slot - 1
    s_base = expansion.base_slack[w]
    v_base = expansion.base_speeds[w]
    v0sq = expansion.induced_speed ** 2
    return (-s_base ** 2 + 2.0 * s_base * slack
            - v_base ** 2 / v0sq + 2.0 / v0sq * v_base * speed)


@dataclass(eq=False)
class SubproblemResult:
    trajectory: Trajectory
    slacks: np.ndarray
    min_ratio: float
    kkt_residual: float
    surrogate_energy: float
    fell_back: bool
    iteration_log: list = field(default_factory=list)  # (iter, ratio, kkt, energy)


class _BarrierProblem:
    """Smooth barrier formulation of the linearized trajectory subproblem.

    Variables: interior waypoints (W-1 of them), per-slot slacks, and the
    min-ratio objective. All inequality constraints are concave >= 0.
    """

    def __init__(self, schedule, expansion: ScaExpansion, scenario,
                 trust_radius, use_trust):
        fleet = scenario.fleet
        grid = scenario.grid
        self.exp = expansion
        self.W = grid.slot_count
        self.tau = grid.slot_length
        self.vmax = fleet.v_max
        self.emax = fleet.e_max
        en = scenario.energy
        self.kb = en.blade_power
        self.ki = en.induced_power
        self.cp = en.parasite_coeff
        self.vt = en.tip_speed
        self.v0sq = en.induced_speed ** 2
        self.u0 = expansion.base_waypoints[0]
        self.uW = expansion.base_waypoints[-1]
        self.base_inner = expansion.base_waypoints[1:-1].copy()
        self.d_base = expansion.base_displacements
        self.s_base = expansion.base_slack
        self.trust = float(trust_radius) if use_trust else None

        x = schedule.fractions
        scale = self.tau / scenario.data_requirement
        # constant part of each sensor's ratio and the quadratic-term weights
        self.ratio_const = scale * np.einsum("wm,wm->m", x, expansion.rate_at_base)
        coef = scale * scenario.channel.bandwidth * x * expansion.a2
        self.M = x.shape[1]
        self.active = []   # per sensor: (slot indices 1..W-1, weights)
        for m in range(self.M):
            ws = np.flatnonzero(coef[:, m] > 0.0) + 1
            ws = ws[ws <= self.W - 1]       # the final waypoint is fixed
            self.active.append((ws, coef[ws - 1, m]))

        self.n_u = 2 * (self.W - 1)
        self.n = self.n_u + self.W + 1
        self.lam_idx = self.n - 1
        self.n_con = 1 + self.W + self.M + self.W

    # -- variable packing ---------------------------------------------------

    def pack(self, inner, slack, lam):
        return np.concatenate([np.asarray(inner, dtype=float).ravel(),
                               np.asarray(slack, dtype=float),
                               [float(lam)]])

    def unpack(self, z):
        inner = z[:self.n_u].reshape(self.W - 1, 2)
        slack = z[self.n_u:self.n_u + self.W]
        return inner, slack, z[self.lam_idx]

    def waypoints(self, inner):
        return np.vstack([self.u0, inner, self.uW])

    # -- constraint evaluation ----------------------------------------------

    def surrogate_energy(self, d, slack, smooth=True):
        sq = np.sum(d ** 2, axis=1)
        m3 = np.sqrt(sq + _CUBE_SMOOTH ** 2) if smooth else np.sqrt(sq)
        per = (self.kb * (1.0 + 3.0 * sq / (self.vt ** 2 * self.tau ** 2))
               + self.cp * m3 ** 3 / self.tau ** 3 + self.ki * slack)
        return self.tau * float(np.sum(per))

    def ratios(self, waypoints):
        out = self.ratio_const.copy()
        for m, (ws, coef) in enumerate(self.active):
            if len(ws) == 0:
                continue
            h = _worst_sq_horizontal(waypoints[ws], self.exp.centers[m:m + 1],
                                     self.exp.radii[m:m + 1])[:, 0]
            out[m] -= float(np.dot(coef, h - self.exp.worst_h_base[ws - 1, m]))
        return out

    def constraints(self, z):
        """All main constraint values g_i >= 0 (energy, cone, data, speed)."""
        inner, slack, lam = self.unpack(z)
        if np.any(slack <= 0.0):
            return np.full(self.n_con, -1.0)
        pts = self.waypoints(inner)
        d = np.diff(pts, axis=0)
        g = np.empty(self.n_con)
        g[0] = self.emax - self.surrogate_energy(d, slack)
        lin = (2.0 * self.s_base * slack - self.s_base ** 2
               - np.sum(self.d_base ** 2, axis=1) / (self.v0sq * self.tau ** 2)
               + 2.0 / (self.v0sq * self.tau ** 2)
               * np.einsum("wk,wk->w", self.d_base, d))
        g[1:1 + self.W] = lin - 1.0 / slack ** 2
        g[1 + self.W:1 + self.W + self.M] = self.ratios(pts) - lam
        g[1 + self.W + self.M:] = (self.tau * self.vmax) ** 2 - np.sum(d ** 2, axis=1)
        return g

    def trust_gaps(self, z):
        if self.trust is None:
            return np.empty(0)
        dev = z[:self.n_u] - self.base_inner.ravel()
        return np.concatenate([self.trust - dev, self.trust + dev])

    def strictly_feasible(self, z, rel=1e-9):
        g = self.constraints(z)
        scales = np.empty(self.n_con)
        scales[0] = max(self.emax, 1.0)
        scales[1:1 + self.W] = 1.0
        scales[1 + self.W:1 + self.W + self.M] = 1.0
        scales[1 + self.W + self.M:] = (self.tau * self.vmax) ** 2
        if np.any(g <= rel * scales):
            return False
        gt = self.trust_gaps(z)
        return not (gt.size and np.any(gt <= rel * self.trust))

    # -- barrier value / gradient / Hessian ----------------------------------

    def barrier(self, z, t):
        """Scaled barrier -lambda - (1/t) sum log g.

        Scaling by 1/t keeps the value O(objective) at every stage, so
        line-search comparisons stay resolvable in double precision.
        """
        g = self.constraints(z)
        if np.any(g <= 0.0):
            return np.inf
        gt = self.trust_gaps(z)
        if gt.size and np.any(gt <= 0.0):
            return np.inf
        val = -z[self.lam_idx] - float(np.sum(np.log(g))) / t
        if gt.size:
            val -= float(np.sum(np.log(gt))) / t
        return val

    def barrier_grad_hess(self, z, t):
        """Gradient and Hessian of the scaled barrier at z.

        The gradient's infinity norm is exactly the stationarity residual
        of the original problem with multipliers 1 / (t * g_i).
        """
        inner, slack, lam = self.unpack(z)
        pts = self.waypoints(inner)
        d = np.diff(pts, axis=0)
        g = self.constraints(z)
        grad = np.zeros(self.n)
        hess = np.zeros((self.n, self.n))
        jac = np.zeros((self.n_con, self.n))
        W, tau = self.W, self.tau

        def ucols(widx):
            # column slice of waypoint widx (only 1..W-1 are variables)
            return slice(2 * (widx - 1), 2 * (widx - 1) + 2)

        def add_d_grad(row, w, vec):
            if 1 <= w <= W - 1:
                jac[row, ucols(w)] += vec
            if 1 <= w - 1 <= W - 1:
                jac[row, ucols(w - 1)] -= vec

        def add_d_curv(w, block):
            # accumulate weight * block over the (u_{w-1}, u_w) pair
            lo, hi = w - 1, w
            if 1 <= hi <= W - 1:
                hess[ucols(hi), ucols(hi)] += block
            if 1 <= lo <= W - 1:
                hess[ucols(lo), ucols(lo)] += block
            if 1 <= lo <= W - 1 and 1 <= hi <= W - 1:
                hess[ucols(hi), ucols(lo)] -= block
                hess[ucols(lo), ucols(hi)] -= block

        # energy constraint (row 0): g = emax - E
        sq = np.sum(d ** 2, axis=1)
        m3 = np.sqrt(sq + _CUBE_SMOOTH ** 2)
        a_lin = 6.0 * self.kb / (self.vt ** 2 * tau ** 2) + 3.0 * self.cp * m3 / tau ** 3
        w_e = 1.0 / g[0]
        for w in range(1, W + 1):
            dvec = d[w - 1]
            add_d_grad(0, w, -tau * a_lin[w - 1] * dvec)
            block = w_e * tau * (a_lin[w - 1] * np.eye(2)
                                 + (3.0 * self.cp / tau ** 3)
                                 * np.outer(dvec, dvec) / m3[w - 1])
            add_d_curv(w, block)
        jac[0, self.n_u:self.n_u + W] = -tau * self.ki

        # cone rows 1..W: linear in u and slack, curvature only in slack
        coef_d = 2.0 / (self.v0sq * tau ** 2)
        for w in range(1, W + 1):
            add_d_grad(w, w, coef_d * self.d_base[w - 1])
        cone_rows = np.arange(1, 1 + W)
        s_cols = np.arange(self.n_u, self.n_u + W)
        jac[cone_rows, s_cols] = 2.0 * self.s_base + 2.0 / slack ** 3
        hess[s_cols, s_cols] += (1.0 / g[1:1 + W]) * (6.0 / slack ** 4)

        # data rows: gradient and curvature from the worst-case distance
        for m, (ws, coef) in enumerate(self.active):
            row = 1 + W + m
            jac[row, self.lam_idx] = -1.0
            w_m = 1.0 / g[row]
            for k, w in enumerate(ws):
                y = pts[w] - self.exp.centers[m]
                nrm = math.sqrt(float(y @ y) + _DIST_SMOOTH ** 2)
                r = self.exp.radii[m]
                grad_h = 2.0 * (1.0 + r / nrm) * y
                jac[row, ucols(w)] += -coef[k] * grad_h
                hess_h = (2.0 * (1.0 + r / nrm) * np.eye(2)
                          - 2.0 * r * np.outer(y, y) / nrm ** 3)
                hess[ucols(w), ucols(w)] += w_m * coef[k] * hess_h

        # speed rows: g = (tau vmax)^2 - ||d||^2
        for w in range(1, W + 1):
            row = W + self.M + w
            add_d_grad(row, w, -2.0 * d[w - 1])
            add_d_curv(w, (2.0 / g[row]) * np.eye(2))

        inv_g = 1.0 / g
        grad -= jac.T @ inv_g
        hess += (jac * inv_g[:, None] ** 2).T @ jac

        if self.trust is not None:
            dev = z[:self.n_u] - self.base_inner.ravel()
            gp = self.trust - dev
            gm = self.trust + dev
            grad[:self.n_u] += 1.0 / gp - 1.0 / gm
            idx = np.arange(self.n_u)
            hess[idx, idx] += 1.0 / gp ** 2 + 1.0 / gm ** 2
        grad /= t
        hess /= t
        grad[self.lam_idx] += -1.0
        return grad, hess, g


def _feasible_start(problem: _BarrierProblem, scenario):
    """Search for a strictly feasible interior point.

    The expansion point sits exactly on the linearized cone, so it is
    nudged: the slack is bumped, and if any constraint is tight the
    waypoints are pulled toward the straight start-end line (a convex
    combination can only relax the convex constraints).
    """
    straight = straight_line_trajectory(scenario.fleet, scenario.grid)
    straight_inner = straight.waypoints[1:-1]
    for theta in (0.0, 1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0):
        inner = (1 - theta) * problem.base_inner + theta * straight_inner
        pts = problem.waypoints(inner)
        speeds = np.linalg.norm(np.diff(pts, axis=0), axis=1) / problem.tau
        slack = induced_speed_factor(speeds, scenario.energy) * (1 + 1e-7) + 1e-9
        ratios = problem.ratios(pts)
        lam0 = float(ratios.min()) - max(1e-9, 1e-3 * max(1.0, abs(ratios.min())))
        z = problem.pack(inner, slack, lam0)
        if problem.strictly_feasible(z):
            return z
    return None


def _newton_minimize(problem: _BarrierProblem, z, t, grad_target,
                     max_iter=80):
    """Damped Newton descent on the barrier until the gradient is small.

    grad_target bounds the infinity norm of the barrier gradient, which
    controls the stationarity residual of the original problem (gradient
    over t). Stops early when the Newton decrement or the line search
    hits floating-point resolution.
    """
    value = problem.barrier(z, t)
    best_grad = np.inf
    stall = 0
    for _ in range(max_iter):
        grad, hess, _ = problem.barrier_grad_hess(z, t)
        gnorm = float(np.linalg.norm(grad, np.inf))
        if gnorm <= grad_target:
            return z, value
        if gnorm < 0.99 * best_grad:
            best_grad = min(best_grad, gnorm)
            stall = 0
        else:
            stall += 1
        ridge = 1e-12 * (1.0 + np.trace(hess) / problem.n)
        for _attempt in range(4):
            try:
                step = np.linalg.solve(hess + ridge * np.eye(problem.n), -grad)
                break
            except np.linalg.LinAlgError:
                ridge *= 1e3
        else:
            return z, value
        decrement = float(-grad @ step)
        if decrement <= 0:
            return z, value
        # once descent is below float resolution, only keep polishing while
        # the gradient norm still improves
        if stall >= 3 and decrement / 2.0 <= 1e-15 * (1.0 + abs(value)):
            return z, value
        alpha = 1.0
        for _bt in range(80):
            cand = z + alpha * step
            cand_val = problem.barrier(cand, t)
            if cand_val <= value - 0.25 * alpha * decrement:
                z, value = cand, cand_val
                break
            alpha *= 0.5
        else:
            return z, value
    return z, value


def solve_subproblem(schedule, expansion: ScaExpansion, scenario, *,
                     trust_radius: float = 50.0, use_trust: bool = True,
                     gap_tol: float = 1e-8,
                     kkt_tol: float = 1e-6) -> SubproblemResult:
    """Maximize the min data ratio over waypoints and induced-power slacks.

    Constraints: surrogate energy budget, linearized slack cone, tangent
    rate bounds feeding the per-sensor data requirement, per-slot speed
    limit, fixed endpoints, and an optional trust box around the expansion
    waypoints. If the barrier solve cannot improve on the expansion point
    the expansion point itself is returned.
    """
    problem = _BarrierProblem(schedule, expansion, scenario,
                              trust_radius, use_trust)
    expansion_ratio = float(problem.ratio_const.min())
    fleet, grid = scenario.fleet, scenario.grid

    def expansion_result(feasible_required=True):
        slack = expansion.base_slack
        d = expansion.base_displacements
        energy = problem.surrogate_energy(d, slack, smooth=False)
        if feasible_required and energy > fleet.e_max * (1 + 1e-9):
            raise SubproblemInfeasible(
                f"even the expansion trajectory needs {energy:.6g} J "
                f"> budget {fleet.e_max:.6g} J", violated=("energy",))
        traj = Trajectory(waypoints=expansion.base_waypoints,
                          slot_length=grid.slot_length)
        return SubproblemResult(trajectory=traj, slacks=slack.copy(),
                                min_ratio=expansion_ratio, kkt_residual=0.0,
                                surrogate_energy=energy, fell_back=True)

    # endpoints so far apart that the straight line is the only trajectory
    span = float(np.linalg.norm(fleet.end - fleet.start))
    if span >= grid.slot_count * grid.slot_length * fleet.v_max * (1 - 1e-9):
        return expansion_result()

    z = _feasible_start(problem, scenario)
    if z is None:
        straight = straight_line_trajectory(fleet, grid)
        needed = trajectory_energy(straight, grid, scenario.energy)
        violated = ["energy"] if needed > fleet.e_max else ["interior"]
        raise SubproblemInfeasible(
            "no strictly feasible trajectory found "
            f"(straight-line energy {needed:.6g} J vs budget {fleet.e_max:.6g} J)",
            violated=violated)

    t = 1.0
    rows = []
    stage = 0
    while True:
        z, _ = _newton_minimize(problem, z, t, grad_target=0.3 * kkt_tol)
        grad, _, g = problem.barrier_grad_hess(z, t)
        # stationarity of the original problem plus per-constraint gap 1/t
        kkt = max(float(np.linalg.norm(grad, np.inf)), 1.0 / t)
        inner, slack, lam = problem.unpack(z)
        energy = problem.surrogate_energy(np.diff(problem.waypoints(inner), axis=0),
                                          slack, smooth=False)
        rows.append((stage, float(lam), kkt, energy))
        stage += 1
        if 1.0 / t <= gap_tol:
            break
        t *= 15.0

    inner, slack, lam = problem.unpack(z)
    if lam < expansion_ratio:
        log.info("barrier solve fell back to the expansion point "
                 "(%.9g < %.9g)", lam, expansion_ratio)
        result = expansion_result()
        result.iteration_log = rows
        return result
    traj = Trajectory(waypoints=problem.waypoints(inner),
                      slot_length=grid.slot_length)
    energy = problem.surrogate_energy(traj.displacements, slack, smooth=False)
    true_energy = grid.slot_length * float(np.sum(
        propulsion_power_slack(traj.speeds, induced_speed_factor(
            traj.speeds, scenario.energy), scenario.energy)))
    if true_energy > energy + 1e-6:
        log.warning("true energy %.6g exceeds surrogate %.6g", true_energy, energy)
    return SubproblemResult(trajectory=traj, slacks=slack.copy(),
                            min_ratio=float(lam), kkt_residual=rows[-1][2],
                            surrogate_energy=energy, fell_back=False,
                            iteration_log=rows)
