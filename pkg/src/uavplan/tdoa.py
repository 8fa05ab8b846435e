"""Range-difference (TDoA) measurement model, CRLB, simulator and estimator.

All range-difference quantities are kept in meters, so the noise covariance
is expressed in m^2 and the reported positioning bound is in m^2. The
speed-of-light factor that converts arrival-time differences is absorbed
into the measurement units once, which avoids mixing second- and
meter-scale numbers in the Fisher information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, NoConvergence, SingularGeometry

SPEED_OF_LIGHT = 299792458.0

# FIM condition number beyond which the geometry is treated as singular.
CONDITION_LIMIT = 1e12

# Finite CRLB substituted for singular geometries by the capped evaluators.
SINGULAR_CAP = 1.0e6


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian range-difference error model.

    delta is the standard deviation of each range-difference error in
    meters (c times the timing error). "independent" treats the
    differences as uncorrelated; "reference-correlated" uses the
    covariance delta^2 (I + 1 1^T) / 2 that arises when every difference
    shares the reference receiver's noise.
    """

    delta: float = 1.0
    covariance_mode: str = "independent"
    speed_of_light: float = SPEED_OF_LIGHT

    def covariance(self, n_uavs: int) -> np.ndarray:
        m = n_uavs - 1
        if self.covariance_mode == "independent":
            base = np.eye(m)
        elif self.covariance_mode == "reference-correlated":
            base = (np.eye(m) + np.ones((m, m))) / 2.0
        else:
            raise ValueError(f"unknown covariance_mode {self.covariance_mode!r}")
        return self.delta ** 2 * base

    def violations(self) -> list[str]:
        out = []
        if self.delta < 0:
            out.append("noise.delta must be >= 0")
        if self.covariance_mode not in ("independent", "reference-correlated"):
            out.append("noise.covariance_mode must be 'independent' or "
                       "'reference-correlated'")
        return out


@dataclass(frozen=True, eq=False)
class CrlbResult:
    bound: float            # m^2, trace of the inverse Fisher information
    jacobian: np.ndarray    # 2 x (N-1)
    condition_ok: bool


def ranges_to_point(uav_positions, altitude, point, height=0.0):
    """3D ranges from each UAV to a ground point. uav_positions is (N, 2)."""
    uavs = np.asarray(uav_positions, dtype=float)
    diff = uavs - np.asarray(point, dtype=float)
    return np.sqrt(np.sum(diff ** 2, axis=1) + (altitude - height) ** 2)


def range_differences(uav_positions, altitude, sensor) -> np.ndarray:
    """(N-1)-vector of r_n - r_1 for n = 2..N at the sensor's true position."""
    r = ranges_to_point(uav_positions, altitude, sensor.true_position, sensor.height)
    return r[1:] - r[0]


def jacobian_at_point(uav_positions, altitude, point, height=0.0) -> np.ndarray:
    """2 x (N-1) Jacobian of the range differences w.r.t. the ground point.

    Column i-1 holds the partials of (r_i - r_1), i.e. the difference of the
    unit-vector projections of the reference and the i-th receiver.
    """
    uavs = np.asarray(uav_positions, dtype=float)
    r = ranges_to_point(uavs, altitude, point, height)
    if np.any(r <= 0.0):
        raise DegenerateGeometry("a receiver coincides with the evaluated point")
    proj = (uavs - np.asarray(point, dtype=float)) / r[:, None]  # (N, 2)
    return proj[0][:, None] - proj[1:].T


def jacobian(uav_positions, altitude, sensor) -> np.ndarray:
    return jacobian_at_point(uav_positions, altitude,
                             sensor.true_position, sensor.height)


def crlb_at_point(uav_positions, altitude, point, height, noise: NoiseModel,
                  condition_limit: float = CONDITION_LIMIT) -> CrlbResult:
    """Positioning variance bound (m^2) for the given receiver geometry."""
    uavs = np.asarray(uav_positions, dtype=float)
    if len(uavs) < 3:
        raise ValueError("at least three receivers are required for a 2D bound")
    if noise.delta <= 0:
        raise ValueError("noise.delta must be positive for a finite bound")
    jac = jacobian_at_point(uavs, altitude, point, height)
    q_inv = np.linalg.inv(noise.covariance(len(uavs)))
    fim = jac @ q_inv @ jac.T
    cond = np.linalg.cond(fim)
    if not np.isfinite(cond) or cond > condition_limit:
        raise SingularGeometry(
            f"Fisher information condition number {cond:.3g} exceeds "
            f"{condition_limit:.3g}")
    bound = float(np.trace(np.linalg.inv(fim)))
    return CrlbResult(bound=bound, jacobian=jac, condition_ok=True)


def crlb(uav_positions, altitude, sensor, noise: NoiseModel) -> CrlbResult:
    return crlb_at_point(uav_positions, altitude,
                         sensor.true_position, sensor.height, noise)


def crlb_trace_many(uav_sets, altitude, points, height, noise: NoiseModel,
                    cap: float = SINGULAR_CAP,
                    condition_limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Vectorized CRLB trace over many geometries.

    uav_sets has shape (..., N, 2) and points (..., 2) with broadcastable
    leading dimensions. Singular geometries yield `cap` instead of raising,
    which keeps swarm fitness evaluation total.
    """
    uavs = np.asarray(uav_sets, dtype=float)
    pts = np.asarray(points, dtype=float)
    diff = uavs - pts[..., None, :]                        # (..., N, 2)
    r = np.sqrt(np.sum(diff ** 2, axis=-1) + (altitude - height) ** 2)
    proj = diff / r[..., None]
    cols = proj[..., :1, :] - proj[..., 1:, :]             # (..., N-1, 2)
    q_inv = np.linalg.inv(noise.covariance(uavs.shape[-2]))
    fim = np.einsum("...ia,ij,...jb->...ab", cols, q_inv, cols)
    tr = fim[..., 0, 0] + fim[..., 1, 1]
    det = fim[..., 0, 0] * fim[..., 1, 1] - fim[..., 0, 1] * fim[..., 1, 0]
    half = tr / 2.0
    disc = np.sqrt(np.maximum(half ** 2 - det, 0.0))
    lam_min = half - disc
    lam_max = half + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lam_min > 0, lam_max / lam_min, np.inf)
        bound = np.where(det > 0, tr / det, np.inf)
    singular = ~np.isfinite(bound) | (cond > condition_limit)
    return np.where(singular, cap, bound)


def simulate_measurements(uav_positions, altitude, sensor, noise: NoiseModel,
                          rng_seed) -> np.ndarray:
    """One noisy range-difference vector; deterministic given the seed."""
    truth = range_differences(uav_positions, altitude, sensor)
    if noise.delta == 0.0:
        return truth
    chol = np.linalg.cholesky(noise.covariance(len(uav_positions)))
    rng = np.random.default_rng(rng_seed)
    return truth + chol @ rng.standard_normal(len(truth))


def _trial_seed(master_seed, k: int) -> tuple:
    if isinstance(master_seed, (tuple, list)):
        return (*master_seed, k)
    return (master_seed, k)


def simulate_measurements_batch(uav_positions, altitude, point, height,
                                noise: NoiseModel, master_seed, trials: int
                                ) -> np.ndarray:
    """(trials, N-1) noisy measurements with per-trial seeds (master_seed, k).

    Per-trial seeding keeps results reproducible independent of how the
    trials are later distributed across workers.
    """
    r = ranges_to_point(uav_positions, altitude, point, height)
    truth = r[1:] - r[0]
    out = np.tile(truth, (trials, 1))
    if noise.delta == 0.0:
        return out
    chol = np.linalg.cholesky(noise.covariance(len(r)))
    for k in range(trials):
        rng = np.random.default_rng(_trial_seed(master_seed, k))
        out[k] += chol @ rng.standard_normal(len(truth))
    return out


def _solve_2x2(a, rhs):
    """Batched 2x2 solve; returns (solution, ok_mask)."""
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    scale = np.maximum(np.abs(a).max(axis=(-2, -1)), 1e-300)
    ok = np.abs(det) > 1e-14 * scale ** 2
    safe = np.where(ok, det, 1.0)
    x0 = (a[..., 1, 1] * rhs[..., 0] - a[..., 0, 1] * rhs[..., 1]) / safe
    x1 = (-a[..., 1, 0] * rhs[..., 0] + a[..., 0, 0] * rhs[..., 1]) / safe
    return np.stack([x0, x1], axis=-1), ok


def estimate_positions_batch(uav_positions, altitude, measurements,
                             noise: NoiseModel, initial_guess, height=0.0,
                             max_iterations: int = 100, step_tol: float = 1e-6):
    """Gauss-Newton with Levenberg damping, batched over measurement rows.

    Minimizes the covariance-weighted squared residual of the range
    differences. Damping is only engaged when a plain Gauss-Newton step
    fails to reduce the cost. Returns (estimates, converged, iterations).
    """
    uavs = np.asarray(uav_positions, dtype=float)
    meas = np.atleast_2d(np.asarray(measurements, dtype=float))
    trials = meas.shape[0]
    q_inv = np.linalg.inv(noise.covariance(len(uavs))) if noise.delta > 0 \
        else np.eye(len(uavs) - 1)
    est = np.tile(np.asarray(initial_guess, dtype=float).reshape(1, 2), (trials, 1))
    damping = np.zeros(trials)
    converged = np.zeros(trials, dtype=bool)
    iterations = np.zeros(trials, dtype=int)

    def weighted_cost(points, meas_rows):
        diff = uavs[None, :, :] - points[:, None, :]
        r = np.sqrt(np.sum(diff ** 2, axis=-1) + (altitude - height) ** 2)
        resid = meas_rows - (r[:, 1:] - r[:, :1])
        return 0.5 * np.einsum("ti,ij,tj->t", resid, q_inv, resid), r, resid

    cost, r, resid = weighted_cost(est, meas)
    eye2 = np.eye(2)
    for it in range(max_iterations):
        active = ~converged
        if not active.any():
            break
        if np.any(r[active] <= 0.0):
            raise DegenerateGeometry("estimate coincides with a receiver")
        # J[t, i, :] = d(r_{i+1} - r_1)/d s at the current estimate
        unit = (est[:, None, :] - uavs[None, :, :]) / r[:, :, None]
        jac = unit[:, 1:, :] - unit[:, :1, :]
        a_full = np.einsum("tia,ij,tjb->tab", jac, q_inv, jac)
        g_full = np.einsum("tia,ij,tj->ta", jac, q_inv, resid)
        pending = active.copy()
        step_norm = np.zeros(trials)
        for _attempt in range(12):
            if not pending.any():
                break
            a_try = a_full[pending] + damping[pending, None, None] * eye2
            step, solvable = _solve_2x2(a_try, g_full[pending])
            cand = est[pending] + step
            cand_cost, _, _ = weighted_cost(cand, meas[pending])
            improved = solvable & (cand_cost <= cost[pending] * (1 + 1e-12) + 1e-300)
            idx = np.flatnonzero(pending)
            good = idx[improved]
            est[good] = cand[improved]
            cost[good] = cand_cost[improved]
            step_norm[good] = np.linalg.norm(step[improved], axis=1)
            damping[good] = damping[good] * 0.1
            bad = idx[~improved]
            damping[bad] = np.maximum(damping[bad] * 10.0, 1e-4)
            pending[:] = False
            pending[bad] = True
        # trials whose step never improved keep their estimate this round
        iterations[active] += 1
        just_done = active & ~pending & (step_norm < step_tol)
        converged |= just_done
        cost, r, resid = weighted_cost(est, meas)
    return est, converged, iterations


def estimate_position(uav_positions, altitude, measurements, noise: NoiseModel,
                      initial_guess, height=0.0, max_iterations: int = 100,
                      step_tol: float = 1e-6):
    """Estimate one ground position from a range-difference vector.

    Returns (position, report). Raises NoConvergence (carrying the last
    iterate) if the iteration budget is exhausted.
    """
    est, converged, iterations = estimate_positions_batch(
        uav_positions, altitude, np.atleast_2d(measurements), noise,
        initial_guess, height=height, max_iterations=max_iterations,
        step_tol=step_tol)
    report = {"converged": bool(converged[0]), "iterations": int(iterations[0])}
    if not converged[0]:
        raise NoConvergence("position estimate did not converge",
                            estimate=est[0], report=report)
    return est[0], report


def monte_carlo_rmse(uav_positions, altitude, point, height, noise: NoiseModel,
                     trials: int, master_seed, initial_guess=None):
    """RMSE of the estimator over `trials` noisy draws at a fixed geometry.

    Non-converged trials contribute their last iterate. Returns
    (rmse, converged_count).
    """
    if initial_guess is None:
        initial_guess = point
    meas = simulate_measurements_batch(uav_positions, altitude, point, height,
                                       noise, master_seed, trials)
    est, converged, _ = estimate_positions_batch(
        uav_positions, altitude, meas, noise, initial_guess, height=height)
    err = est - np.asarray(point, dtype=float)
    rmse = float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))
    return rmse, int(np.count_nonzero(converged))


def rmse_vs_distance(distances, aux_offsets, noise: NoiseModel, trials: int,
                     altitude: float = 100.0, height: float = 0.0,
                     master_seed=0):
    """Estimator RMSE as the sensor's horizontal offset from the reference
    receiver grows, with the receiver formation held fixed.

    aux_offsets is an (N-1, 2) array of auxiliary positions relative to the
    reference receiver at the origin. Returns a list of rows
    (distance_m, crlb_m2, rmse_m, trials).
    """
    if trials < 100:
        raise ValueError("need at least 100 trials per distance")
    offsets = np.asarray(aux_offsets, dtype=float)
    uavs = np.vstack([[0.0, 0.0], offsets])
    rows = []
    for i, dist in enumerate(distances):
        point = np.array([float(dist), 0.0])
        bound = crlb_at_point(uavs, altitude, point, height, noise).bound \
            if noise.delta > 0 else 0.0
        rmse, _ = monte_carlo_rmse(uavs, altitude, point, height, noise,
                                   trials, _trial_seed(master_seed, i))
        rows.append((float(dist), bound, rmse, trials))
    return rows
