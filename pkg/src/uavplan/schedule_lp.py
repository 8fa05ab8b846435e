"""Max-min transmission scheduling as a linear program.

Given per-slot worst-case rates, maximize the minimum over sensors of
uploaded data normalized by the per-sensor requirement, subject to the
relaxed schedule constraints (row sums <= 1, fractions in [0, 1]).

The LP is solved by a self-contained dense simplex: at the scales this
library runs (hundreds of variables) an external solver buys nothing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import Schedule

log = logging.getLogger(__name__)

_PIVOT_EPS = 1e-11
_COST_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class LpSolution:
    schedule: Schedule
    min_ratio: float            # maximized min_m (tau/I_min) sum_w R x
    status: str                 # always "optimal"; the LP cannot be infeasible
    per_sensor_ratio: np.ndarray
    rates: np.ndarray           # the W x M rate matrix the LP was built from
    slot_length: float
    data_requirement: float


def _simplex_max(a_eq: np.ndarray, b_eq: np.ndarray, cost: np.ndarray,
                 basis: list[int]) -> tuple[np.ndarray, float]:
    """Maximize cost @ z subject to a_eq @ z = b_eq, z >= 0.

    `basis` must index an identity submatrix with b_eq >= 0. Dantzig
    pricing with a Bland fallback once the objective stalls.
    """
    n_rows, n_cols = a_eq.shape
    tab = np.hstack([a_eq.astype(float), b_eq.astype(float)[:, None]])
    red = cost.astype(float).copy()          # reduced costs (basis costs are 0)
    obj = 0.0
    basis = list(basis)
    bland = False
    stall = 0
    for _ in range(200 * (n_rows + n_cols)):
        candidates = np.flatnonzero(red > _COST_EPS)
        if candidates.size == 0:
            break
        if bland:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmax(red[candidates])])
        col = tab[:, enter]
        rows = np.flatnonzero(col > _PIVOT_EPS)
        if rows.size == 0:
            raise RuntimeError("LP unbounded; the model should bound the objective")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12]
        # break ties on the smallest basis variable index (anti-cycling)
        leave_row = int(tied[np.argmin([basis[r] for r in tied])])
        pivot = tab[leave_row, enter]
        tab[leave_row] /= pivot
        factors = tab[:, enter].copy()
        factors[leave_row] = 0.0
        tab -= np.outer(factors, tab[leave_row])
        new_obj = obj + red[enter] * tab[leave_row, -1]
        red = red - red[enter] * tab[leave_row, :-1]
        red[enter] = 0.0
        basis[leave_row] = enter
        if new_obj > obj + 1e-13 * (1 + abs(obj)):
            stall = 0
        else:
            stall += 1
            if stall > 2 * (n_rows + n_cols):
                bland = True
        obj = new_obj
    else:
        raise RuntimeError("simplex exceeded its iteration budget")
    z = np.zeros(n_cols)
    z[basis] = tab[:, -1]
    return z, obj


def solve_schedule(rates: np.ndarray, grid, data_requirement: float) -> LpSolution:
    """Solve the relaxed max-min scheduling LP for a fixed rate matrix.

    Variables are the W*M fractions, the min-ratio objective, one slack per
    slot row and one surplus per sensor ratio row. Slots left with spare
    capacity at the optimum are topped up toward their best sensor, which
    never lowers the min ratio.
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise ValueError("rates must be nonnegative")
    n_slots, n_sensors = rates.shape
    gain = grid.slot_length / data_requirement * rates   # ratio contribution
    dead = np.flatnonzero(gain.max(axis=0) <= 0.0)
    for m in dead:
        log.warning("sensor %d has zero rate in every slot; min ratio is 0", m)

    n_x = n_slots * n_sensors
    n_cols = n_x + 1 + n_slots + n_sensors
    a_eq = np.zeros((n_slots + n_sensors, n_cols))
    b_eq = np.zeros(n_slots + n_sensors)
    for w in range(n_slots):
        a_eq[w, w * n_sensors:(w + 1) * n_sensors] = 1.0
        a_eq[w, n_x + 1 + w] = 1.0
        b_eq[w] = 1.0
    for m in range(n_sensors):
        row = n_slots + m
        a_eq[row, m:n_x:n_sensors] = -gain[:, m]
        a_eq[row, n_x] = 1.0                      # min-ratio variable
        a_eq[row, n_x + 1 + n_slots + m] = 1.0    # surplus
    cost = np.zeros(n_cols)
    cost[n_x] = 1.0
    basis = [n_x + 1 + i for i in range(n_slots + n_sensors)]

    z, objective = _simplex_max(a_eq, b_eq, cost, basis)
    x = np.clip(z[:n_x].reshape(n_slots, n_sensors), 0.0, 1.0)

    # top up unused slot capacity toward the locally best sensor
    spare = 1.0 - x.sum(axis=1)
    for w in np.flatnonzero(spare > 1e-12):
        if gain[w].max() > 0.0:
            x[w, int(np.argmax(gain[w]))] += spare[w]

    ratios = np.einsum("wm,wm->m", gain, x)
    min_ratio = float(ratios.min())
    if abs(min_ratio - objective) > 1e-8 * max(1.0, abs(objective)):
        log.warning("min ratio %.12g drifted from LP objective %.12g",
                    min_ratio, objective)
    return LpSolution(schedule=Schedule(fractions=x), min_ratio=min_ratio,
                      status="optimal", per_sensor_ratio=ratios, rates=rates,
                      slot_length=grid.slot_length,
                      data_requirement=data_requirement)


def round_schedule(solution: LpSolution) -> Schedule:
    """Binary per-slot assignment derived from a relaxed solution.

    Each slot goes to its largest fraction (ties to the lowest sensor
    index), then single-slot reassignments that raise the minimum ratio
    are applied greedily. The rounded min ratio can only be at or below
    the relaxed one; the degradation is logged.
    """
    x = solution.schedule.fractions
    n_slots, n_sensors = x.shape
    gain = solution.slot_length / solution.data_requirement * solution.rates
    assign = np.full(n_slots, -1)
    for w in range(n_slots):
        if x[w].max() > 1e-12:
            assign[w] = int(np.argmax(x[w]))

    def ratios_of(assignment):
        out = np.zeros(n_sensors)
        for w, m in enumerate(assignment):
            if m >= 0:
                out[m] += gain[w, m]
        return out

    ratios = ratios_of(assign)
    for _ in range(10 * n_slots):
        current_min = ratios.min()
        best_gain, best_move = 0.0, None
        worst = int(np.argmin(ratios))
        for w in range(n_slots):
            donor = assign[w]
            if donor == worst or gain[w, worst] <= 0.0:
                continue
            trial = ratios.copy()
            trial[worst] += gain[w, worst]
            if donor >= 0:
                trial[donor] -= gain[w, donor]
            improvement = trial.min() - current_min
            if improvement > best_gain + 1e-15:
                best_gain, best_move = improvement, (w, worst)
        if best_move is None:
            break
        w, m = best_move
        if assign[w] >= 0:
            ratios[assign[w]] -= gain[w, assign[w]]
        assign[w] = m
        ratios[m] += gain[w, m]

    binary = np.zeros_like(x)
    for w, m in enumerate(assign):
        if m >= 0:
            binary[w, m] = 1.0
    degradation = solution.min_ratio - ratios.min()
    if degradation > 1e-12:
        log.info("rounding lowered the min ratio by %.6g", degradation)
    return Schedule(fractions=binary)
