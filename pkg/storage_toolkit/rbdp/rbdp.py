"""
Rounding based dynamic programming (RBDP)

Bellman recursion over the fill-level grid {cap_min, ..., cap_max} with step h_V. The exact
post-step level is floored onto the grid, so the recursion is exact on the rounded system and
the fill level is never over-estimated:

    z_t(d) = min { z_{t-1}(W) + p_t k : floor(eta_in y + g(W) - zeta / eta_out) = d }

with (y, zeta) = step_policy(Z_t, k) and k running over the purchase grid l, l + h_x, ..., u.
Step 1 starts from V_init itself (not rounded).

Each layer is evaluated by pushing every reachable level of layer t-1 through every admissible
purchase at once (numpy), then keeping the cheapest candidate per target level. Ties prefer the
smaller purchase, then the smaller predecessor level. The set of transitions considered is
exactly the union of the predecessor windows of `predecessor_window`.

For a linear loss the accumulated rounding error after m steps is below
eps_tot = sum_i g^{m-i}(h_V) <= m h_V, and the cost of the RBDP control differs from the
discrete optimum by at most m h_V max_t p_t (see `error_budget`). Subtracting eps_tot from the
capacity (`apply_capacity_margin`) makes the RBDP control feasible under exact dynamics.
"""

import logging
from typing import NamedTuple

import numpy as np

from ..model import (
    Instance,
    SolveMethod,
    Solution,
    StorageSpec,
    ceil_h,
    cost_of,
    floor_h,
    floor_index,
    grid_bounds,
    input_grid,
    simulate,
    step_levels,
    step_policy,
)
from ..utils.errors import (
    InfeasibleInstanceError,
    InvalidArgumentError,
    MarginInfeasibleError,
    UnsupportedLossError,
)

logger = logging.getLogger(__name__)

__all__ = [
    "DpTables",
    "ErrorBudget",
    "RoundingGap",
    "predecessor_window",
    "rbdp_solve",
    "solve",
    "backtrack",
    "error_budget",
    "apply_capacity_margin",
    "rounding_gap",
]

# Marks step-1 cells, whose predecessor is V_init rather than a grid level.
FROM_INITIAL = -1


class DpTables(NamedTuple):
    """Per-step tables over the fill-level grid (rows: steps 1..m, columns: grid positions).

    Grid position i stands for the level (lo + i) * h_v. Cells with reachable=False carry
    NaN costs and meaningless choices.
    """

    lo: int
    h_v: float
    z: np.ndarray
    reachable: np.ndarray
    x_choice: np.ndarray
    pred: np.ndarray

    @property
    def m(self) -> int:
        return self.z.shape[0]

    @property
    def size(self) -> int:
        return self.z.shape[1]

    @property
    def levels(self) -> np.ndarray:
        return (self.lo + np.arange(self.size)) * self.h_v

    def level(self, position: int) -> float:
        return (self.lo + position) * self.h_v

    def position(self, level: float) -> int:
        return int(round(level / self.h_v)) - self.lo

    def final_costs(self) -> dict[float, float]:
        """Cost to reach every reachable level at step m."""
        row = self.reachable[-1]
        return {float(lvl): float(c) for lvl, c in zip(self.levels[row], self.z[-1][row])}


class ErrorBudget(NamedTuple):
    eps_tot: float
    cost_gap: float


class RoundingGap(NamedTuple):
    gap: np.ndarray
    bound: np.ndarray


def _require_linear(inst: Instance) -> float:
    loss = inst.spec.loss
    if not loss.is_linear:
        raise UnsupportedLossError(f"rounding bounds are only proven for linear loss, got {loss.kind.value}")
    return loss.retention


def error_budget(inst: Instance) -> ErrorBudget:
    """eps_tot = sum_{i=1..m} g^{m-i}(h_V) (geometric sum) and cost_gap = m h_V max_t p_t."""
    r = _require_linear(inst)
    m, h = inst.m, inst.h_v
    if r == 1.0:
        eps = m * h
    else:
        eps = h * (1.0 - r ** m) / (1.0 - r)
    # an all-negative price series would otherwise produce a negative bound
    gap = m * h * max(max(inst.prices), 0.0)
    return ErrorBudget(eps_tot=eps, cost_gap=gap)


def apply_capacity_margin(inst: Instance) -> Instance:
    """Copy of inst with cap_max lowered to floor(cap_max - eps_tot) on the h_V grid.

    The copy is re-validated except for V_init, which keeps its value and may lie above the
    lowered cap_max. It is meant for the solver only.
    """
    budget = error_budget(inst)
    spec = inst.spec
    shrunk = spec.cap_max - budget.eps_tot
    floor_level = max(spec.cap_min, inst.v_final)
    new_cap = floor_h(shrunk, inst.h_v) if shrunk > 0 else 0.0
    if new_cap <= floor_level:
        raise MarginInfeasibleError(
            f"capacity margin eps_tot={budget.eps_tot:.6g} leaves floor(C - eps_tot)={new_cap} "
            f"<= max(c, V_final)={floor_level}",
            method=SolveMethod.rbdp.value,
        )
    logger.info(f"Capacity margin: C {spec.cap_max} -> {new_cap} (eps_tot={budget.eps_tot:.6g})")
    margin_spec = StorageSpec(**{**spec.model_dump(), "cap_max": new_cap})
    # V_init is a starting point, not a grid level
    checked = Instance(**{**inst.model_dump(), "spec": margin_spec, "v_init": min(inst.v_init, new_cap)})
    return checked.model_copy(update={"v_init": inst.v_init})


def predecessor_window(spec: StorageSpec, d: float, k: float, Z: float,
                       h_v: float) -> tuple[float, float]:
    """Smallest and largest grid levels W with floor(eta_in y + g(W) - zeta / eta_out) = d.

    Equivalent to g(W) in [a, a + h_V) with a = d - eta_in y + zeta / eta_out, clipped to the
    grid. The window is empty when lb > ub.
    """
    y, zeta = step_policy(Z, k)
    a = d - spec.eta_in * y + zeta / spec.eta_out
    lo, hi = grid_bounds(spec, h_v)
    if a + h_v <= 0:
        return lo * h_v, (lo - 1) * h_v
    g = spec.loss
    lb = ceil_h(g.inverse(max(a, 0.0)), h_v)
    ub = ceil_h(g.inverse(a + h_v), h_v) - h_v
    return max(lb, lo * h_v), min(ub, hi * h_v)


def _build_tables(inst: Instance) -> DpTables:
    spec = inst.spec
    h = inst.h_v
    lo, hi = grid_bounds(spec, h)
    if hi < lo:
        raise InvalidArgumentError(
            f"fill-level grid is empty: no multiple of h_V={h} in [{spec.cap_min}, {spec.cap_max}]"
        )
    size = hi - lo + 1
    m = inst.m
    levels = (lo + np.arange(size)) * h
    inputs = input_grid(inst)
    prices = inst.price_array()
    demand = inst.consumption_array()
    y_cap = spec.y_max + 1e-9 * max(1.0, spec.y_max)

    logger.info(f"rbdp: m={m}, grid={size} levels (h_V={h}), inputs={inputs.size} (h_x={inst.h_x})")

    z = np.full((m, size), np.nan)
    reachable = np.zeros((m, size), dtype=bool)
    x_choice = np.zeros((m, size))
    pred = np.full((m, size), FROM_INITIAL, dtype=np.int32)

    prev_levels = np.array([inst.v_init], dtype=float)
    prev_cost = np.zeros(1)
    prev_ok = np.ones(1, dtype=bool)

    for t in range(m):
        ks = np.flatnonzero(np.maximum(inputs - demand[t], 0.0) <= y_cap)
        src = np.flatnonzero(prev_ok)
        if ks.size == 0 or src.size == 0:
            logger.debug(f"rbdp: step {t + 1} has no admissible transition")
            break

        k = inputs[ks]
        target = floor_index(step_levels(spec, prev_levels[src], k, demand[t]), h) - lo
        cost = prev_cost[src][None, :] + prices[t] * k[:, None]

        kk, ss = np.nonzero((target >= 0) & (target < size))
        if kk.size == 0:
            break
        cells = target[kk, ss]
        cand = cost[kk, ss]
        # primary key last: target cell, then cost, then purchase, then predecessor
        order = np.lexsort((ss, kk, cand, cells))
        ordered = cells[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = ordered[1:] != ordered[:-1]
        best = order[first]
        hit = cells[best]

        z[t, hit] = cand[best]
        reachable[t, hit] = True
        x_choice[t, hit] = k[kk[best]]
        if t > 0:
            pred[t, hit] = src[ss[best]]

        prev_levels = levels
        prev_cost = z[t]
        prev_ok = reachable[t]

    return DpTables(lo=lo, h_v=h, z=z, reachable=reachable, x_choice=x_choice, pred=pred)


def backtrack(tables: DpTables, d_star: float) -> tuple[list[float], list[float]]:
    """Purchases x* and rounded levels V along the predecessor chain ending in d_star at step m."""
    pos = tables.position(d_star)
    if not (0 <= pos < tables.size) or not tables.reachable[-1, pos]:
        raise InvalidArgumentError(f"level {d_star} is not reachable at step {tables.m}")

    x = [0.0] * tables.m
    levels = [0.0] * tables.m
    for t in range(tables.m - 1, -1, -1):
        x[t] = float(tables.x_choice[t, pos])
        levels[t] = tables.level(pos)
        if t > 0:
            pos = int(tables.pred[t, pos])
    return x, levels


def rbdp_solve(inst: Instance, safe_capacity: bool = False) -> tuple[Solution, DpTables]:
    """Solve the rounded system; returns the backtracked solution and the full tables.

    With safe_capacity the capacity margin is applied first, so the control stays within the
    original capacity under exact dynamics.
    """
    work = apply_capacity_margin(inst) if safe_capacity else inst
    tables = _build_tables(work)
    h = work.h_v

    final_row = tables.reachable[-1]
    reachable_final = tables.levels[final_row]
    largest = float(reachable_final.max()) if reachable_final.size else None

    start = max(tables.position(work.v_final), 0)
    candidates = final_row.copy()
    candidates[:start] = False
    if not candidates.any():
        raise InfeasibleInstanceError(
            f"no level >= V_final={work.v_final} is reachable at step {work.m}; "
            f"largest reachable final level: {largest}",
            largest_reachable_level=largest,
            method=SolveMethod.rbdp.value,
        )
    masked = np.where(candidates, tables.z[-1], np.inf)
    d_pos = int(np.argmin(masked))
    d_star = tables.level(d_pos)

    x, levels = backtrack(tables, d_star)
    ys, zetas = zip(*(step_policy(Z, k) for Z, k in zip(work.consumption, x)))
    cost = cost_of(work.prices, x)
    budget = error_budget(work) if work.spec.loss.is_linear else None

    logger.info(f"rbdp: cost={cost:.2f}, V_m={d_star} (h_V={h})")
    solution = Solution(
        x=tuple(x),
        y=tuple(ys),
        zeta=tuple(zetas),
        levels=tuple(levels),
        cost=cost,
        method=SolveMethod.rbdp,
        bound_gap=budget.cost_gap if budget else float("nan"),
    )
    return solution, tables


def solve(inst: Instance, safe_capacity: bool = False) -> Solution:
    return rbdp_solve(inst, safe_capacity=safe_capacity)[0]


def rounding_gap(inst: Instance, solution: Solution) -> RoundingGap:
    """Exact-minus-rounded fill level per step and its bound sum_{i<=t} g^{t-i}(h_V)."""
    r = _require_linear(inst)
    exact = np.asarray(simulate(inst.spec, inst, solution.x).trajectory)
    gap = exact - np.asarray(solution.levels)
    steps = np.arange(inst.m)
    # bound_t = h (1 + r + ... + r^{t-1})
    bound = inst.h_v * np.cumsum(r ** steps)
    return RoundingGap(gap=gap, bound=bound)


if __name__ == "__main__":
    from ..model import LossFunction

    spec = StorageSpec(cap_max=500, buy_max=200, eta_in=1.0, eta_out=1.0,
                       loss=LossFunction(beta=0.0), y_max=500)
    inst = Instance(prices=(1, 10, 1), consumption=(100, 100, 100), v_init=0, v_final=0,
                    h_x=100, h_v=1, spec=spec)
    print(solve(inst).as_record())

# Example:
# python -m storage_toolkit.rbdp.rbdp
