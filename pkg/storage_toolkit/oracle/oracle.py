"""
Brute-force oracle

Enumerates every purchase sequence on the input grid, depth first in lexicographic order, and
replays it under exact or rounded dynamics. Ground truth for the RBDP on desk-sized horizons.

    exact   - fill levels follow the continuous dynamics; c <= V_t <= C checked with a tiny slack
    rounded - every post-step level is floored onto the h_V grid exactly as RBDP does, so the
              minimum per final level must coincide with the RBDP tables

`oracle_cross_check` certifies the RBDP against the exact oracle:
    oracle_cost <= rbdp_cost          (RBDP control with capacity margin is exactly feasible)
    0 <= V_hat_t - V_t <= sum_{i<=t} g^{t-i}(h_V)
and reports whether rbdp_cost <= oracle_cost + m h_V max_t p_t.
"""

import json
import logging
import math
from enum import Enum
from typing import Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from ..model import (
    Instance,
    LossFunction,
    SolveMethod,
    Solution,
    StorageSpec,
    floor_index,
    grid_bounds,
    input_grid,
    simulate,
    step_policy,
)
from ..rbdp import error_budget, rounding_gap, solve as rbdp_solve
from ..utils.errors import CrossCheckError, InfeasibleInstanceError, OracleBudgetError

logger = logging.getLogger(__name__)

__all__ = [
    "DynamicsMode",
    "OracleConfig",
    "CrossCheckReport",
    "oracle_solve",
    "oracle_final_costs",
    "oracle_cross_check",
    "random_instance",
    "run_campaign",
]

TOL = 1e-6


class DynamicsMode(Enum):
    exact = "exact"
    rounded = "rounded"


class OracleConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: DynamicsMode = DynamicsMode.exact
    max_nodes: int = 1_000_000

    @field_validator("max_nodes")
    @classmethod
    def positive_budget(cls, v):
        if v <= 0:
            raise ValueError("max_nodes must be > 0")
        return v


class _Walker:
    """Shared transition logic of the enumeration."""

    def __init__(self, inst: Instance, cfg: OracleConfig):
        self.inst = inst
        self.spec = inst.spec
        self.rounded = cfg.mode is DynamicsMode.rounded
        self.inputs = [float(k) for k in input_grid(inst)]
        self.prices = [float(p) for p in inst.prices]
        self.demand = [float(z) for z in inst.consumption]
        self.lo, self.hi = grid_bounds(self.spec, inst.h_v)
        self.y_cap = self.spec.y_max + 1e-9 * max(1.0, self.spec.y_max)
        self.cap_tol = 1e-9 * max(1.0, self.spec.cap_max)

        leaves = len(self.inputs) ** inst.m
        if leaves > cfg.max_nodes:
            raise OracleBudgetError(required_nodes=leaves, max_nodes=cfg.max_nodes)

    def next_level(self, t: int, v: float, k: float) -> float | None:
        y, zeta = step_policy(self.demand[t], k)
        if y > self.y_cap:
            return None
        spec = self.spec
        nv = spec.eta_in * y + spec.loss.apply(v) - zeta / spec.eta_out
        if self.rounded:
            idx = int(floor_index(nv, self.inst.h_v))
            if idx < self.lo or idx > self.hi:
                return None
            return idx * self.inst.h_v
        if nv < spec.cap_min - self.cap_tol or nv > spec.cap_max + self.cap_tol:
            return None
        return nv

    def meets_final(self, v: float) -> bool:
        return v >= self.inst.v_final - 1e-9 * max(1.0, self.inst.v_final)

    def leaves(self) -> Iterator[tuple[float, tuple[float, ...], tuple[float, ...]]]:
        """Every capacity-feasible complete sequence as (cost, x, levels), lexicographic order."""
        m = self.inst.m
        x: list[float] = []
        levels: list[float] = []

        def dfs(t: int, v: float, cost: float):
            if t == m:
                yield cost, tuple(x), tuple(levels)
                return
            for k in self.inputs:
                nv = self.next_level(t, v, k)
                if nv is None:
                    continue
                x.append(k)
                levels.append(nv)
                yield from dfs(t + 1, nv, cost + self.prices[t] * k)
                x.pop()
                levels.pop()

        yield from dfs(0, self.inst.v_init, 0.0)


def _solution(inst: Instance, x: tuple[float, ...], levels: tuple[float, ...], cost: float) -> Solution:
    ys, zetas = zip(*(step_policy(Z, k) for Z, k in zip(inst.consumption, x)))
    return Solution(x=x, y=tuple(ys), zeta=tuple(zetas), levels=levels, cost=cost,
                    method=SolveMethod.oracle, bound_gap=0.0)


def oracle_solve(inst: Instance, cfg: OracleConfig | None = None) -> Solution:
    """Minimum-cost feasible purchase sequence; ties go to the lexicographically smallest x."""
    cfg = cfg or OracleConfig()
    walker = _Walker(inst, cfg)
    m = inst.m
    prices = walker.prices
    # cheapest possible remainder from step t on, valid for negative prices too
    rest = [0.0] * (m + 1)
    for t in range(m - 1, -1, -1):
        k_lo, k_hi = walker.inputs[0], walker.inputs[-1]
        rest[t] = rest[t + 1] + min(prices[t] * k_lo, prices[t] * k_hi)

    best = {"cost": math.inf, "x": None, "levels": None}
    largest = {"level": None}
    x: list[float] = []
    levels: list[float] = []

    def dfs(t: int, v: float, cost: float):
        if t == m:
            if largest["level"] is None or v > largest["level"]:
                largest["level"] = v
            if walker.meets_final(v) and cost < best["cost"]:
                best.update(cost=cost, x=tuple(x), levels=tuple(levels))
            return
        for k in walker.inputs:
            step_cost = cost + prices[t] * k
            if step_cost + rest[t + 1] >= best["cost"]:
                continue
            nv = walker.next_level(t, v, k)
            if nv is None:
                continue
            x.append(k)
            levels.append(nv)
            dfs(t + 1, nv, step_cost)
            x.pop()
            levels.pop()

    dfs(0, inst.v_init, 0.0)

    if best["x"] is None:
        # pruning never fires without an incumbent, so `largest` saw every complete sequence
        raise InfeasibleInstanceError(
            f"no purchase sequence reaches V_final={inst.v_final} ({cfg.mode.value} dynamics); "
            f"largest reachable final level: {largest['level']}",
            largest_reachable_level=largest["level"],
            method=SolveMethod.oracle.value,
        )
    logger.debug(f"oracle ({cfg.mode.value}): cost={best['cost']:.6g}")
    return _solution(inst, best["x"], best["levels"], best["cost"])


def oracle_final_costs(inst: Instance, cfg: OracleConfig | None = None) -> dict[float, float]:
    """Minimum cost per reachable final level, ignoring V_final."""
    out: dict[float, float] = {}
    for cost, _, levels in _Walker(inst, cfg or OracleConfig()).leaves():
        last = levels[-1]
        if last not in out or cost < out[last]:
            out[last] = cost
    return out


class CrossCheckReport(BaseModel):
    status: str
    safe_capacity: bool
    oracle_cost: float | None = None
    rbdp_cost: float | None = None
    cost_gap: float | None = None
    lower_bound_ok: bool | None = None
    within_gap: bool | None = None
    exact_feasible: bool | None = None
    gap_ok: bool | None = None
    violations: list[str] = []


def _dump(inst: Instance, **traces) -> str:
    payload = {"instance": inst.model_dump(mode="json")}
    for name, value in traces.items():
        payload[name] = value.as_record() if isinstance(value, Solution) else value
    return json.dumps(payload, indent=2, default=str)


def oracle_cross_check(inst: Instance, safe_capacity: bool = True, strict: bool = False,
                       max_nodes: int = 1_000_000) -> CrossCheckReport:
    """Run rbdp and the exact oracle on inst and certify the inequalities between them."""
    cfg = OracleConfig(mode=DynamicsMode.exact, max_nodes=max_nodes)
    try:
        oracle = oracle_solve(inst, cfg)
    except InfeasibleInstanceError:
        oracle = None
    try:
        rbdp = rbdp_solve(inst, safe_capacity=safe_capacity)
    except InfeasibleInstanceError:
        rbdp = None

    if rbdp is None:
        status = "infeasible" if oracle is None else "rbdp_infeasible"
        return CrossCheckReport(status=status, safe_capacity=safe_capacity,
                                oracle_cost=oracle.cost if oracle else None)

    sim = simulate(inst.spec, inst, rbdp.x)
    violations = [f"t={v.t} {v.kind}: {v.message}" for v in sim.violations]
    gap = rounding_gap(inst, rbdp)
    gap_ok = bool(np.all(gap.gap >= -TOL) and np.all(gap.gap <= gap.bound + TOL))
    cost_gap = error_budget(inst).cost_gap

    if not gap_ok:
        raise CrossCheckError("rounding gap outside [0, sum g^(t-i)(h_V)]",
                              _dump(inst, rbdp=rbdp, exact_trajectory=list(sim.trajectory)))
    if safe_capacity and not sim.feasible:
        raise CrossCheckError("rbdp control with capacity margin is infeasible under exact dynamics",
                              _dump(inst, rbdp=rbdp, violations=violations))
    if oracle is None:
        if sim.feasible:
            raise CrossCheckError("exact oracle found no solution but the rbdp control is feasible",
                                  _dump(inst, rbdp=rbdp))
        return CrossCheckReport(status="oracle_infeasible", safe_capacity=safe_capacity,
                                rbdp_cost=rbdp.cost, cost_gap=cost_gap, exact_feasible=False,
                                gap_ok=gap_ok, violations=violations)

    lower_ok = oracle.cost <= rbdp.cost + TOL
    within = rbdp.cost <= oracle.cost + cost_gap + TOL
    if sim.feasible and not lower_ok:
        raise CrossCheckError("rbdp cost below the exact optimum with a feasible control",
                              _dump(inst, oracle=oracle, rbdp=rbdp))
    if not within:
        logger.warning(f"rbdp cost {rbdp.cost:.6g} exceeds oracle {oracle.cost:.6g} + gap {cost_gap:.6g}")
        if strict:
            raise CrossCheckError("rbdp cost exceeds the rounding cost gap",
                                  _dump(inst, oracle=oracle, rbdp=rbdp))
    if violations:
        logger.warning(f"rbdp control leaves the exact feasible set: {violations[0]}")

    return CrossCheckReport(
        status="ok",
        safe_capacity=safe_capacity,
        oracle_cost=oracle.cost,
        rbdp_cost=rbdp.cost,
        cost_gap=cost_gap,
        lower_bound_ok=lower_ok,
        within_gap=within,
        exact_feasible=sim.feasible,
        gap_ok=gap_ok,
        violations=violations,
    )


def random_instance(rng: np.random.Generator, max_steps: int = 5, max_inputs: int = 4,
                    max_levels: int = 50, lossless: bool = False) -> Instance:
    """Small random instance for the property campaign.

    Consumption sits on the purchase grid and V_init leaves room for the capacity margin, so
    buying exactly the consumption is always feasible, with or without the margin.
    """
    m = int(rng.integers(1, max_steps + 1))
    h_v = float(rng.choice([1.0, 2.0, 5.0]))
    h_x = h_v * float(rng.choice([5, 10, 20]))
    n_inputs = int(rng.integers(2, max_inputs + 1))
    cap_steps = int(rng.integers(m + 2, max_levels))
    cap_max = cap_steps * h_v

    if lossless:
        beta, eta_in, eta_out = 0.0, 1.0, 1.0
    else:
        beta = float(rng.choice([0.0, 0.05, 0.1]))
        eta_in = float(rng.choice([0.8, 0.9, 0.95, 1.0]))
        eta_out = float(rng.choice([0.8, 0.9, 0.95, 1.0]))

    spec = StorageSpec(
        cap_min=0.0,
        cap_max=cap_max,
        buy_min=0.0,
        buy_max=h_x * (n_inputs - 1),
        eta_in=eta_in,
        eta_out=eta_out,
        loss=LossFunction(beta=beta),
        y_max=float(rng.choice([0.5, 1.0])) * cap_max,
    )
    v_init = h_v * int(rng.integers(0, cap_steps - m - 1))
    v_final = 0.0 if rng.random() < 0.7 else h_v * int(rng.integers(0, cap_steps - m))
    return Instance(
        prices=tuple(float(p) for p in rng.integers(-5, 50, size=m) / 100.0),
        consumption=tuple(h_x * float(z) for z in rng.integers(0, n_inputs, size=m)),
        v_init=v_init,
        v_final=v_final,
        h_x=h_x,
        h_v=h_v,
        spec=spec,
        name="random",
    )


def run_campaign(n: int = 200, seed: int = 0, safe_capacity: bool = True,
                 lossless: bool = False, strict: bool = False) -> list[CrossCheckReport]:
    """Cross-check n seeded random instances; strict also fails on the cost-gap bound."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(n):
        inst = random_instance(rng, lossless=lossless)
        reports.append(oracle_cross_check(inst, safe_capacity=safe_capacity, strict=strict))
        if (i + 1) % 50 == 0:
            logger.info(f"cross-check campaign: {i + 1}/{n} instances")
    return reports
