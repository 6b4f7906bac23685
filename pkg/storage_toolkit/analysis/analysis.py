"""
Experiments on top of the RBDP solver: baseline cost, capacity sweep, joint vs. separate
horizons, runtime scaling, and year-view heatmaps. `emit_results` writes any of the results
as CSV or JSON with the run configuration embedded.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import date, timedelta
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ..data_io import PriceSeries, Scenario
from ..model import Instance, Solution, cost_of, floor_h
from ..oracle import CrossCheckReport
from ..rbdp import solve
from ..utils.errors import InfeasibleInstanceError, InvalidArgumentError
from ..utils.settings import worker_count

logger = logging.getLogger(__name__)

__all__ = [
    "SweepRow",
    "SweepResult",
    "JointComparison",
    "BenchRow",
    "BenchResult",
    "baseline_cost",
    "sweep_capacity",
    "compare_joint_vs_separate",
    "runtime_bench",
    "purchase_heatmap",
    "price_heatmap",
    "emit_results",
]

COST_TOL = 1e-6


def baseline_cost(inst: Instance) -> float:
    """Cost of buying exactly the consumption every hour with the storage unused.

    A reference value only: it ignores the h_x grid when Z_t is not a multiple of h_x.
    """
    return cost_of(inst.prices, inst.consumption)


class SweepRow(NamedTuple):
    capacity: float
    cost: float | None
    savings: float | None
    status: str = "ok"
    message: str = ""


class SweepResult(BaseModel):
    baseline: float
    rows: list[SweepRow]

    def is_monotone(self) -> bool:
        """Cost non-increasing in capacity over the feasible rows."""
        costs = [r.cost for r in self.rows if r.cost is not None]
        return all(b <= a + COST_TOL for a, b in zip(costs, costs[1:]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "capacity": [r.capacity for r in self.rows],
                "cost": [r.cost for r in self.rows],
                "savings": [r.savings for r in self.rows],
            }
        )


def _solve_capacity(scenario: Scenario, start, end, capacity: float, y_max: float | None,
                    safe_capacity: bool, baseline: float) -> SweepRow:
    # boundary levels above C are lowered to C, so C = 0 is the storage-free baseline
    v_init = min(scenario.v_init, capacity)
    v_final = min(scenario.v_final, floor_h(capacity, scenario.h_v))
    if (v_init, v_final) != (scenario.v_init, scenario.v_final):
        logger.info(f"capacity={capacity}: boundary levels clamped to V_init={v_init}, V_final={v_final}")
    try:
        inst = scenario.instance(start, end, v_init=v_init, v_final=v_final, cap_max=capacity,
                                 y_max=capacity / 2.0 if y_max is None else y_max)
        cost = solve(inst, safe_capacity=safe_capacity).cost
    except (InfeasibleInstanceError, InvalidArgumentError) as e:
        first_line = str(e).splitlines()[0]
        return SweepRow(capacity, None, None, "infeasible", first_line)
    return SweepRow(capacity, cost, baseline - cost)


def sweep_capacity(scenario: Scenario, capacities: Sequence[float], start=None, end=None,
                   y_max: float | None = None, safe_capacity: bool = False,
                   max_workers: int | None = None) -> SweepResult:
    """One rbdp solve per capacity; y_max follows C/2 unless given.

    Rows come back ordered by capacity. Boundary levels above a capacity are clamped to it, and
    infeasible capacities are reported per row. Invalid device parameters raise.
    """
    capacities = [float(c) for c in capacities]
    if not capacities:
        raise InvalidArgumentError("no capacities to sweep")
    if any(b <= a for a, b in zip(capacities, capacities[1:])):
        raise InvalidArgumentError("capacities must be strictly increasing")

    baseline = baseline_cost(scenario.instance(start, end))
    if max_workers is None:
        max_workers = worker_count()
    n = len(capacities)
    workers = max(1, min(n, 10) if max_workers <= 0 else min(max_workers, n))
    logger.info(f"Sweeping {n} capacities ({capacities[0]} .. {capacities[-1]} kWh) on {workers} workers")

    rows: list[SweepRow] = []
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futs = {
            ex.submit(_solve_capacity, scenario, start, end, c, y_max, safe_capacity, baseline): c
            for c in capacities
        }
        for i, fut in enumerate(as_completed(futs), start=1):
            row = fut.result()
            rows.append(row)
            if row.status == "ok":
                logger.info(f"[{i}/{n}] capacity={row.capacity} cost={row.cost:.2f}")
            else:
                logger.warning(f"[{i}/{n}] capacity={row.capacity} infeasible: {row.message}")

    rows.sort(key=lambda r: r.capacity)
    result = SweepResult(baseline=baseline, rows=rows)

    if not result.is_monotone():
        logger.warning("Sweep cost is not non-increasing in capacity")
    if scenario.spec.buy_min == 0:
        negative = [r.capacity for r in rows if r.savings is not None and r.savings < -COST_TOL]
        if negative:
            logger.warning(f"Negative savings at capacities {negative}")
    return result


class JointComparison(BaseModel):
    days: list[date]
    boundary: float
    separate_costs: list[float | None]
    separate_total: float | None
    joint_cost: float | None
    dominance_holds: bool | None
    messages: list[str] = []


def compare_joint_vs_separate(scenario: Scenario, days: Sequence[date], boundary: float = 100.0,
                              safe_capacity: bool = False) -> JointComparison:
    """Each day solved alone between fixed boundary levels vs. all days solved as one horizon."""
    days = sorted(days)
    if not days:
        raise InvalidArgumentError("no days to compare")
    if any(b - a != timedelta(days=1) for a, b in zip(days, days[1:])):
        raise InvalidArgumentError("days must be contiguous for the joint run")

    messages: list[str] = []
    separate: list[float | None] = []
    for day in days:
        try:
            inst = scenario.instance(day, day, v_init=boundary, v_final=boundary)
            separate.append(solve(inst, safe_capacity=safe_capacity).cost)
        except InfeasibleInstanceError as e:
            separate.append(None)
            messages.append(f"{day}: {e}")
            logger.warning(f"Separate run for {day} is infeasible: {e}")

    try:
        inst = scenario.instance(days[0], days[-1], v_init=boundary, v_final=boundary)
        joint = solve(inst, safe_capacity=safe_capacity).cost
    except InfeasibleInstanceError as e:
        joint = None
        messages.append(f"joint: {e}")
        logger.warning(f"Joint run is infeasible: {e}")

    total = None if any(c is None for c in separate) else sum(separate)
    dominance = None
    if total is not None and joint is not None:
        dominance = joint <= total + COST_TOL
        if not dominance:
            logger.warning(f"Joint cost {joint:.2f} exceeds the separate total {total:.2f}")
        logger.info(f"Separate total {total:.2f}, joint {joint:.2f}")

    return JointComparison(days=days, boundary=boundary, separate_costs=separate,
                           separate_total=total, joint_cost=joint, dominance_holds=dominance,
                           messages=messages)


class BenchRow(NamedTuple):
    m: int
    seconds: float


class BenchResult(BaseModel):
    rows: list[BenchRow]
    slope: float
    intercept: float
    r2: float

    def doubling_ratios(self) -> list[float]:
        """Time ratio between consecutive horizons where m doubles."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if b.m == 2 * a.m and a.seconds > 0:
                out.append(b.seconds / a.seconds)
        return out


def _linear_fit(ms: np.ndarray, secs: np.ndarray) -> tuple[float, float, float]:
    if ms.size < 2:
        return float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(ms, secs, 1)
    fitted = slope * ms + intercept
    ss_tot = float(np.sum((secs - secs.mean()) ** 2))
    ss_res = float(np.sum((secs - fitted) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def runtime_bench(scenario: Scenario, horizons: Sequence[int], repeats: int = 3,
                  safe_capacity: bool = False) -> BenchResult:
    """Best-of-`repeats` wall time of rbdp over the first m hours, for every m in horizons."""
    if repeats < 1:
        raise InvalidArgumentError("repeats must be >= 1")
    rows = []
    for m in sorted(set(int(h) for h in horizons)):
        inst = scenario.window(m)
        best = float("inf")
        for _ in range(repeats):
            start = time.perf_counter()
            try:
                solve(inst, safe_capacity=safe_capacity)
            except InfeasibleInstanceError as e:
                logger.warning(f"m={m}: {e}")
            best = min(best, time.perf_counter() - start)
        rows.append(BenchRow(m, best))
        logger.info(f"m={m}: {best:.4f} s")

    slope, intercept, r2 = _linear_fit(np.array([r.m for r in rows], dtype=float),
                                       np.array([r.seconds for r in rows]))
    logger.info(f"Linear fit: {slope:.3e} s per step, R^2={r2:.4f}")
    return BenchResult(rows=rows, slope=slope, intercept=intercept, r2=r2)


def _day_hour_matrix(timestamps: Sequence, values: Sequence[float]) -> pd.DataFrame:
    ts = pd.to_datetime(pd.Series(list(timestamps)))
    frame = pd.DataFrame({"date": ts.dt.date, "hour": ts.dt.hour, "value": list(values)})
    matrix = frame.pivot(index="date", columns="hour", values="value")
    matrix.columns = [int(h) for h in matrix.columns]
    return matrix


def purchase_heatmap(solution: Solution, timestamps: Sequence) -> pd.DataFrame:
    """Purchased kWh as a day x hour matrix."""
    if len(timestamps) != len(solution.x):
        raise InvalidArgumentError(f"{len(timestamps)} timestamps for {len(solution.x)} purchases")
    return _day_hour_matrix(timestamps, solution.x)


def price_heatmap(series: PriceSeries, per_kwh: float = 100.0) -> pd.DataFrame:
    """Prices in € per `per_kwh` kWh as a day x hour matrix."""
    return _day_hour_matrix(series.timestamps, [p * per_kwh for p in series.prices])


def _tables(result) -> tuple[pd.DataFrame, dict[str, Any]]:
    if isinstance(result, Solution):
        frame = pd.DataFrame({
            "t": range(1, len(result.x) + 1),
            "x": result.x, "y": result.y, "zeta": result.zeta, "V": result.levels,
        })
        return frame, result.as_record()
    if isinstance(result, SweepResult):
        return result.to_frame(), {"baseline": result.baseline,
                                   "rows": [r._asdict() for r in result.rows]}
    if isinstance(result, JointComparison):
        frame = pd.DataFrame({
            "run": [str(d) for d in result.days] + ["joint"],
            "cost": result.separate_costs + [result.joint_cost],
        })
        return frame, result.model_dump(mode="json")
    if isinstance(result, BenchResult):
        frame = pd.DataFrame(result.rows, columns=["m", "seconds"])
        return frame, {**result.model_dump(mode="json"), "rows": [r._asdict() for r in result.rows],
                       "doubling_ratios": result.doubling_ratios()}
    if isinstance(result, list) and all(isinstance(r, CrossCheckReport) for r in result):
        records = [r.model_dump(mode="json") for r in result]
        frame = pd.DataFrame(records).drop(columns=["violations"], errors="ignore")
        return frame, {"reports": records}
    if isinstance(result, dict):
        return pd.DataFrame([{k: v for k, v in result.items() if not isinstance(v, (list, dict))}]), dict(result)
    if isinstance(result, pd.DataFrame):
        frame = result.reset_index() if result.index.name else result.copy()
        frame.columns = [str(c) for c in frame.columns]
        return frame, {"rows": json.loads(frame.to_json(orient="records", date_format="iso", default_handler=str))}
    raise InvalidArgumentError(f"cannot emit results of type {type(result).__name__}")


def emit_results(result, path: Path | str, fmt: str = "json", config: dict[str, Any] | None = None) -> Path:
    """Write result as CSV (leading `# key: value` config lines) or JSON (`config` object)."""
    path = Path(path)
    frame, payload = _tables(result)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, mode="w", newline="") as f:
            for key, value in (config or {}).items():
                f.write(f"# {key}: {value}\n")
            frame.to_csv(f, index=False, lineterminator="\n")
    elif fmt == "json":
        document = {"config": config or {}, **payload}
        path.write_text(json.dumps(document, indent=2, default=str) + "\n")
    else:
        raise InvalidArgumentError(f"unknown output format '{fmt}'")
    logger.info(f"Results written to {path}")
    return path


# Examples:
# scenario = Scenario(series=parse_price_csv("prices_2018.csv"), spec=spec)
# sweep_capacity(scenario, range(0, 5001, 10), start=date(2018, 6, 15), end=date(2018, 6, 21))
# compare_joint_vs_separate(scenario, [date(2018, 1, 8), date(2018, 1, 9)])
