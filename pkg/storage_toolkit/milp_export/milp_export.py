"""
Export of the linear programming model (and its integer variant) as LP / MPS files.

Variables per step t = 1..m, named with zero-padded indices so name order equals the column order
x_1..x_m, y_1..y_m, zeta_1..zeta_m, V_1..V_m:

    buy_t     x~_t = x_t / h_x    (integer unless relaxed; scale h_x)
    charge_t  y_t                 0 <= y_t <= y_max
    draw_t    zeta_t              zeta_t >= 0
    level_t   V_t                 c <= V_t <= C

Rows:

    dyn_t    V_t - (1 - beta) V_{t-1} - eta_in y_t + zeta_t / eta_out = 0   (V_0 = V_init on the rhs)
    bal_t    h_x x~_t - y_t + zeta_t = Z_t
    link_t   y_t - h_x x~_t <= 0
    final    V_m >= V_final

Objective: minimise sum_t p_t h_x x~_t. The files are written through PuLP, no solver is run.
"""

import logging
import re
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import pulp
from pydantic import BaseModel

from ..model import Instance, Solution, simulate
from ..utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

__all__ = [
    "Sense",
    "ModelFormat",
    "VariableDef",
    "ConstraintRow",
    "ModelDocument",
    "build_model",
    "write_model_file",
    "solution_point",
    "row_residuals",
]


class Sense(Enum):
    eq = "="
    le = "<="
    ge = ">="


class ModelFormat(Enum):
    lp = "lp"
    mps = "mps"


class VariableDef(NamedTuple):
    name: str
    lower: float
    upper: float | None
    integer: bool
    scale: float = 1.0


class ConstraintRow(NamedTuple):
    name: str
    coefficients: dict[str, float]
    sense: Sense
    rhs: float


class ModelDocument(BaseModel):
    name: str
    relaxed: bool
    variables: list[VariableDef]
    objective: dict[str, float]
    rows: list[ConstraintRow]

    @property
    def integer_variables(self) -> list[str]:
        return [v.name for v in self.variables if v.integer]


def _names(m: int) -> dict[str, list[str]]:
    width = max(4, len(str(m)))
    return {
        prefix: [f"{prefix}_{t:0{width}d}" for t in range(1, m + 1)]
        for prefix in ("buy", "charge", "draw", "level")
    }


def build_model(inst: Instance, relaxed: bool = False) -> ModelDocument:
    spec = inst.spec
    r = spec.loss.retention
    h_x = inst.h_x
    names = _names(inst.m)
    buy, charge, draw, level = names["buy"], names["charge"], names["draw"], names["level"]

    variables = (
        [VariableDef(n, spec.buy_min / h_x, spec.buy_max / h_x, not relaxed, h_x) for n in buy]
        + [VariableDef(n, 0.0, spec.y_max, False) for n in charge]
        + [VariableDef(n, 0.0, None, False) for n in draw]
        + [VariableDef(n, spec.cap_min, spec.cap_max, False) for n in level]
    )

    rows: list[ConstraintRow] = []
    for t in range(inst.m):
        coef = {level[t]: 1.0, charge[t]: -spec.eta_in, draw[t]: 1.0 / spec.eta_out}
        if t == 0:
            rhs = r * inst.v_init
        else:
            coef[level[t - 1]] = -r
            rhs = 0.0
        rows.append(ConstraintRow(f"dyn_{buy[t][4:]}", coef, Sense.eq, rhs))
    for t in range(inst.m):
        rows.append(ConstraintRow(f"bal_{buy[t][4:]}", {buy[t]: h_x, charge[t]: -1.0, draw[t]: 1.0},
                                  Sense.eq, float(inst.consumption[t])))
    for t in range(inst.m):
        rows.append(ConstraintRow(f"link_{buy[t][4:]}", {charge[t]: 1.0, buy[t]: -h_x}, Sense.le, 0.0))
    rows.append(ConstraintRow("final", {level[-1]: 1.0}, Sense.ge, inst.v_final))

    objective = {n: float(p) * h_x for n, p in zip(buy, inst.prices)}
    name = re.sub(r"[^A-Za-z0-9_]", "_", inst.name)
    logger.info(f"Model {name}: {len(variables)} variables, {len(rows)} rows, relaxed={relaxed}")
    return ModelDocument(name=name, relaxed=relaxed, variables=variables, objective=objective, rows=rows)


def _to_pulp(doc: ModelDocument) -> pulp.LpProblem:
    prob = pulp.LpProblem(doc.name, pulp.LpMinimize)
    lp_vars = {
        v.name: pulp.LpVariable(v.name, lowBound=v.lower, upBound=v.upper,
                                cat=pulp.LpInteger if v.integer else pulp.LpContinuous)
        for v in doc.variables
    }
    prob += pulp.lpSum(c * lp_vars[n] for n, c in doc.objective.items()), "cost"
    for row in doc.rows:
        expr = pulp.lpSum(c * lp_vars[n] for n, c in row.coefficients.items())
        if row.sense is Sense.eq:
            prob += expr == row.rhs, row.name
        elif row.sense is Sense.le:
            prob += expr <= row.rhs, row.name
        else:
            prob += expr >= row.rhs, row.name
    return prob


def write_model_file(doc: ModelDocument, path: Path | str, fmt: ModelFormat | str = ModelFormat.lp) -> Path:
    """Write doc as LP or MPS text; a directory path gets `<name>.<lp|mps>` inside it."""
    fmt = ModelFormat(fmt)
    path = Path(path)
    if path.is_dir():
        path = path / f"{doc.name}.{fmt.value}"
    prob = _to_pulp(doc)
    try:
        if fmt is ModelFormat.lp:
            prob.writeLP(str(path))
        else:
            prob.writeMPS(str(path))
    except OSError as e:
        raise OSError(f"{path}: cannot write model file ({e})") from e
    logger.info(f"Model written to {path}")
    return path


def solution_point(inst: Instance, solution: Solution) -> dict[str, float]:
    """Variable values of a solution, with fill levels replayed under exact dynamics."""
    if len(solution.x) != inst.m:
        raise InvalidArgumentError(f"solution has {len(solution.x)} steps, instance has {inst.m}")
    sim = simulate(inst.spec, inst, solution.x)
    names = _names(inst.m)
    point = {}
    for t in range(inst.m):
        point[names["buy"][t]] = solution.x[t] / inst.h_x
        point[names["charge"][t]] = sim.y[t]
        point[names["draw"][t]] = sim.zeta[t]
        point[names["level"][t]] = sim.trajectory[t]
    return point


def row_residuals(doc: ModelDocument, point: dict[str, float]) -> dict[str, float]:
    """Violation (>= 0) of every row and variable bound at point; bounds are keyed `<var>:bounds`."""
    missing = [v.name for v in doc.variables if v.name not in point]
    if missing:
        raise InvalidArgumentError(f"point lacks values for {len(missing)} variables, e.g. {missing[0]}")

    out = {}
    for row in doc.rows:
        lhs = sum(c * point[n] for n, c in row.coefficients.items())
        if row.sense is Sense.eq:
            out[row.name] = abs(lhs - row.rhs)
        elif row.sense is Sense.le:
            out[row.name] = max(lhs - row.rhs, 0.0)
        else:
            out[row.name] = max(row.rhs - lhs, 0.0)
    for v in doc.variables:
        value = point[v.name]
        over = value - v.upper if v.upper is not None else 0.0
        out[f"{v.name}:bounds"] = max(v.lower - value, over, 0.0)
    return out


if __name__ == "__main__":
    from ..model import LossFunction, StorageSpec

    spec = StorageSpec(cap_max=500, buy_max=200, loss=LossFunction(beta=0.1), y_max=250)
    inst = Instance(prices=(0.1,), consumption=(100,), v_init=100, v_final=0, h_x=100, h_v=1,
                    spec=spec, name="demo")
    print(write_model_file(build_model(inst), Path("."), ModelFormat.lp).read_text())

# Example:
# python -m storage_toolkit.milp_export.milp_export
