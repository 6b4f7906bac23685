"""
Storage model

Domain types of the storage control problem together with the pieces every solver shares:
rounding onto a step grid, the self-discharge (loss) function, the single-step fill-level
dynamics, exact forward simulation and cost evaluation.

Units: energy in kWh, prices in €/kWh, one step = one trading interval (1 h).

Fill levels on the h_V grid are handled as integer indices (level = index * h_V) so grid
membership never depends on floating-point drift. All rounding goes through `floor_h` /
`ceil_h`, which absorb a relative slack of GRID_TOL steps.
"""

import logging
import math
from datetime import datetime
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.errors import InvalidArgumentError, UnsupportedLossError

logger = logging.getLogger(__name__)

__all__ = [
    "GRID_TOL",
    "LossKind",
    "LossFunction",
    "StorageSpec",
    "Instance",
    "StepOutcome",
    "SolveMethod",
    "Solution",
    "Violation",
    "SimulationResult",
    "floor_h",
    "ceil_h",
    "floor_index",
    "loss_eval",
    "loss_inverse",
    "loss_iter",
    "step_policy",
    "step_dynamics",
    "step_levels",
    "input_grid",
    "grid_bounds",
    "is_multiple",
    "simulate",
    "cost_of",
]

# Slack (in grid steps) absorbed by floor/ceil, e.g. 179.99999999999997 floors to 180.
GRID_TOL = 1e-9


def _feas_tol(scale: float) -> float:
    return 1e-9 * max(1.0, abs(scale))


# Rounding onto a step grid
def _check_step(h: float) -> None:
    if not h > 0:
        raise InvalidArgumentError(f"step size must be > 0, got {h}")


def floor_index(V, h: float):
    """Grid index of the floor of V; accepts scalars and numpy arrays."""
    _check_step(h)
    return np.floor(np.asarray(V, dtype=float) / h + GRID_TOL).astype(np.int64)


def floor_h(V: float, h: float) -> float:
    """Largest multiple of h that is <= V."""
    _check_step(h)
    if V < 0:
        raise InvalidArgumentError(f"floor_h expects V >= 0, got {V}")
    return math.floor(V / h + GRID_TOL) * h


def ceil_h(V: float, h: float) -> float:
    """Smallest multiple of h that is >= V."""
    _check_step(h)
    if V < 0:
        raise InvalidArgumentError(f"ceil_h expects V >= 0, got {V}")
    return math.ceil(V / h - GRID_TOL) * h


def is_multiple(value: float, h: float) -> bool:
    q = value / h
    return abs(q - round(q)) <= GRID_TOL * max(1.0, abs(q))


# Loss function
class LossKind(Enum):
    linear = "linear"


class LossFunction(BaseModel):
    """Self-discharge map g: energy left after one step without charging or withdrawal.

    The linear variant is g(V) = (1 - beta) V. beta = 0 gives the identity (lossless storage).
    """

    model_config = ConfigDict(frozen=True)

    kind: LossKind = LossKind.linear
    beta: float = 0.1

    @field_validator("beta")
    @classmethod
    def beta_range(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {v}")
        return v

    @property
    def is_linear(self) -> bool:
        return self.kind is LossKind.linear

    @property
    def retention(self) -> float:
        """Slope of g for the linear variant."""
        if not self.is_linear:
            raise UnsupportedLossError(f"no constant retention for {self.kind.value} loss")
        return 1.0 - self.beta

    def apply(self, V):
        """g without argument checks; used by the dynamics on scalars and arrays alike."""
        return (1.0 - self.beta) * V

    def evaluate(self, V: float) -> float:
        if V < 0:
            raise InvalidArgumentError(f"loss function expects V >= 0, got {V}")
        return self.apply(V)

    def inverse(self, w: float) -> float:
        if w < 0:
            raise InvalidArgumentError(f"loss inverse expects w >= 0, got {w}")
        return w / (1.0 - self.beta)

    def iterate(self, V: float, k: int) -> float:
        """k-times iterated g, g^0 = id."""
        if V < 0 or k < 0:
            raise InvalidArgumentError(f"loss iteration expects V >= 0 and k >= 0, got {V}, {k}")
        return (1.0 - self.beta) ** k * V


def loss_eval(g: LossFunction, V: float) -> float:
    return g.evaluate(V)


def loss_inverse(g: LossFunction, w: float) -> float:
    return g.inverse(w)


def loss_iter(g: LossFunction, V: float, k: int) -> float:
    return g.iterate(V, k)


# Device and problem instance
class StorageSpec(BaseModel):
    """Physical parameters of the storage device (kWh and kWh per step)."""

    model_config = ConfigDict(frozen=True)

    cap_min: float = 0.0
    cap_max: float
    buy_min: float = 0.0
    buy_max: float
    eta_in: float = 0.9
    eta_out: float = 0.95
    loss: LossFunction = Field(default_factory=LossFunction)
    y_max: float

    @model_validator(mode="after")
    def check_bounds(self):
        if not 0 <= self.cap_min <= self.cap_max:
            raise ValueError(f"need 0 <= cap_min <= cap_max, got {self.cap_min}, {self.cap_max}")
        if not 0 <= self.buy_min <= self.buy_max:
            raise ValueError(f"need 0 <= buy_min <= buy_max, got {self.buy_min}, {self.buy_max}")
        if not (0 < self.eta_in <= 1 and 0 < self.eta_out <= 1):
            raise ValueError(f"efficiencies must lie in (0, 1], got {self.eta_in}, {self.eta_out}")
        if self.y_max < 0:
            raise ValueError(f"y_max must be >= 0, got {self.y_max}")
        return self


class Instance(BaseModel):
    """One optimisation problem over m steps."""

    model_config = ConfigDict(frozen=True)

    prices: tuple[float, ...]
    consumption: tuple[float, ...]
    v_init: float
    v_final: float
    h_x: float
    h_v: float
    spec: StorageSpec
    name: str = "instance"
    start: datetime | None = None

    @model_validator(mode="before")
    @classmethod
    def snap_final_level(cls, data):
        if not isinstance(data, dict):
            return data
        v_final, h_v = data.get("v_final"), data.get("h_v")
        if v_final is None or h_v is None or h_v <= 0 or v_final < 0:
            return data
        snapped = ceil_h(float(v_final), float(h_v))
        if snapped != v_final and not math.isclose(snapped, v_final, abs_tol=1e-12):
            logger.warning(f"V_final={v_final} is off the h_V={h_v} grid, snapped up to {snapped}")
            data = {**data, "v_final": snapped}
        return data

    @model_validator(mode="after")
    def check_invariants(self):
        m = len(self.prices)
        if m < 1:
            raise ValueError("horizon must have at least one step")
        if len(self.consumption) != m:
            raise ValueError(
                f"prices and consumption differ in length ({m} vs {len(self.consumption)})"
            )
        if not all(math.isfinite(p) for p in self.prices):
            raise ValueError("prices must be finite")
        if any(z < 0 or not math.isfinite(z) for z in self.consumption):
            raise ValueError("consumption must be finite and >= 0")
        if not (self.h_x > 0 and self.h_v > 0):
            raise ValueError(f"h_x and h_v must be > 0, got {self.h_x}, {self.h_v}")
        if not (is_multiple(self.spec.buy_min, self.h_x) and is_multiple(self.spec.buy_max, self.h_x)):
            raise ValueError(
                f"purchase bounds {self.spec.buy_min}, {self.spec.buy_max} "
                f"must be multiples of h_x={self.h_x}"
            )
        if not self.spec.cap_min <= self.v_init <= self.spec.cap_max:
            raise ValueError(
                f"V_init={self.v_init} outside [{self.spec.cap_min}, {self.spec.cap_max}]"
            )
        if self.v_final < self.spec.cap_min:
            raise ValueError(f"V_final={self.v_final} below cap_min={self.spec.cap_min}")
        return self

    @property
    def m(self) -> int:
        return len(self.prices)

    def price_array(self) -> np.ndarray:
        return np.asarray(self.prices, dtype=float)

    def consumption_array(self) -> np.ndarray:
        return np.asarray(self.consumption, dtype=float)

    def with_spec(self, **changes) -> "Instance":
        """Copy with some StorageSpec fields replaced, re-validated."""
        spec = StorageSpec(**{**self.spec.model_dump(), **changes})
        return Instance(**{**self.model_dump(), "spec": spec})


class StepOutcome(NamedTuple):
    y: float
    zeta: float
    v_exact: float


class SolveMethod(Enum):
    rbdp = "rbdp"
    oracle = "oracle"


class Solution(BaseModel):
    """A control trajectory with its cost. `levels` are the fill levels the solver tracked
    (rounded grid levels for rbdp and the rounded oracle, exact levels for the exact oracle)."""

    model_config = ConfigDict(frozen=True)

    x: tuple[float, ...]
    y: tuple[float, ...]
    zeta: tuple[float, ...]
    levels: tuple[float, ...]
    cost: float
    method: SolveMethod
    bound_gap: float = 0.0

    def as_record(self) -> dict:
        return {
            "method": self.method.value,
            "cost": self.cost,
            "bound_gap": self.bound_gap,
            "x": list(self.x),
            "y": list(self.y),
            "zeta": list(self.zeta),
            "V": list(self.levels),
        }


# Dynamics
def step_policy(Z: float, k: float) -> tuple[float, float]:
    """Surplus purchase is stored, shortfall is withdrawn: (y, zeta)."""
    if Z < 0 or k < 0:
        raise InvalidArgumentError(f"step_policy expects Z >= 0 and k >= 0, got {Z}, {k}")
    return max(k - Z, 0.0), max(Z - k, 0.0)


def step_dynamics(spec: StorageSpec, V_prev: float, k: float, Z: float) -> StepOutcome:
    """Exact post-step fill level V = eta_in y + g(V_prev) - zeta / eta_out.

    The result may leave [cap_min, cap_max]; feasibility is the caller's concern.
    """
    if V_prev < 0:
        raise InvalidArgumentError(f"step_dynamics expects V_prev >= 0, got {V_prev}")
    y, zeta = step_policy(Z, k)
    v = spec.eta_in * y + spec.loss.apply(V_prev) - zeta / spec.eta_out
    return StepOutcome(y=y, zeta=zeta, v_exact=v)


def step_levels(spec: StorageSpec, V_prev: np.ndarray, k: np.ndarray, Z: float) -> np.ndarray:
    """Vectorised `step_dynamics` over inputs k (rows) and previous levels V_prev (columns).

    Uses the same operation order as the scalar version, so results agree bit-for-bit.
    """
    y = np.maximum(k - Z, 0.0)
    zeta = np.maximum(Z - k, 0.0)
    return (spec.eta_in * y)[:, None] + spec.loss.apply(V_prev)[None, :] - (zeta / spec.eta_out)[:, None]


def input_grid(inst: Instance) -> np.ndarray:
    """Purchasable amounts l, l + h_x, ..., u."""
    spec = inst.spec
    n = int(round((spec.buy_max - spec.buy_min) / inst.h_x)) + 1
    return spec.buy_min + inst.h_x * np.arange(n, dtype=float)


def grid_bounds(spec: StorageSpec, h_v: float) -> tuple[int, int]:
    """Index range [lo, hi] of grid levels inside [cap_min, cap_max]; empty when hi < lo."""
    lo = int(round(ceil_h(spec.cap_min, h_v) / h_v))
    hi = int(round(floor_h(spec.cap_max, h_v) / h_v))
    return lo, hi


# Simulation and cost
class Violation(NamedTuple):
    t: int
    kind: str
    message: str


class SimulationResult(NamedTuple):
    trajectory: tuple[float, ...]
    y: tuple[float, ...]
    zeta: tuple[float, ...]
    feasible: bool
    violations: list[Violation]


def simulate(spec: StorageSpec, inst: Instance, x: Sequence[float]) -> SimulationResult:
    """Replay purchases x under exact dynamics from V_init and audit every constraint.

    Time indices in violations are 1-based like the steps they refer to.
    """
    x = [float(v) for v in x]
    if len(x) != inst.m:
        raise InvalidArgumentError(f"control has {len(x)} steps, instance has {inst.m}")

    cap_tol = _feas_tol(spec.cap_max)
    violations: list[Violation] = []
    trajectory, ys, zetas = [], [], []
    v = inst.v_init
    for t, (k, Z) in enumerate(zip(x, inst.consumption), start=1):
        if not spec.buy_min - _feas_tol(spec.buy_min) <= k <= spec.buy_max + _feas_tol(spec.buy_max):
            violations.append(Violation(t, "input_bounds", f"x={k} outside [{spec.buy_min}, {spec.buy_max}]"))
        if not is_multiple(k, inst.h_x):
            violations.append(Violation(t, "input_grid", f"x={k} is not a multiple of h_x={inst.h_x}"))
        y, zeta = step_policy(Z, max(k, 0.0))
        if y > spec.y_max + _feas_tol(spec.y_max):
            violations.append(Violation(t, "charge_limit", f"y={y} exceeds y_max={spec.y_max}"))
        v = spec.eta_in * y + spec.loss.apply(v) - zeta / spec.eta_out
        if v < spec.cap_min - cap_tol:
            violations.append(Violation(t, "capacity", f"V={v} below cap_min={spec.cap_min}"))
        elif v > spec.cap_max + cap_tol:
            violations.append(Violation(t, "capacity", f"V={v} above cap_max={spec.cap_max}"))
        trajectory.append(v)
        ys.append(y)
        zetas.append(zeta)

    if trajectory[-1] < inst.v_final - _feas_tol(inst.v_final):
        violations.append(
            Violation(inst.m, "final_level", f"V_m={trajectory[-1]} below V_final={inst.v_final}")
        )

    return SimulationResult(
        trajectory=tuple(trajectory),
        y=tuple(ys),
        zeta=tuple(zetas),
        feasible=not violations,
        violations=violations,
    )


def cost_of(prices: Sequence[float], x: Sequence[float]) -> float:
    """Sum of p_t x_t, accumulated left to right."""
    if len(prices) != len(x):
        raise InvalidArgumentError(f"prices and x differ in length ({len(prices)} vs {len(x)})")
    total = 0.0
    for p, k in zip(prices, x):
        total += float(p) * float(k)
    return total
