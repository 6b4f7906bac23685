import numpy as np
import pytest
from numpy.testing import assert_allclose

from storage_toolkit.model import (
    Instance,
    LossFunction,
    SolveMethod,
    StorageSpec,
    floor_index,
    grid_bounds,
    simulate,
    step_levels,
)
from storage_toolkit.rbdp import (
    apply_capacity_margin,
    backtrack,
    error_budget,
    predecessor_window,
    rbdp_solve,
    rounding_gap,
    solve,
)
from storage_toolkit.utils.errors import (
    InfeasibleInstanceError,
    InvalidArgumentError,
    MarginInfeasibleError,
)


class TestSolve:
    """Proves: the recursion finds the hand-computed optimum and backtracks it."""

    def test_buy_ahead_of_expensive_step(self, three_step):
        sol = solve(three_step)
        assert sol.x == (200.0, 0.0, 100.0)
        assert sol.levels == (100.0, 0.0, 0.0)
        assert sol.cost == pytest.approx(300.0)
        assert sol.method is SolveMethod.rbdp
        assert sol.bound_gap == pytest.approx(30.0)

    def test_single_step(self, make_instance):
        sol = solve(make_instance([1.0]))
        assert sol.x == (100.0,)
        assert sol.cost == pytest.approx(100.0)

    def test_final_costs_table(self, three_step):
        _, tables = rbdp_solve(three_step)
        costs = tables.final_costs()
        assert costs[0.0] == pytest.approx(300.0)
        assert max(costs) == 300.0
        assert costs[300.0] == pytest.approx(2400.0)
        assert all(lvl % 100.0 == 0.0 for lvl in costs)

    def test_unreachable_final_level(self, make_instance):
        inst = make_instance([1.0, 10.0, 1.0], v_final=600.0)
        with pytest.raises(InfeasibleInstanceError) as err:
            solve(inst)
        assert err.value.largest_reachable_level == 300.0
        assert err.value.method == "rbdp"

    def test_backtrack_rejects_unreachable_level(self, three_step):
        _, tables = rbdp_solve(three_step)
        with pytest.raises(InvalidArgumentError):
            backtrack(tables, 499.0)

    def test_lossy_control_is_feasible(self, lossy_instance):
        sol = solve(lossy_instance)
        assert len(sol.x) == lossy_instance.m
        assert sol.levels[-1] >= lossy_instance.v_final
        assert all(x % 100.0 == 0.0 for x in sol.x)


class TestPredecessorWindow:
    """Proves: the window is exactly the set of grid levels flooring onto d."""

    def test_identity_loss(self, make_spec):
        assert predecessor_window(make_spec(), 50.0, 100.0, 100.0, 1.0) == (50.0, 50.0)

    def test_lossy_window_keeps_both_levels(self, make_spec):
        spec = make_spec(loss=LossFunction(beta=0.1))
        # g(100) = 90 and g(101) = 90.9 both floor to 90
        assert predecessor_window(spec, 90.0, 100.0, 100.0, 1.0) == (100.0, 101.0)

    def test_empty_window(self, lossy_spec):
        lb, ub = predecessor_window(lossy_spec, 0.0, 300.0, 200.0, 1.0)
        assert lb > ub

    @pytest.mark.parametrize("k, Z", [(100.0, 200.0), (200.0, 200.0), (300.0, 200.0)])
    @pytest.mark.parametrize("d", [0.0, 50.0, 137.0, 400.0])
    def test_matches_brute_force(self, lossy_spec, k, Z, d):
        lo, hi = grid_bounds(lossy_spec, 1.0)
        grid = np.arange(lo, hi + 1) * 1.0
        cells = floor_index(step_levels(lossy_spec, grid, np.array([k]), Z)[0], 1.0)
        hits = grid[cells == int(d)]
        lb, ub = predecessor_window(lossy_spec, d, k, Z, 1.0)
        if hits.size == 0:
            assert lb > ub
        else:
            assert (lb, ub) == (hits.min(), hits.max())


class TestErrorBudget:
    """Proves: the rounding budget and the capacity margin follow the geometric bound."""

    def test_lossless_budget(self, three_step):
        budget = error_budget(three_step)
        assert budget.eps_tot == pytest.approx(3.0)
        assert budget.cost_gap == pytest.approx(30.0)

    def test_lossy_budget(self, lossy_instance):
        assert error_budget(lossy_instance).eps_tot == pytest.approx((1 - 0.9 ** 6) / 0.1)

    def test_negative_prices_give_zero_gap(self, make_instance):
        assert error_budget(make_instance([-1.0, -2.0])).cost_gap == 0.0

    def test_margin_shrinks_capacity(self, three_step):
        assert apply_capacity_margin(three_step).spec.cap_max == 497.0
        assert three_step.spec.cap_max == 500.0

    def test_margin_keeps_initial_level(self, make_instance):
        inst = make_instance([1.0, 10.0, 1.0], v_init=499.0)
        shrunk = apply_capacity_margin(inst)
        assert shrunk.spec.cap_max == 497.0
        assert shrunk.v_init == 499.0
        assert shrunk.spec == StorageSpec.model_validate(shrunk.spec.model_dump())
        assert simulate(inst.spec, inst, solve(inst, safe_capacity=True).x).feasible

    def test_margin_can_leave_nothing(self, make_instance):
        inst = make_instance([1.0, 1.0, 1.0], cap_max=3.0)
        with pytest.raises(MarginInfeasibleError):
            solve(inst, safe_capacity=True)
        with pytest.raises(InfeasibleInstanceError):
            apply_capacity_margin(inst)


class TestRoundingGap:
    """Proves: exact levels exceed rounded levels by at most sum g^(t-i)(h_V) < t h_V."""

    def test_gap_within_bound(self, lossy_instance):
        gap = rounding_gap(lossy_instance, solve(lossy_instance))
        steps = np.arange(1, lossy_instance.m + 1)
        assert np.all(gap.gap >= -1e-9)
        assert np.all(gap.gap <= gap.bound + 1e-9)
        assert np.all(gap.bound <= steps * lossy_instance.h_v + 1e-12)
        assert_allclose(gap.bound[:2], [1.0, 1.9])

    def test_safe_capacity_keeps_exact_trajectory_inside(self, lossy_spec):
        spec = lossy_spec.model_copy(update={"cap_max": 300.0})
        inst = Instance(
            prices=(0.05, 0.5, 0.05, 0.5, 0.05, 0.5, 0.05, 0.5),
            consumption=(200.0,) * 8,
            v_init=100.0,
            v_final=100.0,
            h_x=100.0,
            h_v=1.0,
            spec=spec,
        )
        sol = solve(inst, safe_capacity=True)
        sim = simulate(inst.spec, inst, sol.x)
        assert sim.feasible
        assert max(sim.trajectory) <= 300.0 + 1e-9

    def test_week_with_default_parameters(self, rng, lossy_spec):
        prices = tuple(float(p) for p in rng.uniform(0.02, 0.08, size=168).round(5))
        inst = Instance(prices=prices, consumption=(200.0,) * 168, v_init=100.0, v_final=100.0,
                        h_x=100.0, h_v=1.0, spec=lossy_spec)
        sol = solve(inst, safe_capacity=True)
        assert simulate(inst.spec, inst, sol.x).feasible
        assert sol.levels[-1] >= 100.0
