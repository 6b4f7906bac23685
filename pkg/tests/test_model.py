import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from storage_toolkit.model import (
    LossFunction,
    ceil_h,
    cost_of,
    floor_h,
    floor_index,
    grid_bounds,
    input_grid,
    loss_eval,
    loss_inverse,
    loss_iter,
    simulate,
    step_dynamics,
    step_levels,
    step_policy,
)
from storage_toolkit.utils.errors import InvalidArgumentError


class TestRounding:
    """Proves: floor/ceil land on the grid and absorb floating-point drift."""

    def test_floor_and_ceil(self):
        assert floor_h(5.5, 1.0) == 5.0
        assert ceil_h(5.2, 1.0) == 6.0
        assert ceil_h(5.0, 1.0) == 5.0
        assert floor_h(250.0, 100.0) == 200.0
        assert ceil_h(0.0, 1.0) == 0.0

    def test_drift_is_absorbed(self):
        assert floor_h(179.99999999999997, 1.0) == 180.0
        assert ceil_h(180.00000000000003, 1.0) == 180.0

    def test_floor_index_on_arrays(self):
        idx = floor_index(np.array([0.0, 0.99, 1.0, 2.5]), 1.0)
        assert idx.tolist() == [0, 0, 1, 2]

    @pytest.mark.parametrize("h", [0.0, -1.0])
    def test_non_positive_step_rejected(self, h):
        with pytest.raises(InvalidArgumentError):
            floor_h(1.0, h)
        with pytest.raises(InvalidArgumentError):
            ceil_h(1.0, h)

    def test_negative_energy_rejected(self):
        with pytest.raises(InvalidArgumentError):
            floor_h(-1.0, 1.0)


class TestLossFunction:
    """Proves: the linear loss, its inverse and its iterates agree."""

    def test_evaluate_inverse_iterate(self):
        g = LossFunction(beta=0.1)
        assert loss_eval(g, 100.0) == pytest.approx(90.0)
        assert loss_inverse(g, 90.0) == pytest.approx(100.0)
        assert loss_iter(g, 100.0, 2) == pytest.approx(81.0)
        assert loss_iter(g, 100.0, 0) == 100.0

    def test_identity_for_zero_beta(self):
        g = LossFunction(beta=0.0)
        assert g.evaluate(42.0) == 42.0
        assert g.inverse(42.0) == 42.0
        assert g.retention == 1.0

    def test_beta_range(self):
        with pytest.raises(ValidationError):
            LossFunction(beta=1.0)
        with pytest.raises(ValidationError):
            LossFunction(beta=-0.1)

    def test_negative_argument(self):
        with pytest.raises(InvalidArgumentError):
            LossFunction(beta=0.1).evaluate(-1.0)


class TestDynamics:
    """Proves: surplus is stored, shortfall withdrawn, and the array path matches the scalar one."""

    def test_step_policy(self):
        assert step_policy(200.0, 300.0) == (100.0, 0.0)
        assert step_policy(200.0, 100.0) == (0.0, 100.0)
        assert step_policy(200.0, 200.0) == (0.0, 0.0)

    def test_step_dynamics(self, lossy_spec):
        charged = step_dynamics(lossy_spec, 100.0, 300.0, 200.0)
        assert charged.y == 100.0
        assert charged.v_exact == pytest.approx(180.0)

        drawn = step_dynamics(lossy_spec, 100.0, 100.0, 200.0)
        assert drawn.zeta == 100.0
        assert drawn.v_exact == pytest.approx(90.0 - 100.0 / 0.95)

    def test_vectorised_matches_scalar_exactly(self, lossy_spec):
        prev = np.array([0.0, 17.0, 333.0, 999.0])
        ks = np.array([0.0, 100.0, 200.0, 300.0, 400.0])
        table = step_levels(lossy_spec, prev, ks, 200.0)
        for i, k in enumerate(ks):
            for j, v in enumerate(prev):
                assert table[i, j] == step_dynamics(lossy_spec, v, k, 200.0).v_exact


class TestInstance:
    """Proves: instances validate their invariants and snap V_final onto the grid."""

    def test_grids(self, three_step):
        assert input_grid(three_step).tolist() == [0.0, 100.0, 200.0]
        assert three_step.m == 3

    def test_grid_bounds(self, make_spec):
        assert grid_bounds(make_spec(cap_min=0.5, cap_max=10.7), 1.0) == (1, 10)

    def test_length_mismatch(self, make_instance):
        with pytest.raises(ValidationError):
            make_instance([1.0, 2.0], consumption=[100.0])

    def test_purchase_bounds_on_grid(self, make_instance):
        with pytest.raises(ValidationError):
            make_instance([1.0], buy_max=250.0)

    def test_v_init_inside_capacity(self, make_instance):
        with pytest.raises(ValidationError):
            make_instance([1.0], v_init=600.0)

    def test_empty_horizon(self, make_instance):
        with pytest.raises(ValidationError):
            make_instance([])

    def test_final_level_snapped_up(self, make_instance, caplog):
        inst = make_instance([1.0], v_final=100.5)
        assert inst.v_final == 101.0
        assert "snapped" in caplog.text

    def test_final_level_above_capacity_is_allowed(self, make_instance):
        assert make_instance([1.0], v_final=600.0).v_final == 600.0

    def test_with_spec(self, three_step):
        wider = three_step.with_spec(cap_max=800.0)
        assert wider.spec.cap_max == 800.0
        assert wider.prices == three_step.prices


class TestSimulate:
    """Proves: exact replay reports the trajectory and every violated constraint."""

    def test_feasible_control(self, three_step):
        sim = simulate(three_step.spec, three_step, [200.0, 0.0, 100.0])
        assert sim.feasible
        assert_allclose(sim.trajectory, [100.0, 0.0, 0.0])
        assert sim.y == (100.0, 0.0, 0.0)
        assert sim.zeta == (0.0, 100.0, 0.0)

    def test_violations(self, make_instance):
        inst = make_instance([1.0, 1.0], v_final=50.0, y_max=50.0)
        sim = simulate(inst.spec, inst, [200.0, 0.0])
        kinds = [v.kind for v in sim.violations]
        assert not sim.feasible
        assert "charge_limit" in kinds
        assert "final_level" in kinds

    def test_capacity_and_grid(self, make_instance):
        inst = make_instance([1.0])
        sim = simulate(inst.spec, inst, [50.0])
        kinds = {v.kind for v in sim.violations}
        assert kinds == {"input_grid", "capacity", "final_level"}
        assert sim.violations[0].t == 1

    def test_wrong_length(self, three_step):
        with pytest.raises(InvalidArgumentError):
            simulate(three_step.spec, three_step, [0.0])


class TestCost:
    def test_cost_of(self):
        assert cost_of([0.1, 0.2], [100.0, 100.0]) == pytest.approx(30.0)
        assert cost_of([-0.5], [100.0]) == -50.0

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            cost_of([1.0], [1.0, 2.0])
