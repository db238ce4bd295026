"""Reward family: formulas, orderings, invariances, custom hooks."""

import numpy as np
import pytest

from procbench.errors import ConfigurationError, RewardHookError
from procbench.rewards import (RewardContext, RewardSelector, abs_error_reward,
                               evaluate, shaped_reward, sparse_reward,
                               squared_error_reward, tracking_reward)


def ctx_for(x, target, u=(0.5,), u_prev=(0.5,), g=()):
    x = np.asarray(x, dtype=float)
    return RewardContext(raw_state=x, normalized_state=x,
                         setpoint=np.asarray(target, dtype=float),
                         action=np.asarray(u, dtype=float),
                         prev_action=np.asarray(u_prev, dtype=float),
                         g=np.asarray(g, dtype=float), t=0)


class TestTracking:
    def test_zero_at_setpoint_with_held_action(self):
        r = tracking_reward([0.5, 0.5], [0.5, 0.5], [0.3], [0.3],
                            np.eye(2), np.eye(1))
        assert r == 0.0

    def test_scalar_case(self):
        r = tracking_reward([0.6], [0.5], [0.3], [0.3], np.eye(1), np.zeros((1, 1)))
        assert r == pytest.approx(-0.01)

    def test_identity_q_zero_r_is_squared_error(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.uniform(0, 1, 3)
            sp = rng.uniform(0, 1, 3)
            r = tracking_reward(x, sp, [0.1], [0.9], np.eye(3), np.zeros((1, 1)))
            assert r == pytest.approx(-np.sum((x - sp) ** 2), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="shapes"):
            tracking_reward([0.5, 0.5], [0.5, 0.5], [0.3], [0.3],
                            np.eye(3), np.eye(1))

    def test_never_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            r = tracking_reward(rng.uniform(0, 1, 2), rng.uniform(0, 1, 2),
                                rng.uniform(0, 1, 1), rng.uniform(0, 1, 1),
                                np.eye(2), 0.5 * np.eye(1))
            assert r <= 0.0


class TestShaped:
    def test_no_violation_is_base(self):
        assert shaped_reward(-0.2, [-1.0, -3.0], 1.0) == -0.2

    def test_paper_lambda_one(self):
        assert shaped_reward(-0.2, [1.0, -3.0], 1.0) == pytest.approx(-1.2)

    def test_zero_lambda_disables(self):
        assert shaped_reward(-0.2, [5.0, 2.0], 0.0) == -0.2

    def test_never_above_base(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            base = -rng.uniform(0, 1)
            g = rng.uniform(-2, 2, 3)
            assert shaped_reward(base, g, 1.7) <= base


class TestNormRewards:
    def test_abs_at_setpoint(self):
        assert abs_error_reward([0.5], [0.5]) == 0.0

    def test_abs_arithmetic(self):
        assert abs_error_reward([0.6, 0.3], [0.5, 0.5]) == pytest.approx(-0.3)

    def test_squared_345(self):
        assert squared_error_reward([0.3, 0.4], [0.0, 0.0]) == pytest.approx(-0.5)

    def test_one_dim_abs_equals_squared(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x, sp = rng.uniform(0, 1, 2)
            assert abs_error_reward([x], [sp]) == pytest.approx(
                squared_error_reward([x], [sp]), abs=1e-15)

    def test_abs_dominates_squared_norm(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            x = rng.uniform(0, 1, 4)
            sp = rng.uniform(0, 1, 4)
            assert abs(abs_error_reward(x, sp)) >= abs(squared_error_reward(x, sp))

    def test_tracking_below_squared_in_1d(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            x, sp = rng.uniform(0, 1, 2)  # |deviation| <= 1
            tr = tracking_reward([x], [sp], [0.0], [0.0], np.eye(1),
                                 np.zeros((1, 1)))
            assert abs(tr) <= abs(squared_error_reward([x], [sp])) + 1e-15


class TestSparse:
    def test_at_setpoint(self):
        assert sparse_reward([0.5], [0.5], 0.003) == 1.0

    def test_inside_threshold(self):
        assert sparse_reward([0.502], [0.5], 0.003) == 1.0

    def test_boundary_is_strict(self):
        assert sparse_reward([0.503], [0.5], 0.003) == 0.0

    def test_binary_range(self):
        rng = np.random.default_rng(6)
        vals = {sparse_reward(rng.uniform(0, 1, 2), rng.uniform(0, 1, 2), 0.3)
                for _ in range(200)}
        assert vals <= {0.0, 1.0}


def test_translation_consistency():
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = rng.uniform(0, 1, 3)
        sp = rng.uniform(0, 1, 3)
        shift = rng.uniform(-0.5, 0.5, 3)
        assert tracking_reward(x + shift, sp + shift, [0.2], [0.4], np.eye(3),
                               np.eye(1)) == pytest.approx(
            tracking_reward(x, sp, [0.2], [0.4], np.eye(3), np.eye(1)), abs=1e-12)
        assert abs_error_reward(x + shift, sp + shift) == pytest.approx(
            abs_error_reward(x, sp), abs=1e-12)
        assert squared_error_reward(x + shift, sp + shift) == pytest.approx(
            squared_error_reward(x, sp), abs=1e-12)
        assert sparse_reward(x + shift, sp + shift, 0.1) == sparse_reward(x, sp, 0.1)


class TestSelector:
    def test_kind_validation(self):
        with pytest.raises(ConfigurationError, match="kind"):
            RewardSelector(kind="huber")

    def test_custom_needs_hook(self):
        with pytest.raises(ConfigurationError, match="hook"):
            RewardSelector(kind="custom")

    def test_weight_validation(self):
        with pytest.raises(ConfigurationError, match="symmetric"):
            RewardSelector(Q=np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(ConfigurationError, match="semidefinite"):
            RewardSelector(Q=np.array([[-1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(ConfigurationError, match="penalty"):
            RewardSelector(penalty=-0.1)
        with pytest.raises(ConfigurationError, match="epsilon"):
            RewardSelector(epsilon=0.0)

    def test_default_weights(self):
        Q, R = RewardSelector().weights(3, 2)
        np.testing.assert_array_equal(Q, np.eye(3))
        np.testing.assert_array_equal(R, np.zeros((2, 2)))


class TestCustomHook:
    def test_zero_hook(self):
        sel = RewardSelector(kind="custom", hook=lambda ctx: 0.0)
        assert evaluate(sel, ctx_for([0.1], [0.9]), np.eye(1), np.zeros((1, 1))) == 0.0

    def test_composition_matches_builtin(self):
        def hook(ctx):
            return tracking_reward(ctx.normalized_state, ctx.setpoint, ctx.action,
                                   ctx.prev_action, np.eye(1), np.zeros((1, 1)))

        sel = RewardSelector(kind="custom", hook=hook)
        base = RewardSelector(kind="tracking_quadratic")
        c = ctx_for([0.7], [0.5], u=[0.2], u_prev=[0.8])
        assert evaluate(sel, c, np.eye(1), np.zeros((1, 1))) == evaluate(
            base, c, np.eye(1), np.zeros((1, 1)))

    def test_nonfinite_hook_aborts(self):
        sel = RewardSelector(kind="custom", hook=lambda ctx: float("nan"))
        with pytest.raises(RewardHookError, match="non-finite"):
            evaluate(sel, ctx_for([0.1], [0.9]), np.eye(1), np.zeros((1, 1)))

    def test_raising_hook_wrapped(self):
        def hook(ctx):
            raise KeyError("boom")

        sel = RewardSelector(kind="custom", hook=hook)
        with pytest.raises(RewardHookError, match="raised"):
            evaluate(sel, ctx_for([0.1], [0.9]), np.eye(1), np.zeros((1, 1)))
