"""Evaluation metrics against brute-force references, and rollout semantics."""

import numpy as np
import pytest
from helpers import mini_cstr_config

from procbench.errors import PolicyError
from procbench.eval import (build_report, mad, median, median_and_std,
                            optimality_gap, rollout, run_episode, std_dev,
                            violation_probability)
from procbench.env import make_env
from procbench.policy import Policy, constant_policy, random_policy
from procbench.scenario import Constraint


# brute-force references, deliberately written from scratch
def bf_median(xs):
    s = sorted(xs)
    n = len(s)
    if n % 2:
        return s[n // 2]
    return 0.5 * (s[n // 2 - 1] + s[n // 2])


def bf_mad(xs):
    m = bf_median(xs)
    return bf_median([abs(x - m) for x in xs])


def bf_std(xs):
    n = len(xs)
    mean = sum(xs) / n
    return (sum((x - mean) ** 2 for x in xs) / (n - 1)) ** 0.5


class TestMetrics:
    def test_median_examples(self):
        assert median([2.0]) == 2.0
        assert median([1.0, 3.0]) == 2.0
        assert median([1.0, 2.0, 3.0, 4.0]) == 2.5

    def test_mad_examples(self):
        assert mad([1.0, 1.0, 1.0]) == 0.0
        assert mad([1.0, 2.0, 3.0]) == 1.0
        assert mad([0.1, 0.5, 0.9, 0.2]) == pytest.approx(0.2)

    def test_std_examples(self):
        assert std_dev([2.0]) is None
        assert std_dev([1.0, 3.0]) == pytest.approx(np.sqrt(2.0))
        assert median_and_std([2.0]) == (2.0, None)

    def test_against_brute_force(self):
        rng = np.random.default_rng(123)
        for n in (1, 2, 3, 10, 101):
            xs = rng.normal(0.0, 5.0, n)
            assert median(xs) == pytest.approx(bf_median(xs), abs=1e-12)
            assert mad(xs) == pytest.approx(bf_mad(xs), abs=1e-12)
            if n >= 2:
                assert std_dev(xs) == pytest.approx(bf_std(xs), abs=1e-12)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            median([])
        with pytest.raises(ValueError):
            mad([])
        with pytest.raises(ValueError):
            violation_probability([])

    def test_permutation_and_translation(self):
        rng = np.random.default_rng(8)
        xs = rng.normal(0, 1, 31)
        perm = rng.permutation(xs)
        assert median(perm) == median(xs)
        assert mad(perm) == mad(xs)
        assert median(xs + 3.5) == pytest.approx(median(xs) + 3.5)
        assert mad(xs + 3.5) == pytest.approx(mad(xs))


class TestOptimalityGap:
    def test_identical_samples(self):
        xs = [0.1, 0.4, 0.2]
        assert optimality_gap(xs, xs, "none") == 0.0

    def test_plain_difference(self):
        assert optimality_gap([0.95], [0.90], "none") == pytest.approx(0.05)

    def test_per_step(self):
        assert optimality_gap([60.0], [30.0], "per_step", steps=60) == \
            pytest.approx(0.5)
        with pytest.raises(ValueError, match="step count"):
            optimality_gap([1.0], [0.5], "per_step")

    def test_minmax(self):
        gap = optimality_gap([10.0, 10.0], [0.0, 0.0], "minmax")
        assert gap == pytest.approx(1.0)
        assert optimality_gap([5.0], [5.0], "minmax") == 0.0  # degenerate pool

    def test_unknown_normalization(self):
        with pytest.raises(ValueError, match="normalization"):
            optimality_gap([1.0], [0.5], "zscore")


class TestViolationProbability:
    def test_fraction(self):
        flags = [True] * 3 + [False] * 47
        assert violation_probability(flags) == pytest.approx(0.06)

    def test_no_constraints_is_zero(self):
        cfg = mini_cstr_config(T=4)
        res = rollout(cfg, constant_policy([298.0], [295.0], [302.0]), 3)
        assert violation_probability(res.violation_flags) == 0.0

    def test_counts_episodes_not_steps(self):
        # an episode violating at many steps still counts once
        cfg = mini_cstr_config(T=6, constraints=[Constraint("T", 310.0, "<=")])
        res = rollout(cfg, constant_policy([302.0], [295.0], [302.0]), 2)
        assert np.all(res.violation_flags)
        assert violation_probability(res.violation_flags) == 1.0


class FailingPolicy(Policy):
    label = "failing"

    def __init__(self):
        self.episode = -1

    def reset(self, seed=None):
        self.episode += 1

    def act(self, view):
        if self.episode == 1:
            raise PolicyError("deliberate failure")
        return np.array([298.0])


class TestRollout:
    def test_single_episode_return_matches_rows(self):
        cfg = mini_cstr_config(T=8, noise=0.0)
        res = rollout(cfg, constant_policy([297.0], [295.0], [302.0]), 1)
        rows = np.array(res.trajectories[0].rows)
        reward_col = res.trajectories[0].header.index("reward")
        assert res.returns[0] == pytest.approx(rows[:, reward_col].sum(), abs=1e-15)

    def test_same_master_seed_identical(self):
        cfg = mini_cstr_config(T=8, noise=0.001)
        factory = lambda: random_policy([295.0], [302.0])  # noqa: E731
        a = rollout(cfg, factory, 4, master_seed=11)
        b = rollout(cfg, factory, 4, master_seed=11)
        np.testing.assert_array_equal(a.returns, b.returns)

    def test_parallel_matches_serial(self):
        cfg = mini_cstr_config(T=8, noise=0.001)
        factory = lambda: random_policy([295.0], [302.0])  # noqa: E731
        serial = rollout(cfg, factory, 6, master_seed=2, parallelism=1)
        parallel = rollout(cfg, factory, 6, master_seed=2, parallelism=3)
        np.testing.assert_array_equal(serial.returns, parallel.returns)

    def test_gamma_discounting(self):
        cfg = mini_cstr_config(T=5, noise=0.0)
        res = rollout(cfg, constant_policy([297.0], [295.0], [302.0]), 1,
                      gamma=0.5)
        rows = np.array(res.trajectories[0].rows)
        rewards = rows[:, res.trajectories[0].header.index("reward")]
        expected = sum(r * 0.5 ** t for t, r in enumerate(rewards))
        assert res.returns[0] == pytest.approx(expected, rel=1e-12)

    def test_failed_episode_excluded_and_counted(self):
        cfg = mini_cstr_config(T=4)
        res = rollout(cfg, FailingPolicy(), 3, master_seed=0)
        assert res.returns.size == 2
        assert len(res.failures) == 1
        assert res.failures[0]["episode"] == 1
        report = build_report("failing", res, steps=4)
        assert report.n_episodes == 3

    def test_policy_instance_needs_serial(self):
        cfg = mini_cstr_config(T=4)
        with pytest.raises(ValueError, match="factory"):
            rollout(cfg, constant_policy([298.0], [295.0], [302.0]), 2,
                    parallelism=2)

    def test_all_failed_raises_on_report(self):
        cfg = mini_cstr_config(T=4)

        class AlwaysFail(Policy):
            def act(self, view):
                raise PolicyError("nope")

        res = rollout(cfg, AlwaysFail(), 2)
        with pytest.raises(PolicyError, match="no successful episodes"):
            build_report("x", res, steps=4)

    def test_trajectory_layout(self):
        cfg = mini_cstr_config(T=4, constraints=[Constraint("T", 327.0, "<=")])
        res = rollout(cfg, constant_policy([298.0], [295.0], [302.0]), 1)
        traj = res.trajectories[0]
        assert traj.header == ["t", "Ca", "T", "obs_0", "obs_1", "obs_2", "Tc",
                               "reward", "g_0", "violation"]
        assert len(traj.rows) == 4


def test_run_episode_noise_free_determinism():
    cfg = mini_cstr_config(T=10, noise=0.0)
    env = make_env(cfg)
    p = constant_policy([299.0], [295.0], [302.0])
    a = run_episode(env, p, 0, master_seed=5)
    b = run_episode(env, p, 0, master_seed=5)
    assert a.episode_return == b.episode_return
    assert a.rows == b.rows
