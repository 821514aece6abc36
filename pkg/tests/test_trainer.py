"""Toy trainer tests: policy math, advantages, and learning behavior."""

import math

import numpy as np
import pytest

from sarl.errors import SarlError
from sarl.trainer import (
    IterationRecord,
    TabularPolicy,
    TrainConfig,
    grad_log_prob,
    group_advantages,
    improvement,
    log_prob,
    rollout,
    train,
)

BIG = 1e6


def cycle_policy(n_types: int, horizon: int) -> TabularPolicy:
    """Deterministic policy: start at 0, then always step to (i + 1) % n."""
    init = np.zeros(n_types)
    init[0] = BIG
    trans = np.zeros((n_types, n_types))
    for i in range(n_types):
        trans[i, (i + 1) % n_types] = BIG
    return TabularPolicy(n_types=n_types, horizon=horizon, init_logits=init, trans_logits=trans)


class TestPolicy:
    def test_validation(self):
        with pytest.raises(ValueError):
            TabularPolicy(n_types=1, horizon=4)
        with pytest.raises(ValueError):
            TabularPolicy(n_types=3, horizon=0)
        with pytest.raises(ValueError):
            TabularPolicy(n_types=3, horizon=4, init_logits=np.zeros(2))
        with pytest.raises(ValueError):
            TabularPolicy(n_types=3, horizon=4, trans_logits=np.zeros((2, 3)))

    def test_uniform_entropy_is_log_n(self):
        policy = TabularPolicy(n_types=5, horizon=4)
        assert policy.entropy() == pytest.approx(math.log(5), abs=1e-12)

    def test_peaked_policy_has_lower_entropy(self):
        assert cycle_policy(5, 4).entropy() < 1e-3

    def test_entropy_nonnegative_and_finite(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            policy = TabularPolicy(
                n_types=4,
                horizon=6,
                init_logits=rng.normal(size=4) * 10,
                trans_logits=rng.normal(size=(4, 4)) * 10,
            )
            ent = policy.entropy()
            assert math.isfinite(ent)
            assert 0.0 <= ent <= math.log(4) + 1e-12


class TestRollout:
    def test_forced_cycle(self):
        policy = cycle_policy(3, 7)
        seq = rollout(policy, np.random.default_rng(0))
        assert seq == [0, 1, 2, 0, 1, 2, 0]

    def test_horizon_one(self):
        policy = cycle_policy(4, 1)
        assert rollout(policy, np.random.default_rng(1)) == [0]

    def test_seed_determinism(self):
        policy = TabularPolicy(n_types=5, horizon=12)
        a = rollout(policy, np.random.default_rng(42))
        b = rollout(policy, np.random.default_rng(42))
        assert a == b

    def test_labels_in_range(self):
        policy = TabularPolicy(n_types=5, horizon=20)
        rng = np.random.default_rng(3)
        for _ in range(50):
            assert all(0 <= z < 5 for z in rollout(policy, rng))


class TestLogProb:
    def test_uniform_policy_value(self):
        policy = TabularPolicy(n_types=5, horizon=4)
        seq = [0, 3, 1, 1]
        assert log_prob(policy, seq) == pytest.approx(4 * math.log(1 / 5), abs=1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # log(0) off the cycle path
    def test_forced_cycle_near_certain(self):
        policy = cycle_policy(3, 5)
        assert log_prob(policy, [0, 1, 2, 0, 1]) == pytest.approx(0.0, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        n = 4
        seq = [int(z) for z in rng.integers(0, n, size=8)]
        init = rng.normal(size=n)
        trans = rng.normal(size=(n, n))
        policy = TabularPolicy(n_types=n, horizon=8, init_logits=init, trans_logits=trans)
        g_init, g_trans = grad_log_prob(policy, seq)

        h = 1e-6

        def numeric(perturb_init, i, j=None):
            def shifted(sign):
                pi = init.copy()
                pt = trans.copy()
                if perturb_init:
                    pi[i] += sign * h
                else:
                    pt[i, j] += sign * h
                p = TabularPolicy(n_types=n, horizon=8, init_logits=pi, trans_logits=pt)
                return log_prob(p, seq)

            return (shifted(+1) - shifted(-1)) / (2 * h)

        for i in range(n):
            assert g_init[i] == pytest.approx(numeric(True, i), abs=1e-5)
        for i in range(n):
            for j in range(n):
                assert g_trans[i, j] == pytest.approx(numeric(False, i, j), abs=1e-5)


class TestGroupAdvantages:
    def test_two_point_group(self):
        adv = group_advantages([1.0, 0.0], eps=1e-8)
        assert adv[0] == pytest.approx(1.0, abs=1e-6)
        assert adv[1] == pytest.approx(-1.0, abs=1e-6)

    def test_all_equal_rewards_zeroed(self):
        assert group_advantages([0.7, 0.7, 0.7, 0.7], eps=1e-8) == [0.0] * 4

    def test_zero_sum(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            rewards = [float(r) for r in rng.random(8)]
            assert sum(group_advantages(rewards, eps=1e-8)) == pytest.approx(0.0, abs=1e-9)

    def test_rejects_tiny_groups(self):
        with pytest.raises(ValueError):
            group_advantages([1.0], eps=1e-8)


class TestTrain:
    def test_deterministic_given_seed(self):
        cfg = TrainConfig(iterations=15, group_size=4, horizon=8, seed=9)
        a = train(cfg)
        b = train(cfg)
        assert [r.mean_sr for r in a] == [r.mean_sr for r in b]
        assert [r.entropy for r in a] == [r.entropy for r in b]

    def test_zero_learning_rate_is_flat(self):
        cfg = TrainConfig(iterations=200, group_size=8, horizon=12, seed=0, learning_rate=0.0)
        log = train(cfg)
        assert all(r.entropy == pytest.approx(math.log(5), abs=1e-12) for r in log)
        slope = np.polyfit([r.iteration for r in log], [r.mean_sr for r in log], 1)[0]
        assert abs(slope) < 3e-4

    def test_learning_reduces_entropy(self):
        cfg = TrainConfig(iterations=60, group_size=8, horizon=12, seed=1)
        log = train(cfg)
        assert log[-1].entropy < log[0].entropy
        assert all(math.isfinite(r.mean_sr) for r in log)

    def test_mode_equivalence_at_zero_noise(self):
        direct = train(TrainConfig(iterations=5, group_size=4, horizon=8, seed=3))
        piped = train(
            TrainConfig(iterations=5, group_size=4, horizon=8, seed=3, mode="full-pipeline")
        )
        assert [r.mean_sr for r in direct] == [r.mean_sr for r in piped]

    def test_full_pipeline_with_noise_runs(self):
        cfg = TrainConfig(
            iterations=3, group_size=4, horizon=8, seed=2,
            mode="full-pipeline", embedding_noise=0.05,
        )
        log = train(cfg)
        assert len(log) == 3
        assert all(0.0 <= r.mean_sr <= 1.0 for r in log)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        cfg = TrainConfig(iterations=5, group_size=8, horizon=12, seed=0, learning_rate=1e308)
        with pytest.raises(SarlError):
            train(cfg)

    def test_csv_log(self, tmp_path):
        path = tmp_path / "log.csv"
        train(TrainConfig(iterations=4, group_size=4, horizon=6, seed=0), csv_path=path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,mean_sr,entropy"
        assert len(lines) == 5


class TestConfigAndImprovement:
    def test_config_validation(self):
        for bad in (
            dict(group_size=1),
            dict(learning_rate=-0.1),
            dict(advantage_eps=0.0),
            dict(mode="sgd"),
            dict(embedding_noise=-1.0),
        ):
            with pytest.raises(ValueError):
                TrainConfig(**bad)

    def test_improvement_value(self):
        def rec(i, sr):
            return IterationRecord(iteration=i, mean_sr=sr, entropy=1.0, max_logit=0.0)

        log = [rec(i, 0.2) for i in range(20)] + [rec(20 + i, 0.5) for i in range(20)]
        assert improvement(log) == pytest.approx(0.3, abs=1e-12)

    def test_improvement_needs_enough_iterations(self):
        log = [IterationRecord(iteration=0, mean_sr=0.1, entropy=1.0, max_logit=0.0)] * 10
        with pytest.raises(ValueError):
            improvement(log)
