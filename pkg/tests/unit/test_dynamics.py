#!/usr/bin/env python3
"""
单元测试：OMD/OFTRL 单步更新、学习率序列、腐蚀层与学习率上限
"""

import pytest
import sys
import os
import math

# 添加项目根目录到Python路径
project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
sys.path.insert(0, project_root)

import numpy as np

from dynamics import (
    OFTRL,
    OMD,
    CorruptionTracker,
    LearningRateSchedule,
    apply_corruption,
    init_omd_states,
    init_oftrl_states,
    omd_round,
    oftrl_round,
    run_dynamics,
    theorem_lr_cap,
)
from errors import (
    ArgumentError,
    ConfigurationError,
    CorruptionBoundError,
    DimensionMismatchError,
    RegretLabError,
    ValidationError,
)
from game_classes import RegretWeights
from game_core import MixedStrategy, NormalFormGame, StrategyProfile, payoff_fields, random_game
from regularizers import specs_for_game

PENNIES = np.array([[-1.0, 1.0], [1.0, -1.0]])


@pytest.fixture
def pennies():
    return NormalFormGame((PENNIES, -PENNIES))


def softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


class TestFixedPoint:
    """测试均衡初始点是不动点"""

    @pytest.mark.parametrize("algo", [OMD, OFTRL])
    @pytest.mark.parametrize("kind", ["entropy", "euclid"])
    def test_pennies_uniform_stays(self, pennies, algo, kind):
        """测试 matching pennies 从均匀分布出发一直停在均匀分布"""
        specs = specs_for_game((2, 2), kind)
        trajectory = run_dynamics(pennies, algo, specs, LearningRateSchedule.constant([0.1, 0.1]), 20)
        for x in trajectory.played:
            for s in x.strategies:
                np.testing.assert_allclose(s.probs, [0.5, 0.5], atol=1e-15)

    @pytest.mark.parametrize("algo", [OMD, OFTRL])
    def test_zero_game(self, algo):
        """测试零博弈中策略保持初始点不变"""
        game = NormalFormGame((np.zeros((2, 3)), np.zeros((2, 3))))
        specs = specs_for_game((2, 3), "entropy")
        init = StrategyProfile((MixedStrategy([0.7, 0.3]), MixedStrategy([0.2, 0.3, 0.5])))
        trajectory = run_dynamics(game, algo, specs, LearningRateSchedule.constant([0.5, 0.5]), 10, initial=init)
        for x in trajectory.played:
            np.testing.assert_allclose(x[0].probs, [0.7, 0.3], atol=1e-12)
            np.testing.assert_allclose(x[1].probs, [0.2, 0.3, 0.5], atol=1e-12)


class TestOmdRound:
    """测试 OMD 单步与逐行手算一致"""

    def test_entropy_one_round(self, pennies):
        """测试熵正则下第一轮的 x̃^1 与 g^1"""
        eta = 0.3
        specs = specs_for_game((2, 2), "entropy")
        x0 = [np.array([0.9, 0.1]), np.array([0.5, 0.5])]
        init = StrategyProfile(tuple(MixedStrategy(p) for p in x0))
        v0 = [v.values for v in payoff_fields(pennies, init)]
        x1 = [softmax(np.log(g) + eta * v) for g, v in zip(x0, v0)]
        v1 = [v.values for v in payoff_fields(pennies, StrategyProfile(tuple(MixedStrategy(p) for p in x1)))]
        g1 = [softmax(np.log(g) + eta * v) for g, v in zip(x0, v1)]

        trajectory = run_dynamics(pennies, OMD, specs, LearningRateSchedule.constant([eta, eta]), 1, initial=init)
        for i in range(2):
            np.testing.assert_allclose(trajectory.prescribed[0][i].probs, x1[i], atol=1e-12)
            np.testing.assert_allclose(trajectory.anchors[0][i].probs, g1[i], atol=1e-12)
            np.testing.assert_allclose(trajectory.payoffs[0][i].values, v1[i], atol=1e-12)

    def test_state_fields(self, pennies):
        """测试单步返回的新状态"""
        specs = specs_for_game((2, 2), "euclid")
        states = init_omd_states(pennies, specs, StrategyProfile.pure((2, 2), (0, 0)))
        new_states, played = omd_round(pennies, states, specs, LearningRateSchedule.constant([0.5, 0.5]), 0)
        assert all(s.step == 1 for s in new_states)
        # g^0 = e_0, v^0 = (-1, 1) → x̃^1 = Π(0.5, 0.5) = (0.5, 0.5)
        np.testing.assert_allclose(played[0].probs, [0.5, 0.5], atol=1e-15)

    def test_initial_state(self, pennies):
        """测试 x^0 = g^0 且 v^0 = v(x^0)"""
        specs = specs_for_game((2, 2), "entropy")
        states = init_omd_states(pennies, specs)
        for s in states:
            assert np.array_equal(s.strategy.probs, s.anchor.probs)
            np.testing.assert_allclose(s.last_payoff.values, [0.0, 0.0])

    def test_regularizer_mismatch(self, pennies):
        """测试正则项维度与博弈不一致"""
        with pytest.raises(DimensionMismatchError):
            init_omd_states(pennies, specs_for_game((2, 3), "entropy"))


class TestOftrlRound:
    """测试 OFTRL"""

    def test_matches_omd_for_entropy(self):
        """测试熵正则、常数步长下 OMD 与 OFTRL 逐轮一致"""
        rng = np.random.default_rng(0)
        game = random_game((2, 3), rng)
        # 极小的裁剪下限，裁剪不会触发
        specs = specs_for_game((2, 3), "entropy", delta=1e-30)
        schedule = LearningRateSchedule.constant([0.1, 0.1])
        omd = run_dynamics(game, OMD, specs, schedule, 50)
        oftrl = run_dynamics(game, OFTRL, specs, schedule, 50)
        for a, b in zip(omd.played, oftrl.played):
            for sa, sb in zip(a.strategies, b.strategies):
                np.testing.assert_allclose(sa.probs, sb.probs, atol=1e-10)

    def test_center_first_round(self, pennies):
        """测试给定初始 profile 时 OFTRL 第一轮与 OMD 相同"""
        specs = specs_for_game((2, 2), "entropy")
        init = StrategyProfile((MixedStrategy([0.9, 0.1]), MixedStrategy([0.3, 0.7])))
        schedule = LearningRateSchedule.constant([0.2, 0.2])
        omd = run_dynamics(pennies, OMD, specs, schedule, 1, initial=init)
        oftrl = run_dynamics(pennies, OFTRL, specs, schedule, 1, initial=init)
        for i in range(2):
            np.testing.assert_allclose(omd.played[0][i].probs, oftrl.played[0][i].probs, atol=1e-12)

    def test_cumulative(self, pennies):
        """测试 S 累加执行 profile 上的收益"""
        specs = specs_for_game((2, 2), "euclid")
        schedule = LearningRateSchedule.constant([0.1, 0.1])
        states = init_oftrl_states(pennies, specs, StrategyProfile.pure((2, 2), (0, 0)))
        s1, p1 = oftrl_round(pennies, states, specs, schedule, 0)
        s2, p2 = oftrl_round(pennies, s1, specs, schedule, 1)
        expected = payoff_fields(pennies, p1)[0].values + payoff_fields(pennies, p2)[0].values
        np.testing.assert_allclose(s2[0].cumulative, expected, atol=1e-15)

    def test_requires_constant_schedule(self, pennies):
        """测试 OFTRL 拒绝衰减学习率"""
        specs = specs_for_game((2, 2), "entropy")
        schedule = LearningRateSchedule.decay([0.2, 0.2], [0.01, 0.01])
        with pytest.raises(ConfigurationError):
            run_dynamics(pennies, OFTRL, specs, schedule, 5)

    def test_no_anchors_recorded(self, pennies):
        """测试 OFTRL 轨迹不带锚点"""
        specs = specs_for_game((2, 2), "entropy")
        trajectory = run_dynamics(pennies, OFTRL, specs, LearningRateSchedule.constant([0.1, 0.1]), 3)
        assert trajectory.anchors is None
        assert not trajectory.has_anchors
        assert trajectory.algorithm == OFTRL


class TestRunDynamics:
    """测试完整运行"""

    def test_records(self, pennies):
        """测试记录的长度与学习率"""
        specs = specs_for_game((2, 2), "entropy")
        schedule = LearningRateSchedule.decay([0.4, 0.2], [0.05, 0.05])
        trajectory = run_dynamics(pennies, OMD, specs, schedule, 16)
        assert len(trajectory) == 16
        assert len(trajectory.anchors) == 16
        assert trajectory.learning_rates[0] == (0.4, 0.2)
        assert trajectory.learning_rates[3] == (0.2, 0.1)
        assert trajectory.learning_rates[15] == (0.1, 0.05)
        assert not trajectory.is_corrupted

    def test_deterministic(self):
        """测试相同输入（含种子）逐位相同"""
        game = random_game((3, 2), np.random.default_rng(1))
        specs = specs_for_game((3, 2), "euclid")
        schedule = LearningRateSchedule.constant([0.05, 0.05])
        runs = []
        for _ in range(2):
            tracker = CorruptionTracker.geometric(2, rho=0.5, magnitude=0.4, seed=3)
            runs.append(run_dynamics(game, OMD, specs, schedule, 30, corruption=tracker))
        for a, b in zip(runs[0].played, runs[1].played):
            for sa, sb in zip(a.strategies, b.strategies):
                assert np.array_equal(sa.probs, sb.probs)

    def test_rounds_positive(self, pennies):
        """测试轮数必须 ≥ 1"""
        with pytest.raises(ArgumentError):
            run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"), LearningRateSchedule.constant([0.1, 0.1]), 0)

    def test_unknown_algorithm(self, pennies):
        """测试未知算法名"""
        with pytest.raises(ConfigurationError) as exc:
            run_dynamics(pennies, "sgd", specs_for_game((2, 2), "entropy"),
                         LearningRateSchedule.constant([0.1, 0.1]), 5)
        assert exc.value.keys == ("algo",)

    def test_schedule_player_count(self, pennies):
        """测试学习率序列的玩家数"""
        with pytest.raises(DimensionMismatchError):
            run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"), LearningRateSchedule.constant([0.1]), 5)

    def test_strategies_stay_on_simplex(self):
        """测试三人博弈上所有迭代都在单纯形内"""
        game = random_game((2, 3, 2), np.random.default_rng(2))
        specs = specs_for_game((2, 3, 2), "entropy")
        trajectory = run_dynamics(game, OMD, specs, LearningRateSchedule.constant([1.0, 1.0, 1.0]), 40)
        for x in trajectory.played + trajectory.anchors:
            for s in x.strategies:
                assert abs(s.probs.sum() - 1.0) < 1e-12
                assert s.probs.min() > 0


class TestLearningRateSchedule:
    """测试学习率序列"""

    def test_constant(self):
        """测试常数学习率"""
        schedule = LearningRateSchedule.constant([0.1, 0.2])
        assert schedule.rate(1, 1000) == 0.2
        assert schedule.eta_one == 0.2
        assert schedule.is_constant

    def test_decay_with_floor(self):
        """测试 η/√t 在下限处截断"""
        schedule = LearningRateSchedule.decay([0.4], [0.1])
        assert schedule.rate(0, 4) == 0.2
        assert schedule.rate(0, 100) == 0.1
        assert schedule.lowest(0, 25) == 0.1
        assert schedule.floor(0) == 0.1

    def test_explicit_holds_last(self):
        """测试显式序列用完后停在最后一个值"""
        schedule = LearningRateSchedule.explicit([[0.3, 0.2, 0.1]])
        assert [schedule.rate(0, t) for t in range(1, 6)] == [0.3, 0.2, 0.1, 0.1, 0.1]
        assert schedule.floor(0) == 0.1

    def test_increasing_rejected(self):
        """测试递增的学习率被拒绝并指出轮次"""
        with pytest.raises(ConfigurationError) as exc:
            LearningRateSchedule.explicit([[0.1, 0.1, 0.2]])
        assert "round 3" in str(exc.value)
        assert exc.value.keys == ("schedule",)

    @pytest.mark.parametrize("eta", [0.0, -1.0, math.inf])
    def test_non_positive(self, eta):
        """测试非正学习率"""
        with pytest.raises(ConfigurationError):
            LearningRateSchedule.constant([eta, 0.1])

    def test_floor_above_rate(self):
        """测试下限超过初始学习率"""
        with pytest.raises(ConfigurationError):
            LearningRateSchedule.decay([0.1], [0.2])

    def test_round_zero(self):
        """测试学习率从第 1 轮开始编号"""
        with pytest.raises(ArgumentError):
            LearningRateSchedule.constant([0.1]).rate(0, 0)


class TestLearningRateCap:
    """测试学习率上限"""

    def test_entropy_two_players(self):
        """测试熵正则两人博弈的上限 1/4"""
        assert theorem_lr_cap(2, 1.0, 1.0) == 0.25

    def test_corrupted(self):
        """测试腐蚀时再除以 √3"""
        assert theorem_lr_cap(2, 1.0, 1.0, corrupted=True) == pytest.approx(0.25 / math.sqrt(3.0))
        assert theorem_lr_cap(2, 1.0, 1.0, corrupted=True) == pytest.approx(0.1443, abs=1e-4)

    def test_euclid_weighted(self):
        """测试欧氏 2x2、m = (2, 6) 时约为 0.0722"""
        cap = theorem_lr_cap(2, 1.0 / math.sqrt(2.0), math.sqrt(2.0), RegretWeights(np.array([2.0, 6.0])))
        assert cap == pytest.approx(0.125 / math.sqrt(3.0))
        assert cap == pytest.approx(0.0722, abs=1e-4)

    def test_scale_invariant(self):
        """测试上限只依赖 m̲/m̄"""
        a = theorem_lr_cap(3, 1.0, 1.0, RegretWeights(np.array([1.0, 2.0, 3.0])))
        b = theorem_lr_cap(3, 1.0, 1.0, RegretWeights(np.array([2.0, 4.0, 6.0])))
        assert a == pytest.approx(b)

    def test_single_player(self):
        """测试 n < 2 是参数错误"""
        with pytest.raises(ArgumentError):
            theorem_lr_cap(1, 1.0, 1.0)


class TestCorruption:
    """测试腐蚀层"""

    def test_none(self):
        """测试不腐蚀时执行的策略等于给出的策略"""
        x = StrategyProfile.uniform((2, 3))
        played, deviations = apply_corruption(None, x, 1)
        assert played is x
        assert all(not np.any(c) for c in deviations)
        tracker = CorruptionTracker.none(2)
        played, deviations = tracker.generate(x, 1)
        assert tracker.totals.tolist() == [0.0, 0.0]

    def test_geometric_level(self, pennies):
        """测试几何衰减腐蚀的逐轮范数与总量上界"""
        tracker = CorruptionTracker.geometric(2, rho=0.5, magnitude=0.4, seed=1)
        trajectory = run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"),
                                  LearningRateSchedule.constant([0.1, 0.1]), 40, corruption=tracker)
        norms = trajectory.corruption_norms()
        for t in range(1, 41):
            assert np.all(norms[t - 1] <= 2 * 0.4 * 0.5 ** t + 1e-12)
        assert tracker.level_bound == pytest.approx(0.8)
        assert np.all(tracker.totals <= 0.8 + 1e-12)
        np.testing.assert_allclose(tracker.totals, norms.sum(axis=0), atol=1e-12)
        assert trajectory.is_corrupted

    def test_burst_window(self, pennies):
        """测试突发腐蚀只落在 [t0, t0 + width) 内"""
        tracker = CorruptionTracker.burst(2, start=3, width=4, magnitude=0.3, seed=2)
        trajectory = run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"),
                                  LearningRateSchedule.constant([0.1, 0.1]), 10, corruption=tracker)
        norms = trajectory.corruption_norms()
        for t in range(1, 11):
            if 3 <= t < 7:
                assert np.all(norms[t - 1] > 0)
            else:
                assert np.all(norms[t - 1] == 0)
        assert np.all(tracker.totals <= 2 * 0.3 * 4 + 1e-12)
        assert len(tracker.history) == 10

    def test_level_overrun_raises(self):
        """测试累计腐蚀超过解析上界时抛出 regret-lab 的错误"""
        tracker = CorruptionTracker.burst(2, start=1, width=4, magnitude=0.3, seed=2)
        tracker.totals = np.full(2, tracker.level_bound)
        with pytest.raises(CorruptionBoundError) as exc:
            tracker.generate(StrategyProfile.uniform((2, 2)), 1)
        assert isinstance(exc.value, RegretLabError)
        assert isinstance(exc.value, RuntimeError)
        assert "exceeds analytic bound" in str(exc.value)

    def test_selected_players(self, pennies):
        """测试只腐蚀指定的玩家"""
        tracker = CorruptionTracker.geometric(2, rho=0.5, magnitude=0.4, seed=1, players=[1])
        trajectory = run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"),
                                  LearningRateSchedule.constant([0.1, 0.1]), 5, corruption=tracker)
        norms = trajectory.corruption_norms()
        assert np.all(norms[:, 0] == 0)
        assert np.all(norms[:, 1] > 0)

    def test_custom(self, pennies):
        """测试自定义偏离向量加在给出的策略上"""
        tracker = CorruptionTracker.custom(2, [[[0.1, -0.1], [0.0, 0.0]]])
        trajectory = run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"),
                                  LearningRateSchedule.constant([0.1, 0.1]), 2, corruption=tracker)
        np.testing.assert_allclose(trajectory.played[0][0].probs, [0.6, 0.4], atol=1e-12)
        assert trajectory.corruption_norms()[0].tolist() == pytest.approx([0.2, 0.0])
        assert trajectory.corruption_norms()[1].tolist() == [0.0, 0.0]

    def test_custom_off_simplex(self, pennies):
        """测试把策略推出单纯形的偏离被拒绝"""
        tracker = CorruptionTracker.custom(2, [[[0.6, -0.6], [0.0, 0.0]]])
        with pytest.raises(ValidationError):
            run_dynamics(pennies, OMD, specs_for_game((2, 2), "entropy"),
                         LearningRateSchedule.constant([0.1, 0.1]), 1, corruption=tracker)

    @pytest.mark.parametrize("kwargs", [
        {"kind": "geometric", "rho": 1.0, "magnitude": 0.1},
        {"kind": "burst", "start": 0, "width": 2, "magnitude": 0.1},
        {"kind": "burst", "start": 1, "width": 2, "magnitude": 1.5},
        {"kind": "noise"},
    ])
    def test_bad_parameters(self, kwargs):
        """测试腐蚀参数越界"""
        kwargs = dict(kwargs)
        kind = kwargs.pop("kind")
        with pytest.raises(ConfigurationError):
            CorruptionTracker(kind, 2, **kwargs)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
