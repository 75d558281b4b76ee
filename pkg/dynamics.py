"""
乐观学习动力学：OMD（镜像下降）与 OFTRL（正则化跟随领先者）

时间约定：第 0 轮是初始 profile x^0 = g^0，v^0 = v(x^0)；
第 t+1 轮用第 t 轮的锚点和收益算出新的策略，再在实际执行的 profile 上观测收益。
腐蚀层在两种算法里插在"给出策略"和"观测收益"之间。
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import ArgumentError, ConfigurationError, CorruptionBoundError, DimensionMismatchError, ValidationError
from game_classes import RegretWeights, Trajectory
from game_core import (
    MixedStrategy,
    NormalFormGame,
    PayoffVector,
    StrategyProfile,
    check_profile,
    payoff_fields,
)
from regularizers import RegularizerSpec, ftrl_step, interior, min_point, prox_step

log = logging.getLogger(__name__)

OMD = "omd"
OFTRL = "oftrl"
ALGORITHMS = (OMD, OFTRL)

CONSTANT = "constant"
DECAY = "decay"
EXPLICIT = "explicit"
SCHEDULE_MODES = (CONSTANT, DECAY, EXPLICIT)


@dataclass(frozen=True, eq=False)
class OmdState:
    """单个玩家第 t 轮的 OMD 状态"""

    strategy: MixedStrategy       # x_i^t（实际执行）
    prescribed: MixedStrategy     # x̃_i^t
    anchor: MixedStrategy         # g_i^t
    last_payoff: PayoffVector     # v_i^t
    step: int = 0


@dataclass(frozen=True, eq=False)
class OftrlState:
    """单个玩家第 t 轮的 OFTRL 状态；cumulative = Σ_{s=1}^t v̂_i^s"""

    strategy: MixedStrategy
    prescribed: MixedStrategy
    cumulative: np.ndarray
    last_payoff: PayoffVector
    center: Optional[MixedStrategy] = None
    step: int = 0


@dataclass(frozen=True)
class LearningRateSchedule:
    """每个玩家一条不增的学习率序列 η_i^t（t ≥ 1）

    constant: η_i^t = η_i
    decay:    η_i^t = max(floor_i, η_i / √t)
    explicit: 给定序列，用完后停在最后一个值
    """

    mode: str
    rates: Tuple[float, ...]
    floors: Tuple[float, ...] = ()
    sequences: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.mode not in SCHEDULE_MODES:
            raise ConfigurationError(f"unknown schedule mode {self.mode!r}; expected one of {SCHEDULE_MODES}",
                                     keys=("schedule",))
        for i, eta in enumerate(self.rates):
            if not (math.isfinite(eta) and eta > 0):
                raise ConfigurationError(f"learning rate of player {i} must be > 0, got {eta}", keys=("eta",))
        if self.mode == DECAY:
            if len(self.floors) != len(self.rates):
                raise ConfigurationError("decay schedule needs one floor per player", keys=("eta_floor",))
            for i, (eta, floor) in enumerate(zip(self.rates, self.floors)):
                if not 0 < floor <= eta:
                    raise ConfigurationError(
                        f"eta floor of player {i} must lie in (0, {eta}], got {floor}", keys=("eta_floor",))
        if self.mode == EXPLICIT:
            if len(self.sequences) != len(self.rates):
                raise ConfigurationError("explicit schedule needs one sequence per player", keys=("schedule",))
            for i, seq in enumerate(self.sequences):
                if len(seq) == 0 or any(not (math.isfinite(e) and e > 0) for e in seq):
                    raise ConfigurationError(f"explicit learning rates of player {i} must be > 0", keys=("schedule",))
                increases = [t + 2 for t in range(len(seq) - 1) if seq[t + 1] > seq[t]]
                if increases:
                    raise ConfigurationError(
                        f"learning rate of player {i} increases at round {increases[0]}; "
                        "schedules must be non-increasing", keys=("schedule",))

    @classmethod
    def constant(cls, etas: Sequence[float]) -> "LearningRateSchedule":
        return cls(CONSTANT, tuple(float(e) for e in etas))

    @classmethod
    def decay(cls, etas: Sequence[float], floors: Sequence[float]) -> "LearningRateSchedule":
        return cls(DECAY, tuple(float(e) for e in etas), floors=tuple(float(f) for f in floors))

    @classmethod
    def explicit(cls, sequences: Sequence[Sequence[float]]) -> "LearningRateSchedule":
        seqs = tuple(tuple(float(e) for e in s) for s in sequences)
        return cls(EXPLICIT, tuple(s[0] if s else 0.0 for s in seqs), sequences=seqs)

    @property
    def num_players(self) -> int:
        return len(self.rates)

    @property
    def is_constant(self) -> bool:
        return self.mode == CONSTANT

    def rate(self, player: int, t: int) -> float:
        if t < 1:
            raise ArgumentError(f"learning rates are indexed from round 1, got {t}")
        if self.mode == CONSTANT:
            return self.rates[player]
        if self.mode == DECAY:
            return max(self.floors[player], self.rates[player] / math.sqrt(t))
        seq = self.sequences[player]
        return seq[min(t, len(seq)) - 1]

    def lowest(self, player: int, rounds: int) -> float:
        """前 rounds 轮里的最小学习率，即界里的 η_i"""
        return self.rate(player, max(rounds, 1))

    def floor(self, player: int) -> float:
        """所有轮次上的下界"""
        if self.mode == CONSTANT:
            return self.rates[player]
        if self.mode == DECAY:
            return self.floors[player]
        return self.sequences[player][-1]

    @property
    def eta_one(self) -> float:
        """η^1 = max_i η_i^1"""
        return max(self.rate(i, 1) for i in range(self.num_players))


class CorruptionTracker:
    """腐蚀生成器，同时累计 C_i = Σ_t ‖c_i^t‖_1 与 M_i = sup_t ‖c_i^t‖_1

    内置的几种都把 x̃_i^t 向随机顶点混合：x_i^t = (1 − w_t) x̃_i^t + w_t e_a，
    所以执行的策略总在单纯形上，且 ‖c_i^t‖_1 ≤ 2 w_t。
    一个 tracker 只属于一次运行。
    """

    NONE = "none"
    GEOMETRIC = "geometric"
    BURST = "burst"
    CUSTOM = "custom"

    def __init__(self, kind: str, num_players: int, *, rho: float = 0.0, magnitude: float = 0.0,
                 start: int = 1, width: int = 0, deviations: Optional[Sequence[Sequence[Sequence[float]]]] = None,
                 players: Optional[Sequence[int]] = None, seed: int = 0):
        if kind not in (self.NONE, self.GEOMETRIC, self.BURST, self.CUSTOM):
            raise ConfigurationError(f"unknown corruption kind {kind!r}", keys=("corruption",))
        if kind == self.GEOMETRIC and not 0.0 <= rho < 1.0:
            raise ConfigurationError(f"geometric corruption needs 0 <= rho < 1, got {rho}", keys=("corruption",))
        if kind in (self.GEOMETRIC, self.BURST) and not 0.0 <= magnitude < 1.0:
            raise ConfigurationError(f"corruption magnitude must lie in [0, 1), got {magnitude}", keys=("corruption",))
        if kind == self.BURST and (start < 1 or width < 0):
            raise ConfigurationError(f"burst needs t0 >= 1 and width >= 0, got t0={start}, width={width}",
                                     keys=("corruption",))
        if players is not None and any(not 0 <= p < num_players for p in players):
            raise ConfigurationError(f"corrupted players {list(players)} out of range", keys=("corruption",))
        self.kind = kind
        self.num_players = num_players
        self.rho = float(rho)
        self.magnitude = float(magnitude)
        self.start = int(start)
        self.width = int(width)
        self.deviations = [[np.asarray(c, dtype=float) for c in row] for row in (deviations or [])]
        self.players = None if players is None else frozenset(int(p) for p in players)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.totals = np.zeros(num_players)
        self.sup_norms = np.zeros(num_players)
        self.history: List[np.ndarray] = []

    @classmethod
    def none(cls, num_players: int) -> "CorruptionTracker":
        return cls(cls.NONE, num_players)

    @classmethod
    def geometric(cls, num_players: int, rho: float, magnitude: float, seed: int = 0,
                  players: Optional[Sequence[int]] = None) -> "CorruptionTracker":
        return cls(cls.GEOMETRIC, num_players, rho=rho, magnitude=magnitude, seed=seed, players=players)

    @classmethod
    def burst(cls, num_players: int, start: int, width: int, magnitude: float, seed: int = 0,
              players: Optional[Sequence[int]] = None) -> "CorruptionTracker":
        return cls(cls.BURST, num_players, start=start, width=width, magnitude=magnitude, seed=seed, players=players)

    @classmethod
    def custom(cls, num_players: int, deviations: Sequence[Sequence[Sequence[float]]],
               players: Optional[Sequence[int]] = None) -> "CorruptionTracker":
        return cls(cls.CUSTOM, num_players, deviations=deviations, players=players)

    @property
    def level_bound(self) -> float:
        """内置生成器的 C_i 解析上界；custom 返回已测到的值"""
        if self.kind == self.GEOMETRIC:
            return 2.0 * self.magnitude * self.rho / (1.0 - self.rho)
        if self.kind == self.BURST:
            return 2.0 * self.magnitude * self.width
        if self.kind == self.NONE:
            return 0.0
        return float(self.totals.max()) if self.num_players else 0.0

    def weight(self, t: int) -> float:
        if self.kind == self.GEOMETRIC:
            return self.magnitude * self.rho ** t
        if self.kind == self.BURST:
            return self.magnitude if self.start <= t < self.start + self.width else 0.0
        return 0.0

    def _applies_to(self, player: int) -> bool:
        return self.players is None or player in self.players

    def _custom_target(self, prescribed: MixedStrategy, player: int, t: int) -> MixedStrategy:
        if t > len(self.deviations):
            return prescribed
        row = self.deviations[t - 1]
        if player >= len(row):
            return prescribed
        c = row[player]
        if c.shape != (prescribed.dimension,):
            raise DimensionMismatchError("corruption vector", prescribed.dimension, c.shape, player=player)
        try:
            return MixedStrategy(prescribed.probs + c)
        except ValidationError as e:
            raise ValidationError(f"custom corruption at round {t} moves player {player} off the simplex: {e}") from e

    def generate(self, prescribed: StrategyProfile, t: int) -> Tuple[StrategyProfile, Tuple[np.ndarray, ...]]:
        played = []
        for i, x in enumerate(prescribed.strategies):
            if not self._applies_to(i) or self.kind == self.NONE:
                played.append(x)
            elif self.kind == self.CUSTOM:
                played.append(self._custom_target(x, i, t))
            else:
                w = self.weight(t)
                if w <= 0.0:
                    played.append(x)
                    continue
                target = np.zeros(x.dimension)
                target[int(self._rng.integers(x.dimension))] = 1.0
                played.append(MixedStrategy((1.0 - w) * x.probs + w * target))
        profile = StrategyProfile(tuple(played))
        deviations = tuple(p.probs - x.probs for p, x in zip(profile.strategies, prescribed.strategies))
        self._record(deviations)
        return profile, deviations

    def _record(self, deviations: Sequence[np.ndarray]) -> None:
        norms = np.array([float(np.abs(c).sum()) for c in deviations])
        self.totals += norms
        self.sup_norms = np.maximum(self.sup_norms, norms)
        self.history.append(norms)
        if self.kind in (self.GEOMETRIC, self.BURST) and np.any(self.totals > self.level_bound + 1e-12):
            raise CorruptionBoundError(f"corruption level {self.totals.max()} exceeds analytic bound {self.level_bound}")


def apply_corruption(tracker: Optional[CorruptionTracker], prescribed: StrategyProfile,
                     t: int) -> Tuple[StrategyProfile, Tuple[np.ndarray, ...]]:
    """x^t = x̃^t + c^t；不腐蚀时 c^t = 0"""
    if tracker is None:
        return prescribed, tuple(np.zeros(s.dimension) for s in prescribed.strategies)
    return tracker.generate(prescribed, t)


def theorem_lr_cap(n: int, c: float, c_star: float, weights: Optional[RegretWeights] = None,
                   corrupted: bool = False) -> float:
    """η^1 的上限 c/(4c_*(n−1))·√(m̲/m̄)，腐蚀时再除以 √3"""
    if n < 2:
        raise ArgumentError(f"learning-rate cap needs at least 2 players, got {n}")
    ratio = 1.0 if weights is None else weights.m_min / weights.m_max
    if corrupted:
        ratio /= 3.0
    return c / (4.0 * c_star * (n - 1)) * math.sqrt(ratio)


def _check_specs(game: NormalFormGame, specs: Sequence[RegularizerSpec]) -> None:
    if len(specs) != game.num_players:
        raise DimensionMismatchError("regularizer list", game.num_players, len(specs))
    for i, (k, spec) in enumerate(zip(game.action_counts, specs)):
        if spec.dimension != k:
            raise DimensionMismatchError("regularizer", k, spec.dimension, player=i)


def _initial_profile(game: NormalFormGame, specs: Sequence[RegularizerSpec],
                     initial: Optional[StrategyProfile]) -> StrategyProfile:
    if initial is None:
        return StrategyProfile(tuple(min_point(spec) for spec in specs))
    check_profile(game, initial)
    return StrategyProfile(tuple(interior(spec, x) for spec, x in zip(specs, initial.strategies)))


def init_omd_states(game: NormalFormGame, specs: Sequence[RegularizerSpec],
                    initial: Optional[StrategyProfile] = None) -> Tuple[OmdState, ...]:
    """x^0 = g^0 = argmin R（或给定的初始 profile），v^0 = v(x^0)"""
    _check_specs(game, specs)
    x0 = _initial_profile(game, specs, initial)
    v0 = payoff_fields(game, x0)
    return tuple(OmdState(x, x, x, v) for x, v in zip(x0.strategies, v0))


def init_oftrl_states(game: NormalFormGame, specs: Sequence[RegularizerSpec],
                      initial: Optional[StrategyProfile] = None) -> Tuple[OftrlState, ...]:
    """S = 0；有初始 profile 时以它为 Bregman 中心"""
    _check_specs(game, specs)
    x0 = _initial_profile(game, specs, initial)
    v0 = payoff_fields(game, x0)
    return tuple(
        OftrlState(x, x, np.zeros(x.dimension), v, center=x if initial is not None else None)
        for x, v in zip(x0.strategies, v0))


def _profile(strategies) -> StrategyProfile:
    return StrategyProfile(tuple(strategies))


def omd_round(game: NormalFormGame, states: Sequence[OmdState], specs: Sequence[RegularizerSpec],
              schedule: LearningRateSchedule, t: int,
              corruption: Optional[CorruptionTracker] = None) -> Tuple[Tuple[OmdState, ...], StrategyProfile]:
    """从第 t 轮走到第 t+1 轮

    x̃_i^{t+1} = prox(g_i^t, v_i^t, η_i^{t+1})
    x^{t+1}   = x̃^{t+1} + c^{t+1}，v^{t+1} = v(x^{t+1})
    g_i^{t+1} = prox(g_i^t, v_i^{t+1}, η_i^{t+1})
    """
    etas = [schedule.rate(i, t + 1) for i in range(len(states))]
    prescribed = _profile(
        prox_step(spec, s.anchor, s.last_payoff, eta) for s, spec, eta in zip(states, specs, etas))
    played, _ = apply_corruption(corruption, prescribed, t + 1)
    observed = payoff_fields(game, played)
    new_states = tuple(
        OmdState(
            strategy=played[i],
            prescribed=prescribed[i],
            anchor=prox_step(spec, s.anchor, observed[i], eta),
            last_payoff=observed[i],
            step=t + 1,
        )
        for i, (s, spec, eta) in enumerate(zip(states, specs, etas)))
    return new_states, played


def oftrl_round(game: NormalFormGame, states: Sequence[OftrlState], specs: Sequence[RegularizerSpec],
                schedule: LearningRateSchedule, t: int,
                corruption: Optional[CorruptionTracker] = None) -> Tuple[Tuple[OftrlState, ...], StrategyProfile]:
    """x̂_i^{t+1} = ftrl_step(v̂_i^t + S_i)，随后在执行的 profile 上观测 v̂^{t+1} 并累加进 S"""
    if not schedule.is_constant:
        raise ConfigurationError("OFTRL runs with a constant learning rate per player", keys=("schedule",))
    etas = [schedule.rate(i, 1) for i in range(len(states))]
    prescribed = _profile(
        ftrl_step(spec, s.last_payoff.values + s.cumulative, eta, center=s.center)
        for s, spec, eta in zip(states, specs, etas))
    played, _ = apply_corruption(corruption, prescribed, t + 1)
    observed = payoff_fields(game, played)
    new_states = tuple(
        OftrlState(
            strategy=played[i],
            prescribed=prescribed[i],
            cumulative=s.cumulative + observed[i].values,
            last_payoff=observed[i],
            center=s.center,
            step=t + 1,
        )
        for i, s in enumerate(states))
    return new_states, played


def run_dynamics(game: NormalFormGame, algorithm: str, specs: Sequence[RegularizerSpec],
                 schedule: LearningRateSchedule, rounds: int,
                 corruption: Optional[CorruptionTracker] = None,
                 initial: Optional[StrategyProfile] = None) -> Trajectory:
    """跑 rounds 轮，返回 t = 1..T 的完整记录；相同输入（含 tracker 的种子）给出逐位相同的结果"""
    if rounds < 1:
        raise ArgumentError(f"number of rounds must be >= 1, got {rounds}")
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}; expected omd or oftrl", keys=("algo",))
    if schedule.num_players != game.num_players:
        raise DimensionMismatchError("learning-rate schedule", game.num_players, schedule.num_players)
    if corruption is not None and corruption.num_players != game.num_players:
        raise DimensionMismatchError("corruption tracker", game.num_players, corruption.num_players)

    if algorithm == OMD:
        states = init_omd_states(game, specs, initial)
        step = omd_round
    else:
        states = init_oftrl_states(game, specs, initial)
        step = oftrl_round

    initial_profile = _profile(s.strategy for s in states)
    initial_payoffs = tuple(s.last_payoff for s in states)
    initial_anchors = _profile(s.anchor for s in states) if algorithm == OMD else None

    prescribed, played, payoffs, anchors, deviations, rates = [], [], [], [], [], []
    for t in range(rounds):
        states, profile = step(game, states, specs, schedule, t, corruption)
        prescribed.append(_profile(s.prescribed for s in states))
        played.append(profile)
        payoffs.append(tuple(s.last_payoff for s in states))
        deviations.append(tuple(p.probs - x.probs for p, x in zip(profile.strategies, prescribed[-1].strategies)))
        rates.append(tuple(schedule.rate(i, t + 1) for i in range(game.num_players)))
        if algorithm == OMD:
            anchors.append(_profile(s.anchor for s in states))

    log.debug("%s ran %d rounds on a %s game", algorithm, rounds, "x".join(map(str, game.action_counts)))
    return Trajectory(
        prescribed=tuple(prescribed),
        played=tuple(played),
        payoffs=tuple(payoffs),
        anchors=tuple(anchors) if algorithm == OMD else None,
        initial_profile=initial_profile,
        initial_anchors=initial_anchors,
        initial_payoffs=initial_payoffs,
        deviations=tuple(deviations),
        learning_rates=tuple(rates),
        algorithm=algorithm,
    )
