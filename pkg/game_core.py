"""
有限标准式博弈：效用张量、混合策略、收益场与 Nash gap

效用按玩家存成稠密的行主序张量，形状为 action_counts，
联合动作的扁平下标按混合进制计算（玩家 1 的动作是最高位）。
所有类型构造后不可变，所有运算都是纯函数。
"""

import json
import logging
import pathlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ArgumentError, DimensionMismatchError, ValidationError

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
RENORMALIZE_TOL = 1e-6
NEGATIVE_TOL = 1e-12
EPS_NASH_SLACK = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    """Δ(A_i) 上的一个点；|Σ−1| ≤ 1e-6 时自动重新归一化，超出则拒绝"""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError(f"mixed strategy must be a non-empty vector, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("mixed strategy has non-finite entries")
        if np.any(p < -NEGATIVE_TOL):
            raise ValidationError(f"mixed strategy has negative entries: {p.tolist()}")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValidationError(f"mixed strategy sums to {total!r}, not 1")
        if abs(total - 1.0) > 0.0:
            p = p / total
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def dimension(self) -> int:
        return int(self.probs.size)

    @classmethod
    def uniform(cls, dimension: int) -> "MixedStrategy":
        return cls(np.full(dimension, 1.0 / dimension))

    @classmethod
    def vertex(cls, dimension: int, action: int) -> "MixedStrategy":
        p = np.zeros(dimension)
        p[action] = 1.0
        return cls(p)


@dataclass(frozen=True, eq=False)
class PayoffVector:
    """v_i(x)：第 a_i 个分量是 u_i(a_i, x_{-i})"""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValidationError(f"payoff vector must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("payoff vector has non-finite entries")
        object.__setattr__(self, "values", _frozen(v))


def _as_strategy(s) -> MixedStrategy:
    return s if isinstance(s, MixedStrategy) else MixedStrategy(s)


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """联合混合策略 x = (x_1, ..., x_n)"""

    strategies: Tuple[MixedStrategy, ...]

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(_as_strategy(s) for s in self.strategies))

    def __len__(self) -> int:
        return len(self.strategies)

    def __getitem__(self, player: int) -> MixedStrategy:
        return self.strategies[player]

    def arrays(self) -> List[np.ndarray]:
        return [s.probs for s in self.strategies]

    def dimensions(self) -> Tuple[int, ...]:
        return tuple(s.dimension for s in self.strategies)

    def replace(self, player: int, strategy) -> "StrategyProfile":
        items = list(self.strategies)
        items[player] = _as_strategy(strategy)
        return StrategyProfile(tuple(items))

    @classmethod
    def uniform(cls, action_counts: Sequence[int]) -> "StrategyProfile":
        return cls(tuple(MixedStrategy.uniform(k) for k in action_counts))

    @classmethod
    def pure(cls, action_counts: Sequence[int], actions: Sequence[int]) -> "StrategyProfile":
        return cls(tuple(MixedStrategy.vertex(k, a) for k, a in zip(action_counts, actions)))


@dataclass(frozen=True, eq=False)
class NormalFormGame:
    """Γ = (n, A, u)：每个玩家一个形状为 action_counts 的效用张量"""

    utilities: Tuple[np.ndarray, ...]

    def __post_init__(self):
        tensors = tuple(np.asarray(u, dtype=float) for u in self.utilities)
        if len(tensors) < 2:
            raise ValidationError(f"a normal-form game needs at least 2 players, got {len(tensors)}")
        shape = tensors[0].shape
        if len(shape) != len(tensors):
            raise ValidationError(
                f"utility tensors must have one axis per player: {len(tensors)} players, shape {shape}")
        if any(k < 1 for k in shape):
            raise ValidationError(f"every player needs at least one action, got {shape}")
        for i, u in enumerate(tensors):
            if u.shape != shape:
                raise DimensionMismatchError("utility tensor", shape, u.shape, player=i)
            if not np.all(np.isfinite(u)):
                raise ValidationError(f"utilities of player {i} contain non-finite entries")
        object.__setattr__(self, "utilities", tuple(_frozen(u) for u in tensors))

    @property
    def num_players(self) -> int:
        return len(self.utilities)

    @property
    def action_counts(self) -> Tuple[int, ...]:
        return tuple(int(k) for k in self.utilities[0].shape)

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.action_counts))

    @property
    def is_normalized(self) -> bool:
        return all(np.all(np.abs(u) <= 1.0 + 1e-12) for u in self.utilities)

    def negated(self) -> "NormalFormGame":
        return NormalFormGame(tuple(-u for u in self.utilities))


def random_game(action_counts: Sequence[int], rng: np.random.Generator) -> NormalFormGame:
    """每个条目独立服从 U[-1, 1] 的随机博弈"""
    shape = tuple(action_counts)
    return NormalFormGame(tuple(rng.uniform(-1.0, 1.0, size=shape) for _ in shape))


def check_profile(game: NormalFormGame, profile: StrategyProfile) -> None:
    if len(profile) != game.num_players:
        raise DimensionMismatchError("profile", game.num_players, len(profile))
    for i, (k, s) in enumerate(zip(game.action_counts, profile.strategies)):
        if s.dimension != k:
            raise DimensionMismatchError("strategy", k, s.dimension, player=i)


def _check_player(game: NormalFormGame, player: int) -> None:
    if not 0 <= player < game.num_players:
        raise ArgumentError(f"player index {player} out of range for {game.num_players} players")


def _contract_opponents(tensor: np.ndarray, arrays: Sequence[np.ndarray], keep: int) -> np.ndarray:
    # 从最高轴往下收缩，较低轴的编号保持不变
    t = tensor
    for j in reversed(range(len(arrays))):
        if j == keep:
            continue
        t = np.tensordot(t, arrays[j], axes=([j], [0]))
    return t


def payoff_field(game: NormalFormGame, profile: StrategyProfile, player: int) -> PayoffVector:
    """v_i(x) = (u_i(a_i, x_{-i}))_{a_i}"""
    check_profile(game, profile)
    _check_player(game, player)
    values = _contract_opponents(game.utilities[player], profile.arrays(), player)
    return PayoffVector(values)


def payoff_fields(game: NormalFormGame, profile: StrategyProfile) -> Tuple[PayoffVector, ...]:
    return tuple(payoff_field(game, profile, i) for i in range(game.num_players))


def expected_utility(game: NormalFormGame, profile: StrategyProfile, player: int) -> float:
    """u_i(x) = Σ_a u_i(a) Π_j x_j(a_j) = ⟨v_i(x), x_i⟩"""
    field = payoff_field(game, profile, player)
    return float(field.values @ profile[player].probs)


def nash_gap(game: NormalFormGame, profile: StrategyProfile) -> float:
    """使 profile 成为 ε-近似 Nash 均衡的最小 ε"""
    check_profile(game, profile)
    gap = 0.0
    for i in range(game.num_players):
        v = payoff_field(game, profile, i).values
        gap = max(gap, float(v.max() - v @ profile[i].probs))
    return max(gap, 0.0)


def is_eps_nash(game: NormalFormGame, profile: StrategyProfile, eps: float) -> bool:
    if eps < 0:
        raise ArgumentError(f"eps must be non-negative, got {eps}")
    return nash_gap(game, profile) <= eps + EPS_NASH_SLACK


def normalize_game(game: NormalFormGame) -> NormalFormGame:
    """把每个玩家的效用仿射地压进 [-1, 1]；已经在区间内的玩家保持不变"""
    rescaled = []
    changed = False
    for i, u in enumerate(game.utilities):
        if not np.all(np.isfinite(u)):
            raise ValidationError(f"utilities of player {i} contain non-finite entries")
        lo, hi = float(u.min()), float(u.max())
        if lo >= -1.0 and hi <= 1.0:
            rescaled.append(u)
            continue
        mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
        rescaled.append((u - mid) / half if half > 0 else u - mid)
        changed = True
        log.info("rescaled utilities of player %d from [%g, %g] into [-1, 1]", i, lo, hi)
    return NormalFormGame(tuple(rescaled)) if changed else game


def game_to_dict(game: NormalFormGame) -> dict:
    return {
        "players": game.num_players,
        "actions": list(game.action_counts),
        "utilities": [u.ravel().tolist() for u in game.utilities],
    }


def game_from_dict(data: dict) -> NormalFormGame:
    missing = [k for k in ("players", "actions", "utilities") if k not in data]
    if missing:
        raise ValidationError(f"game JSON is missing keys: {missing}")
    n = data["players"]
    actions = tuple(int(k) for k in data["actions"])
    flat = data["utilities"]
    if len(actions) != n:
        raise DimensionMismatchError("actions list", n, len(actions))
    if len(flat) != n:
        raise DimensionMismatchError("utilities list", n, len(flat))
    size = int(np.prod(actions))
    tensors = []
    for i, values in enumerate(flat):
        if len(values) != size:
            raise DimensionMismatchError("flat utility array", size, len(values), player=i)
        tensors.append(np.asarray(values, dtype=float).reshape(actions))
    return NormalFormGame(tuple(tensors))


def load_game(path: Union[str, pathlib.Path]) -> NormalFormGame:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"cannot parse game file {path}: {e}") from e
    return game_from_dict(data)


def save_game(game: NormalFormGame, path: Union[str, pathlib.Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(game_to_dict(game), f, ensure_ascii=False, indent=2)


def profile_from_lists(action_counts: Sequence[int], rows: Optional[Sequence[Sequence[float]]]) -> StrategyProfile:
    """按玩家给出的概率列表构造 profile；缺省的玩家取均匀分布"""
    rows = list(rows or [])
    if len(rows) > len(action_counts):
        raise DimensionMismatchError("initial profile", len(action_counts), len(rows))
    strategies = []
    for i, k in enumerate(action_counts):
        if i < len(rows) and rows[i] is not None:
            s = MixedStrategy(rows[i])
            if s.dimension != k:
                raise DimensionMismatchError("initial strategy", k, s.dimension, player=i)
            strategies.append(s)
        else:
            strategies.append(MixedStrategy.uniform(k))
    return StrategyProfile(tuple(strategies))
