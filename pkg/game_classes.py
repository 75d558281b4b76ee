"""
博弈类别的判定与构造，以及轨迹上的（加权）后悔

调和条件采用权重按偏离目标 b_i 编号的写法：
    Σ_i Σ_{b_i} μ_{i,b_i} (u_i(a_i, a_{-i}) − u_i(b_i, a_{-i})) = 0,  ∀a ∈ A
它对固定的 u 关于 μ 是线性的，对固定的 μ 关于 u 也是线性的，
判定和生成都归结为求零空间。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from errors import ArgumentError, DimensionMismatchError, ValidationError
from game_core import (
    MixedStrategy,
    NormalFormGame,
    PayoffVector,
    StrategyProfile,
    check_profile,
    payoff_fields,
)

log = logging.getLogger(__name__)

HARMONIC_TOL = 1e-9
PIVOT_TOL = 1e-10
CONSTANT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HarmonicWeights:
    """μ_{i,b_i} > 0，每个玩家一个向量"""

    mu: Tuple[np.ndarray, ...]

    def __post_init__(self):
        arrays = []
        for i, w in enumerate(self.mu):
            w = np.array(w, dtype=float)
            if w.ndim != 1 or w.size == 0:
                raise ArgumentError(f"harmonic weights of player {i} must be a non-empty vector")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ArgumentError(f"harmonic weights must be strictly positive, player {i} has {w.tolist()}")
            w.setflags(write=False)
            arrays.append(w)
        object.__setattr__(self, "mu", tuple(arrays))

    @property
    def action_counts(self) -> Tuple[int, ...]:
        return tuple(w.size for w in self.mu)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.mu)

    def scaled(self, k: float) -> "HarmonicWeights":
        return HarmonicWeights(tuple(k * w for w in self.mu))

    def to_lists(self) -> List[List[float]]:
        return [w.tolist() for w in self.mu]

    @classmethod
    def uniform(cls, action_counts: Sequence[int]) -> "HarmonicWeights":
        return cls(tuple(np.ones(k) for k in action_counts))

    @classmethod
    def from_flat(cls, action_counts: Sequence[int], vector: np.ndarray) -> "HarmonicWeights":
        splits = np.cumsum(action_counts)[:-1]
        return cls(tuple(np.split(np.asarray(vector, dtype=float), splits)))


@dataclass(frozen=True, eq=False)
class RegretWeights:
    """m_i > 0；center 是调和权重诱导的 x* = μ_i / m_i（如有）"""

    m: np.ndarray
    center: Optional[StrategyProfile] = None

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.ndim != 1 or m.size == 0:
            raise ArgumentError("regret weights must be a non-empty vector")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ArgumentError(f"regret weights must be strictly positive, got {m.tolist()}")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @property
    def m_min(self) -> float:
        return float(self.m.min())

    @property
    def m_max(self) -> float:
        return float(self.m.max())

    @classmethod
    def uniform(cls, num_players: int) -> "RegretWeights":
        return cls(np.ones(num_players))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """t = 1..T 的记录；下标 t−1 存第 t 轮

    prescribed 是算法给出的 x̃^t（无扰动时等于 played），payoffs 在 played 上计算。
    动力学产生的轨迹另外保存 x^0、g^0、v^0、锚点 g^t、偏离 c^t 与每轮学习率。
    """

    prescribed: Tuple[StrategyProfile, ...]
    played: Tuple[StrategyProfile, ...]
    payoffs: Tuple[Tuple[PayoffVector, ...], ...]
    anchors: Optional[Tuple[StrategyProfile, ...]] = None
    initial_profile: Optional[StrategyProfile] = None
    initial_anchors: Optional[StrategyProfile] = None
    initial_payoffs: Optional[Tuple[PayoffVector, ...]] = None
    deviations: Optional[Tuple[Tuple[np.ndarray, ...], ...]] = None
    learning_rates: Optional[Tuple[Tuple[float, ...], ...]] = None
    algorithm: str = "profiles"

    def __post_init__(self):
        T = len(self.played)
        lengths = {"prescribed": len(self.prescribed), "payoffs": len(self.payoffs)}
        for name in ("anchors", "deviations", "learning_rates"):
            value = getattr(self, name)
            if value is not None:
                lengths[name] = len(value)
        for name, length in lengths.items():
            if length != T:
                raise ValidationError(f"trajectory field {name} has length {length}, expected {T}")

    def __len__(self) -> int:
        return len(self.played)

    @property
    def num_players(self) -> int:
        return len(self.played[0]) if self.played else 0

    @property
    def has_anchors(self) -> bool:
        return self.anchors is not None and self.initial_anchors is not None and self.initial_payoffs is not None

    def corruption_norms(self) -> np.ndarray:
        """T×n 的 ‖c_i^t‖_1"""
        if self.deviations is None:
            return np.zeros((len(self), self.num_players))
        return np.array([[float(np.abs(c).sum()) for c in row] for row in self.deviations]).reshape(len(self), -1)

    @property
    def is_corrupted(self) -> bool:
        return bool(np.any(self.corruption_norms() > 0))

    @classmethod
    def from_profiles(cls, game: NormalFormGame, profiles: Sequence[StrategyProfile]) -> "Trajectory":
        profiles = tuple(profiles)
        for p in profiles:
            check_profile(game, p)
        payoffs = tuple(payoff_fields(game, p) for p in profiles)
        return cls(prescribed=profiles, played=profiles, payoffs=payoffs)


def _check_weights(game: NormalFormGame, weights: HarmonicWeights) -> None:
    if len(weights.mu) != game.num_players:
        raise DimensionMismatchError("harmonic weights", game.num_players, len(weights.mu))
    for i, (k, w) in enumerate(zip(game.action_counts, weights.mu)):
        if w.size != k:
            raise DimensionMismatchError("harmonic weights", k, w.size, player=i)


def harmonic_matrix(game: NormalFormGame) -> np.ndarray:
    """H[a, (i, b_i)] = u_i(a) − u_i(b_i, a_{-i})，Hμ 就是调和条件的左端"""
    columns = []
    for i, u in enumerate(game.utilities):
        for b in range(game.action_counts[i]):
            deviated = np.broadcast_to(np.take(u, [b], axis=i), u.shape)
            columns.append((u - deviated).ravel())
    return np.stack(columns, axis=1)


def harmonic_residual(game: NormalFormGame, weights: HarmonicWeights) -> float:
    _check_weights(game, weights)
    return float(np.abs(harmonic_matrix(game) @ weights.flat()).max())


def _accept(game: NormalFormGame, candidate: np.ndarray, tol: float) -> Optional[HarmonicWeights]:
    scale = np.abs(candidate).max()
    if scale == 0 or candidate.min() <= 1e-12 * scale:
        return None
    weights = HarmonicWeights.from_flat(game.action_counts, candidate / candidate.min())
    residual = harmonic_residual(game, weights)
    if residual > tol * max(1.0, float(weights.flat().max())):
        return None
    return weights


def solve_harmonic_weights(game: NormalFormGame, tol: float = HARMONIC_TOL) -> Optional[HarmonicWeights]:
    """找一组严格为正的调和权重（最小分量归一为 1），找不到返回 None

    先在零空间基里试：全 1 向量的投影、每个基向量及其相反数；
    都不行时解可行性 LP（Hμ = 0, μ ≥ 1），LP 不可行即确认不存在。
    """
    H = harmonic_matrix(game)
    basis = null_space(H, rcond=PIVOT_TOL)
    if basis.shape[1] == 0:
        log.debug("harmonic system has a trivial nullspace")
        return None

    ones = np.ones(H.shape[1])
    candidates = [basis @ (basis.T @ ones)]
    for col in basis.T:
        candidates.extend([col, -col])
    for candidate in candidates:
        weights = _accept(game, candidate, tol)
        if weights is not None:
            return weights

    result = linprog(np.zeros(H.shape[1]), A_eq=H, b_eq=np.zeros(H.shape[0]),
                     bounds=[(1.0, None)] * H.shape[1], method="highs")
    if result.status != 0:
        log.debug("positivity LP infeasible (status %s): no harmonic weights", result.status)
        return None
    polished = basis @ (basis.T @ result.x)
    return _accept(game, polished, tol)


def _harmonic_operator(weights: HarmonicWeights, action_counts: Sequence[int]) -> np.ndarray:
    """固定 μ 时调和条件关于堆叠效用向量 (u_1, ..., u_n) 的系数矩阵"""
    shape = tuple(action_counts)
    size = int(np.prod(shape))
    n = len(shape)
    L = np.zeros((size, n * size))
    for a in np.ndindex(*shape):
        row = np.ravel_multi_index(a, shape)
        for i in range(n):
            mu = weights.mu[i]
            L[row, i * size + row] += mu.sum()
            for b in range(shape[i]):
                dev = a[:i] + (b,) + a[i + 1:]
                L[row, i * size + np.ravel_multi_index(dev, shape)] -= mu[b]
    return L


def make_harmonic_game(weights: HarmonicWeights, action_counts: Sequence[int], seed: int) -> NormalFormGame:
    """随机效用向量正交投影到调和子空间，再压进 [-1, 1]

    每个玩家各自平移（不改变偏离差），但所有玩家共用一个缩放因子，
    这样对给定的 μ 仍然是调和的。
    """
    shape = tuple(int(k) for k in action_counts)
    if weights.action_counts != shape:
        raise DimensionMismatchError("harmonic weights", shape, weights.action_counts)
    size = int(np.prod(shape))
    basis = null_space(_harmonic_operator(weights, shape))
    rng = np.random.default_rng(seed)
    u = basis @ (basis.T @ rng.standard_normal(len(shape) * size))

    tensors = [u[i * size:(i + 1) * size].reshape(shape) for i in range(len(shape))]
    tensors = [t - (t.max() + t.min()) / 2.0 for t in tensors]
    half = max(float(np.abs(t).max()) for t in tensors)
    if half > 1e-12:
        tensors = [t / half for t in tensors]
    else:
        tensors = [np.zeros(shape) for _ in tensors]
    game = NormalFormGame(tuple(tensors))

    residual = harmonic_residual(game, weights)
    if residual > HARMONIC_TOL * max(1.0, float(weights.flat().max())):
        raise ValidationError(f"generated game is not harmonic: residual {residual:.3e}")
    return game


def regret_weights_from_harmonic(weights: HarmonicWeights) -> RegretWeights:
    """m_i = Σ_{b_i} μ_{i,b_i}，center 为 x*_i = μ_i / m_i"""
    m = np.array([w.sum() for w in weights.mu])
    center = StrategyProfile(tuple(MixedStrategy(w / w.sum()) for w in weights.mu))
    return RegretWeights(m, center=center)


def weights_from_interior_equilibrium(game: NormalFormGame, profile: StrategyProfile,
                                      tol: float = HARMONIC_TOL) -> Optional[HarmonicWeights]:
    """两人零和博弈若有完全混合的均衡 x*，则它以 μ = x* 为权重是调和的"""
    check_profile(game, profile)
    if any(np.any(s.probs <= 0) for s in profile.strategies):
        return None
    weights = HarmonicWeights(tuple(s.probs for s in profile.strategies))
    if harmonic_residual(game, weights) > tol:
        return None
    return weights


def _player_arrays(trajectory: Trajectory, player: int) -> Tuple[np.ndarray, np.ndarray]:
    if len(trajectory) == 0:
        raise ArgumentError("regret of an empty trajectory is undefined")
    if not 0 <= player < trajectory.num_players:
        raise ArgumentError(f"player index {player} out of range")
    V = np.array([p[player].values for p in trajectory.payoffs])
    X = np.array([x[player].probs for x in trajectory.played])
    return V, X


def regret_series(trajectory: Trajectory, player: int) -> np.ndarray:
    """每个前缀 T' ≤ T 上的 Reg_i^{T'}"""
    V, X = _player_arrays(trajectory, player)
    best = np.cumsum(V, axis=0).max(axis=1)
    realized = np.cumsum(np.einsum("ta,ta->t", V, X))
    return best - realized


def regret(trajectory: Trajectory, player: int) -> float:
    """max_a Σ_t v_i^t(a) − Σ_t ⟨x_i^t, v_i^t⟩（线性目标在顶点取到最大）"""
    V, X = _player_arrays(trajectory, player)
    return float(V.sum(axis=0).max() - np.einsum("ta,ta->", V, X))


def weighted_regret(trajectory: Trajectory, weights: RegretWeights) -> Tuple[Tuple[float, ...], float]:
    if weights.m.size != trajectory.num_players:
        raise DimensionMismatchError("regret weights", trajectory.num_players, weights.m.size)
    per_player = tuple(float(m) * regret(trajectory, i) for i, m in enumerate(weights.m))
    return per_player, float(sum(per_player))


def is_constant_sum(game: NormalFormGame, tol: float = CONSTANT_SUM_TOL) -> Optional[float]:
    total = np.sum(np.stack(game.utilities), axis=0)
    if float(total.max() - total.min()) > tol:
        return None
    return float(total.mean())


def random_trajectory(game: NormalFormGame, length: int, rng: np.random.Generator,
                      pure_fraction: float = 0.0) -> Trajectory:
    """每轮独立抽取的随机 profile；pure_fraction 的比例换成纯策略顶点"""
    profiles = []
    for _ in range(length):
        strategies = []
        for k in game.action_counts:
            if rng.random() < pure_fraction:
                strategies.append(MixedStrategy.vertex(k, int(rng.integers(k))))
            else:
                strategies.append(MixedStrategy(rng.dirichlet(np.ones(k))))
        profiles.append(StrategyProfile(tuple(strategies)))
    return Trajectory.from_profiles(game, profiles)


def best_response_chase(game: NormalFormGame, rounds: int, leader: int = 0) -> Trajectory:
    """其余玩家轮流出纯动作，leader 每轮对当前对手做纯最优反应

    在两个玩家权重不等的 2×2 调和博弈上，这条轨迹的未加权总后悔严格为负，
    而加权总后悔为零。
    """
    if rounds < 1:
        raise ArgumentError(f"rounds must be positive, got {rounds}")
    counts = game.action_counts
    profiles = []
    for t in range(rounds):
        actions = [t % k for k in counts]
        actions[leader] = 0
        probe = StrategyProfile.pure(counts, actions)
        field = payoff_fields(game, probe)[leader].values
        actions[leader] = int(np.argmax(field))
        profiles.append(StrategyProfile.pure(counts, actions))
    return Trajectory.from_profiles(game, profiles)
