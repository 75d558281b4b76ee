"""
轨迹的事后诊断：RVU 型后悔界、收益 Lipschitz 性、路径长度界、
最优迭代的近似 Nash 证书与收敛判定

所有检查都在正则项配对的范数下计算（熵：ℓ1/ℓ∞，欧氏：ℓ2/ℓ2），
对每个前缀 T 给出整条序列，方便逐前缀断言。
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from dynamics import LearningRateSchedule, theorem_lr_cap
from errors import ArgumentError, DiagnosticUnavailableError, DimensionMismatchError
from game_classes import RegretWeights, Trajectory, regret_series
from game_core import NormalFormGame, StrategyProfile, nash_gap, payoff_fields
from regularizers import RegularizerSpec, divergence_radius, dual_norm, norm_constants, primal_norm

log = logging.getLogger(__name__)

RVU_TOL = 1e-6
LIPSCHITZ_TOL = 1e-12
PATH_TOL = 1e-9


class ConvergenceStatus(str, Enum):
    CONVERGED_TO_POINT = "converged-to-point"
    APPROACHING_SET = "approaching-set"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class BoundCheck:
    """一个不等式 lhs ≤ rhs 的检查结果；skipped 时 holds 为 None"""

    lhs: float
    rhs: float
    holds: Optional[bool]
    skipped: bool = False
    reason: str = ""

    @property
    def status(self) -> str:
        if self.skipped:
            return "skipped"
        return "holds" if self.holds else "violated"

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "status": self.status, "reason": self.reason}


@dataclass(frozen=True)
class RoundDiagnostics:
    t: int
    nash_gap: float
    anchor_gaps: Optional[Tuple[float, ...]]        # ‖x̃_i^t − g_i^t‖
    prev_anchor_gaps: Optional[Tuple[float, ...]]   # ‖x̃_i^t − g_i^{t-1}‖
    payoff_variation: Optional[Tuple[float, ...]]   # ‖v_i^t − v_i^{t-1}‖_∞
    step_l1: Optional[Tuple[float, ...]]            # ‖x_i^t − x_i^{t-1}‖_1
    corruption: Tuple[float, ...]                   # ‖c_i^t‖_1

    @property
    def eps(self) -> Optional[float]:
        """ε_t = sqrt(Σ_i ‖x̃_i^t − g_i^t‖² + ‖x̃_i^t − g_i^{t-1}‖²)"""
        if self.anchor_gaps is None:
            return None
        total = sum(a * a for a in self.anchor_gaps) + sum(b * b for b in self.prev_anchor_gaps)
        return math.sqrt(total)


@dataclass(frozen=True)
class BestIterate:
    t_star: int
    gap: float
    initial_gap: float
    eps: Optional[float]
    certified_bound: Optional[float]
    corruption: float
    first_eps_round: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "t": self.t_star,
            "gap": self.gap,
            "initial_gap": self.initial_gap,
            "eps_t": self.eps,
            "certified_bound": self.certified_bound,
            "corruption_l1": self.corruption,
            "first_eps_round": self.first_eps_round,
        }


def _require_anchors(trajectory: Trajectory) -> List[StrategyProfile]:
    if not trajectory.has_anchors:
        raise DiagnosticUnavailableError(
            f"{trajectory.algorithm} trajectory has no recorded anchors g^t; this certificate needs an OMD run")
    return [trajectory.initial_anchors] + list(trajectory.anchors)


def _check_specs(trajectory: Trajectory, specs: Sequence[RegularizerSpec]) -> None:
    if len(specs) != trajectory.num_players:
        raise DimensionMismatchError("regularizer list", trajectory.num_players, len(specs))


def _rates(trajectory: Trajectory, player: int, schedule: Optional[LearningRateSchedule]) -> np.ndarray:
    T = len(trajectory)
    if schedule is not None:
        return np.array([schedule.rate(player, t) for t in range(1, T + 1)])
    if trajectory.learning_rates is None:
        raise DiagnosticUnavailableError("trajectory carries no learning rates; pass the schedule explicitly")
    return np.array([row[player] for row in trajectory.learning_rates])


def _anchor_distances(trajectory: Trajectory, spec: RegularizerSpec, player: int) -> Tuple[np.ndarray, np.ndarray]:
    anchors = _require_anchors(trajectory)
    here, before = [], []
    for t, x in enumerate(trajectory.prescribed, start=1):
        p = x[player].probs
        here.append(primal_norm(spec, p - anchors[t][player].probs))
        before.append(primal_norm(spec, p - anchors[t - 1][player].probs))
    return np.array(here), np.array(before)


def _radius_series(trajectory: Trajectory, spec: RegularizerSpec, player: int, rates: np.ndarray) -> np.ndarray:
    """R̄_i 的前缀序列：常数步长只需 D(·, g^0)，变步长取 g^0..g^{T-1} 上的最大值"""
    anchors = _require_anchors(trajectory)
    T = len(trajectory)
    if np.all(rates == rates[0]):
        return np.full(T, divergence_radius(spec, [anchors[0][player]]))
    radii = np.array([divergence_radius(spec, [anchors[t][player]]) for t in range(T)])
    return np.maximum.accumulate(radii)


def _payoff_differences(trajectory: Trajectory, player: int) -> List[np.ndarray]:
    """v_i^t − v_i^{t-1}，t = 1..T（v^0 在初始 profile 上）"""
    if trajectory.initial_payoffs is None:
        raise DiagnosticUnavailableError("trajectory carries no initial payoff v^0")
    previous = [trajectory.initial_payoffs[player].values] + [v[player].values for v in trajectory.payoffs[:-1]]
    return [v[player].values - p for v, p in zip(trajectory.payoffs, previous)]


def _payoff_variation(trajectory: Trajectory, spec: RegularizerSpec, player: int) -> np.ndarray:
    return np.array([dual_norm(spec, d) for d in _payoff_differences(trajectory, player)])


def compute_round_diagnostics(game: NormalFormGame, trajectory: Trajectory,
                              specs: Sequence[RegularizerSpec]) -> List[RoundDiagnostics]:
    """每一轮的诊断量；没有锚点的轨迹（OFTRL）对应列为 None"""
    _check_specs(trajectory, specs)
    n = trajectory.num_players
    corruption = trajectory.corruption_norms()

    anchor_cols = None
    if trajectory.has_anchors:
        pairs = [_anchor_distances(trajectory, specs[i], i) for i in range(n)]
        anchor_cols = ([p[0] for p in pairs], [p[1] for p in pairs])

    variation = None
    if trajectory.initial_payoffs is not None:
        variation = [[float(np.abs(d).max()) for d in _payoff_differences(trajectory, i)] for i in range(n)]

    previous = trajectory.initial_profile
    rows = []
    for t, x in enumerate(trajectory.played, start=1):
        step = None
        if previous is not None:
            step = tuple(float(np.abs(a - b).sum()) for a, b in zip(x.arrays(), previous.arrays()))
        rows.append(RoundDiagnostics(
            t=t,
            nash_gap=nash_gap(game, x),
            anchor_gaps=tuple(float(col[t - 1]) for col in anchor_cols[0]) if anchor_cols else None,
            prev_anchor_gaps=tuple(float(col[t - 1]) for col in anchor_cols[1]) if anchor_cols else None,
            payoff_variation=tuple(float(col[t - 1]) for col in variation) if variation else None,
            step_l1=step,
            corruption=tuple(float(c) for c in corruption[t - 1]),
        ))
        previous = x
    return rows


def rvu_slack_series(trajectory: Trajectory, specs: Sequence[RegularizerSpec], player: int,
                     schedule: Optional[LearningRateSchedule] = None) -> Tuple[np.ndarray, np.ndarray]:
    """每个前缀 T 上的 (Reg_i^T, RVU 右端)

    右端 = R̄_i/η_i^T + Σ η_i^t‖v_i^t − v_i^{t-1}‖_*² − ¼Σ (1/η_i^t)(‖g_i^t − x̃_i^t‖² + ‖x̃_i^t − g_i^{t-1}‖²)
    再加上 Σ‖c_i^t‖_1（执行的策略与给出的策略之差）。
    """
    _check_specs(trajectory, specs)
    if len(trajectory) == 0:
        raise ArgumentError("RVU check of an empty trajectory")
    spec = specs[player]
    rates = _rates(trajectory, player, schedule)
    here, before = _anchor_distances(trajectory, spec, player)
    radius = _radius_series(trajectory, spec, player, rates)
    variation = _payoff_variation(trajectory, spec, player)
    corruption = trajectory.corruption_norms()[:, player]

    rhs = (radius / rates
           + np.cumsum(rates * variation ** 2)
           - 0.25 * np.cumsum((here ** 2 + before ** 2) / rates)
           + np.cumsum(corruption))
    return regret_series(trajectory, player), rhs


def rvu_bound_check(trajectory: Trajectory, specs: Sequence[RegularizerSpec], player: int,
                    rounds: Optional[int] = None, schedule: Optional[LearningRateSchedule] = None) -> BoundCheck:
    lhs, rhs = rvu_slack_series(trajectory, specs, player, schedule)
    k = (rounds or len(trajectory)) - 1
    if not 0 <= k < len(lhs):
        raise ArgumentError(f"prefix {rounds} out of range for a trajectory of length {len(trajectory)}")
    return BoundCheck(float(lhs[k]), float(rhs[k]), bool(lhs[k] <= rhs[k] + RVU_TOL))


def weighted_rvu_bound_check(trajectory: Trajectory, specs: Sequence[RegularizerSpec], weights: RegretWeights,
                             schedule: Optional[LearningRateSchedule] = None) -> BoundCheck:
    """Σ_i m_i Reg_i^T ≤ Σ_i m_i·(RVU 右端)_i"""
    if weights.m.size != trajectory.num_players:
        raise DimensionMismatchError("regret weights", trajectory.num_players, weights.m.size)
    lhs = rhs = 0.0
    for i, m in enumerate(weights.m):
        reg, bound = rvu_slack_series(trajectory, specs, i, schedule)
        lhs += float(m) * float(reg[-1])
        rhs += float(m) * float(bound[-1])
    return BoundCheck(lhs, rhs, lhs <= rhs + RVU_TOL * float(weights.m.sum()))


def lipschitz_slack(game: NormalFormGame, x: StrategyProfile, y: StrategyProfile) -> float:
    """min_i [Σ_{j≠i}‖x_j − y_j‖_1 − ‖v_i(x) − v_i(y)‖_∞]"""
    vx, vy = payoff_fields(game, x), payoff_fields(game, y)
    steps = [float(np.abs(a - b).sum()) for a, b in zip(x.arrays(), y.arrays())]
    total = sum(steps)
    return min(total - steps[i] - float(np.abs(vx[i].values - vy[i].values).max()) for i in range(game.num_players))


def payoff_lipschitz_check(trajectory: Trajectory) -> float:
    """相邻两轮上 Lipschitz 不等式的最小余量；≥ 0 即处处成立"""
    if len(trajectory) < 2:
        raise ArgumentError(f"Lipschitz check needs T >= 2, got {len(trajectory)}")
    worst = math.inf
    for t in range(1, len(trajectory)):
        x, y = trajectory.played[t].arrays(), trajectory.played[t - 1].arrays()
        steps = [float(np.abs(a - b).sum()) for a, b in zip(x, y)]
        total = sum(steps)
        for i in range(trajectory.num_players):
            dv = float(np.abs(trajectory.payoffs[t][i].values - trajectory.payoffs[t - 1][i].values).max())
            worst = min(worst, total - steps[i] - dv)
    return worst


def path_length_series(trajectory: Trajectory, specs: Sequence[RegularizerSpec]) -> np.ndarray:
    """Σ_{t≤T} ε_t² 的前缀序列"""
    _check_specs(trajectory, specs)
    eps_sq = np.zeros(len(trajectory))
    for i, spec in enumerate(specs):
        here, before = _anchor_distances(trajectory, spec, i)
        eps_sq += here ** 2 + before ** 2
    return np.cumsum(eps_sq)


def _lr_cap(trajectory: Trajectory, specs: Sequence[RegularizerSpec], weights: RegretWeights) -> float:
    c, c_star = norm_constants(specs)
    return theorem_lr_cap(trajectory.num_players, c, c_star, weights, corrupted=trajectory.is_corrupted)


def path_length_rhs_series(trajectory: Trajectory, specs: Sequence[RegularizerSpec], weights: RegretWeights,
                           schedule: Optional[LearningRateSchedule] = None) -> np.ndarray:
    """Σ_i 8R̄_i m_i η^1/(η_i m̲)，腐蚀时再加 48(η^1)²(m̄/m̲)c_*²(n−1)² Σ M_i C_i + 8η^1(m̄/m̲) Σ C_i"""
    _check_specs(trajectory, specs)
    if weights.m.size != trajectory.num_players:
        raise DimensionMismatchError("regret weights", trajectory.num_players, weights.m.size)
    n = trajectory.num_players
    rates = [_rates(trajectory, i, schedule) for i in range(n)]
    eta_one = max(float(r[0]) for r in rates)
    m_min, m_max = weights.m_min, weights.m_max

    rhs = np.zeros(len(trajectory))
    for i, spec in enumerate(specs):
        lowest = np.minimum.accumulate(rates[i])
        radius = _radius_series(trajectory, spec, i, rates[i])
        rhs += 8.0 * radius * float(weights.m[i]) * eta_one / (lowest * m_min)

    if trajectory.is_corrupted:
        _, c_star = norm_constants(specs)
        norms = trajectory.corruption_norms()
        totals = np.cumsum(norms, axis=0)
        sups = np.maximum.accumulate(norms, axis=0)
        ratio = m_max / m_min
        rhs += 48.0 * eta_one ** 2 * ratio * c_star ** 2 * (n - 1) ** 2 * np.sum(sups * totals, axis=1)
        rhs += 8.0 * eta_one * ratio * np.sum(totals, axis=1)
    return rhs


def path_length_bound_check(trajectory: Trajectory, specs: Sequence[RegularizerSpec], weights: RegretWeights,
                            schedule: Optional[LearningRateSchedule] = None,
                            rounds: Optional[int] = None) -> BoundCheck:
    """学习率超过上限时返回 skipped，不算失败"""
    lhs = path_length_series(trajectory, specs)
    k = (rounds or len(trajectory)) - 1
    if not 0 <= k < len(lhs):
        raise ArgumentError(f"prefix {rounds} out of range for a trajectory of length {len(trajectory)}")
    cap = _lr_cap(trajectory, specs, weights)
    eta_one = max(float(_rates(trajectory, i, schedule)[0]) for i in range(trajectory.num_players))
    if eta_one > cap * (1.0 + 1e-12):
        reason = f"eta^1 = {eta_one:g} exceeds the cap {cap:.6g}"
        log.warning("path-length bound skipped: %s", reason)
        return BoundCheck(float(lhs[k]), math.nan, None, skipped=True, reason=reason)
    rhs = path_length_rhs_series(trajectory, specs, weights, schedule)
    return BoundCheck(float(lhs[k]), float(rhs[k]), bool(lhs[k] <= rhs[k] * (1.0 + PATH_TOL) + PATH_TOL))


def averaged_path_length_check(trajectory: Trajectory, specs: Sequence[RegularizerSpec], weights: RegretWeights,
                               schedule: Optional[LearningRateSchedule] = None) -> bool:
    """每个前缀 T 上 min_{t≤T} ε_t² ≤ rhs(T)/T"""
    _check_specs(trajectory, specs)
    eps_sq = np.diff(np.concatenate([[0.0], path_length_series(trajectory, specs)]))
    best = np.minimum.accumulate(eps_sq)
    rhs = path_length_rhs_series(trajectory, specs, weights, schedule)
    T = np.arange(1, len(trajectory) + 1)
    return bool(np.all(best <= rhs / T * (1.0 + PATH_TOL) + PATH_TOL))


def _gap_factor(specs: Sequence[RegularizerSpec], rates: Sequence[float]) -> float:
    _, c_star = norm_constants(specs)
    return c_star + 2.0 * max(s.smoothness * s.diameter / eta for s, eta in zip(specs, rates))


def extract_best_iterate(game: NormalFormGame, trajectory: Trajectory,
                         specs: Optional[Sequence[RegularizerSpec]] = None,
                         eps: Optional[float] = None) -> BestIterate:
    """t* = argmin_t nash_gap(x^t)（并列取最早）以及该轮的路径长度证书

    证书：gap(x^t) ≤ ε_t·(c_* + 2 max_i G_iΩ_i/η_i^t) + ‖c^t‖_1
    """
    if len(trajectory) == 0:
        raise ArgumentError("best iterate of an empty trajectory")
    gaps = np.array([nash_gap(game, x) for x in trajectory.played])
    k = int(np.argmin(gaps))
    corruption = trajectory.corruption_norms()[k]

    eps_t = certified = first = None
    if specs is not None and trajectory.has_anchors:
        eps_series = np.sqrt(np.diff(np.concatenate([[0.0], path_length_series(trajectory, specs)])))
        eps_t = float(eps_series[k])
        if trajectory.learning_rates is not None:
            certified = eps_t * _gap_factor(specs, trajectory.learning_rates[k]) + float(corruption.sum())
        if eps is not None:
            hits = np.nonzero(eps_series <= eps)[0]
            first = int(hits[0]) + 1 if hits.size else None
    return BestIterate(
        t_star=k + 1,
        gap=float(gaps[k]),
        initial_gap=float(gaps[0]),
        eps=eps_t,
        certified_bound=certified,
        corruption=float(corruption.sum()),
        first_eps_round=first,
    )


def certified_gap_series(trajectory: Trajectory, specs: Sequence[RegularizerSpec]) -> np.ndarray:
    """每一轮的证书上界，用于逐轮对照实测的 nash_gap"""
    eps_series = np.sqrt(np.diff(np.concatenate([[0.0], path_length_series(trajectory, specs)])))
    if trajectory.learning_rates is None:
        raise DiagnosticUnavailableError("trajectory carries no learning rates")
    factors = np.array([_gap_factor(specs, rates) for rates in trajectory.learning_rates])
    return eps_series * factors + trajectory.corruption_norms().sum(axis=1)


def detect_convergence(game: NormalFormGame, trajectory: Trajectory, window: int = 50,
                       tol: float = 1e-2) -> ConvergenceStatus:
    """最后 window 个执行的 profile 两两 ℓ1 距离 ≤ tol 且末轮 gap ≤ tol 判为收敛到点"""
    if window < 2:
        raise ArgumentError(f"convergence window must be >= 2, got {window}")
    if window > len(trajectory):
        raise ArgumentError(f"convergence window {window} exceeds trajectory length {len(trajectory)}")
    if tol < 0:
        raise ArgumentError(f"tolerance must be non-negative, got {tol}")
    tail = np.array([np.concatenate(x.arrays()) for x in trajectory.played[-window:]])
    spread = float(np.abs(tail[:, None, :] - tail[None, :, :]).sum(axis=2).max())
    gap = nash_gap(game, trajectory.played[-1])
    if gap > tol:
        return ConvergenceStatus.INCONCLUSIVE
    if spread <= tol:
        return ConvergenceStatus.CONVERGED_TO_POINT
    return ConvergenceStatus.APPROACHING_SET


def iteration_bound(eps: float, specs: Sequence[RegularizerSpec], schedule: LearningRateSchedule,
                    weights: RegretWeights, corruption_totals: Optional[Sequence[float]] = None,
                    corruption_sups: Optional[Sequence[float]] = None) -> float:
    """超过这个轮数后，必定存在 ε_t ≤ eps 的迭代

    无腐蚀：Σ_i 8R̄_i m_i η^1/(ε² η_i m̲)；腐蚀时右端加上 C_i、M_i 两项后同样除以 ε²。
    """
    if eps <= 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    n = len(specs)
    if weights.m.size != n:
        raise DimensionMismatchError("regret weights", n, weights.m.size)
    eta_one = schedule.eta_one
    m_min, m_max = weights.m_min, weights.m_max
    total = sum(8.0 * s.divergence_bound * float(m) * eta_one / (schedule.floor(i) * m_min)
                for i, (s, m) in enumerate(zip(specs, weights.m)))
    if corruption_totals is not None:
        C = np.asarray(corruption_totals, dtype=float)
        M = np.asarray(corruption_sups if corruption_sups is not None else np.full(n, 2.0), dtype=float)
        _, c_star = norm_constants(specs)
        ratio = m_max / m_min
        total += 48.0 * eta_one ** 2 * ratio * c_star ** 2 * (n - 1) ** 2 * float(M @ C)
        total += 8.0 * eta_one * ratio * float(C.sum())
    return total / eps ** 2
