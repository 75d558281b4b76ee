"""
单纯形上的正则项：负熵与平方欧氏

两种正则项都给出精确的 Bregman 散度、闭式（或投影式）prox 步和 FTRL 步。
负熵的所有输出都被截断到 δ-内部再归一化，这样光滑常数 G_i = 1/δ
和散度上界都是有限的，可以直接代入定理里的界。
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import rel_entr

from errors import ArgumentError, DimensionMismatchError, DomainError, ValidationError
from game_core import MixedStrategy, PayoffVector

log = logging.getLogger(__name__)

ENTROPY = "entropy"
EUCLID = "euclid"
DEFAULT_DELTA = 1e-8

_ALIASES = {
    "entropy": ENTROPY,
    "negative-entropy": ENTROPY,
    "euclid": EUCLID,
    "euclidean": EUCLID,
    "squared-euclidean": EUCLID,
}


def canonical_kind(kind: str) -> str:
    try:
        return _ALIASES[kind.lower()]
    except KeyError:
        raise ArgumentError(f"unknown regularizer kind {kind!r}; expected entropy or euclid") from None


@dataclass(frozen=True)
class RegularizerSpec:
    """一个玩家的正则项 R_i 以及定理里用到的常数"""

    kind: str
    dimension: int
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if self.dimension < 1:
            raise ArgumentError(f"regularizer dimension must be positive, got {self.dimension}")
        if self.kind == ENTROPY and not 0.0 < self.delta <= 1.0 / (2 * self.dimension):
            raise ArgumentError(
                f"entropy interior clip delta must lie in (0, 1/(2*{self.dimension})], got {self.delta}")

    @property
    def norm(self) -> str:
        return "l1" if self.kind == ENTROPY else "l2"

    @property
    def dual(self) -> str:
        return "linf" if self.kind == ENTROPY else "l2"

    @property
    def c(self) -> float:
        # ‖x‖ ≥ c‖x‖_1
        return 1.0 if self.kind == ENTROPY else 1.0 / math.sqrt(self.dimension)

    @property
    def c_star(self) -> float:
        # ‖x‖_* ≤ c_*‖x‖_∞
        return 1.0 if self.kind == ENTROPY else math.sqrt(self.dimension)

    @property
    def smoothness(self) -> float:
        return 1.0 / self.delta if self.kind == ENTROPY else 1.0

    @property
    def diameter(self) -> float:
        if self.dimension < 2:
            return 0.0
        return 2.0 if self.kind == ENTROPY else math.sqrt(2.0)

    @property
    def divergence_bound(self) -> float:
        if self.kind == ENTROPY:
            return math.log(self.dimension) + self.dimension * self.delta
        return 0.5 * self.diameter ** 2


def specs_for_game(action_counts: Sequence[int], kind: str, delta: float = DEFAULT_DELTA) -> Tuple[RegularizerSpec, ...]:
    return tuple(RegularizerSpec(kind, int(k), delta) for k in action_counts)


def norm_constants(specs: Sequence[RegularizerSpec]) -> Tuple[float, float]:
    """所有玩家共用的 (c, c_*)，取最坏情况"""
    return min(s.c for s in specs), max(s.c_star for s in specs)


def _vector(x, spec: RegularizerSpec, what: str) -> np.ndarray:
    if isinstance(x, MixedStrategy):
        arr = x.probs
    elif isinstance(x, PayoffVector):
        arr = x.values
    else:
        arr = np.asarray(x, dtype=float)
    if arr.shape != (spec.dimension,):
        raise DimensionMismatchError(what, spec.dimension, arr.shape[0] if arr.ndim == 1 else arr.shape)
    return arr


def primal_norm(spec: RegularizerSpec, z) -> float:
    z = np.asarray(z, dtype=float)
    return float(np.abs(z).sum()) if spec.norm == "l1" else float(np.linalg.norm(z))


def dual_norm(spec: RegularizerSpec, z) -> float:
    z = np.asarray(z, dtype=float)
    return float(np.abs(z).max()) if spec.dual == "linf" else float(np.linalg.norm(z))


def regularizer_value(spec: RegularizerSpec, x) -> float:
    p = _vector(x, spec, "strategy")
    if spec.kind == ENTROPY:
        nz = p[p > 0]
        return float(np.sum(nz * np.log(nz)))
    return 0.5 * float(p @ p)


def bregman(spec: RegularizerSpec, x, y) -> float:
    """D_R(x, y) = R(x) − R(y) − ⟨∇R(y), x − y⟩"""
    p = _vector(x, spec, "strategy")
    q = _vector(y, spec, "strategy")
    if spec.kind == ENTROPY:
        if np.any(q <= 0):
            raise DomainError("entropy divergence needs a strictly positive second argument; clip it first")
        return float(np.sum(rel_entr(p, q)) - p.sum() + q.sum())
    d = p - q
    return 0.5 * float(d @ d)


def project_simplex(y) -> MixedStrategy:
    """欧氏投影到概率单纯形（排序 + 阈值）"""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValidationError(f"projection input must be a non-empty vector, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("projection input has non-finite entries")
    u = np.sort(y)[::-1]
    thresholds = (np.cumsum(u) - 1.0) / np.arange(1, y.size + 1)
    k = np.nonzero(thresholds < u)[0][-1]
    x = np.clip(y - thresholds[k], 0.0, None)
    return MixedStrategy(x / x.sum())


def min_point(spec: RegularizerSpec) -> MixedStrategy:
    """argmin_{x∈Δ} R(x)；两种正则项都是均匀分布"""
    return MixedStrategy.uniform(spec.dimension)


def _clip_interior(spec: RegularizerSpec, p: np.ndarray) -> np.ndarray:
    if spec.kind != ENTROPY:
        return p
    p = np.maximum(p, spec.delta)
    return p / p.sum()


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max())
    return z / z.sum()


def _check_eta(eta: float) -> None:
    if not eta > 0:
        raise ArgumentError(f"learning rate must be positive, got {eta}")


def prox_step(spec: RegularizerSpec, anchor, payoff, eta: float) -> MixedStrategy:
    """argmax_{x∈Δ} η⟨x, v⟩ − D_R(x, g)"""
    _check_eta(eta)
    g = _vector(anchor, spec, "anchor")
    v = _vector(payoff, spec, "payoff")
    if spec.kind == ENTROPY:
        if np.any(g <= 0):
            raise DomainError("entropy prox anchor must be strictly positive")
        return MixedStrategy(_clip_interior(spec, _softmax(np.log(g) + eta * v)))
    return project_simplex(g + eta * v)


def ftrl_step(spec: RegularizerSpec, cumulative, eta: float, center: Optional[MixedStrategy] = None) -> MixedStrategy:
    """argmax_{x∈Δ} η⟨x, S⟩ − R(x)

    给定 center 时改用以 center 为中心的 Bregman 正则 D_R(x, center)，
    center 为 min_point 时两者一致。
    """
    _check_eta(eta)
    s = _vector(cumulative, spec, "cumulative payoff")
    if spec.kind == ENTROPY:
        logits = eta * s
        if center is not None:
            c = _vector(center, spec, "center")
            if np.any(c <= 0):
                raise DomainError("entropy FTRL center must be strictly positive")
            logits = logits + np.log(c)
        return MixedStrategy(_clip_interior(spec, _softmax(logits)))
    y = eta * s
    if center is not None:
        y = y + _vector(center, spec, "center")
    return project_simplex(y)


def interior(spec: RegularizerSpec, x) -> MixedStrategy:
    """把用户给的初始点放进正则项的定义域"""
    return MixedStrategy(_clip_interior(spec, _vector(x, spec, "strategy")))


def divergence_radius(spec: RegularizerSpec, anchors: Iterable) -> float:
    """max_{a, g} D_R(e_a, g)：后悔界里真正需要的 R̄_i"""
    worst = 0.0
    for anchor in anchors:
        g = _vector(anchor, spec, "anchor")
        if spec.kind == ENTROPY:
            worst = max(worst, -math.log(float(g.min())))
        else:
            worst = max(worst, 0.5 * (float(g @ g) - 2.0 * float(g.min()) + 1.0))
    if spec.kind == ENTROPY:
        worst += spec.dimension * spec.delta
    return worst


def variational_residual(spec: RegularizerSpec, anchor, payoff, eta: float, point, probes) -> float:
    """max_z ⟨ηv − ∇R(x*) + ∇R(g), z − x*⟩，prox 最优性要求它 ≤ 0"""
    g = _vector(anchor, spec, "anchor")
    v = _vector(payoff, spec, "payoff")
    x = _vector(point, spec, "point")
    if spec.kind == ENTROPY:
        direction = eta * v - np.log(x) + np.log(g)
    else:
        direction = eta * v - x + g
    worst = -math.inf
    for z in probes:
        worst = max(worst, float(direction @ (np.asarray(z, dtype=float) - x)))
    return worst
