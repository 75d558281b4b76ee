"""
内置博弈目录

名字 → (构造函数, 生成用的调和权重)。所有条目在返回前都经过 normalize_game，
调和预设用固定种子生成，每次得到同一个张量。
"""

import logging
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigurationError
from game_classes import HarmonicWeights, make_harmonic_game
from game_core import NormalFormGame, load_game, normalize_game

log = logging.getLogger(__name__)

PENNIES = np.array([[-1.0, 1.0], [1.0, -1.0]])
IDENTICAL = np.array([[1.0, 2.0], [2.0, 1.0]])


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    build: Callable[[], NormalFormGame]
    weights: Optional[HarmonicWeights] = None

    def game(self) -> NormalFormGame:
        return normalize_game(self.build())


def _harmonic_preset(name: str, mu, seed: int, description: str) -> CatalogEntry:
    weights = HarmonicWeights(tuple(np.asarray(w, dtype=float) for w in mu))
    counts = weights.action_counts
    return CatalogEntry(name, description, lambda: make_harmonic_game(weights, counts, seed), weights)


_ENTRIES: Tuple[CatalogEntry, ...] = (
    CatalogEntry(
        "matching_pennies", "2x2 zero-sum, u2 = -u1, unique NE at uniform",
        lambda: NormalFormGame((PENNIES, -PENNIES)),
        HarmonicWeights((np.ones(2), np.ones(2)))),
    CatalogEntry(
        "harmonic_2x2_zero_sum", "[[1,2],[2,1]] rescaled, opponent gets the negation",
        lambda: NormalFormGame((IDENTICAL, -IDENTICAL)),
        HarmonicWeights((np.ones(2), np.ones(2)))),
    CatalogEntry(
        "harmonic_2x2_identical", "[[1,2],[2,1]] for both players (identical interest, not harmonic)",
        lambda: NormalFormGame((IDENTICAL, IDENTICAL))),
    CatalogEntry(
        "zero_game", "2x2 game with all utilities 0",
        lambda: NormalFormGame((np.zeros((2, 2)), np.zeros((2, 2)))),
        HarmonicWeights((np.ones(2), np.ones(2)))),
    CatalogEntry(
        "weighted_pennies", "u2 = -u1/2, harmonic with mu1 = (1,1), mu2 = (2,2), not zero-sum",
        lambda: NormalFormGame((PENNIES, -PENNIES / 2.0)),
        HarmonicWeights((np.ones(2), np.full(2, 2.0)))),
    _harmonic_preset("harmonic_2x2", [[1.0, 1.0], [3.0, 3.0]], 7,
                     "seeded 2x2 harmonic game, mu1 = (1,1), mu2 = (3,3)"),
    _harmonic_preset("harmonic_3x3", [[1.0, 2.0, 1.0], [2.0, 1.0, 3.0]], 11,
                     "seeded 3x3 harmonic game with non-uniform weights"),
    _harmonic_preset("harmonic_2x2x2", [[1.0, 1.0], [2.0, 1.0], [1.0, 3.0]], 5,
                     "seeded three-player harmonic game"),
)

CATALOG: Dict[str, CatalogEntry] = {e.name: e for e in _ENTRIES}


def catalog_names() -> List[str]:
    return [e.name for e in _ENTRIES]


def builtin_entry(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigurationError(f"unknown builtin game {name!r}; see the catalog command", keys=("game",)) from None


def resolve_game(source: str) -> Tuple[NormalFormGame, Optional[HarmonicWeights]]:
    """内置名字或 JSON 文件路径；文件里的博弈同样会被 normalize"""
    if source in CATALOG:
        entry = CATALOG[source]
        return entry.game(), entry.weights
    if os.path.isfile(source):
        log.debug("loading game from %s", source)
        return normalize_game(load_game(source)), None
    raise ConfigurationError(f"game source {source!r} is neither a builtin name nor a readable file", keys=("game",))
