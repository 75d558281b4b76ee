"""
运行配置：TOML/JSON 文件或命令行参数 → RunConfig

RunConfig.to_dict() 就是生效的完整配置，写到输出目录里；
把它重新交给 parse_config 会得到同一次运行。
"""

import json
import logging
import math
import pathlib
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from dynamics import ALGORITHMS, CONSTANT, DECAY, EXPLICIT, OFTRL, CorruptionTracker, LearningRateSchedule
from errors import ConfigurationError, RegretLabError
from game_core import StrategyProfile, profile_from_lists
from regularizers import DEFAULT_DELTA, RegularizerSpec, canonical_kind, specs_for_game

log = logging.getLogger(__name__)

KNOWN_KEYS = (
    "game", "algo", "reg", "delta", "eta", "schedule", "eta_floor", "iters",
    "corruption", "seed", "init", "weights", "window", "tol", "out",
)
REQUIRED_KEYS = ("game", "iters")

CORRUPTION_PARAMS = {
    "none": (),
    "geometric": ("rho", "mag", "players"),
    "burst": ("t0", "width", "mag", "players"),
    "custom": ("deviations", "players"),
}


def _float_list(value, key: str) -> Tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if isinstance(value, (int, float)):
        value = [value]
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key} must be a number or a list of numbers, got {value!r}", keys=(key,)) from None
    if not out:
        raise ConfigurationError(f"{key} must not be empty", keys=(key,))
    return out


def parse_corruption(value) -> Dict[str, Any]:
    """'none' | 'geometric:rho=0.5,mag=0.4' | 'burst:t0=1,width=50,mag=0.3' | 表格形式"""
    if value is None:
        return {"kind": "none"}
    if isinstance(value, Mapping):
        spec = dict(value)
    else:
        text = str(value).strip()
        kind, _, rest = text.partition(":")
        spec = {"kind": kind.strip()}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            name, sep, raw = item.partition("=")
            if not sep:
                raise ConfigurationError(f"corruption parameter {item!r} is not of the form name=value",
                                         keys=("corruption",))
            spec[name.strip()] = raw.strip()

    kind = spec.get("kind", "none")
    if kind not in CORRUPTION_PARAMS:
        raise ConfigurationError(
            f"unknown corruption kind {kind!r}; expected one of {sorted(CORRUPTION_PARAMS)}", keys=("corruption",))
    unknown = sorted(set(spec) - {"kind"} - set(CORRUPTION_PARAMS[kind]))
    if unknown:
        raise ConfigurationError(f"unknown {kind} corruption parameters: {unknown}", keys=("corruption",))

    out: Dict[str, Any] = {"kind": kind}
    try:
        if kind == "geometric":
            out["rho"] = float(spec.get("rho", 0.5))
            out["mag"] = float(spec.get("mag", 0.4))
        elif kind == "burst":
            out["t0"] = int(spec.get("t0", 1))
            out["width"] = int(spec.get("width", 1))
            out["mag"] = float(spec.get("mag", 0.4))
        elif kind == "custom":
            out["deviations"] = [[[float(x) for x in c] for c in row] for row in spec.get("deviations", [])]
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"bad corruption parameter: {e}", keys=("corruption",)) from e
    players = spec.get("players")
    if players is not None and kind != "none":
        if isinstance(players, str):
            players = [p for p in players.replace("+", " ").split() if p]
        out["players"] = sorted(int(p) for p in players)
    return out


def parse_init(value) -> Optional[Tuple[Tuple[float, ...], ...]]:
    """'0.9,0.1;0.5,0.5' 或嵌套列表"""
    if value is None or value == "" or value == []:
        return None
    if isinstance(value, str):
        value = [row.split(",") for row in value.split(";")]
    try:
        return tuple(tuple(float(p) for p in row) for row in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"init must be per-player probability lists, got {value!r}", keys=("init",)) from None


def parse_weights(value) -> Union[str, Tuple[float, ...]]:
    if value is None:
        return "uniform"
    if isinstance(value, str) and value.strip() in ("uniform", "harmonic"):
        return value.strip()
    m = _float_list(value, "weights")
    if any(not (math.isfinite(x) and x > 0) for x in m):
        raise ConfigurationError(f"regret weights must be > 0, got {list(m)}", keys=("weights",))
    return m


@dataclass(frozen=True)
class RunConfig:
    game: str
    iters: int
    algo: str = "omd"
    reg: str = "entropy"
    delta: float = DEFAULT_DELTA
    eta: Tuple[float, ...] = (0.1,)
    schedule: str = CONSTANT
    schedule_sequence: Optional[Tuple[Tuple[float, ...], ...]] = None
    eta_floor: Optional[Tuple[float, ...]] = None
    corruption: Dict[str, Any] = field(default_factory=lambda: {"kind": "none"})
    seed: int = 0
    init: Optional[Tuple[Tuple[float, ...], ...]] = None
    weights: Union[str, Tuple[float, ...]] = "uniform"
    window: int = 50
    tol: float = 1e-2
    out: str = "out"

    def __post_init__(self):
        problems = []
        if self.algo not in ALGORITHMS:
            problems.append(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.iters < 1:
            problems.append(f"iters must be >= 1, got {self.iters}")
        if any(not (math.isfinite(e) and e > 0) for e in self.eta):
            problems.append(f"eta must be > 0, got {list(self.eta)}")
        if not 0 < self.delta <= 0.5:
            problems.append(f"delta must lie in (0, 0.5], got {self.delta}")
        if self.window < 2:
            problems.append(f"window must be >= 2, got {self.window}")
        if self.tol < 0:
            problems.append(f"tol must be >= 0, got {self.tol}")
        if self.seed < 0:
            problems.append(f"seed must be >= 0, got {self.seed}")
        if self.algo == OFTRL and self.schedule != CONSTANT:
            problems.append("oftrl needs a constant schedule")
        if problems:
            raise ConfigurationError("invalid run config: " + "; ".join(problems))

    @property
    def is_corrupted(self) -> bool:
        return self.corruption.get("kind", "none") != "none"

    def label(self) -> str:
        corruption = self.corruption["kind"]
        return f"{self.game}_{self.algo}_{self.reg}_eta{self.eta[0]:g}_T{self.iters}_{corruption}_s{self.seed}"

    def to_dict(self) -> Dict[str, Any]:
        if self.schedule == EXPLICIT:
            seqs = [list(s) for s in self.schedule_sequence]
            schedule: Any = seqs[0] if len(seqs) == 1 else seqs
        else:
            schedule = self.schedule
        return {
            "game": self.game,
            "algo": self.algo,
            "reg": self.reg,
            "delta": self.delta,
            "eta": list(self.eta),
            "schedule": schedule,
            "eta_floor": list(self.eta_floor) if self.eta_floor is not None else None,
            "iters": self.iters,
            "corruption": dict(self.corruption),
            "seed": self.seed,
            "init": [list(row) for row in self.init] if self.init is not None else None,
            "weights": self.weights if isinstance(self.weights, str) else list(self.weights),
            "window": self.window,
            "tol": self.tol,
            "out": self.out,
        }


def load_config_file(path: Union[str, pathlib.Path]) -> Dict[str, Any]:
    path = pathlib.Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        if path.suffix == ".json":
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot parse config file {path}: {e}") from e
    raise ConfigurationError(f"config file {path} must end in .toml or .json")


def _schedule_fields(raw) -> Tuple[str, Optional[Tuple[Tuple[float, ...], ...]]]:
    if raw is None:
        return CONSTANT, None
    if isinstance(raw, str):
        if raw in (CONSTANT, DECAY):
            return raw, None
        if raw == EXPLICIT:
            raise ConfigurationError("explicit schedule needs the list of learning rates", keys=("schedule",))
        return EXPLICIT, (_float_list(raw, "schedule"),)
    raw = list(raw)
    if raw and isinstance(raw[0], (list, tuple)):
        return EXPLICIT, tuple(_float_list(row, "schedule") for row in raw)
    return EXPLICIT, (_float_list(raw, "schedule"),)


def parse_config(source: Union[str, pathlib.Path, Mapping[str, Any], None] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """文件或映射 + 逐键覆盖（值为 None 的覆盖项忽略）"""
    if source is None:
        data: Dict[str, Any] = {}
    elif isinstance(source, Mapping):
        data = dict(source)
    else:
        data = load_config_file(source)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    unknown = sorted(set(data) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {unknown}", keys=unknown)
    missing = [k for k in REQUIRED_KEYS if data.get(k) is None]
    if missing:
        raise ConfigurationError(f"missing required config keys: {missing}", keys=missing)

    schedule, sequence = _schedule_fields(data.get("schedule"))
    if data.get("eta") is not None:
        eta = _float_list(data["eta"], "eta")
    elif sequence is not None:
        eta = tuple(s[0] for s in sequence)
    else:
        raise ConfigurationError("missing required config keys: ['eta']", keys=("eta",))

    try:
        reg = canonical_kind(str(data.get("reg", "entropy")))
    except RegretLabError as e:
        raise ConfigurationError(str(e), keys=("reg",)) from e

    try:
        return RunConfig(
            game=str(data["game"]),
            iters=int(data["iters"]),
            algo=str(data.get("algo", "omd")).lower(),
            reg=reg,
            delta=float(data.get("delta") if data.get("delta") is not None else DEFAULT_DELTA),
            eta=eta,
            schedule=schedule,
            schedule_sequence=sequence,
            eta_floor=_float_list(data["eta_floor"], "eta_floor") if data.get("eta_floor") is not None else None,
            corruption=parse_corruption(data.get("corruption")),
            seed=int(data.get("seed", 0)),
            init=parse_init(data.get("init")),
            weights=parse_weights(data.get("weights")),
            window=int(data.get("window", 50)),
            tol=float(data.get("tol", 1e-2)),
            out=str(data.get("out", "out")),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid run config value: {e}") from e


def _per_player(values: Sequence[float], n: int, key: str) -> Tuple[float, ...]:
    if len(values) == 1:
        return tuple(values) * n
    if len(values) != n:
        raise ConfigurationError(f"{key} has {len(values)} entries for {n} players", keys=(key,))
    return tuple(values)


def build_schedule(config: RunConfig, num_players: int) -> LearningRateSchedule:
    etas = _per_player(config.eta, num_players, "eta")
    if config.schedule == DECAY:
        if config.eta_floor is not None:
            floors = _per_player(config.eta_floor, num_players, "eta_floor")
        else:
            floors = tuple(e / math.sqrt(config.iters) for e in etas)
        return LearningRateSchedule.decay(etas, floors)
    if config.schedule == EXPLICIT:
        seqs = config.schedule_sequence
        if len(seqs) == 1:
            seqs = seqs * num_players
        elif len(seqs) != num_players:
            raise ConfigurationError(f"schedule has {len(seqs)} sequences for {num_players} players",
                                     keys=("schedule",))
        return LearningRateSchedule.explicit(seqs)
    return LearningRateSchedule.constant(etas)


def build_specs(config: RunConfig, action_counts: Sequence[int]) -> Tuple[RegularizerSpec, ...]:
    try:
        return specs_for_game(action_counts, config.reg, config.delta)
    except RegretLabError as e:
        raise ConfigurationError(str(e), keys=("delta",)) from e


def build_corruption(config: RunConfig, num_players: int) -> Optional[CorruptionTracker]:
    spec = config.corruption
    kind = spec["kind"]
    players = spec.get("players")
    if kind == "none":
        return None
    if kind == "geometric":
        return CorruptionTracker.geometric(num_players, spec["rho"], spec["mag"], seed=config.seed, players=players)
    if kind == "burst":
        return CorruptionTracker.burst(num_players, spec["t0"], spec["width"], spec["mag"],
                                       seed=config.seed, players=players)
    return CorruptionTracker.custom(num_players, spec["deviations"], players=players)


def build_initial(config: RunConfig, action_counts: Sequence[int]) -> Optional[StrategyProfile]:
    if config.init is None:
        return None
    try:
        return profile_from_lists(action_counts, config.init)
    except RegretLabError as e:
        raise ConfigurationError(f"bad initial profile: {e}", keys=("init",)) from e
