#!/usr/bin/env python3
import os, csv, json, math, time, pathlib, re, logging
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import typer

from catalog import CATALOG, catalog_names, resolve_game
from diagnostics import (
    BoundCheck,
    averaged_path_length_check,
    compute_round_diagnostics,
    detect_convergence,
    extract_best_iterate,
    path_length_bound_check,
    path_length_rhs_series,
    path_length_series,
    payoff_lipschitz_check,
    rvu_slack_series,
    weighted_rvu_bound_check,
)
from dynamics import OMD, LearningRateSchedule, run_dynamics, theorem_lr_cap
from errors import ArgumentError, ConfigurationError, RegretLabError
from game_classes import (
    HarmonicWeights,
    RegretWeights,
    Trajectory,
    harmonic_residual,
    is_constant_sum,
    random_trajectory,
    regret,
    regret_series,
    regret_weights_from_harmonic,
    solve_harmonic_weights,
    weighted_regret,
)
from game_core import MixedStrategy, NormalFormGame, StrategyProfile, nash_gap
from regularizers import norm_constants, specs_for_game
from run_config import (
    RunConfig,
    build_corruption,
    build_initial,
    build_schedule,
    build_specs,
    parse_config,
)

log = logging.getLogger("regret_lab")

app = typer.Typer(help="Simulate optimistic no-regret dynamics (OMD / OFTRL) in normal-form games and certify their bounds.")

TRACE_HEADER = "# regret-lab trace v1"
LOG_ENV = "REGRET_LAB_LOG"


def ts() -> str:
    return datetime.now().strftime("%Y-%m-%d_%H-%M-%S")

def safe_dirname(label: str) -> str:
    name = re.sub(r'[^a-zA-Z0-9._-]+', '_', label)
    return name[:120]

def ensure_dir(p: str):
    try:
        pathlib.Path(p).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"output path {p} is not writable: {e}", keys=("out",)) from e

def setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="[%(levelname)s] %(name)s: %(message)s")

def fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return "%.12g" % value


def resolve_weights(config: RunConfig, game: NormalFormGame,
                    known: Optional[HarmonicWeights]) -> Tuple[RegretWeights, str]:
    """weights = uniform | harmonic | 显式列表；harmonic 找不到权重时退回 uniform"""
    n = game.num_players
    if isinstance(config.weights, tuple):
        m = config.weights if len(config.weights) == n else config.weights * n if len(config.weights) == 1 else None
        if m is None:
            raise ConfigurationError(f"weights has {len(config.weights)} entries for {n} players", keys=("weights",))
        return RegretWeights(np.array(m)), "explicit"
    if config.weights == "harmonic":
        mu = known if known is not None else solve_harmonic_weights(game)
        if mu is not None:
            return regret_weights_from_harmonic(mu), "harmonic"
        log.warning("no positive harmonic weights for %s; falling back to uniform regret weights", config.game)
    return RegretWeights.uniform(n), "uniform"


def weights_certified(game: NormalFormGame, weights: RegretWeights, source: str) -> bool:
    """当前 m 下是否已知 Σ m_i Reg_i ≥ 0（调和权重，或两人常和博弈配 m ∝ 1）"""
    if source == "harmonic":
        return True
    if game.num_players == 2 and is_constant_sum(game) is not None:
        return bool(np.allclose(weights.m, weights.m[0]))
    return False


def trace_columns(action_counts: Sequence[int]) -> List[str]:
    cols = ["t"]
    for i, k in enumerate(action_counts):
        cols += [f"x{i + 1}_{a}" for a in range(k)]
    n = len(action_counts)
    cols += [f"reg{i + 1}" for i in range(n)]
    cols += ["wreg_total", "nash_gap", "eps_t"]
    cols += [f"corr{i + 1}" for i in range(n)]
    cols += [f"rvu_slack{i + 1}" for i in range(n)]
    cols += ["path_slack"]
    return cols


def _check_summary(check: BoundCheck) -> Dict[str, Any]:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in check.to_dict().items()}


def certify(game: NormalFormGame, trajectory: Trajectory, specs, weights: RegretWeights,
            certified: bool) -> Tuple[Dict[str, Any], Dict[str, Optional[np.ndarray]]]:
    """所有界的检查结果（summary 用）和逐轮余量序列（trace 用）"""
    n = game.num_players
    status: Dict[str, Any] = {}
    series: Dict[str, Optional[np.ndarray]] = {"rvu": None, "path": None}

    if len(trajectory) >= 2:
        slack = payoff_lipschitz_check(trajectory)
        status["lipschitz"] = {"worst_slack": slack, "status": "holds" if slack >= -1e-12 else "violated"}
    else:
        status["lipschitz"] = {"worst_slack": None, "status": "unavailable"}

    if not trajectory.has_anchors:
        for key in ("rvu", "weighted_rvu", "path_length", "averaged_path_length"):
            status[key] = {"status": "unavailable", "reason": f"{trajectory.algorithm} records no anchors"}
        return status, series

    rvu = []
    slacks = []
    for i in range(n):
        lhs, rhs = rvu_slack_series(trajectory, specs, i)
        slacks.append(rhs - lhs)
        holds = bool(np.all(lhs <= rhs + 1e-6))
        rvu.append({"lhs": float(lhs[-1]), "rhs": float(rhs[-1]), "status": "holds" if holds else "violated",
                    "every_prefix": holds})
    status["rvu"] = rvu
    series["rvu"] = np.stack(slacks, axis=1)
    status["weighted_rvu"] = _check_summary(weighted_rvu_bound_check(trajectory, specs, weights))

    if not certified:
        reason = "regret weights are not certified non-negative for this game"
        status["path_length"] = {"status": "skipped", "reason": reason}
        status["averaged_path_length"] = {"status": "skipped", "reason": reason}
        return status, series

    check = path_length_bound_check(trajectory, specs, weights)
    status["path_length"] = _check_summary(check)
    if check.skipped:
        status["averaged_path_length"] = {"status": "skipped", "reason": check.reason}
        return status, series
    lhs = path_length_series(trajectory, specs)
    rhs = path_length_rhs_series(trajectory, specs, weights)
    series["path"] = rhs - lhs
    status["path_length"]["every_prefix"] = bool(np.all(lhs <= rhs * (1 + 1e-9) + 1e-9))
    averaged = averaged_path_length_check(trajectory, specs, weights)
    status["averaged_path_length"] = {"status": "holds" if averaged else "violated"}
    return status, series


def write_trace(path: str, game: NormalFormGame, trajectory: Trajectory, specs, weights: RegretWeights,
                slack_series: Dict[str, Optional[np.ndarray]]) -> None:
    n = game.num_players
    rounds = compute_round_diagnostics(game, trajectory, specs)
    regrets = np.stack([regret_series(trajectory, i) for i in range(n)], axis=1)
    weighted = regrets @ weights.m
    corruption = trajectory.corruption_norms()
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(TRACE_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(trace_columns(game.action_counts))
        for k, (x, diag) in enumerate(zip(trajectory.played, rounds)):
            row = [str(diag.t)]
            for p in x.arrays():
                row += [fmt(float(v)) for v in p]
            row += [fmt(float(r)) for r in regrets[k]]
            row += [fmt(float(weighted[k])), fmt(diag.nash_gap), fmt(diag.eps)]
            row += [fmt(float(c)) for c in corruption[k]]
            rvu = slack_series["rvu"]
            row += [fmt(float(s)) for s in rvu[k]] if rvu is not None else [""] * n
            path_slack = slack_series["path"]
            row += [fmt(float(path_slack[k])) if path_slack is not None else ""]
            writer.writerow(row)


def run_experiment(config: RunConfig, session_dir: Optional[str] = None, run_name: Optional[str] = None) -> Dict[str, Any]:
    """一次完整的运行：动力学 + 所有证书 + trace.csv / summary.json / config.json"""
    started = time.time()
    game, known = resolve_game(config.game)
    n = game.num_players
    specs = build_specs(config, game.action_counts)
    schedule = build_schedule(config, n)
    corruption = build_corruption(config, n)
    initial = build_initial(config, game.action_counts)
    weights, weight_source = resolve_weights(config, game, known)

    c, c_star = norm_constants(specs)
    cap = theorem_lr_cap(n, c, c_star, weights, corrupted=config.is_corrupted)
    if schedule.eta_one > cap:
        log.warning("eta^1 = %g exceeds the learning-rate cap %.6g; bound checks will be skipped",
                    schedule.eta_one, cap)

    trajectory = run_dynamics(game, config.algo, specs, schedule, config.iters,
                              corruption=corruption, initial=initial)

    status, slack_series = certify(game, trajectory, specs, weights, weights_certified(game, weights, weight_source))
    best = extract_best_iterate(game, trajectory, specs, eps=config.tol)
    try:
        convergence = {"status": detect_convergence(game, trajectory, config.window, config.tol).value,
                       "window": config.window, "tol": config.tol}
    except ArgumentError as e:
        convergence = {"status": None, "reason": str(e)}
    per_player, total = weighted_regret(trajectory, weights)

    run_dir = os.path.join(session_dir or os.path.join(config.out, ts()), safe_dirname(run_name or config.label()))
    ensure_dir(run_dir)
    trace_path = os.path.join(run_dir, "trace.csv")
    write_trace(trace_path, game, trajectory, specs, weights, slack_series)
    typer.echo(f"[ok] trace -> {trace_path}")

    summary = {
        "config": config.to_dict(),
        "game": {"source": config.game, "actions": list(game.action_counts)},
        "weights": {"source": weight_source, "m": weights.m.tolist()},
        "lr_cap": cap,
        "eta_one": schedule.eta_one,
        "best_iterate": best.to_dict(),
        "final_gap": nash_gap(game, trajectory.played[-1]),
        "convergence": convergence,
        "regret": [regret(trajectory, i) for i in range(n)],
        "weighted_regret": {"per_player": list(per_player), "total": total},
        "bounds_status": status,
        "corruption_totals": {
            "C": corruption.totals.tolist() if corruption else [0.0] * n,
            "M": corruption.sup_norms.tolist() if corruption else [0.0] * n,
        },
        "started_at": started,
        "finished_at": time.time(),
    }
    summary_path = os.path.join(run_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, ensure_ascii=False, indent=2)
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, ensure_ascii=False, indent=2)
    typer.echo(f"[ok] summary -> {summary_path}")
    summary["run_dir"] = run_dir
    return summary


def classify_game(source: str) -> Dict[str, Any]:
    """常和/零和/调和判定以及建议的后悔权重 m"""
    game, _ = resolve_game(source)
    constant = is_constant_sum(game)
    mu = solve_harmonic_weights(game)
    probe = mu if mu is not None else HarmonicWeights.uniform(game.action_counts)
    certificates = []
    suggested = None
    if game.num_players == 2 and constant is not None:
        certificates.append("zero-sum (m = 1)" if abs(constant) <= 1e-12 else "constant-sum (m = 1)")
        suggested = [1.0, 1.0]
    if mu is not None:
        certificates.append("harmonic (m_i = sum of mu_i)")
        suggested = regret_weights_from_harmonic(mu).m.tolist()
    return {
        "game": source,
        "actions": list(game.action_counts),
        "constant_sum": constant,
        "zero_sum": constant is not None and abs(constant) <= 1e-12,
        "harmonic": mu is not None,
        "harmonic_weights": mu.to_lists() if mu is not None else None,
        "harmonic_residual": harmonic_residual(game, probe),
        "suggested_weights": suggested,
        "certificates": certificates,
    }


def regret_scatter(source: str, seeds: int, rounds: int, eta: float = 0.1, mode: str = "dynamics",
                   out: Optional[str] = None) -> List[Dict[str, Any]]:
    """每个种子一条轨迹，记录总后悔与加权总后悔"""
    game, known = resolve_game(source)
    mu = known if known is not None else solve_harmonic_weights(game)
    if mu is None:
        raise ConfigurationError(f"{source} has no positive harmonic weights; scatter needs a harmonic game",
                                 keys=("game",))
    weights = regret_weights_from_harmonic(mu)
    specs = specs_for_game(game.action_counts, "entropy")
    rows = []
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        if mode == "random":
            trajectory = random_trajectory(game, rounds, rng, pure_fraction=0.5)
        elif mode == "dynamics":
            initial = StrategyProfile(tuple(MixedStrategy(rng.dirichlet(np.ones(k))) for k in game.action_counts))
            schedule = LearningRateSchedule.constant([eta] * game.num_players)
            trajectory = run_dynamics(game, OMD, specs, schedule, rounds, initial=initial)
        else:
            raise ConfigurationError(f"unknown scatter mode {mode!r}; expected dynamics or random")
        regrets = [regret(trajectory, i) for i in range(game.num_players)]
        _, total_weighted = weighted_regret(trajectory, weights)
        rows.append({"seed": seed, "total_regret": sum(regrets), "weighted_total": total_weighted,
                     **{f"reg{i + 1}": r for i, r in enumerate(regrets)}})
    if out:
        ensure_dir(os.path.dirname(out) or ".")
        with open(out, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (v if k == "seed" else fmt(v)) for k, v in row.items()})
    return rows


def _run_batch_item(item: Tuple[str, str, str]) -> Dict[str, Any]:
    path, session_dir, name = item
    setup_logging()
    return run_experiment(parse_config(path), session_dir, run_name=name)


def _fail(e: RegretLabError):
    typer.echo(f"[error] {e}", err=True)
    raise typer.Exit(code=2)


@app.callback()
def main():
    """日志级别由环境变量 REGRET_LAB_LOG 控制"""
    setup_logging()


@app.command("run")
def run_cli(
    config: Optional[str] = typer.Option(None, help="Path to a TOML or JSON run config."),
    game: Optional[str] = typer.Option(None, help="Builtin game name or path to a game JSON."),
    algo: Optional[str] = typer.Option(None, help="omd|oftrl"),
    reg: Optional[str] = typer.Option(None, help="entropy|euclid"),
    delta: Optional[float] = typer.Option(None, help="Interior clip for the entropy regularizer."),
    eta: Optional[str] = typer.Option(None, help="Learning rate, scalar or comma list per player."),
    schedule: Optional[str] = typer.Option(None, help="constant|decay|<comma list of rates>"),
    eta_floor: Optional[str] = typer.Option(None, help="Floor for the decay schedule."),
    iters: Optional[int] = typer.Option(None, help="Number of rounds T."),
    seed: Optional[int] = typer.Option(None, help="Seed for the corruption generator."),
    corruption: Optional[str] = typer.Option(None, help="none|geometric:rho=0.5,mag=0.4|burst:t0=1,width=50,mag=0.3"),
    init: Optional[str] = typer.Option(None, help="Initial profile, e.g. 0.9,0.1;0.5,0.5"),
    weights: Optional[str] = typer.Option(None, help="uniform|harmonic|<comma list of m_i>"),
    window: Optional[int] = typer.Option(None, help="Convergence window w."),
    tol: Optional[float] = typer.Option(None, help="Convergence tolerance."),
    out: Optional[str] = typer.Option(None, help="Output directory."),
):
    """Run one experiment; inline flags override the config file key by key."""
    overrides = dict(game=game, algo=algo, reg=reg, delta=delta, eta=eta, schedule=schedule, eta_floor=eta_floor,
                     iters=iters, seed=seed, corruption=corruption, init=init, weights=weights,
                     window=window, tol=tol, out=out)
    try:
        cfg = parse_config(config, overrides)
        session_dir = os.path.join(cfg.out, ts())
        ensure_dir(session_dir)
        typer.echo(f"==> {cfg.label()}")
        summary = run_experiment(cfg, session_dir)
    except RegretLabError as e:
        _fail(e)
    best = summary["best_iterate"]
    typer.echo(f"best iterate t={best['t']} gap={best['gap']:.6g}; convergence: {summary['convergence']['status']}")
    typer.echo(f"\nDone. Output at: {session_dir}")


@app.command("batch")
def batch_cli(
    configs: List[str] = typer.Argument(..., help="One or more run config files."),
    out: str = typer.Option("out", help="Output directory."),
    workers: int = typer.Option(0, help="Worker processes (0 = one per config, capped by CPU count)."),
):
    """Run several configs in parallel, one worker per run, one session directory."""
    session_dir = os.path.join(out, ts())
    try:
        ensure_dir(session_dir)
        for path in configs:
            parse_config(path)
    except RegretLabError as e:
        _fail(e)
    items = [(path, session_dir, f"{k + 1:02d}_{safe_dirname(pathlib.Path(path).stem)}")
             for k, path in enumerate(configs)]
    max_workers = workers or min(len(items), os.cpu_count() or 1)
    index = []
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        for path, summary in zip(configs, pool.map(_run_batch_item, items)):
            typer.echo(f"==> {path}")
            index.append({"config": path, "run_dir": summary["run_dir"],
                          "best_gap": summary["best_iterate"]["gap"],
                          "convergence": summary["convergence"]["status"]})
    with open(os.path.join(session_dir, "batch.json"), "w", encoding="utf-8") as f:
        json.dump(index, f, ensure_ascii=False, indent=2)
    typer.echo(f"\nDone. Output at: {session_dir}")


@app.command("classify")
def classify_cli(
    game: str = typer.Option(..., help="Builtin game name or path to a game JSON."),
    out: Optional[str] = typer.Option(None, help="Also write the report to this JSON file."),
):
    """Report constant-sum / zero-sum / harmonic certificates and suggested regret weights."""
    try:
        report = classify_game(game)
        if out:
            ensure_dir(os.path.dirname(out) or ".")
            with open(out, "w", encoding="utf-8") as f:
                json.dump(report, f, ensure_ascii=False, indent=2)
    except RegretLabError as e:
        _fail(e)
    typer.echo(json.dumps(report, ensure_ascii=False, indent=2))


@app.command("catalog")
def catalog_cli():
    """List the builtin games."""
    for name in catalog_names():
        entry = CATALOG[name]
        tag = " [harmonic weights]" if entry.weights is not None else ""
        typer.echo(f"{name:24s} {entry.description}{tag}")


@app.command("scatter")
def scatter_cli(
    game: str = typer.Option("harmonic_2x2", help="Harmonic builtin game or game JSON."),
    seeds: int = typer.Option(200, help="Number of seeds (one trajectory each)."),
    rounds: int = typer.Option(10, help="Rounds per trajectory."),
    eta: float = typer.Option(0.1, help="Learning rate for the dynamics mode."),
    mode: str = typer.Option("dynamics", help="dynamics|random"),
    out: str = typer.Option("out", help="Output directory."),
):
    """Total regret vs weighted total regret over seeds, written as CSV."""
    session_dir = os.path.join(out, ts())
    path = os.path.join(session_dir, f"scatter_{safe_dirname(game)}.csv")
    try:
        if seeds < 1 or rounds < 1:
            raise ConfigurationError("seeds and rounds must be >= 1")
        rows = regret_scatter(game, seeds, rounds, eta=eta, mode=mode, out=path)
    except RegretLabError as e:
        _fail(e)
    negative = sum(1 for r in rows if r["total_regret"] < 0)
    worst = min(r["weighted_total"] for r in rows)
    typer.echo(f"[ok] scatter -> {path}")
    typer.echo(f"negative total regret on {negative}/{len(rows)} seeds; min weighted total {worst:.3e}")
    typer.echo(f"\nDone. Output at: {session_dir}")


if __name__ == "__main__":
    app()
