"""Experiment configuration, orchestration and metric files.

A config is a JSON object.  Only ``game`` is required::

    {
      "game": {"graph": "graph.json" | {...}, "costs": [[0, 1, 2], ...],
               "c_max": 2, "blue": {"4": 6}},
      "mode": "self-play" | "single-agent-adversary",
      "schedule": {"variant": "nash" | "regret",
                   "overrides": {"gamma_m_power": 6, "step_t_power": 0.5, "theta": 1}},
      "T": 1000, "seeds": [0, 1, ...], "stride": 100, "epsilon": 0.25,
      "out": "runs", "exact_regret": false,
      "adversary": {"script": "periodic", "costs": [[0, 1], [1, 0]], "agent": 0}
    }

A relative graph path is resolved against the config file's directory.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Any, Mapping, Sequence

import numpy as np

from .game import CongestionGame, Trajectory, make_rngs, run_dynamics, stderr_progress
from .graph import Dag, GraphError
from .learner import VARIANTS, Learner, Schedule, best_fixed_cost, log_checkpoints
from .polytope import DagSpace

MODES = ("self-play", "single-agent-adversary")
SCRIPTS = ("constant", "periodic", "uniform-random", "adaptive")
SCHEDULE_OVERRIDES = ("theta", "gamma_m_power", "step_t_power")
CSV_COLUMNS = ("t", "agent_id", "realized_cost", "cum_regret", "mu", "gamma", "nash_gap", "expected_potential")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph: Dag
    costs: np.ndarray | None
    c_max: float
    mode: str = "self-play"
    variant: str = "nash"
    overrides: dict = field(default_factory=dict)
    T: int = 1000
    seeds: list = field(default_factory=lambda: list(range(10)))
    stride: int = 100
    epsilon: float = 0.25
    out: str = "runs"
    exact_regret: bool = False
    blue: dict | None = None
    adversary: dict | None = None

    @property
    def n(self) -> int:
        return len(self.graph.agents) if self.mode == "self-play" else 1

    def schedule(self, m: int) -> Schedule:
        return Schedule(self.variant, self.n, m, self.c_max, **self.overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["graph"] = self.graph.to_dict()
        d["costs"] = None if self.costs is None else self.costs.tolist()
        return d


def _fail(where: str, msg: str):
    raise ConfigError(f"{where}: {msg}")


def _number(value, where, lo=None, hi=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(where, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        _fail(where, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        _fail(where, "must be finite")
    if lo is not None and value < lo:
        _fail(where, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        _fail(where, f"must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _vector(value, where, length, c_max=None):
    if not isinstance(value, list) or len(value) != length:
        _fail(where, f"expected a list of {length} numbers")
    return [_number(v, f"{where}[{k}]", 0.0, c_max) for k, v in enumerate(value)]


def _choice(value, where, options):
    if value not in options:
        _fail(where, f"must be one of {', '.join(options)}; got {value!r}")
    return value


def parse_config(raw: Mapping, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    if not isinstance(raw, Mapping):
        _fail("<root>", "config must be a JSON object")
    known = {"game", "mode", "schedule", "T", "seeds", "stride", "epsilon", "out", "exact_regret", "adversary"}
    for key in raw:
        if key not in known:
            _fail(key, "unknown field")
    game = raw.get("game")
    if not isinstance(game, Mapping):
        _fail("game", "required object is missing")

    graph_spec = game.get("graph")
    try:
        if isinstance(graph_spec, str):
            graph = Dag.load(FsPath(base_dir) / graph_spec)
        elif isinstance(graph_spec, Mapping):
            graph = Dag.from_dict(graph_spec)
        else:
            _fail("game.graph", "expected an inline graph object or a file path")
    except (GraphError, OSError, json.JSONDecodeError) as exc:
        _fail("game.graph", str(exc))
    if not graph.agents:
        _fail("game.graph.agents", "at least one agent (source/sink pair) is required")

    blue = None
    if game.get("blue") is not None:
        if not isinstance(game["blue"], Mapping):
            _fail("game.blue", "expected an object mapping node id to edge id")
        blue = {}
        for k, v in game["blue"].items():
            try:
                node = int(k)
            except ValueError:
                _fail(f"game.blue.{k}", "keys must be node ids")
            blue[node] = _number(v, f"game.blue.{k}", 0, graph.m - 1, integer=True)

    mode = _choice(raw.get("mode", "self-play"), "mode", MODES)

    sched = raw.get("schedule", {})
    if not isinstance(sched, Mapping):
        _fail("schedule", "expected an object")
    variant = _choice(sched.get("variant", "nash"), "schedule.variant", VARIANTS)
    overrides = {}
    for k, v in (sched.get("overrides") or {}).items():
        if k not in SCHEDULE_OVERRIDES:
            _fail(f"schedule.overrides.{k}", f"unknown override; allowed: {', '.join(SCHEDULE_OVERRIDES)}")
        overrides[k] = _number(v, f"schedule.overrides.{k}")
    if overrides.get("theta", 1.0) <= 0:
        _fail("schedule.overrides.theta", "must be positive")

    T = _number(raw.get("T", 1000), "T", 1, integer=True)
    seeds = raw.get("seeds", list(range(10)))
    if not isinstance(seeds, list) or not seeds:
        _fail("seeds", "expected a non-empty list of integers")
    seeds = [_number(s, f"seeds[{k}]", 0, integer=True) for k, s in enumerate(seeds)]
    if len(set(seeds)) != len(seeds):
        _fail("seeds", "seeds must be distinct")
    stride = _number(raw.get("stride", 100), "stride", 1, integer=True)
    epsilon = _number(raw.get("epsilon", 0.25), "epsilon", 0.0)
    out = raw.get("out", "runs")
    if not isinstance(out, str) or not out:
        _fail("out", "expected a directory path")
    exact_regret = raw.get("exact_regret", False)
    if not isinstance(exact_regret, bool):
        _fail("exact_regret", "expected true or false")

    costs = None
    c_max = game.get("c_max")
    if c_max is not None:
        c_max = _number(c_max, "game.c_max")
        if c_max <= 0:
            _fail("game.c_max", "must be positive")

    adversary = None
    if mode == "self-play":
        table = game.get("costs")
        n = len(graph.agents)
        if not isinstance(table, list) or len(table) != graph.m:
            _fail("game.costs", f"expected one cost table per edge ({graph.m} edges)")
        rows = []
        for e, row in enumerate(table):
            where = f"game.costs[{e}]"
            if not isinstance(row, list) or len(row) != n + 1:
                got = len(row) if isinstance(row, list) else "none"
                _fail(where, f"edge {e} needs n + 1 = {n + 1} entries c(0..{n}), got {got}")
            vals = [_number(v, f"{where}[{k}]", 0.0) for k, v in enumerate(row)]
            if vals[0] != 0.0:
                _fail(f"{where}[0]", f"edge {e}: c(0) must be 0")
            if any(b < a for a, b in zip(vals, vals[1:])):
                _fail(where, f"edge {e}: costs must be non-decreasing in the load")
            rows.append(vals)
        costs = np.array(rows, dtype=float)
        top = float(costs.max())
        if c_max is None:
            c_max = top if top > 0 else 1.0
        elif top > c_max:
            _fail("game.c_max", f"cost tables reach {top}, above c_max")
    else:
        adversary = _parse_adversary(raw.get("adversary"), graph, c_max)
        if c_max is None:
            c_max = adversary.pop("_c_max")
        adversary.pop("_c_max", None)

    return ExperimentConfig(graph, costs, float(c_max), mode, variant, overrides, T, seeds, stride,
                            epsilon, out, exact_regret, blue, adversary)


def _parse_adversary(spec, graph: Dag, c_max):
    if not isinstance(spec, Mapping):
        _fail("adversary", "required in single-agent-adversary mode")
    script = _choice(spec.get("script"), "adversary.script", SCRIPTS)
    agent = _number(spec.get("agent", 0), "adversary.agent", 0, len(graph.agents) - 1, integer=True)
    m = graph.m
    out = {"script": script, "agent": agent}
    if script == "constant":
        out["costs"] = _vector(spec.get("costs"), "adversary.costs", m, c_max)
        top = max(out["costs"])
    elif script == "periodic":
        seq = spec.get("costs")
        if not isinstance(seq, list) or not seq:
            _fail("adversary.costs", "expected a non-empty list of cost vectors")
        out["costs"] = [_vector(v, f"adversary.costs[{k}]", m, c_max) for k, v in enumerate(seq)]
        top = max(max(v) for v in out["costs"])
    elif script == "uniform-random":
        low = _number(spec.get("low", 0.0), "adversary.low", 0.0)
        high = _number(spec.get("high", c_max if c_max is not None else 1.0), "adversary.high", low, c_max)
        out.update(low=low, high=high)
        top = high
    else:
        if c_max is None:
            _fail("game.c_max", "the adaptive script needs an explicit c_max")
        top = c_max
    out["_c_max"] = top if top > 0 else 1.0
    return out


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = FsPath(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, path.parent)


def adversary_costs(script: Mapping, t: int, history: Sequence, m: int, c_max: float,
                    rng: np.random.Generator | None = None, edges=None) -> np.ndarray:
    """Cost vector the adversary shows at round ``t``.

    ``history`` holds the learner's marginals from earlier rounds, most recent
    last.  The adaptive script charges 0 on the learner's least likely edge and
    ``c_max`` on its most likely one, interpolating linearly in between; it
    only looks at ``edges`` (default all) and charges ``c_max / 2`` before any
    history exists or when the marginal is flat.
    """
    kind = script["script"]
    if kind == "constant":
        return np.array(script["costs"], dtype=float)
    if kind == "periodic":
        seq = script["costs"]
        return np.array(seq[(t - 1) % len(seq)], dtype=float)
    if kind == "uniform-random":
        if rng is None:
            raise ValueError("uniform-random script needs an rng")
        return rng.uniform(script.get("low", 0.0), script.get("high", c_max), m)
    if kind == "adaptive":
        c = np.full(m, c_max / 2)
        if not history:
            return c
        x = np.asarray(history[-1], dtype=float)
        idx = np.arange(m) if edges is None else np.asarray(sorted(edges))
        lo, hi = x[idx].min(), x[idx].max()
        if hi - lo > 1e-12:
            c[idx] = c_max * (x[idx] - lo) / (hi - lo)
        return c
    raise ValueError(f"unknown adversary script {kind!r}")


def run_against_adversary(space: DagSpace, schedule: Schedule, script: Mapping, T: int, seed: int,
                          exact_regret: bool = False, progress=None) -> Trajectory:
    """One learner facing a scripted cost sequence, with full-information regret bookkeeping."""
    learner = Learner(space, schedule, make_rngs(seed, 1)[0])
    adv_rng = np.random.default_rng([seed, 1])
    m = space.m
    edges = space.sub.edges
    checkpoints = set(range(1, T + 1)) if exact_regret else set(log_checkpoints(T))
    cost = np.zeros((T, 1))
    mus = np.zeros((T, 1))
    gammas = np.zeros((T, 1))
    regret = np.full((T, 1), np.nan)
    totals = np.zeros(m)
    played = 0.0
    last = []
    tick = max(1, T // 100)
    for t in range(1, T + 1):
        c = adversary_costs(script, t, last, m, schedule.c_max, adv_rng, edges)
        loss = float(space.vector(learner.sample()) @ c)
        totals += c
        played += loss
        cost[t - 1, 0] = loss
        gammas[t - 1, 0], mus[t - 1, 0] = schedule.values(t)
        learner.update(loss)
        if script["script"] == "adaptive":
            last = [learner.marginal()]
        if t in checkpoints:
            regret[t - 1, 0] = played - best_fixed_cost(space, totals)
        if progress is not None and (t % tick == 0 or t == T):
            progress(t, T)
    nan = np.full(T, np.nan)
    return Trajectory(cost, mus, gammas, regret, nan, nan.copy(), [learner.alpha.copy()])


def run_seed(cfg: ExperimentConfig, seed: int, progress=None) -> Trajectory:
    if cfg.mode == "self-play":
        game = CongestionGame.on_dag(cfg.graph, cfg.costs, cfg.c_max, blue=cfg.blue)
        return run_dynamics(game, cfg.schedule(game.m), cfg.T, seed, cfg.stride, cfg.exact_regret, progress)
    space = DagSpace.for_agent(cfg.graph, cfg.adversary["agent"], blue=cfg.blue)
    return run_against_adversary(space, cfg.schedule(space.m), cfg.adversary, cfg.T, seed,
                                 cfg.exact_regret, progress)


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in range(traj.T):
            gap, pot = _fmt(traj.nash_gap[t]), _fmt(traj.potential[t])
            for i in range(traj.n):
                w.writerow((t + 1, i, _fmt(traj.cost[t, i]), _fmt(traj.regret[t, i]),
                            _fmt(traj.mu[t, i]), _fmt(traj.gamma[t, i]), gap, pot))


def trajectory_metrics(traj: Trajectory, epsilon: float) -> dict:
    T = traj.T
    ts = np.arange(1, T + 1)
    final_regret = traj.regret[-1].tolist()
    out = {
        "final_regret": final_regret,
        "final_regret_mean": float(np.mean(final_regret)),
        "regret_over_T": float(np.mean(final_regret)) / T,
        "mean_cost": traj.cost.mean(axis=0).tolist(),
    }
    ok = ~np.isnan(traj.nash_gap)
    if ok.any():
        gaps, gts = traj.nash_gap[ok], ts[ok]
        window = max(1, math.ceil(0.1 * T))
        early = gaps[gts <= window]
        late = gaps[gts > T - window]
        half = gaps[gts > T / 2]
        out.update(
            final_nash_gap=float(traj.nash_gap[-1]),
            mean_nash_gap=float(gaps.mean()),
            early_gap=float(early.mean()),
            late_gap=float(late.mean()),
            frac_gap_le_eps=float((gaps <= epsilon).mean()),
            frac_gap_le_eps_last_half=float((half <= epsilon).mean()) if half.size else float("nan"),
            final_expected_potential=float(traj.potential[-1]),
            gap_samples=int(ok.sum()),
        )
    return out


def _aggregate(per_seed: list[dict]) -> dict:
    keys = [k for k, v in per_seed[0].items() if isinstance(v, float)] if per_seed else []
    agg = {}
    for k in keys:
        vals = np.array([d[k] for d in per_seed], dtype=float)
        agg[k] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return agg


def _no_nan(obj):
    """NaN is not valid JSON; write null instead."""
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _no_nan(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_no_nan(v) for v in obj]
    return obj


def _worker(args):
    cfg, seed, quiet = args
    t0 = time.perf_counter()
    try:
        progress = None if quiet else stderr_progress(f"seed {seed}: ")
        return seed, run_seed(cfg, seed, progress), None, time.perf_counter() - t0
    except Exception:
        return seed, None, traceback.format_exc(), time.perf_counter() - t0


def worker_count() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None,
                   workers: int | None = None, quiet: bool = False) -> dict:
    """Run every seed, write ``seed_<k>.csv`` files and ``summary.json``; return the summary."""
    out = FsPath(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = min(len(cfg.seeds), workers or worker_count())
    jobs = [(cfg, seed, quiet) for seed in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]

    per_seed, failures = [], []
    for seed, traj, err, elapsed in results:
        if traj is None:
            failures.append({"seed": seed, "error": err})
            continue
        name = f"seed_{seed}.csv"
        try:
            write_csv(traj, out / name)
        except OSError as exc:
            failures.append({"seed": seed, "error": f"writing {name}: {exc}"})
            continue
        per_seed.append({"seed": seed, "csv": name, "seconds": round(elapsed, 3),
                         **trajectory_metrics(traj, cfg.epsilon)})

    summary = {
        "config": cfg.to_dict(),
        "seeds": per_seed,
        "aggregate": _aggregate([{k: v for k, v in d.items() if k != "seconds"} for d in per_seed]),
        "failures": failures,
    }
    (out / "summary.json").write_text(json.dumps(_no_nan(summary), indent=2) + "\n")
    return summary
