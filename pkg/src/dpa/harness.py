"""The Discover-Plan-Act loop across cycles, trials and strategies."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .abstraction import AbstractionConfig, AbstractModel, build_abstraction
from .env import TreasureGame, builtin_map
from .explorer import Datasets, collect_data
from .goals import Strategy, TargetConfig, select_target, state_to_symbols
from .mlkit import DBSCAN_EPS
from .options import TAU, Option, discover_options, execute_plan
from .planner import Plan, plan
from .ppddl import NOTFAILED, Problem, emit_domain, emit_problem

log = logging.getLogger(__name__)

DPA_STEPS = {"domain1": 50, "domain2": 50, "domain3": 150, "domain4": 200, "domain5": 800}


@dataclass
class RunConfig:
    domain: str = "domain1"
    strategy: Strategy = Strategy.GOAL_BABBLING
    cycles: int = 15
    trials: int = 10
    dpa_eps: int = 4
    dpa_steps: int | None = None
    d_eps: int = 1
    d_steps: int = 200
    seed: int = 0
    tau: int = TAU
    target_resolution: float | None = DBSCAN_EPS
    out_dir: str | None = None
    abstraction: AbstractionConfig = field(default_factory=AbstractionConfig)
    target: TargetConfig = field(default_factory=TargetConfig)

    def __post_init__(self):
        if self.cycles < 0 or self.trials < 0:
            raise ValueError("cycles and trials must be nonnegative")
        self.domain = builtin_map(self.domain).name
        if isinstance(self.strategy, str):
            self.strategy = Strategy.parse(self.strategy)
        if self.dpa_steps is None:
            self.dpa_steps = DPA_STEPS.get(self.domain, 150)


@dataclass
class CycleReport:
    trial: int
    cycle: int
    n_options: int
    n_id: int
    n_td: int
    n_symbols: int
    n_operators: int
    target: list[str]
    target_score: float
    plan_ex_length: int
    goal_found: bool
    goal_executed: bool
    plan_g_length: int
    wall_time: float
    plan_g: list[str] = field(default_factory=list)
    plan_ex: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrialState:
    """Everything one trial carries between cycles (Alg. 1 lines 2-6)."""

    env: TreasureGame
    options: set[Option] = field(default_factory=set)
    data: Datasets = field(default_factory=Datasets)
    plan_ex: list[Option] = field(default_factory=list)
    model: AbstractModel | None = None


def sub_seed(*counters: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(c) for c in counters])


def goal_problem(model: AbstractModel, env: TreasureGame) -> Problem | None:
    """P_g: the bag-holding state grounded on the factors of y_agent and the treasure."""
    s_g = env.goal_state()
    n = len(s_g)
    factors = model.factors_touching([1, n - 2, n - 1])
    grounded = model.ground(s_g, factors)
    if any(v is None for v in grounded.values()):
        return None
    goal = tuple([NOTFAILED] + sorted(set(grounded.values()), key=_sym_key))
    return Problem("task_goal", model.domain.name, tuple([NOTFAILED] + model.init_symbols), goal)


def _sym_key(name: str) -> int:
    return int(name.rsplit("_", 1)[1])


def execute_symbolic_plan(p: Plan, env: TreasureGame, tau: int = TAU) -> bool:
    """Run the plan's options from reset; success means the game goal holds at the end."""
    if any(o is None for o in p.options):
        return False
    env.reset()
    done = execute_plan(env, p.options, tau)
    return done == len(p.options) and env.goal_reached()


def run_dpa_cycle(state: TrialState, config: RunConfig, trial: int, cycle: int) -> CycleReport:
    t0 = time.perf_counter()
    rng = np.random.default_rng(sub_seed(config.seed, trial, cycle, 0))
    env = state.env
    state.options |= discover_options(env, config.d_eps, config.d_steps, state.plan_ex, rng, config.tau)
    state.data.extend(collect_data(env, config.dpa_eps, config.dpa_steps, state.options,
                                   state.plan_ex, rng, config.tau))
    scale = env.maze.scale()
    model = build_abstraction(state.data, state.options, scale, env.initial_state(),
                              config.abstraction, seed=int(rng.integers(2**31)))
    state.model = model

    # goal selection and the exploration plan for the next cycle
    target_names: tuple[str, ...] = ()
    target_score = 0.0
    plan_ex: list[Option] = []
    plan_ex_names: list[str] = []
    if state.data.transitions:
        visited = state.data.visited_states() / scale
        visits = state.data.visited_states(unique=False) / scale
    else:
        visited = visits = np.zeros((0, len(scale)))
    s_init = env.initial_state() / scale
    target = select_target(config.strategy, visited, s_init, rng, resolution=config.target_resolution)
    if target is not None:
        try:
            conj = state_to_symbols(target, visits, model, rng, config.target)
            target_names, target_score = conj.symbols, conj.score
            if conj.symbols:
                problem = Problem("im_goal", model.domain.name, tuple([NOTFAILED] + model.init_symbols),
                                  tuple(conj.symbols) + (NOTFAILED,))
                p = plan(model.domain, problem)
                if p is not None and all(o is not None for o in p.options):
                    plan_ex, plan_ex_names = list(p.options), list(p.operators)
        except (ValueError, KeyError) as exc:
            log.warning("trial %d cycle %d: target planning failed: %s", trial, cycle, exc)
    state.plan_ex = plan_ex

    # validity check, with execution in a fresh environment
    found = executed = False
    plan_g: list[str] = []
    problem_g = goal_problem(model, env)
    if problem_g is not None:
        p = plan(model.domain, problem_g)
        if p is not None:
            found = True
            plan_g = list(p.operators)
            fresh = TreasureGame(env.maze, seed=sub_seed(config.seed, trial, cycle, 1))
            executed = execute_symbolic_plan(p, fresh, config.tau)

    report = CycleReport(
        trial=trial, cycle=cycle, n_options=len(state.options), n_id=len(state.data.initiation),
        n_td=len(state.data.transitions), n_symbols=len(model.symbols), n_operators=len(model.domain.operators),
        target=list(target_names), target_score=round(target_score, 4), plan_ex_length=len(plan_ex),
        goal_found=bool(found), goal_executed=bool(executed), plan_g_length=len(plan_g),
        wall_time=round(time.perf_counter() - t0, 3), plan_g=plan_g, plan_ex=plan_ex_names)
    log.info("trial %d cycle %d: |O|=%d |TD|=%d symbols=%d operators=%d ex=%d goal=%s/%s (%.1fs)",
             trial, cycle, report.n_options, report.n_td, report.n_symbols, report.n_operators,
             report.plan_ex_length, found, executed, report.wall_time)
    return report


def run_trial(config: RunConfig, trial: int) -> list[CycleReport]:
    env = TreasureGame(builtin_map(config.domain), seed=sub_seed(config.seed, trial))
    state = TrialState(env)
    reports = [run_dpa_cycle(state, config, trial, c) for c in range(config.cycles)]
    if config.out_dir and state.model is not None:
        save_trial(state, Path(config.out_dir) / f"trial{trial:02d}")
    return reports


def save_trial(state: TrialState, out: Path) -> None:
    """Final-cycle domain, goal problem and datasets, for offline planning or abstraction."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "domain.ppddl").write_text(emit_domain(state.model.domain))
    problem = goal_problem(state.model, state.env)
    if problem is not None:
        (out / "problem_goal.ppddl").write_text(emit_problem(problem))
    state.data.dump(out / "data.txt")


def run_experiment(config: RunConfig,
                   on_cycle: Callable[[CycleReport], None] | None = None) -> tuple[np.ndarray, list[CycleReport]]:
    """Success matrix (trials x cycles) and every cycle report."""
    matrix = np.zeros((config.trials, config.cycles), dtype=bool)
    reports: list[CycleReport] = []
    for trial in range(config.trials):
        try:
            rows = run_trial(config, trial)
        except Exception:  # noqa: BLE001 - a crashed trial counts as all failures
            log.exception("trial %d crashed; recorded as failures", trial)
            continue
        for r in rows:
            matrix[trial, r.cycle] = r.goal_executed
            reports.append(r)
            if on_cycle is not None:
                on_cycle(r)
    return matrix, reports
