"""Options built from pairs of primitives and their surprise-driven discovery."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .env import REVERSE, Primitive, TreasureGame

log = logging.getLogger(__name__)

TAU = 200
CHANGE_DELTA = 0.5


@dataclass(frozen=True)
class Option:
    """Run ``a_p`` until it is no longer available or ``a_t`` becomes available."""

    a_p: Primitive
    a_t: Primitive | None = None

    def __post_init__(self):
        if self.a_t is not None and self.a_t == self.a_p:
            raise ValueError("terminating primitive must differ from the policy primitive")

    def sort_key(self) -> tuple[int, int]:
        return int(self.a_p), -1 if self.a_t is None else int(self.a_t)

    def __lt__(self, other: "Option") -> bool:
        return self.sort_key() < other.sort_key()

    @property
    def id(self) -> str:
        return f"option({self.short()})"

    def short(self) -> str:
        t = "{}" if self.a_t is None else self.a_t.label
        return f"{self.a_p.label},{t}"

    def __str__(self) -> str:
        return f"({self.short()})"

    @classmethod
    def parse(cls, text: str) -> "Option":
        body = text.strip()
        if body.startswith("option"):
            body = body[len("option"):]
        body = body.strip().strip("()")
        a_p, a_t = [part.strip() for part in body.split(",")]
        return cls(Primitive.from_label(a_p), None if a_t in ("{}", "", "NONE", "none") else Primitive.from_label(a_t))


def sorted_options(options: Iterable[Option]) -> list[Option]:
    return sorted(set(options), key=Option.sort_key)


@dataclass
class OptionOutcome:
    s: np.ndarray
    s_prime: np.ndarray
    steps: int
    changed: bool
    new_available: frozenset
    goal_flag: bool = False

    @property
    def failed(self) -> bool:
        return self.steps == 0


def states_differ(s: np.ndarray, s_prime: np.ndarray, delta: float = CHANGE_DELTA) -> bool:
    return bool(np.any(np.abs(np.asarray(s) - np.asarray(s_prime)) > delta))


def execute_option(env: TreasureGame, o: Option, tau: int = TAU) -> OptionOutcome:
    """Run the option's policy from the current environment state.

    The initiation set is "a_p is available"; outside it nothing is executed
    and a failure outcome with ``steps == 0`` is returned.
    """
    s = env.state.copy()
    avail = env.available_primitives()
    if o.a_p not in avail:
        return OptionOutcome(s, s.copy(), 0, False, avail, env.goal_reached())
    steps = 0
    res = None
    while steps < tau:
        res = env.step(o.a_p)
        steps += 1
        if o.a_p is Primitive.INTERACT:
            break
        if o.a_p not in res.available:
            break
        if o.a_t is not None and o.a_t in res.available and o.a_t not in avail:
            break
        avail = res.available
    return OptionOutcome(s, res.state, steps, states_differ(s, res.state), res.available, res.goal_flag)


def run_primitive_until_surprise(env: TreasureGame, a_p: Primitive, tau: int = TAU) -> Primitive | None:
    """Inner loop of discovery: repeat ``a_p`` until it stops or something new appears.

    Returns the newly available primitive, or None when ``a_p`` ran out.
    Losing ``a_p`` wins over a simultaneous appearance; the reverse motion
    never counts as new.
    """
    avail = env.available_primitives()
    if a_p is Primitive.INTERACT:
        env.step(a_p)
        return None
    ignore = {a_p, REVERSE.get(a_p)}
    for _ in range(tau):
        res = env.step(a_p)
        if a_p not in res.available:
            return None
        fresh = sorted(p for p in res.available - avail if p not in ignore)
        if fresh:
            return fresh[0]
        avail = res.available
    return None


def execute_plan(env: TreasureGame, plan_options: Sequence[Option], tau: int = TAU,
                 on_outcome=None) -> int:
    """Execute options in order, aborting at the first failed precondition.

    Returns the number of options that ran.
    """
    done = 0
    for o in plan_options:
        out = execute_option(env, o, tau)
        if on_outcome is not None:
            on_outcome(o, out)
        if out.failed:
            log.debug("plan aborted at step %d: %s not executable", done + 1, o)
            break
        done += 1
    return done


def discover_options(env: TreasureGame, d_eps: int, d_steps: int,
                     plan_ex: Sequence[Option] = (), rng: np.random.Generator | None = None,
                     tau: int = TAU) -> set[Option]:
    """Surprise-driven option discovery over ``d_eps`` episodes of ``d_steps`` runs."""
    rng = rng if rng is not None else np.random.default_rng()
    found: set[Option] = set()
    for _ in range(d_eps):
        env.reset()
        execute_plan(env, plan_ex, tau)
        for _ in range(d_steps):
            s = env.state.copy()
            avail = sorted(env.available_primitives())
            if not avail:
                break
            a_p = avail[int(rng.integers(len(avail)))]
            a_t = run_primitive_until_surprise(env, a_p, tau)
            if states_differ(s, env.state):
                found.add(Option(a_p, a_t))
    return found
