"""Option-level exploration that fills the initiation and transition datasets."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .env import TreasureGame
from .options import CHANGE_DELTA, TAU, Option, execute_option, execute_plan, sorted_options

log = logging.getLogger(__name__)

Mask = tuple[int, ...]


def compute_mask(s, s_prime, delta: float = CHANGE_DELTA) -> Mask:
    """Indices of the variables that changed by more than ``delta``."""
    s, s_prime = np.asarray(s, dtype=float), np.asarray(s_prime, dtype=float)
    if s.shape != s_prime.shape:
        raise ValueError(f"state length mismatch: {s.shape} vs {s_prime.shape}")
    return tuple(int(i) for i in np.flatnonzero(np.abs(s - s_prime) > delta))


@dataclass(frozen=True)
class InitiationTuple:
    s: np.ndarray
    o: Option
    feasible: bool


@dataclass(frozen=True)
class TransitionTuple:
    s: np.ndarray
    o: Option
    r: float
    s_prime: np.ndarray
    g: bool
    m: Mask
    o_prime: frozenset


@dataclass
class Datasets:
    """Append-only ID and TD for one trial."""

    initiation: list[InitiationTuple] = field(default_factory=list)
    transitions: list[TransitionTuple] = field(default_factory=list)

    def extend(self, other: "Datasets") -> None:
        self.initiation.extend(other.initiation)
        self.transitions.extend(other.transitions)

    def __len__(self) -> int:
        return len(self.initiation) + len(self.transitions)

    def visited_states(self, unique: bool = True) -> np.ndarray:
        """States seen as either s or s' in TD, deduplicated unless ``unique`` is false."""
        if not self.transitions:
            return np.zeros((0, 0))
        rows = np.array([t.s for t in self.transitions] + [t.s_prime for t in self.transitions], dtype=float)
        return np.unique(rows, axis=0) if unique else rows

    # ---------------------------------------------------------------- files

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")

    def lines(self) -> Iterable[str]:
        for t in self.initiation:
            yield f"ID|{_vec(t.s)}|{t.o.id}|{int(t.feasible)}"
        for t in self.transitions:
            o_prime = ";".join(o.id for o in sorted_options(t.o_prime))
            yield (f"TD|{_vec(t.s)}|{t.o.id}|{t.r:g}|{_vec(t.s_prime)}|{int(t.g)}|"
                   f"{','.join(map(str, t.m))}|{o_prime}")

    @classmethod
    def load(cls, path) -> "Datasets":
        return cls.parse(Path(path).read_text())

    @classmethod
    def parse(cls, text: str) -> "Datasets":
        data = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("|")
            try:
                if parts[0] == "ID" and len(parts) == 4:
                    data.initiation.append(InitiationTuple(_unvec(parts[1]), Option.parse(parts[2]),
                                                           bool(int(parts[3]))))
                elif parts[0] == "TD" and len(parts) == 8:
                    o_prime = frozenset(Option.parse(p) for p in parts[7].split(";") if p)
                    mask = tuple(int(i) for i in parts[6].split(",") if i)
                    data.transitions.append(TransitionTuple(
                        _unvec(parts[1]), Option.parse(parts[2]), float(parts[3]),
                        _unvec(parts[4]), bool(int(parts[5])), mask, o_prime))
                else:
                    raise ValueError("unknown record")
            except (ValueError, KeyError, IndexError) as exc:
                raise ValueError(f"line {lineno}: malformed dataset record: {exc}") from exc
        return data


def _vec(x) -> str:
    return ",".join(f"{v:g}" for v in np.asarray(x, dtype=float))


def _unvec(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")], dtype=float)


def executable_options(env: TreasureGame, options: Iterable[Option]) -> frozenset:
    avail = env.available_primitives()
    return frozenset(o for o in options if o.a_p in avail)


def collect_data(env: TreasureGame, dpa_eps: int, dpa_steps: int, options: Iterable[Option],
                 plan_ex: Sequence[Option] = (), rng: np.random.Generator | None = None,
                 tau: int = TAU) -> Datasets:
    """Random option execution after an optional plan prefix.

    Every attempt is logged in ID; executions that change the state are
    logged in TD with reward ``-steps``.
    """
    opts = sorted_options(options)
    if not opts:
        raise ValueError("collect_data needs at least one option")
    rng = rng if rng is not None else np.random.default_rng()
    data = Datasets()
    for _ in range(dpa_eps):
        env.reset()
        execute_plan(env, plan_ex, tau)
        for _ in range(dpa_steps):
            o = opts[int(rng.integers(len(opts)))]
            s = env.state.copy()
            feasible = o.a_p in env.available_primitives()
            data.initiation.append(InitiationTuple(s, o, feasible))
            if not feasible:
                continue
            out = execute_option(env, o, tau)
            m = compute_mask(out.s, out.s_prime)
            if m:
                data.transitions.append(TransitionTuple(
                    out.s, o, -float(out.steps), out.s_prime.copy(), bool(out.goal_flag), m,
                    executable_options(env, opts)))
    log.debug("collected %d ID / %d TD", len(data.initiation), len(data.transitions))
    return data
