"""Cost-optimal planning over a determinized propositional domain."""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from typing import Sequence

from .env import Primitive
from .options import Option
from .ppddl import Domain, Operator, Problem

log = logging.getLogger(__name__)


@dataclass
class Plan:
    operators: list[str]
    options: list[Option | None]
    cost: float

    def __len__(self) -> int:
        return len(self.operators)

    def format(self, title: str = "PLAN", annotate: bool = True) -> str:
        """Numbered listing in the style ``[ 1:(go_down,{}),  ; climb down the stairs``."""
        if not self.operators:
            return f"{title}:\n\n[ ]"
        last = len(self.operators)
        cells = []
        for i, (name, o) in enumerate(zip(self.operators, self.options), 1):
            label = str(o) if o is not None else name
            cells.append((f"{i}:{label}" + (" ]" if i == last else ","), describe(o) if o is not None else ""))
        width = max(len(c) for c, _ in cells) + 2
        rows = []
        for i, (cell, note) in enumerate(cells):
            lead = "[ " if i == 0 else "  "
            rows.append(f"{lead}{cell:<{width}}; {note}" if annotate and note else f"{lead}{cell}")
        return f"{title}:\n\n" + "\n".join(rows)


_MOVE = {Primitive.GO_UP: "climb up", Primitive.GO_DOWN: "climb down",
         Primitive.GO_LEFT: "go left", Primitive.GO_RIGHT: "go right"}
_CAN = {Primitive.GO_UP: "go up", Primitive.GO_DOWN: "go down", Primitive.GO_LEFT: "go left",
        Primitive.GO_RIGHT: "go right", Primitive.INTERACT: "interact"}


def describe(o: Option) -> str:
    """Short English gloss of an option, used as the plan annotation."""
    if o.a_p is Primitive.INTERACT:
        return "interact"
    if o.a_t is None:
        return "climb down the stairs" if o.a_p is Primitive.GO_DOWN else (
            "climb up the stairs" if o.a_p is Primitive.GO_UP else f"{_MOVE[o.a_p]} as far as possible")
    return f"{_MOVE[o.a_p]} until it can {_CAN[o.a_t]}"


@dataclass(frozen=True)
class _Ground:
    name: str
    pre: int
    add: int
    delete: int
    cost: float


def _determinize(domain: Domain, index: dict[str, int]) -> list[_Ground]:
    out = []
    for op in domain.operators:
        best = op.most_likely()
        if best is None or best.probability <= 0:
            continue
        pre = _bits(op.precondition, index)
        add = _bits(best.add, index)
        dele = _bits(best.delete, index) & ~add
        out.append(_Ground(op.name, pre, add, dele, max(best.cost, 0.0) / best.probability))
    return out


def _bits(names: Sequence[str], index: dict[str, int]) -> int:
    b = 0
    for n in names:
        b |= 1 << index[n]
    return b


def plan(domain: Domain, problem: Problem, max_expansions: int = 200_000) -> Plan | None:
    """Uniform-cost search; ties broken by the lexicographic sequence of operator names."""
    index = {p: i for i, p in enumerate(domain.predicates)}
    for sym in problem.init + problem.goal:
        if sym not in index:
            raise KeyError(f"undeclared predicate {sym}")
    ops = _determinize(domain, index)
    # index each operator by its rarest precondition bit; no-precondition ops always apply
    freq: dict[int, int] = {}
    for g in ops:
        for i in _iter_bits(g.pre):
            freq[i] = freq.get(i, 0) + 1
    by_bit: dict[int, list[_Ground]] = {}
    free: list[_Ground] = []
    for g in ops:
        bits = list(_iter_bits(g.pre))
        if bits:
            by_bit.setdefault(min(bits, key=lambda i: (freq[i], i)), []).append(g)
        else:
            free.append(g)

    start = _bits(problem.init, index)
    goal = _bits(problem.goal, index)
    frontier = [(0.0, (), start)]
    best: dict[int, float] = {start: 0.0}
    closed: set[int] = set()
    expansions = 0
    while frontier:
        g_cost, names, state = heapq.heappop(frontier)
        if state in closed:
            continue
        if state & goal == goal:
            return _make_plan(domain, list(names), g_cost)
        closed.add(state)
        expansions += 1
        if expansions > max_expansions:
            log.warning("planner expansion limit reached")
            return None
        cands = list(free)
        for i in _iter_bits(state):
            cands.extend(by_bit.get(i, ()))
        for op in cands:
            if op.pre & state != op.pre:
                continue
            nxt = (state & ~op.delete) | op.add
            if nxt in closed:
                continue
            c = round(g_cost + op.cost, 9)
            if c <= best.get(nxt, float("inf")):
                best[nxt] = c
                heapq.heappush(frontier, (c, names + (op.name,), nxt))
    return None


def _iter_bits(x: int):
    i = 0
    while x:
        if x & 1:
            yield i
        x >>= 1
        i += 1


def _make_plan(domain: Domain, names: list[str], cost: float) -> Plan:
    ops = {op.name: op for op in domain.operators}
    return Plan(names, [domain.option_for(ops[n]) for n in names], cost)


def replay(domain: Domain, problem: Problem, plan_: Plan) -> frozenset[str]:
    """Apply the plan's most-likely effects symbolically; returns the final state."""
    ops = {op.name: op for op in domain.operators}
    state = set(problem.init)
    for name in plan_.operators:
        op: Operator = ops[name]
        if not set(op.precondition) <= state:
            raise ValueError(f"{name} not applicable")
        out = op.most_likely()
        state = (state - (set(out.delete) - set(out.add))) | set(out.add)
    return frozenset(state)


def check_validity(domain: Domain, problem_g: Problem) -> tuple[bool, Plan | None]:
    """Whether the game goal is reachable in the symbolic model."""
    p = plan(domain, problem_g)
    return p is not None, p
