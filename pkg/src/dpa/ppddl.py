"""Propositional PPDDL: data types, canonical emission and parsing.

Only the fragment produced by the abstraction is supported: zero-parameter
actions, conjunctive preconditions, (optionally probabilistic) add/delete
effects and a ``(decrease (reward) c)`` cost per outcome.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from .options import Option

REQUIREMENTS = (":strips", ":probabilistic-effects", ":rewards")
NOTFAILED = "notfailed"
_LEGEND = re.compile(r";\s*option\s+(\d+)\s*:\s*(option\([^)]*\))")


class PPDDLError(ValueError):
    pass


@dataclass(frozen=True)
class Outcome:
    probability: float
    add: tuple[str, ...]
    delete: tuple[str, ...]
    cost: float


@dataclass(frozen=True)
class Operator:
    name: str
    precondition: tuple[str, ...]
    outcomes: tuple[Outcome, ...]

    @property
    def option_index(self) -> int | None:
        m = re.match(r"option-(\d+)-", self.name)
        return int(m.group(1)) if m else None

    def most_likely(self) -> Outcome | None:
        """Most probable outcome, or None when the implicit no-op dominates."""
        best = max(self.outcomes, key=lambda o: o.probability)
        if 1.0 - sum(o.probability for o in self.outcomes) > best.probability + 1e-12:
            return None
        return best


@dataclass
class Domain:
    name: str
    predicates: list[str]
    operators: list[Operator]
    options: dict[int, Option] = field(default_factory=dict)

    def operator(self, name: str) -> Operator:
        for op in self.operators:
            if op.name == name:
                return op
        raise KeyError(name)

    def option_for(self, op: Operator) -> Option | None:
        i = op.option_index
        return None if i is None else self.options.get(i)


@dataclass
class Problem:
    name: str
    domain: str
    init: tuple[str, ...]
    goal: tuple[str, ...]


# --------------------------------------------------------------------------
# Emission
# --------------------------------------------------------------------------

def _atoms(names: Sequence[str]) -> str:
    return " ".join(f"({n})" for n in names)


def _fmt_p(p: float) -> str:
    return f"{p:.6f}".rstrip("0").rstrip(".") if p != 1.0 else "1"


def _effect_body(o: Outcome) -> str:
    parts = [f"({a})" for a in o.add] + [f"(not ({d}))" for d in o.delete]
    parts.append(f"(decrease (reward) {o.cost:.2f})")
    return "(and " + " ".join(parts) + ")"


def emit_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})",
             f"    (:requirements {' '.join(REQUIREMENTS)})"]
    for i in sorted(domain.options):
        lines.append(f"    ; option {i}: {domain.options[i].id}")
    lines += ["", "    (:predicates"]
    lines += [f"        ({p})" for p in domain.predicates]
    lines.append("    )")
    for op in domain.operators:
        if len(op.outcomes) == 1 and op.outcomes[0].probability == 1.0:
            effect = _effect_body(op.outcomes[0])
        else:
            effect = "(probabilistic " + " ".join(
                f"{_fmt_p(o.probability)} {_effect_body(o)}" for o in op.outcomes) + ")"
        lines += ["",
                  f"    (:action {op.name}",
                  "        :parameters ()",
                  f"        :precondition (and {_atoms(op.precondition)})",
                  f"        :effect {effect}",
                  "    )"]
    lines.append(")")
    return "\n".join(lines) + "\n"


def emit_problem(problem: Problem) -> str:
    return "\n".join([
        f"(define (problem {problem.name})",
        f"    (:domain {problem.domain})",
        f"    (:init {_atoms(problem.init)})",
        f"    (:goal (and {_atoms(problem.goal)}))",
        ")",
    ]) + "\n"


def emit(domain: Domain, problem: Problem | None = None) -> tuple[str, str | None]:
    return emit_domain(domain), None if problem is None else emit_problem(problem)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

def _tokenize(text: str) -> list[str]:
    text = re.sub(r";[^\n]*", " ", text)
    return re.findall(r"\(|\)|[^\s()]+", text)


def _read(tokens: list[str]):
    pos = 0

    def expr():
        nonlocal pos
        if pos >= len(tokens):
            raise PPDDLError("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while True:
                if pos >= len(tokens):
                    raise PPDDLError("unbalanced parentheses")
                if tokens[pos] == ")":
                    pos += 1
                    return out
                out.append(expr())
        if tok == ")":
            raise PPDDLError("unexpected ')'")
        return tok

    tree = expr()
    if pos != len(tokens):
        raise PPDDLError("trailing content after top-level expression")
    return tree


def _atom(x) -> str:
    if not (isinstance(x, list) and len(x) == 1 and isinstance(x[0], str)):
        raise PPDDLError(f"expected atom, got {x!r}")
    return x[0]


def _conj(x) -> list:
    if isinstance(x, list) and x and x[0] == "and":
        return x[1:]
    return [x]


def _parse_effect(x) -> Outcome:
    add, dele, cost = [], [], None
    for lit in _conj(x):
        if isinstance(lit, list) and lit and lit[0] == "not":
            dele.append(_atom(lit[1]))
        elif isinstance(lit, list) and lit and lit[0] == "decrease":
            if _atom(lit[1]) != "reward":
                raise PPDDLError("only (decrease (reward) c) is supported")
            cost = float(lit[2])
        else:
            add.append(_atom(lit))
    if cost is None:
        cost = 0.0
    return Outcome(1.0, tuple(add), tuple(dele), cost)


def _parse_action(body: list, declared: set[str]) -> Operator:
    name = body[1]
    fields = {body[i]: body[i + 1] for i in range(2, len(body) - 1, 2)}
    if fields.get(":parameters", []) != []:
        raise PPDDLError(f"{name}: parameters are not supported")
    pre = tuple(_atom(a) for a in _conj(fields.get(":precondition", ["and"])))
    eff = fields.get(":effect")
    if eff is None:
        raise PPDDLError(f"{name}: missing effect")
    if isinstance(eff, list) and eff and eff[0] == "probabilistic":
        items = eff[1:]
        if len(items) % 2 or not items:
            raise PPDDLError(f"{name}: malformed probabilistic clause")
        outcomes = []
        for p_text, e in zip(items[::2], items[1::2]):
            try:
                p = float(p_text)
            except (TypeError, ValueError):
                raise PPDDLError(f"{name}: malformed probability {p_text!r}") from None
            if not 0.0 <= p <= 1.0:
                raise PPDDLError(f"{name}: probability {p} outside [0, 1]")
            o = _parse_effect(e)
            outcomes.append(Outcome(p, o.add, o.delete, o.cost))
        if sum(o.probability for o in outcomes) > 1.0 + 1e-6:
            raise PPDDLError(f"{name}: probabilities sum above 1")
    else:
        outcomes = [_parse_effect(eff)]
    op = Operator(name, pre, tuple(outcomes))
    for sym in op.precondition + tuple(s for o in op.outcomes for s in o.add + o.delete):
        if sym not in declared:
            raise PPDDLError(f"{name}: undeclared predicate {sym}")
    return op


def parse_domain(text: str) -> Domain:
    tree = _read(_tokenize(text))
    if not (isinstance(tree, list) and tree[:1] == ["define"]):
        raise PPDDLError("expected (define (domain ...) ...)")
    name = None
    predicates: list[str] = []
    declared: set[str] = set()
    operators = []
    for part in tree[1:]:
        head = part[0]
        if head == "domain":
            name = part[1]
        elif head == ":requirements":
            for r in part[1:]:
                if r not in REQUIREMENTS:
                    raise PPDDLError(f"unknown requirement {r}")
        elif head == ":predicates":
            predicates = [_atom(p) for p in part[1:]]
            declared = set(predicates)
        elif head == ":action":
            operators.append(_parse_action(part, declared))
        else:
            raise PPDDLError(f"unsupported domain section {head}")
    if name is None:
        raise PPDDLError("domain name missing")
    options = {int(i): Option.parse(o) for i, o in _LEGEND.findall(text)}
    return Domain(name, predicates, operators, options)


def parse_problem(text: str, domain: Domain | None = None) -> Problem:
    tree = _read(_tokenize(text))
    if not (isinstance(tree, list) and tree[:1] == ["define"]):
        raise PPDDLError("expected (define (problem ...) ...)")
    name = dom = None
    init: tuple[str, ...] = ()
    goal = None
    for part in tree[1:]:
        head = part[0]
        if head == "problem":
            name = part[1]
        elif head == ":domain":
            dom = part[1]
        elif head == ":init":
            init = tuple(_atom(a) for a in part[1:])
        elif head == ":goal":
            goal = tuple(_atom(a) for a in _conj(part[1]))
        else:
            raise PPDDLError(f"unsupported problem section {head}")
    if not goal:
        raise PPDDLError("empty goal clause")
    if domain is not None:
        declared = set(domain.predicates)
        for sym in init + goal:
            if sym not in declared:
                raise PPDDLError(f"undeclared predicate {sym} in problem")
    return Problem(name or "problem", dom or "", init, goal)


def parse_ppddl(domain_text: str, problem_text: str) -> tuple[Domain, Problem]:
    domain = parse_domain(domain_text)
    return domain, parse_problem(problem_text, domain)
