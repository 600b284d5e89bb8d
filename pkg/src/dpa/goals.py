"""Intrinsically motivated target selection and state-to-symbol translation."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .abstraction import AbstractModel, Symbol
from .mlkit import ProbabilisticClassifier, train_classifier

log = logging.getLogger(__name__)

SIGMA_ETA = 0.05


class Strategy(enum.Enum):
    ACTION_BABBLING = "ab"
    GOAL_BABBLING = "gb"
    DISTANCE_GOAL_BABBLING = "dgb"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        t = text.strip().lower().replace("-", "_")
        aliases = {"ab": cls.ACTION_BABBLING, "actionbabbling": cls.ACTION_BABBLING,
                   "action_babbling": cls.ACTION_BABBLING,
                   "gb": cls.GOAL_BABBLING, "goalbabbling": cls.GOAL_BABBLING,
                   "goal_babbling": cls.GOAL_BABBLING,
                   "dgb": cls.DISTANCE_GOAL_BABBLING, "distancegoalbabbling": cls.DISTANCE_GOAL_BABBLING,
                   "distance_goal_babbling": cls.DISTANCE_GOAL_BABBLING}
        if t not in aliases:
            raise ValueError(f"unknown strategy {text!r}")
        return aliases[t]


@dataclass(frozen=True)
class SymbolConjunction:
    symbols: tuple[str, ...]
    score: float

    def __len__(self) -> int:
        return len(self.symbols)


def curiosity(s, s_init, noise) -> float:
    """eta = || s_init - s + Z ||."""
    s, s_init, noise = (np.asarray(v, dtype=float) for v in (s, s_init, noise))
    if s.shape != s_init.shape:
        raise ValueError("state length mismatch")
    return float(np.linalg.norm(s_init - s + noise))


def select_target(strategy: Strategy, visited, s_init, rng: np.random.Generator,
                  sigma: float = SIGMA_ETA, resolution: float | None = None):
    """Pick a target among visited (normalised) states, or None for action babbling.

    With ``resolution``, states falling in the same grid cell of that size
    count once, so pixel-level jitter does not outweigh rarely seen states.
    """
    if strategy is Strategy.ACTION_BABBLING:
        return None
    V = np.asarray(visited, dtype=float)
    if V.size == 0:
        log.warning("no visited states; no target")
        return None
    if resolution:
        _, first = np.unique(np.floor(V / resolution), axis=0, return_index=True)
        V = V[np.sort(first)]
    if strategy is Strategy.GOAL_BABBLING:
        return V[int(rng.integers(len(V)))].copy()
    noise = rng.standard_normal(V.shape) * sigma
    eta = np.linalg.norm(np.asarray(s_init, dtype=float)[None, :] - V + noise, axis=1)
    return V[int(np.argmax(eta))].copy()


def score_subset(subset: Sequence[Symbol], cl_target, m: int, rng: np.random.Generator,
                 base) -> float:
    """Mean target-classifier probability over m joint samples.

    Variables outside the subset's factors keep the values of randomly drawn
    rows of ``base``.
    """
    B = np.atleast_2d(np.asarray(base, dtype=float))
    X = B[rng.integers(len(B), size=m)].copy()
    for s in subset:
        X[:, list(s.variables)] = s.sample(m, rng)
    p = cl_target(X) if callable(cl_target) else cl_target.probability(X)
    return float(np.mean(p))


@dataclass
class TargetConfig:
    eps_nbr: float = 0.05
    k: int = 20
    m: int = 100
    max_symbols: int = 5
    beam: int = 50
    per_factor: int = 1
    sensitivity: float = 1e-3
    n_resample: int = 10
    tie_tolerance: float = 0.02
    gamma: float = 100.0


def target_classifier(target, visited, cfg: TargetConfig, seed: int = 0) -> tuple[ProbabilisticClassifier, np.ndarray]:
    """Cl_target with an adaptive neighbourhood radius; returns it with its positives."""
    V = np.asarray(visited, dtype=float)
    d = np.linalg.norm(V - np.asarray(target, dtype=float)[None, :], axis=1)
    eps = cfg.eps_nbr
    while np.sum(d <= eps) < cfg.k and np.any(d > eps):
        eps *= 2
    pos, neg = V[d <= eps], V[d > eps]
    return train_classifier(pos, neg, seed=seed, gamma=cfg.gamma), pos


def state_to_symbols(s_target, visited, model: AbstractModel, rng: np.random.Generator,
                     cfg: TargetConfig | None = None) -> SymbolConjunction:
    """Factor-disjoint symbol set whose joint samples best resemble s_target.

    ``s_target`` and ``visited`` are normalised states.
    """
    cfg = cfg or TargetConfig()
    V = np.asarray(visited, dtype=float)
    if not model.symbols or V.size == 0:
        return SymbolConjunction((), 0.0)
    clf, pos = target_classifier(s_target, V, cfg, seed=int(rng.integers(2**31)))

    ctx = pos[rng.choice(len(pos), min(len(pos), 50), replace=False)]
    sensitive = []
    for f in model.factors:
        X = np.repeat(ctx, cfg.n_resample, axis=0)
        X[:, list(f.variables)] = V[rng.integers(len(V), size=len(X))][:, list(f.variables)]
        var = clf.probability(X).reshape(len(ctx), cfg.n_resample).var(axis=1).mean()
        if var > cfg.sensitivity:
            sensitive.append(f)
    if not sensitive:
        return SymbolConjunction((), 0.0)

    # per sensitive factor, the symbols whose densities best explain s_target
    t = np.asarray(s_target, dtype=float)[None, :]
    fit: dict[str, float] = {}
    cands: list[Symbol] = []
    for f in sensitive:
        ranked = model.symbols_of(f)
        for sym in ranked:
            fit[sym.name] = float(sym.logpdf(t)[0])
        ranked.sort(key=lambda x: (-fit[x.name], x.name))
        cands.extend(ranked[:cfg.per_factor])
    order = {x.name: i for i, x in enumerate(model.symbols)}
    by_name = {x.name: x for x in cands}

    scored: dict[frozenset, float] = {}
    beam = [frozenset()]
    for _ in range(cfg.max_symbols):
        nxt = set()
        for sub in beam:
            used = {by_name[n].factor.id for n in sub}
            for x in cands:
                if x.factor.id not in used:
                    nxt.add(sub | {x.name})
        if not nxt:
            break
        for sub in sorted(nxt - scored.keys(), key=lambda z: sorted(z, key=order.get)):
            scored[sub] = score_subset([by_name[n] for n in sorted(sub, key=order.get)], clf, cfg.m, rng, V)
        beam = sorted(nxt, key=lambda z: (-scored[z], len(z), sorted(z, key=order.get)))[:cfg.beam]

    top = max(scored.values())
    near = [sub for sub, sc in scored.items() if sc >= top - cfg.tie_tolerance]
    best = min(near, key=lambda z: (len(z), -sum(fit[n] for n in sorted(z, key=order.get)), sorted(z, key=order.get)))
    names = tuple(sorted(best, key=order.get))
    return SymbolConjunction(names, scored[best])
