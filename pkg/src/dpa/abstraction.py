"""Skills-to-symbols abstraction: partitions, preconditions, effects, domain.

Every step works on normalised states (state / map scale).  The result is
an :class:`AbstractModel` bundling the factors, the symbol table, the
partitions and the synthesized PPDDL domain.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .explorer import Datasets, Mask, TransitionTuple
from .mlkit import (DBSCAN_EPS, DBSCAN_MIN_PTS, NOISE, DensityModel, ProbabilisticClassifier,
                    dbscan, fit_density, train_classifier)
from .options import Option, sorted_options
from .ppddl import NOTFAILED, Domain, Operator, Outcome

log = logging.getLogger(__name__)


@dataclass
class AbstractionConfig:
    dbscan_eps: float = DBSCAN_EPS
    dbscan_min_pts: int = 1
    svm_C: float = 10.0
    svm_gamma: float = 100.0
    max_train: int = 300
    overlap_rate: float = 0.10
    dedup_samples: int = 100
    dedup_tolerance: float = 0.05
    n_contexts: int = 50
    collision_radius: float = 0.05
    collision_rate: float = 0.0
    min_generalize: int = 3
    candidate_min: int = 1
    accept: float = 0.5
    max_combos: int = 2000


@dataclass(frozen=True)
class Factor:
    id: int
    variables: tuple[int, ...]


@dataclass
class Symbol:
    name: str
    factor: Factor
    density: DensityModel

    @property
    def variables(self) -> tuple[int, ...]:
        return self.factor.variables

    def accepts(self, states) -> np.ndarray:
        X = np.atleast_2d(np.asarray(states, dtype=float))
        return self.density.accepts(X[:, list(self.variables)])

    def logpdf(self, states) -> np.ndarray:
        X = np.atleast_2d(np.asarray(states, dtype=float))
        return self.density.logpdf(X[:, list(self.variables)])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.density.sample(n, rng)


@dataclass
class EffectCluster:
    starts: np.ndarray
    ends: np.ndarray
    steps: np.ndarray
    probability: float = 1.0
    effect_symbols: dict[int, Symbol] = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return float(np.mean(self.steps))


@dataclass
class Partition:
    option: Option
    mask: Mask
    clusters: list[EffectCluster]
    classifier: ProbabilisticClassifier | None = None
    negatives: np.ndarray | None = None

    @property
    def starts(self) -> np.ndarray:
        return np.vstack([c.starts for c in self.clusters])

    @property
    def size(self) -> int:
        return sum(len(c.starts) for c in self.clusters)


@dataclass
class AbstractModel:
    factors: list[Factor]
    symbols: list[Symbol]
    partitions: list[Partition]
    domain: Domain
    scale: np.ndarray
    init_symbols: list[str]

    def normalize(self, states) -> np.ndarray:
        return np.asarray(states, dtype=float) / self.scale

    def symbol(self, name: str) -> Symbol:
        for s in self.symbols:
            if s.name == name:
                return s
        raise KeyError(name)

    def symbols_of(self, factor: Factor) -> list[Symbol]:
        return [s for s in self.symbols if s.factor.id == factor.id]

    def factors_touching(self, variables: Iterable[int]) -> list[Factor]:
        wanted = set(variables)
        return [f for f in self.factors if wanted & set(f.variables)]

    def ground(self, state, factors: Sequence[Factor] | None = None) -> dict[int, str | None]:
        """Best-grounding symbol per factor for a raw low-level state."""
        x = self.normalize(state)[None, :]
        out: dict[int, str | None] = {}
        for f in factors if factors is not None else self.factors:
            best, best_lp = None, -np.inf
            for s in self.symbols_of(f):
                if s.accepts(x)[0]:
                    lp = float(s.logpdf(x)[0])
                    if lp > best_lp:
                        best, best_lp = s.name, lp
            out[f.id] = best
        return out


# --------------------------------------------------------------------------
# Step 1: partitioning
# --------------------------------------------------------------------------

def _group_key(t: TransitionTuple):
    return t.o.sort_key(), t.m


def partition_transitions(td: Sequence[TransitionTuple], scale, eps: float = DBSCAN_EPS,
                          min_pts: int = DBSCAN_MIN_PTS) -> list[Partition]:
    """Group by (option, mask) and cluster the masked end states."""
    if not td:
        raise ValueError("partition_transitions needs a nonempty TD")
    scale = np.asarray(scale, dtype=float)
    groups: dict[tuple, list[TransitionTuple]] = {}
    for t in td:
        groups.setdefault(_group_key(t), []).append(t)
    out = []
    for key in sorted(groups):
        rows = groups[key]
        o, mask = rows[0].o, rows[0].m
        S = np.array([t.s for t in rows], dtype=float) / scale
        E = np.array([t.s_prime for t in rows], dtype=float) / scale
        steps = np.array([-t.r for t in rows], dtype=float)
        labels = dbscan(E[:, list(mask)], eps, min_pts)
        if np.all(labels == NOISE):
            log.debug("%s mask %s: all %d samples noise, catch-all partition", o, mask, len(rows))
            labels = np.zeros(len(rows), dtype=int)
        for lab in range(labels.max() + 1):
            sel = labels == lab
            out.append(Partition(o, mask, [EffectCluster(S[sel], E[sel], steps[sel])]))
    return out


def _overlaps(a: Partition, b: Partition, cfg: AbstractionConfig, seed: int) -> bool:
    """Whether enough of A's start states look like B's start states."""
    A, B = a.starts, b.starts
    lo = np.maximum(A.min(0), B.min(0))
    hi = np.minimum(A.max(0), B.max(0))
    if np.any(lo > hi + 0.02):
        return False
    clf = train_classifier(B, A, seed=seed, C=cfg.svm_C, gamma=cfg.svm_gamma, max_per_class=cfg.max_train)
    return float(np.mean(clf.probability(A) > 0.5)) >= cfg.overlap_rate


def merge_partitions(candidates: Sequence[Partition], cfg: AbstractionConfig | None = None,
                     seed: int = 0) -> list[Partition]:
    """Merge same-(option, mask) candidates with overlapping start states.

    Outcome probabilities become cluster sizes over the merged total.
    """
    cfg = cfg or AbstractionConfig()
    out: list[Partition] = []
    i = 0
    while i < len(candidates):
        j = i
        key = (candidates[i].option, candidates[i].mask)
        while j < len(candidates) and (candidates[j].option, candidates[j].mask) == key:
            j += 1
        group = list(candidates[i:j])
        parent = list(range(len(group)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in itertools.combinations(range(len(group)), 2):
            if find(a) == find(b):
                continue
            if _overlaps(group[a], group[b], cfg, seed) or _overlaps(group[b], group[a], cfg, seed):
                parent[find(b)] = find(a)
        roots: dict[int, list[EffectCluster]] = {}
        for k in range(len(group)):
            roots.setdefault(find(k), []).extend(group[k].clusters)
        for r in sorted(roots):
            clusters = roots[r]
            total = sum(len(c.starts) for c in clusters)
            for c in clusters:
                c.probability = len(c.starts) / total
            out.append(Partition(key[0], key[1], clusters))
        i = j
    return out


# --------------------------------------------------------------------------
# Step 2: preconditions
# --------------------------------------------------------------------------

def learn_preconditions(partition: Partition, infeasible: np.ndarray, siblings: Sequence[Partition],
                        cfg: AbstractionConfig | None = None, seed: int = 0,
                        factors: Sequence[Factor] | None = None) -> ProbabilisticClassifier:
    """Classifier for the partition's initiation set.

    ``infeasible`` holds normalised ID states where the option could not
    run; sibling partitions of the same option contribute their starts as
    further negatives.  Given ``factors``, the classifier only sees the
    factors needed to tell positives from negatives (see
    :func:`_select_variables`).
    """
    cfg = cfg or AbstractionConfig()
    pos = np.unique(partition.starts, axis=0)
    negs = [np.asarray(infeasible, dtype=float).reshape(-1, pos.shape[1])]
    negs += [p.starts for p in siblings if p is not partition]
    neg = np.unique(np.vstack(negs), axis=0) if negs else np.zeros((0, pos.shape[1]))
    if len(neg):
        pos_set = {r.tobytes() for r in pos}
        neg = neg[[r.tobytes() not in pos_set for r in neg]]
    columns = None
    if factors is not None and len(neg):
        columns = _select_variables(pos, neg, partition.mask, factors, cfg)
    clf = train_classifier(pos, neg, seed=seed, C=cfg.svm_C, gamma=cfg.svm_gamma,
                           max_per_class=cfg.max_train, columns=columns)
    if clf.degenerate:
        log.info("%s mask %s: no negatives, constant classifier", partition.option, partition.mask)
    partition.classifier = clf
    partition.negatives = neg
    return clf


def _collisions(pos: np.ndarray, neg: np.ndarray, factors: Sequence[Factor],
                radius: float) -> tuple[int, int]:
    """Positives with a negative within ``radius`` over the factors' variables,
    and the number of such (positive, negative) pairs."""
    cols = sorted(v for f in factors for v in f.variables)
    if not cols:
        return len(pos), len(pos) * len(neg)
    near = cKDTree(neg[:, cols]).query_ball_point(pos[:, cols], r=radius, return_length=True)
    return int(np.count_nonzero(near)), int(np.sum(near))


def _impurity(pos: np.ndarray, neg: np.ndarray, factors: Sequence[Factor], radius: float) -> float:
    """Summed share of negatives among each positive's neighbours within
    ``radius`` over the factors' variables."""
    cols = sorted(v for f in factors for v in f.variables)
    if not cols:
        return len(pos) * len(neg) / (len(pos) + len(neg))
    n_neg = cKDTree(neg[:, cols]).query_ball_point(pos[:, cols], r=radius, return_length=True)
    n_pos = cKDTree(pos[:, cols]).query_ball_point(pos[:, cols], r=radius, return_length=True)
    return float(np.sum(n_neg / (n_neg + n_pos)))


def _select_variables(pos: np.ndarray, neg: np.ndarray, mask: Mask, factors: Sequence[Factor],
                      cfg: AbstractionConfig) -> tuple[int, ...]:
    """Forward selection of the factors the initiation set depends on.

    Starting from the mask factors, greedily add the factor that removes the
    most colliding (positive, negative) pairs, or every such factor on a
    tie, a collision being a pair within ``collision_radius`` over the
    selected variables.  Stop once the
    colliding positives are within ``collision_rate`` of those over all
    factors.  When every positive collides even over all factors (the edge
    of an initiation set always has infeasible tries a pixel away) the count
    says nothing, and the impurity of the positives' neighbourhoods is used
    instead.  With fewer than ``min_generalize`` distinct positives there is
    too little evidence to drop anything.
    """
    if len(pos) < cfg.min_generalize:
        return tuple(sorted(v for f in factors for v in f.variables))
    keep = [f for f in factors if set(f.variables) & set(mask)]
    rest = [f for f in factors if f not in keep]
    r = cfg.collision_radius
    if _collisions(pos, neg, factors, r)[0] < len(pos):
        def score(fs):
            n, pairs = _collisions(pos, neg, fs, r)
            return n, (pairs, n)
    else:
        def score(fs):
            x = _impurity(pos, neg, fs, r)
            return x, (x,)
    floor = score(factors)[0]
    slack = cfg.collision_rate * len(pos) + 1e-9
    current = score(keep)[0]
    while rest and current > floor + slack:
        scores = [score(keep + [f]) for f in rest]
        best = min(s[1] for s in scores)
        # factors that separate the same pairs are confounded in the data;
        # keep them all rather than guess
        tied = [i for i, s in enumerate(scores) if s[1] == best]
        keep += [rest[i] for i in tied]
        rest = [f for i, f in enumerate(rest) if i not in tied]
        current = score(keep)[0]
    return tuple(sorted(v for f in keep for v in f.variables))


# --------------------------------------------------------------------------
# Factors and symbols
# --------------------------------------------------------------------------

def compute_factors(masks: Iterable[Mask], n_vars: int) -> list[Factor]:
    """Group variables that always change together; untouched ones stay single.

    Starts from one block of all touched variables and splits every block
    that a mask cuts.
    """
    distinct = sorted({tuple(sorted(m)) for m in masks if m})
    touched = sorted({v for m in distinct for v in m})
    blocks = [set(touched)] if touched else []
    for m in distinct:
        ms = set(m)
        nxt = []
        for b in blocks:
            inside, outside = b & ms, b - ms
            nxt.extend(x for x in (inside, outside) if x)
        blocks = nxt
    blocks += [{v} for v in range(n_vars) if v not in set(touched)]
    blocks.sort(key=min)
    return [Factor(i, tuple(sorted(b))) for i, b in enumerate(blocks)]


def _same_symbol(a: DensityModel, b: DensityModel, cfg: AbstractionConfig) -> bool:
    rng = np.random.default_rng(0)
    X = np.vstack([a.sample(cfg.dedup_samples, rng), b.sample(cfg.dedup_samples, rng)])
    return float(np.mean(a.accepts(X) != b.accepts(X))) < cfg.dedup_tolerance


def generate_symbols(partitions: Sequence[Partition], factors: Sequence[Factor], init_state=None,
                     cfg: AbstractionConfig | None = None) -> list[Symbol]:
    """Effect densities per (cluster, factor), deduplicated and named in order.

    When ``init_state`` (normalised) is given its per-factor projections
    become the first symbols, so the initial state is always groundable.
    """
    cfg = cfg or AbstractionConfig()
    symbols: list[Symbol] = []
    by_factor: dict[int, list[Symbol]] = {f.id: [] for f in factors}

    def intern(f: Factor, model: DensityModel) -> Symbol:
        for s in by_factor[f.id]:
            if _same_symbol(s.density, model, cfg):
                return s
        s = Symbol(f"symbol_{len(symbols)}", f, model)
        symbols.append(s)
        by_factor[f.id].append(s)
        return s

    if init_state is not None:
        x = np.asarray(init_state, dtype=float)
        for f in factors:
            intern(f, fit_density(x[list(f.variables)][None, :], f.variables))
    for p in partitions:
        mask = set(p.mask)
        for c in p.clusters:
            c.effect_symbols = {}
            for f in factors:
                if mask & set(f.variables):
                    c.effect_symbols[f.id] = intern(f, fit_density(c.ends, f.variables))
    return symbols


# --------------------------------------------------------------------------
# Step 4: operators
# --------------------------------------------------------------------------

def _precondition_sets(p: Partition, factors: Sequence[Factor], by_factor: dict[int, list[Symbol]],
                       cfg: AbstractionConfig, rng: np.random.Generator) -> list[tuple[Symbol, ...]]:
    """Symbol conjunctions (one symbol per relevant factor) the classifier accepts."""
    clf = p.classifier
    pos = np.unique(p.starts, axis=0)
    base = clf.probability(pos)
    if np.any(base >= 0.5):
        pos = pos[base >= 0.5]
    mask = set(p.mask)

    # the mask factors plus whatever survived variable selection
    seen = set(range(pos.shape[1]) if clf.columns is None else clf.columns)
    if clf.degenerate:
        seen = set()
    relevant_ids = {f.id for f in factors if (mask | seen) & set(f.variables)}

    # one context per distinct grounding of the relevant factors, so that
    # rarely seen regions of the initiation set are screened as well
    keys = np.zeros((len(pos), 0), dtype=int)
    for f in factors:
        if f.id in relevant_ids and by_factor[f.id]:
            ll = np.stack([s.logpdf(pos) for s in by_factor[f.id]], axis=1)
            keys = np.column_stack([keys, ll.argmax(axis=1)])
    _, first = np.unique(keys, axis=0, return_index=True)
    ctx = pos[np.sort(first)]
    if len(ctx) > cfg.n_contexts:
        ctx = ctx[np.sort(rng.choice(len(ctx), cfg.n_contexts, replace=False))]
    n = len(ctx)

    # screening: every (relevant factor, symbol) substitution in one batch
    jobs, blocks = [], []
    for f in factors:
        if f.id not in relevant_ids:
            continue
        for s in by_factor[f.id]:
            X = ctx.copy()
            X[:, list(f.variables)] = s.sample(n, rng)
            jobs.append((f, s))
            blocks.append(X)
    probs = clf.probability(np.vstack(blocks)).reshape(len(jobs), n) if jobs else np.zeros((0, n))
    rates: dict[int, list[tuple[int, Symbol]]] = {}
    for (f, s), pr in zip(jobs, probs):
        rates.setdefault(f.id, []).append((int(np.sum(pr >= 0.5)), s))

    relevant: list[tuple[Factor, list[Symbol]]] = []
    for f in factors:
        if f.id not in relevant_ids:
            continue
        r = rates.get(f.id, [])
        cands = [s for x, s in sorted(r, key=lambda t: (-t[0], t[1].name)) if x >= cfg.candidate_min]
        if not cands:
            return []
        relevant.append((f, cands))

    # cap the product by trimming the longest candidate lists
    while np.prod([len(c) for _, c in relevant]) > cfg.max_combos:
        k = max(range(len(relevant)), key=lambda i: len(relevant[i][1]))
        relevant[k] = (relevant[k][0], relevant[k][1][:-1])

    combos = list(itertools.product(*[c for _, c in relevant]))
    if not combos:
        return []
    blocks = []
    for combo in combos:
        X = ctx[rng.integers(n, size=cfg.n_contexts)]
        for (f, _), s in zip(relevant, combo):
            X[:, list(f.variables)] = s.sample(cfg.n_contexts, rng)
        blocks.append(X)
    probs = clf.probability(np.vstack(blocks)).reshape(len(combos), cfg.n_contexts).mean(axis=1)
    return [combo for combo, pr in zip(combos, probs) if pr >= cfg.accept]


def synthesize_domain(symbols: Sequence[Symbol], partitions: Sequence[Partition], factors: Sequence[Factor],
                      options: Sequence[Option], cfg: AbstractionConfig | None = None, seed: int = 0,
                      name: str = "TreasureGame") -> Domain:
    """One operator per (partition, accepted precondition conjunction)."""
    cfg = cfg or AbstractionConfig()
    opts = sorted_options(options)
    opt_index = {o: i for i, o in enumerate(opts)}
    by_factor: dict[int, list[Symbol]] = {f.id: [] for f in factors}
    for s in symbols:
        by_factor[s.factor.id].append(s)
    sym_index = {s.name: i for i, s in enumerate(symbols)}
    rng = np.random.default_rng(seed)

    operators: list[Operator] = []
    part_counter: dict[Option, int] = {}
    for p in partitions:
        if p.option not in opt_index or p.classifier is None:
            continue
        j = part_counter.get(p.option, 0)
        part_counter[p.option] = j + 1
        mask_factors = [f for f in factors if set(p.mask) & set(f.variables)]
        k = 0
        for combo in _precondition_sets(p, factors, by_factor, cfg, rng):
            pre_by_factor = {s.factor.id: s for s in combo}
            outcomes = []
            for c in p.clusters:
                add = [c.effect_symbols[f.id].name for f in mask_factors]
                dele = [pre_by_factor[f.id].name for f in mask_factors
                        if pre_by_factor[f.id] is not c.effect_symbols[f.id]]
                outcomes.append(Outcome(c.probability, tuple(add), tuple(dele), round(c.cost, 6)))
            if all(not o.delete for o in outcomes):
                continue
            pre = tuple([NOTFAILED] + sorted((s.name for s in combo), key=sym_index.get))
            operators.append(Operator(f"option-{opt_index[p.option]}-partition-{j}-{k}", pre, tuple(outcomes)))
            k += 1
        if k == 0:
            log.debug("%s mask %s: no precondition conjunction accepted", p.option, p.mask)
    predicates = [NOTFAILED] + [s.name for s in symbols]
    return Domain(name, predicates, operators, {i: o for i, o in enumerate(opts)})


# --------------------------------------------------------------------------
# Whole pipeline
# --------------------------------------------------------------------------

def build_abstraction(data: Datasets, options: Iterable[Option], scale, init_state,
                      cfg: AbstractionConfig | None = None, seed: int = 0) -> AbstractModel:
    """Run all four steps from scratch on the full datasets."""
    cfg = cfg or AbstractionConfig()
    scale = np.asarray(scale, dtype=float)
    init_n = np.asarray(init_state, dtype=float) / scale
    n_vars = len(scale)
    opts = sorted_options(options)
    if not data.transitions:
        factors = compute_factors([], n_vars)
        symbols = generate_symbols([], factors, init_n, cfg)
        domain = Domain("TreasureGame", [NOTFAILED] + [s.name for s in symbols], [],
                        {i: o for i, o in enumerate(opts)})
        return AbstractModel(factors, symbols, [], domain, scale, [s.name for s in symbols])

    cands = partition_transitions(data.transitions, scale, cfg.dbscan_eps, cfg.dbscan_min_pts)
    partitions = merge_partitions(cands, cfg, seed)

    infeasible: dict[Option, list[np.ndarray]] = {}
    for t in data.initiation:
        if not t.feasible:
            infeasible.setdefault(t.o, []).append(t.s)
    by_option: dict[Option, list[Partition]] = {}
    for p in partitions:
        by_option.setdefault(p.option, []).append(p)
    factors = compute_factors((t.m for t in data.transitions), n_vars)
    for p in partitions:
        neg = np.array(infeasible.get(p.option, []), dtype=float).reshape(-1, n_vars) / scale
        learn_preconditions(p, neg, by_option[p.option], cfg, seed, factors)

    symbols = generate_symbols(partitions, factors, init_n, cfg)
    domain = synthesize_domain(symbols, partitions, factors, opts, cfg, seed)
    init_symbols = [symbols[i].name for i in range(len(factors))]
    log.info("abstraction: %d partitions, %d factors, %d symbols, %d operators",
             len(partitions), len(factors), len(symbols), len(domain.operators))
    return AbstractModel(factors, symbols, partitions, domain, scale, init_symbols)
