"""Shared fixtures and helpers for the test suite."""
import numpy as np


# Reference domain extract with the elided predicates filled in.
REFERENCE_DOMAIN = """(define (domain TreasureGame)
    (:requirements :strips :probabilistic-effects :rewards)

    (:predicates
        (notfailed)
{preds}
    )

    (:action option-0-partition-0-0
        :parameters ()
        :precondition (and (notfailed) (symbol_5) (symbol_22)
                      (symbol_14))
        :effect (and (symbol_6) (not (symbol_5)) (decrease
                (reward) 36.00))
    )

     (:action option-10-partition-3-715
        :parameters ()
        :precondition (and (notfailed) (symbol_20) (symbol_22)
                      (symbol_14) (symbol_15) (symbol_0))
        :effect (and (symbol_13) (not (symbol_20)) (decrease
                (reward) 90.00))
    )
)
""".format(preds="\n".join(f"        (symbol_{i})" for i in range(26)))

# one floor, ladder from the start cell down to it, nothing else nearby
CORRIDOR = """#########
####@####
#t..=...#
######g##
links:
"""


def random_walk(env, n_steps, seed=0):
    """Uniform random available primitive per step; yields (s, p, result)."""
    rng = np.random.default_rng(seed)
    for _ in range(n_steps):
        avail = sorted(env.available_primitives())
        s = env.state.copy()
        p = avail[int(rng.integers(len(avail)))]
        yield s, p, env.step(p)
        if rng.random() < 0.002:
            env.reset()


def place(env, x, y):
    s = env.state.copy()
    s[0], s[1] = x, y
    env.set_state(s)



def walkthroughs():
    """Hand-scripted option-level solutions per built-in map (Table 2 order)."""
    from dpa.env import Primitive as P
    from dpa.options import Option as O
    U, D, L, R, I = P.GO_UP, P.GO_DOWN, P.GO_LEFT, P.GO_RIGHT, P.INTERACT
    raw = {
        "domain1": [(D, None), (L, I), (I, None), (R, D), (D, None), (L, I), (I, None), (R, U), (U, None),
                    (L, U), (U, None)],
        "domain2": [(D, None), (L, I), (I, None), (R, D), (D, None), (L, I), (I, None), (L, I), (I, None),
                    (R, U), (U, None), (L, U), (U, None)],
        "domain3": [(D, None), (L, I), (I, None), (R, D), (D, None), (L, I), (I, None), (L, D), (D, None),
                    (R, I), (I, None), (R, I), (I, None), (L, U), (U, None), (R, U), (U, None), (L, U),
                    (U, None)],
        "domain4": [(D, None), (L, I), (I, None), (R, D), (D, None), (R, D), (D, None), (L, I), (I, None),
                    (R, U), (U, None), (L, U), (U, None), (L, U), (U, None)],
        "domain5": [(D, None), (L, I), (I, None), (R, D), (D, None), (L, I), (I, None), (L, D), (D, None),
                    (R, I), (I, None), (R, D), (D, None), (L, I), (I, None), (L, I), (I, None), (L, I),
                    (I, None), (L, U), (U, None), (R, U), (U, None), (R, U), (U, None), (L, U), (U, None)],
    }
    return {k: [O(p, t) for p, t in v] for k, v in raw.items()}


EXPECTED_OPTIONS = ("(go_up,{})", "(go_down,{})", "(go_left,{})", "(go_left,go_up)", "(go_left,go_down)",
                 "(go_left,interact)", "(go_right,{})", "(go_right,go_up)", "(go_right,go_down)",
                 "(go_right,interact)", "(interact,{})")


def canonical(labels):
    """Relabel clusters by first appearance; noise stays -1."""
    remap = {}
    out = []
    for lab in labels:
        if lab < 0:
            out.append(-1)
        else:
            out.append(remap.setdefault(lab, len(remap)))
    return out


def dbscan_oracle(X, eps, min_pts):
    """All-pairs DBSCAN: reachability by boolean matrix closure."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    near = D <= eps
    core = near.sum(1) >= min_pts
    R = (near & core[:, None] & core[None, :]) | np.eye(n, dtype=bool)
    while True:
        nxt = (R.astype(int) @ R.astype(int)) > 0
        if (nxt == R).all():
            break
        R = nxt
    labels = [-1] * n
    comp = {}
    for i in range(n):
        if core[i]:
            key = tuple(np.flatnonzero(R[i] & core))
            labels[i] = comp.setdefault(key, len(comp))
    for i in range(n):
        if not core[i]:
            cands = [(D[i, j], j) for j in range(n) if core[j] and near[i, j]]
            if cands:
                labels[i] = labels[min(cands)[1]]
    return canonical(labels)


def factors_oracle(masks, n_vars):
    """Variables share a factor iff every mask contains both or neither."""
    masks = [set(m) for m in masks if m]
    touched = sorted({v for m in masks for v in m})
    groups = {}
    for v in touched:
        groups.setdefault(tuple(v in m for m in masks), []).append(v)
    blocks = list(groups.values()) + [[v] for v in range(n_vars) if v not in touched]
    return sorted(tuple(sorted(b)) for b in blocks)


def guided_data(name="domain3", seed=0, steps=60):
    """Exploration after every prefix of the scripted walkthrough, as ω^EX would do."""
    from dpa.env import TreasureGame, builtin_map
    from dpa.explorer import Datasets, collect_data
    from dpa.options import Option
    plan = walkthroughs()[name]
    env = TreasureGame(builtin_map(name), seed=seed)
    rng = np.random.default_rng(seed)
    options = sorted({*plan, *[Option.parse(t) for t in EXPECTED_OPTIONS]})
    data = Datasets()
    for k in range(0, len(plan) + 1, 2):
        data.extend(collect_data(env, 1, steps, options, plan[:k], rng))
    return env, options, data


def random_strips(seed, n_pred=12, n_ops=20):
    """Random deterministic propositional domain and problem (all costs > 0)."""
    from dpa.ppddl import Domain, Operator, Outcome, Problem
    rng = np.random.default_rng(seed)
    preds = [f"symbol_{i}" for i in range(rng.integers(4, n_pred + 1))]
    ops = []
    for k in range(rng.integers(3, n_ops + 1)):
        pick = lambda lo, hi: tuple(sorted(rng.choice(preds, size=rng.integers(lo, hi + 1), replace=False)))
        pre, add = pick(0, 3), pick(1, 2)
        dele = tuple(p for p in pick(0, 2) if p not in add)
        ops.append(Operator(f"op-{k}", pre, (Outcome(1.0, add, dele, float(rng.integers(1, 10))),)))
    init = tuple(sorted(rng.choice(preds, size=rng.integers(1, 4), replace=False)))
    goal = tuple(sorted(rng.choice(preds, size=rng.integers(1, 3), replace=False)))
    return Domain("rand", preds, ops), Problem("p", "rand", init, goal)


def optimal_cost_oracle(domain, problem):
    """Bellman-Ford over explicit states: (min cost, fewest steps at that cost) or None."""
    start = frozenset(problem.init)
    best = {start: (0.0, 0)}
    changed = True
    while changed:
        changed = False
        for s, (c, n) in list(best.items()):
            for op in domain.operators:
                if set(op.precondition) <= s:
                    o = op.outcomes[0]
                    t = (s - set(o.delete)) | set(o.add)
                    cand = (c + o.cost, n + 1)
                    if t not in best or cand < best[t]:
                        best[t] = cand
                        changed = True
    goals = [v for s, v in best.items() if set(problem.goal) <= s]
    return min(goals) if goals else None
