import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpa.abstraction import (AbstractionConfig, EffectCluster, Factor, Partition, build_abstraction,
                             compute_factors, generate_symbols, learn_preconditions, merge_partitions,
                             partition_transitions)
from dpa.env import Primitive
from dpa.explorer import TransitionTuple
from dpa.options import Option
from dpa.ppddl import emit_domain

from helpers import factors_oracle, guided_data

P = Primitive
DOWN = Option(P.GO_DOWN, None)
PULL = Option(P.INTERACT, None)


def td(rows, o, mask):
    return [TransitionTuple(np.array(s, float), o, -5.0, np.array(e, float), False, mask, frozenset())
            for s, e in rows]


@pytest.fixture(scope="module")
def d3():
    env, options, data = guided_data("domain3")
    model = build_abstraction(data, options, env.maze.scale(), env.initial_state(), seed=0)
    return env, options, data, model


# ---------------------------------------------------------------- factors

def test_factor_examples():
    assert [f.variables for f in compute_factors([(0,), (1,), (0, 1)], 2)] == [(0,), (1,)]
    assert [f.variables for f in compute_factors([(3,), (3,)], 5)] == [(0,), (1,), (2,), (3,), (4,)]
    assert [f.variables for f in compute_factors([(1, 2), (1, 2, 3)], 4)] == [(0,), (1, 2), (3,)]


@pytest.mark.parametrize("seed", range(100))
def test_factors_match_oracle(seed):
    rng = np.random.default_rng(seed)
    masks = [tuple(sorted(rng.choice(10, size=rng.integers(1, 6), replace=False)))
             for _ in range(rng.integers(1, 8))]
    got = sorted(f.variables for f in compute_factors(masks, 10))
    assert got == factors_oracle(masks, 10)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sets(st.integers(0, 9), min_size=1), max_size=10))
def test_every_mask_is_a_union_of_factors(masks):
    factors = compute_factors([tuple(sorted(m)) for m in masks], 10)
    assert sorted(v for f in factors for v in f.variables) == list(range(10))
    for m in masks:
        covered = {v for f in factors if set(f.variables) & m for v in f.variables}
        assert covered == m


def test_domain3_x_and_y_in_separate_factors(d3):
    _, _, data, model = d3
    fx = [f for f in model.factors if 0 in f.variables][0]
    assert 1 not in fx.variables
    for t in data.transitions:
        covered = {v for f in model.factors if set(f.variables) & set(t.m) for v in f.variables}
        assert covered == set(t.m)


# ---------------------------------------------------------------- partitions

def test_one_option_two_ladders_gives_two_partitions():
    rows = [([0.2, 0.1], [0.2, 0.5])] * 5 + [([0.7, 0.1], [0.7, 0.8])] * 5
    parts = partition_transitions(td(rows, DOWN, (1,)), np.ones(2))
    assert len(parts) == 2
    assert {round(p.clusters[0].ends[0, 1], 2) for p in parts} == {0.5, 0.8}


def test_single_observation_is_a_catch_all_partition():
    parts = partition_transitions(td([([0.2, 0.1], [0.2, 0.5])], DOWN, (1,)), np.ones(2), min_pts=3)
    assert len(parts) == 1 and parts[0].size == 1


def test_lever_toggle_directions_split():
    rows = [([0.1, 0.1, 0.0], [0.1, 0.1, 1.0])] * 4 + [([0.1, 0.1, 1.0], [0.1, 0.1, 0.0])] * 4
    parts = partition_transitions(td(rows, PULL, (2,)), np.ones(3))
    assert len(parts) == 2


def test_empty_td_rejected():
    with pytest.raises(ValueError):
        partition_transitions([], np.ones(2))


def test_identical_starts_merge_with_frequencies():
    rng = np.random.default_rng(0)
    starts = rng.uniform(0.1, 0.2, size=(10, 3))
    starts[:, 2] = 0.0
    rows = [(s, [s[0], s[1], 1.0]) for s in starts[rng.integers(10, size=30)]]
    rows += [(s, [s[0], s[1], 0.5]) for s in starts[rng.integers(10, size=10)]]
    merged = merge_partitions(partition_transitions(td(rows, PULL, (2,)), np.ones(3)))
    assert len(merged) == 1
    assert sorted(c.probability for c in merged[0].clusters) == [0.25, 0.75]
    assert sum(c.probability for c in merged[0].clusters) == pytest.approx(1.0, abs=1e-9)


def test_disjoint_starts_stay_apart():
    rows = [([0.1, 0.1], [0.1, 0.5])] * 5 + [([0.9, 0.1], [0.9, 0.8])] * 5
    merged = merge_partitions(partition_transitions(td(rows, DOWN, (1,)), np.ones(2)))
    assert len(merged) == 2 and all(len(p.clusters) == 1 for p in merged)


# ---------------------------------------------------------------- preconditions

def test_no_negatives_gives_flagged_constant():
    p = Partition(DOWN, (1,), [EffectCluster(np.array([[0.2, 0.1]]), np.array([[0.2, 0.5]]), np.ones(1))])
    clf = learn_preconditions(p, np.zeros((0, 2)), [p])
    assert clf.degenerate and clf.classify([0.9, 0.9]) == 1.0


def test_go_down_precondition_rejects_off_ladder_states(d3):
    env, _, data, model = d3
    scale = env.maze.scale()
    parts = [p for p in model.partitions if p.option == DOWN and not p.classifier.degenerate]
    off = np.array([t.s for t in data.initiation if t.o == DOWN and not t.feasible]) / scale
    on = np.max([p.classifier.probability(off) for p in parts], axis=0)
    assert np.mean(on < 0.5) >= 0.95


def test_heldout_positives_accepted(d3):
    env, _, data, model = d3
    part = max(model.partitions, key=lambda p: len(np.unique(p.starts, axis=0)))
    pos = np.unique(part.starts, axis=0)
    rng = np.random.default_rng(0)
    idx = rng.permutation(len(pos))
    test, train = pos[idx[: len(pos) // 5]], pos[idx[len(pos) // 5:]]
    clone = Partition(part.option, part.mask, [EffectCluster(train, train, np.ones(len(train)))])
    clf = learn_preconditions(clone, part.negatives, [clone], factors=model.factors)
    assert np.mean(clf.probability(test) > 0.5) >= 0.9


# ---------------------------------------------------------------- symbols and operators

def test_shared_effect_region_gives_one_symbol():
    rng = np.random.default_rng(1)
    factors = compute_factors([(0,), (1,)], 2)
    ends = np.c_[rng.uniform(0.50, 0.52, 20), np.full(20, 0.3)]
    a = Partition(Option(P.GO_LEFT, None), (0,), [EffectCluster(ends, ends, np.ones(20))])
    ends2 = np.c_[rng.uniform(0.50, 0.52, 20), np.full(20, 0.3)]
    b = Partition(Option(P.GO_RIGHT, P.GO_DOWN), (0,), [EffectCluster(ends2, ends2, np.ones(20))])
    symbols = generate_symbols([a, b], factors)
    assert len(symbols) == 1
    assert a.clusters[0].effect_symbols[0] is b.clusters[0].effect_symbols[0]


def test_bolt_factor_has_locked_and_open_symbols(d3):
    env, _, _, model = d3
    bolt = env.index["bolt"]
    f = [f for f in model.factors if bolt in f.variables][0]
    means = sorted(round(float(s.density.mean()[list(f.variables).index(bolt)])) for s in model.symbols_of(f))
    assert means == [0, 1]


def test_init_state_grounds_on_first_symbols(d3):
    env, _, _, model = d3
    names = model.ground(env.initial_state())
    assert sorted(names.values(), key=lambda n: int(n.split("_")[1])) == model.init_symbols
    assert model.init_symbols == [f"symbol_{i}" for i in range(len(model.factors))]


def test_domain_well_formed(d3):
    _, _, _, model = d3
    declared = set(model.domain.predicates)
    assert model.domain.operators
    for op in model.domain.operators:
        assert op.precondition[0] == "notfailed"
        assert sum(o.probability for o in op.outcomes) == pytest.approx(1.0, abs=1e-9)
        for o in op.outcomes:
            assert o.cost > 0
            assert set(o.add) | set(o.delete) <= declared
            assert "notfailed" not in o.delete
        assert set(op.precondition) <= declared


def test_deterministic_partition_single_outcome(d3):
    _, _, _, model = d3
    text = emit_domain(model.domain)
    single = [op for op in model.domain.operators if len(op.outcomes) == 1]
    assert single and all(op.outcomes[0].probability == 1.0 for op in single)
    assert f"(:action {single[0].name}" in text


def test_rebuild_is_byte_identical(d3):
    env, options, data, model = d3
    again = build_abstraction(data, options, env.maze.scale(), env.initial_state(), seed=0)
    assert emit_domain(again.domain) == emit_domain(model.domain)


def test_empty_data_model_has_only_init_symbols():
    from dpa.explorer import Datasets
    from dpa.env import load_map
    env = load_map("domain1")
    model = build_abstraction(Datasets(), [DOWN], env.maze.scale(), env.initial_state())
    assert not model.domain.operators and len(model.symbols) == len(model.factors)


def test_variable_selection_keeps_x_at_a_ladder_edge():
    # go_up feasible on one floor only near x=0.85; infeasible tries a few px
    # away make every positive "collide", yet x is still what separates them
    from dpa.abstraction import _select_variables
    rng = np.random.default_rng(0)
    factors = [Factor(0, (0,)), Factor(1, (1,)), Factor(2, (2,))]
    pos = np.column_stack([rng.uniform(0.84, 0.86, 40), np.full(40, 0.4), rng.integers(0, 2, 40)])
    edge = np.column_stack([rng.uniform(0.82, 0.835, 40), np.full(40, 0.4), rng.integers(0, 2, 40)])
    far = np.column_stack([rng.uniform(0.0, 0.8, 200), np.full(200, 0.4), rng.integers(0, 2, 200)])
    cols = _select_variables(pos, np.vstack([edge, far]), (1,), factors, AbstractionConfig())
    assert cols == (0, 1)
