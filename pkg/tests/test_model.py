import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mapt.model import build_model, evaluate, lower_bound
from mapt.oracle import brute_min, energy_table, random_model


def labelings(model):
    return itertools.product(*(range(d) for d in model.domain_sizes))


def test_single_variable():
    m = build_model([2], [np.zeros(2)])
    assert len(m.factors) == 1
    assert m.hasse_edges == []


def test_three_cycle_counts(fc3):
    assert len(fc3.factors) == 6
    assert len(fc3.hasse_edges) == 6
    fc3.check_hasse()


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        build_model([2, 2], None, {(0, 1): [0.0, 1.0, 2.0]})
    with pytest.raises(ValueError):
        build_model([2, 3], [np.zeros(2), np.zeros(2)])


def test_self_loop_and_duplicate_edge():
    with pytest.raises(ValueError, match="self-loop"):
        build_model([2, 2], None, {(1, 1): np.zeros((2, 2))})
    with pytest.raises(ValueError, match="duplicate"):
        build_model([2, 2], None, {(0, 1): np.zeros((2, 2)), (1, 0): np.zeros((2, 2))})


def test_pair_given_in_reverse_orientation_is_transposed():
    t = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])   # rows: x_1, cols: x_0
    m = build_model([3, 2], None, {(1, 0): t})
    f = m.factors[m.find((0, 1))]
    assert f.scope == (0, 1)
    np.testing.assert_array_equal(f.costs, t.T)
    assert evaluate(m, [2, 1]) == 5.0


def test_flat_row_major_pair_table():
    m = build_model([2, 3], None, {(0, 1): [0, 1, 2, 3, 4, 5]})
    assert m.factors[m.find((0, 1))].costs[1, 2] == 5.0   # a*|X_v|+b = 1*3+2


def test_evaluate_examples(fc3):
    zero = build_model([2, 3], None, {(0, 1): np.zeros((2, 3))})
    assert all(evaluate(zero, x) == 0 for x in labelings(zero))
    assert evaluate(fc3, [0, 0, 0]) == 3
    assert evaluate(fc3, [0, 1, 0]) == 1


def test_evaluate_rejects_bad_labels(fc3):
    with pytest.raises(ValueError):
        evaluate(fc3, [0, 2, 0])
    with pytest.raises(ValueError):
        evaluate(fc3, [0, 1])


def test_add_triplet_on_cycle(fc3):
    before_f, before_j = len(fc3.factors), len(fc3.hasse_edges)
    tid = fc3.add_triplet((2, 0, 1))
    assert len(fc3.factors) == before_f + 1
    assert len(fc3.hasse_edges) == before_j + 3
    assert fc3.factors[tid].scope == (0, 1, 2)
    assert not fc3.factors[tid].costs.any()
    fc3.check_hasse()


def test_add_triplet_on_path_adds_missing_pair():
    m = build_model([2, 2, 2], None, {(0, 1): np.ones((2, 2)), (1, 2): np.ones((2, 2))})
    nf, nj = len(m.factors), len(m.hasse_edges)
    m.add_triplet({0, 1, 2})
    assert len(m.factors) == nf + 2
    assert len(m.hasse_edges) == nj + 5
    assert (0, 2) in m
    m.check_hasse()


def test_add_triplet_idempotent(fc3):
    a = fc3.add_triplet((0, 1, 2))
    state = (len(fc3.factors), list(fc3.hasse_edges))
    assert fc3.add_triplet((1, 2, 0)) == a
    assert state == (len(fc3.factors), list(fc3.hasse_edges))


def test_add_triplet_needs_distinct_vars(fc3):
    with pytest.raises(ValueError):
        fc3.add_triplet((0, 0, 1))


def test_lower_bound_examples(fc3):
    assert lower_bound(build_model([2, 2], None, {(0, 1): np.zeros((2, 2))})) == 0
    assert lower_bound(fc3) == 0
    assert brute_min(fc3).minimum == 1       # strictly above the bound


def test_copy_is_independent(fc3):
    c = fc3.copy()
    c.factors[0].costs[0] = 5
    c.add_triplet((0, 1, 2))
    assert fc3.factors[0].costs[0] == 0
    assert (0, 1, 2) not in fc3


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bound_below_every_energy(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    assert lower_bound(m) <= energy_table(m).min() + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_triplets_never_change_energy(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    before = energy_table(m)
    for _ in range(3):
        t = rng.choice(m.num_vars, 3, replace=False)
        m.add_triplet(t.tolist())
        m.check_hasse()
    np.testing.assert_array_equal(energy_table(m), before)
