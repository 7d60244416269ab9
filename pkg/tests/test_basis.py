from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superatom.basis import (
    BasisError,
    basis_dimension,
    enumerate_basis,
    pair_probabilities_with,
    shell_probabilities,
    single_probabilities,
)


@pytest.mark.parametrize("n_sa, m_max, dim", [(23, 7, 390_656), (3, 3, 8), (5, 1, 6), (20, 20, 1 << 20)])
def test_dimension(n_sa, m_max, dim):
    assert basis_dimension(n_sa, m_max) == dim
    assert basis_dimension(n_sa, m_max) == sum(comb(n_sa, m) for m in range(m_max + 1))


def test_full_scale_enumeration():
    b = enumerate_basis(23, 7)
    assert b.dim == 390_656
    assert np.all(np.diff(b.masks) > 0)
    assert b.cardinality().max() == 7


def test_masks_are_exactly_the_admissible_subsets():
    b = enumerate_basis(7, 3)
    expected = sorted(sum(1 << i for i in s) for m in range(4) for s in combinations(range(7), m))
    assert b.masks.tolist() == expected


@settings(max_examples=30, deadline=None)
@given(n_sa=st.integers(1, 12), data=st.data())
def test_rank_unrank_round_trip(n_sa, data):
    m_max = data.draw(st.integers(1, n_sa))
    b = enumerate_basis(n_sa, m_max)
    for ordinal in range(b.dim):
        subset = b.subset(ordinal)
        assert b.rank(subset) == ordinal
        assert b.unrank(ordinal) == subset


def test_neighbour_table_matches_rank(rng):
    b = enumerate_basis(9, 4)
    table = b.neighbours
    for s in rng.integers(0, b.dim, size=200):
        subset = set(b.subset(int(s)))
        for i in range(9):
            other = subset ^ {i}
            expected = b.rank(other) if len(other) <= 4 else -1
            assert table[s, i] == expected


def test_untruncated_basis_is_identity_map():
    b = enumerate_basis(6, 6)
    assert b.untruncated
    np.testing.assert_array_equal(b.masks, np.arange(64))
    assert b.rank((0, 2, 5)) == 0b100101


@pytest.mark.parametrize("args", [(0, 1), (63, 2), (5, 0), (5, 6)])
def test_invalid_basis_arguments(args):
    with pytest.raises(BasisError):
        enumerate_basis(*args)


def test_dimension_cap():
    with pytest.raises(BasisError, match="exceeds"):
        enumerate_basis(30, 10, max_dim=1000)


def test_invalid_subsets():
    b = enumerate_basis(5, 2)
    for bad in [(0, 1, 2), (1, 1), (7,), (-1,)]:
        with pytest.raises(BasisError):
            b.rank(bad)
    with pytest.raises(BasisError):
        b.unrank(b.dim)


def test_probability_reductions(rng):
    b = enumerate_basis(6, 3)
    prob = rng.random(b.dim)
    prob /= prob.sum()
    subsets = [b.subset(s) for s in range(b.dim)]
    shells = shell_probabilities(b.masks, prob, 3)
    for m in range(4):
        assert shells[m] == pytest.approx(sum(p for p, s in zip(prob, subsets) if len(s) == m))
    singles = single_probabilities(b.masks, prob, 6)
    pairs = pair_probabilities_with(b.masks, prob, 6, 2)
    for i in range(6):
        assert singles[i] == pytest.approx(sum(p for p, s in zip(prob, subsets) if i in s))
        if i != 2:
            assert pairs[i] == pytest.approx(sum(p for p, s in zip(prob, subsets) if i in s and 2 in s))
    assert pairs[2] == 0.0
    # marginal identity: sum_{j != i} P(i, j) = sum_S p_S [i in S] (|S| - 1)
    lhs = pairs.sum()
    rhs = sum(p * (len(s) - 1) for p, s in zip(prob, subsets) if 2 in s)
    assert lhs == pytest.approx(rhs, rel=1e-12)
