import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polysparse.basis import (MonomialIndex, ancestors, dependents, enumerate_basis,
                              feature_map, n_monomials)
from polysparse.errors import CapacityError

S2 = math.sqrt(2)


def brute_force_exponents(p, r):
    return [e for e in itertools.product(range(r + 1), repeat=p) if sum(e) <= r]


class TestEnumerate:
    @pytest.mark.parametrize("p, r, f", [(3, 2, 10), (1, 1, 2), (5, 3, 56), (25, 3, 3276)])
    def test_count(self, p, r, f):
        assert enumerate_basis(p, r).f == f == n_monomials(p, r)

    @pytest.mark.parametrize("p, r", [(1, 1), (2, 3), (4, 2), (5, 3)])
    def test_count_matches_brute_force(self, p, r):
        cat = enumerate_basis(p, r)
        expected = sorted(brute_force_exponents(p, r))
        assert sorted(map(tuple, cat.exponents.tolist())) == expected

    def test_graded_lex_order(self):
        cat = enumerate_basis(3, 2)
        assert cat.labels() == ["1", "x1", "x2", "x3", "x1^2", "x1*x2",
                                "x1*x3", "x2^2", "x2*x3", "x3^2"]

    @pytest.mark.parametrize("p, r", [(3, 2), (4, 3), (6, 2)])
    def test_degree_counts(self, p, r):
        cat = enumerate_basis(p, r)
        for d in range(r + 1):
            assert np.sum(cat.degrees == d) == math.comb(p + d - 1, d)

    def test_unique_and_bounded(self):
        cat = enumerate_basis(4, 3)
        assert len({tuple(e) for e in cat.exponents.tolist()}) == cat.f
        assert cat.degrees.max() == 3

    def test_deterministic(self):
        a, b = enumerate_basis(4, 3), enumerate_basis(4, 3)
        np.testing.assert_array_equal(a.exponents, b.exponents)
        np.testing.assert_array_equal(a.scaling, b.scaling)

    def test_immutable(self):
        cat = enumerate_basis(3, 2)
        with pytest.raises(ValueError):
            cat.exponents[0, 0] = 5

    @pytest.mark.parametrize("p, r", [(0, 2), (3, 0), (-1, 1)])
    def test_invalid(self, p, r):
        with pytest.raises(ValueError):
            enumerate_basis(p, r)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            enumerate_basis(2000, 4)


class TestHierarchy:
    def test_dependents_of_first_input(self):
        # 0-based positions of sqrt2*x1, x1^2, sqrt2*x1x2, sqrt2*x1x3
        np.testing.assert_array_equal(dependents(enumerate_basis(3, 2), 0), [1, 4, 5, 6])

    def test_dependents_p2(self):
        cat = enumerate_basis(2, 2)
        labels = [cat.labels()[j] for j in dependents(cat, 1)]
        assert labels == ["x2", "x1*x2", "x2^2"]

    def test_constant_never_dependent(self):
        cat = enumerate_basis(4, 3)
        for i in range(cat.p):
            assert 0 not in cat.dependents(i)

    def test_ancestors(self):
        cat = enumerate_basis(3, 2)
        assert ancestors(cat, 6) == (0, 2)           # x1*x3
        assert ancestors(cat, 4) == (0, 0)           # x1^2
        assert ancestors(cat, 0) == ()

    @pytest.mark.parametrize("p, r", [(3, 2), (4, 3)])
    def test_dependents_ancestors_duality(self, p, r):
        cat = enumerate_basis(p, r)
        for i in range(p):
            for j in range(cat.f):
                assert (j in set(cat.dependents(i).tolist())) == (i in cat.ancestor_set(j))

    @pytest.mark.parametrize("bad", [-1, 3])
    def test_dependents_out_of_range(self, bad):
        with pytest.raises(ValueError):
            enumerate_basis(3, 2).dependents(bad)

    @pytest.mark.parametrize("bad", [-1, 10])
    def test_ancestors_out_of_range(self, bad):
        with pytest.raises(ValueError):
            enumerate_basis(3, 2).ancestors(bad)

    def test_index_of_roundtrip(self):
        cat = enumerate_basis(3, 3)
        for j in range(cat.f):
            assert cat.index_of(cat.exponents[j]) == j
        with pytest.raises(KeyError):
            cat.index_of([4, 0, 0])


class TestScaling:
    def test_scaling_p3_r2(self):
        cat = enumerate_basis(3, 2)
        expected = [1, S2, S2, S2, 1, S2, S2, 1, S2, 1]
        np.testing.assert_allclose(cat.scaling, expected)

    def test_multiplicity_counts_orderings(self):
        # orderings of the ancestor multiset padded with constants to length r
        for r in (1, 2, 3, 4):
            cat = enumerate_basis(3, r)
            for j in range(cat.f):
                word = list(cat.ancestors(j)) + [None] * (r - cat.degrees[j])
                count = len(set(itertools.permutations(word)))
                assert cat.monomial(j).multiplicity(r) == count

    def test_label(self):
        assert MonomialIndex((2, 0, 1)).label() == "x1^2*x3"
        assert MonomialIndex((0, 0)).label(["a", "b"]) == "1"


class TestFeatureMap:
    def test_ones_row_gives_scaling(self):
        cat = enumerate_basis(3, 2)
        np.testing.assert_allclose(feature_map(cat, np.ones((1, 3)))[0], cat.scaling)

    def test_zero_rows(self):
        Phi = enumerate_basis(3, 3).feature_map(np.zeros((4, 3)))
        np.testing.assert_array_equal(Phi[:, 0], 1.0)
        np.testing.assert_array_equal(Phi[:, 1:], 0.0)

    def test_hand_example(self):
        Phi = enumerate_basis(2, 2).feature_map([[2.0, 3.0]])
        np.testing.assert_allclose(Phi[0], [1, 2 * S2, 3 * S2, 4, 6 * S2, 9])

    def test_matches_direct_product(self, rng):
        cat = enumerate_basis(3, 3)
        X = rng.standard_normal((5, 3))
        direct = np.prod(X[:, None, :] ** cat.exponents[None], axis=2) * cat.scaling
        np.testing.assert_allclose(cat.feature_map(X), direct, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            enumerate_basis(3, 2).feature_map(np.ones((2, 4)))

    @given(n=st.integers(1, 6), p=st.integers(1, 4), r=st.integers(1, 3),
           seed=st.integers(0, 2**31))
    def test_kernel_identity(self, n, p, r, seed):
        X = np.random.default_rng(seed).uniform(-2, 2, (n, p))
        Phi = enumerate_basis(p, r).feature_map(X)
        np.testing.assert_allclose(Phi @ Phi.T, (X @ X.T + 1) ** r, atol=1e-10, rtol=0)

    @given(p=st.integers(1, 4), r=st.integers(1, 3), seed=st.integers(0, 2**31))
    def test_dependents_partition_kernel(self, p, r, seed):
        X = np.random.default_rng(seed).uniform(-1, 1, (3, p))
        cat = enumerate_basis(p, r)
        Phi = cat.feature_map(X)
        for i in range(p):
            inside = np.zeros(cat.f, dtype=bool)
            inside[cat.dependents(i)] = True
            total = Phi[:, inside] @ Phi[:, inside].T + Phi[:, ~inside] @ Phi[:, ~inside].T
            np.testing.assert_allclose(total, (X @ X.T + 1) ** r, atol=1e-10)
