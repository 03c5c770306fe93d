import numpy as np
import pytest
from hypothesis import given, strategies as st

from polysparse.basis import enumerate_basis
from polysparse.data import gen_synthetic
from polysparse.kernel import grad_c_column, loss_c, polynomial_kernel
from polysparse.ranking import (InputRanking, default_gamma, default_p_prime,
                                energy_gamma, minimal_covering_size, rank_inputs,
                                select_gamma, select_top)


def primal_scores(X, Y, r, gamma):
    """Sum of squared explicit ridge coefficients over each input's dependents."""
    cat = enumerate_basis(X.shape[1], r)
    Phi = cat.feature_map(X)
    A = Phi.T @ Phi + np.eye(cat.f) / gamma
    w = np.linalg.solve(A, Phi.T @ Y)
    return np.array([np.sum(w[cat.dependents(i)] ** 2) for i in range(cat.p)])


class TestScores:
    def test_zero_response(self, rng):
        ranking = rank_inputs(rng.standard_normal((10, 4)), np.zeros(10), 2, gamma=1.0)
        np.testing.assert_array_equal(ranking.scores, 0.0)
        np.testing.assert_array_equal(ranking.order, [0, 1, 2, 3])

    def test_duplicated_inputs(self, rng):
        X = rng.standard_normal((15, 4))
        X[:, 3] = X[:, 1]
        scores = rank_inputs(X, rng.standard_normal(15), 2, gamma=0.5).scores
        assert scores[3] == pytest.approx(scores[1], rel=1e-10)

    def test_square_term_wins(self, rng):
        X = rng.standard_normal((50, 5))
        ranking = rank_inputs(X, X[:, 0] ** 2, 2, gamma=1.0)
        assert ranking.order[0] == 0
        np.testing.assert_allclose(ranking.scores, primal_scores(X, X[:, 0] ** 2, 2, 1.0),
                                   rtol=1e-8)

    @given(n=st.integers(2, 30), p=st.integers(1, 4), r=st.integers(1, 3),
           gamma=st.floats(1e-2, 10.0), seed=st.integers(0, 2**31))
    def test_coefficient_norm_identity(self, n, p, r, gamma, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.uniform(-1, 1, (n, p)), rng.standard_normal(n)
        got = rank_inputs(X, Y, r, gamma=gamma).scores
        np.testing.assert_allclose(got, primal_scores(X, Y, r, gamma), rtol=1e-8, atol=1e-10)

    @given(seed=st.integers(0, 2**31), gamma=st.floats(1e-2, 5.0))
    def test_gradient_relation(self, seed, gamma):
        rng = np.random.default_rng(seed)
        X, Y = rng.uniform(-1, 1, (12, 3)), rng.standard_normal(12)
        cat = enumerate_basis(3, 2)
        Phi = cat.feature_map(X)
        _, dual = loss_c(Y, gamma, Phi @ Phi.T)
        scores = rank_inputs(X, Y, 2, gamma=gamma).scores
        for i in range(3):
            g = sum(grad_c_column(dual, Phi[:, j]) for j in cat.dependents(i))
            assert scores[i] == pytest.approx(-2 * gamma * g, rel=1e-8, abs=1e-12)

    @given(seed=st.integers(0, 2**31))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((20, 5)), rng.standard_normal(20)
        perm = rng.permutation(5)
        a = rank_inputs(X, Y, 2, gamma=0.3).scores
        b = rank_inputs(X[:, perm], Y, 2, gamma=0.3).scores
        np.testing.assert_allclose(b, a[perm], rtol=1e-9, atol=1e-14)

    def test_workers_match_serial(self, rng):
        X, Y = rng.standard_normal((30, 6)), rng.standard_normal(30)
        a = rank_inputs(X, Y, 3, workers=1)
        b = rank_inputs(X, Y, 3, workers=3)
        np.testing.assert_array_equal(a.scores, b.scores)
        np.testing.assert_array_equal(a.order, b.order)

    def test_non_negative_and_permutation(self, rng):
        ranking = rank_inputs(rng.standard_normal((25, 7)), rng.standard_normal(25), 2)
        assert np.all(ranking.scores >= 0)
        assert sorted(ranking.order.tolist()) == list(range(7))
        assert np.all(np.diff(ranking.scores[ranking.order]) <= 0)

    @pytest.mark.parametrize("gamma", [0.0, -1.0])
    def test_bad_gamma(self, gamma, rng):
        with pytest.raises(ValueError):
            rank_inputs(rng.standard_normal((5, 2)), rng.standard_normal(5), 2, gamma=gamma)

    def test_bad_shapes(self, rng):
        with pytest.raises(ValueError):
            rank_inputs(rng.standard_normal((5, 2)), rng.standard_normal(4), 2)


class TestSelection:
    def make(self, scores):
        scores = np.asarray(scores, dtype=float)
        order = np.lexsort((np.arange(scores.size), -scores))
        return InputRanking(scores, order, 1.0, 2)

    def test_all(self):
        np.testing.assert_array_equal(select_top(self.make([1, 5, 3]), 3), [0, 1, 2])

    def test_top_two(self):
        # scores (3, 1, 2) keep inputs 1 and 3 in 1-based terms
        np.testing.assert_array_equal(select_top(self.make([3, 1, 2]), 2), [0, 2])

    def test_ties_by_index(self):
        ranking = self.make([2, 2, 1, 2])
        np.testing.assert_array_equal(ranking.order, [0, 1, 3, 2])
        assert ranking.rank_of(3) == 2

    @pytest.mark.parametrize("bad", [0, 4])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            select_top(self.make([1, 2, 3]), bad)

    def test_covering_size(self):
        ranking = self.make([5, 1, 4, 3])
        assert minimal_covering_size(ranking, [0, 2]) == 2
        assert minimal_covering_size(ranking, [1]) == 4
        assert minimal_covering_size(ranking, []) == 0

    def test_relevant_inputs_in_top_six(self):
        hits = 0
        for seed in range(20):
            inst = gen_synthetic(p=10, k=3, ell=5, r=2, n=200, snr=400, seed=seed)
            chosen = set(select_top(rank_inputs(inst.X, inst.Y, 2), 6).tolist())
            hits += set(inst.active_inputs.tolist()) <= chosen
        assert hits >= 18


class TestGammaRules:
    def test_default_gamma(self):
        Y = np.array([1.0, 3.0])
        assert default_gamma(Y) == pytest.approx(1 / (2 * 1.0))
        assert default_gamma(np.ones(4)) == 0.25

    def test_energy_gamma_is_inverse_mean_feature_energy(self, rng):
        X = rng.standard_normal((9, 3))
        Phi = enumerate_basis(3, 2).feature_map(X)
        assert energy_gamma(X, 2) == pytest.approx(1 / np.mean(np.sum(Phi ** 2, axis=0)))

    @pytest.mark.parametrize("p, k, expected", [(100, 5, 20), (100, 15, 30), (8, 5, 8)])
    def test_default_p_prime(self, p, k, expected):
        assert default_p_prime(p, k) == expected

    def test_select_gamma_picks_validation_minimum(self, rng):
        X = rng.standard_normal((40, 3))
        Y = X[:, 0] * X[:, 1] + 0.05 * rng.standard_normal(40)
        grid = np.logspace(-3, 2, 6)
        gamma, errors = select_gamma(X[:30], Y[:30], X[30:], Y[30:], 2, grid)
        assert len(errors) == 6 and gamma == grid[int(np.argmin(errors))]
        # independent check of one grid point
        K, Kv = polynomial_kernel(X[:30], 2), polynomial_kernel(X[30:], 2, X[:30])
        alpha = np.linalg.solve(np.eye(30) + grid[2] * K, Y[:30])
        assert errors[2] == pytest.approx(np.sum((Y[30:] - grid[2] * Kv @ alpha) ** 2))
