import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weightedmc.measures import (
    DimensionError,
    WeightPair,
    ZeroMatrixError,
    constraint_membership,
    from_gamma,
    lq_membership,
    measures,
    numerical_rank,
    spikiness,
    to_gamma,
)

SKEW = WeightPair([1.5, 0.5], [1.0, 1.0])


def random_weights(rng, d_r, d_c):
    return WeightPair.from_unnormalized(rng.uniform(0.2, 3.0, d_r), rng.uniform(0.2, 3.0, d_c))


class TestWeightPair:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            WeightPair([2.0, 0.0], [1.0])

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            WeightPair([1.0, 2.0], [1.0])

    def test_L_bound(self):
        assert SKEW.L_bound == pytest.approx(2.0)
        assert WeightPair.uniform(3).L_bound == 1.0

    def test_from_unnormalized(self):
        w = WeightPair.from_unnormalized([1, 3], [2, 2, 2])
        np.testing.assert_allclose(w.row_weights, [0.5, 1.5])
        np.testing.assert_allclose(w.col_weights, [1, 1, 1])


class TestGammaMap:
    def test_identity_under_uniform_weights(self):
        np.testing.assert_array_equal(to_gamma(np.eye(2), WeightPair.uniform(2)), np.eye(2))
        m = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(from_gamma(m, WeightPair.uniform(2, 3)), m)

    def test_skewed_rows(self):
        np.testing.assert_allclose(to_gamma(np.eye(2), SKEW), np.diag([math.sqrt(1.5), math.sqrt(0.5)]))
        np.testing.assert_allclose(from_gamma(np.diag([math.sqrt(1.5), math.sqrt(0.5)]), SKEW), np.eye(2))

    def test_zero(self):
        np.testing.assert_array_equal(from_gamma(np.zeros((2, 2)), SKEW), np.zeros((2, 2)))

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        w = random_weights(rng, 5, 4)
        theta = rng.standard_normal((5, 4))
        np.testing.assert_allclose(from_gamma(to_gamma(theta, w), w), theta, atol=1e-12, rtol=0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            to_gamma(np.eye(3), SKEW)
        with pytest.raises(DimensionError):
            from_gamma(np.eye(3), SKEW)


class TestMeasures:
    def test_flat_matrix_has_unit_spikiness(self):
        assert measures(np.ones((2, 2)), WeightPair.uniform(2)).spikiness == pytest.approx(1.0)

    def test_single_entry_is_maximally_spiky(self):
        e11 = np.zeros((3, 3))
        e11[0, 0] = 1.0
        assert spikiness(e11, WeightPair.uniform(3)) == pytest.approx(3.0)

    def test_hand_computed_weighted_identity(self):
        rep = measures(np.eye(2), SKEW)
        assert rep.weighted_frobenius == pytest.approx(math.sqrt(2))
        assert rep.weighted_nuclear == pytest.approx(1.9318516525781366)
        assert rep.weighted_linf == pytest.approx(math.sqrt(1.5))
        assert rep.spikiness == pytest.approx(math.sqrt(3))

    def test_rank_one_has_unit_rank_measure(self):
        rng = np.random.default_rng(3)
        w = random_weights(rng, 6, 4)
        theta = np.outer(rng.standard_normal(6), rng.standard_normal(4))
        assert measures(theta, w).rank_measure == pytest.approx(1.0, abs=1e-12)

    def test_zero_matrix_ratios_undefined(self):
        rep = measures(np.zeros((3, 2)), WeightPair.uniform(3, 2))
        assert rep.weighted_frobenius == 0.0 and rep.weighted_nuclear == 0.0
        assert rep.spikiness is None and rep.rank_measure is None
        with pytest.raises(ZeroMatrixError):
            spikiness(np.zeros((3, 2)), WeightPair.uniform(3, 2))

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        d_r=st.integers(1, 7),
        d_c=st.integers(1, 7),
        c=st.floats(1e-3, 1e3).flatmap(lambda x: st.sampled_from([x, -x])),
    )
    def test_scale_invariance_and_bounds(self, seed, d_r, d_c, c):
        rng = np.random.default_rng(seed)
        w = random_weights(rng, d_r, d_c)
        theta = rng.standard_normal((d_r, d_c))
        a, b = measures(theta, w), measures(c * theta, w)
        assert b.spikiness == pytest.approx(a.spikiness, rel=1e-10)
        assert b.rank_measure == pytest.approx(a.rank_measure, rel=1e-10)
        assert 1 - 1e-12 <= a.spikiness <= math.sqrt(d_r * d_c) * (1 + 1e-12)
        assert 1 - 1e-12 <= a.rank_measure <= math.sqrt(min(d_r, d_c)) * (1 + 1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_weighted_norms_equal_plain_norms_of_gamma(self, seed):
        rng = np.random.default_rng(seed)
        w = random_weights(rng, 5, 6)
        theta = rng.standard_normal((5, 6))
        gamma = to_gamma(theta, w)
        rep = measures(theta, w)
        assert rep.weighted_frobenius == pytest.approx(np.linalg.norm(gamma), abs=1e-12)
        assert rep.weighted_nuclear == pytest.approx(np.linalg.norm(gamma, "nuc"), abs=1e-12)
        assert rep.weighted_linf == pytest.approx(np.abs(gamma).max(), abs=1e-12)

    def test_rank_measure_squared_below_rank(self):
        rng = np.random.default_rng(11)
        for k in range(100):
            rank = 1 + k % 5
            w = random_weights(rng, 8, 7)
            theta = rng.standard_normal((8, rank)) @ rng.standard_normal((rank, 7))
            assert numerical_rank(theta) == rank
            assert measures(theta, w).rank_measure ** 2 <= rank + 1e-9


class TestConstraintSet:
    def test_flat_matrix_on_boundary(self):
        d = 20
        n = d * math.log(d)
        res = constraint_membership(np.ones((d, d)), WeightPair.uniform(d), n, 1.0)
        assert res.margin == pytest.approx(0.0, abs=1e-12)
        assert res.inside

    def test_spiky_matrix_outside(self):
        e11 = np.zeros((40, 40))
        e11[0, 0] = 1.0
        res = constraint_membership(e11, WeightPair.uniform(40), 400, 1.0)
        assert not res.inside
        threshold = math.sqrt(400 / (40 * math.log(40)))
        assert threshold == pytest.approx(1.6464, abs=1e-4)
        assert res.margin == pytest.approx(threshold - 40.0)

    def test_threshold_doubles_when_n_quadruples(self):
        rng = np.random.default_rng(0)
        delta = rng.standard_normal((6, 6))
        w = WeightPair.uniform(6)
        a = constraint_membership(delta, w, 100)
        b = constraint_membership(delta, w, 400)
        product = 6 * np.abs(delta).max() / np.linalg.norm(delta) * np.linalg.norm(delta, "nuc") / np.linalg.norm(delta)
        assert b.margin + product == pytest.approx(2 * (a.margin + product))

    def test_errors(self):
        with pytest.raises(ZeroMatrixError):
            constraint_membership(np.zeros((3, 3)), WeightPair.uniform(3), 10)
        with pytest.raises(ValueError):
            constraint_membership(np.eye(3), WeightPair.uniform(3), 0)


class TestLqBall:
    def test_q0_counts_rank(self):
        rng = np.random.default_rng(5)
        theta = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 5))
        w = WeightPair.uniform(6, 5)
        assert lq_membership(theta, w, 0.0, 3).value == 3
        assert lq_membership(theta, w, 0.0, 3).inside
        assert not lq_membership(theta, w, 0.0, 2.9).inside

    def test_half_power(self):
        res = lq_membership(np.diag([4.0, 1.0]), WeightPair.uniform(2), 0.5, 3.0)
        assert res.value == pytest.approx(3.0)
        assert res.inside

    def test_zero_matrix_in_every_ball(self):
        for q in (0.0, 0.3, 1.0):
            res = lq_membership(np.zeros((3, 3)), WeightPair.uniform(3), q, 1e-9)
            assert res.value == 0.0 and res.inside

    def test_invalid_q(self):
        with pytest.raises(ValueError):
            lq_membership(np.eye(2), WeightPair.uniform(2), 1.5, 1.0)
