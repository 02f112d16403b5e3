import math

import numpy as np
import pytest

from weightedmc import packing
from weightedmc.measures import WeightPair, numerical_rank, spikiness
from weightedmc.packing import (
    PackingError,
    PackingSet,
    generate_packing,
    haar_orthogonal,
    hoeffding_mean,
    packing_size,
    rotated_sign_matrix,
    sign_candidates,
    verify_packing,
)
from weightedmc.sampling import make_rng


class TestSize:
    def test_plug_in(self):
        assert packing_size(40, 8) == 3

    def test_too_small_refused(self):
        # r d < 128 log 8 gives fewer than two matrices
        assert packing_size(20, 13) == 1
        with pytest.raises(ValueError):
            generate_packing(20, 13, 1.0, make_rng(0))

    def test_doubling_rd_squares_exponential(self):
        assert math.exp(2 * 40 * 8 / 128) == pytest.approx(math.exp(40 * 8 / 128) ** 2)
        assert packing_size(40, 16) == math.floor(math.exp(5.0) / 4)

    def test_domain(self):
        with pytest.raises(ValueError):
            packing_size(9, 2)
        with pytest.raises(ValueError):
            packing_size(12, 13)


class TestConstruction:
    def test_sign_rows(self):
        c = sign_candidates(12, 3, 5, make_rng(0))
        assert c.shape == (5, 12, 12)
        assert np.all(np.abs(c[:, :3]) == 1)
        assert not c[:, 3:].any()
        np.testing.assert_allclose(np.linalg.norm(c, axis=(1, 2)), math.sqrt(36))

    def test_haar_is_orthogonal(self):
        q = haar_orthogonal(15, make_rng(1))
        np.testing.assert_allclose(q.T @ q, np.eye(15), atol=1e-12)

    def test_orthogonal_invariance(self):
        rng = make_rng(2)
        c = sign_candidates(20, 4, 3, rng)
        q = haar_orthogonal(20, rng)
        for m in c:
            rotated = q @ m
            assert np.linalg.norm(rotated) == pytest.approx(np.linalg.norm(m), abs=1e-10)
            assert np.linalg.norm(rotated, 2) == pytest.approx(np.linalg.norm(m, 2), abs=1e-10)

    def test_hoeffding_mean(self):
        assert abs(hoeffding_mean(40, 8, make_rng(3)) - 2.0) <= 0.3

    def test_rotated_sign_matrix(self):
        m = rotated_sign_matrix(12, 9, 2, make_rng(4))
        assert numerical_rank(m) == 2
        assert np.linalg.norm(m) == pytest.approx(math.sqrt(2 * 9))


class TestGenerate:
    def test_end_to_end(self):
        pset = generate_packing(40, 8, 1.0, make_rng(5))
        assert len(pset.matrices) == 3
        assert pset.report["pass"]
        assert verify_packing(pset)["pass"]
        for m in pset.matrices:
            assert np.linalg.norm(m) == pytest.approx(1.0, abs=1e-10)
            assert numerical_rank(m) <= 8

    def test_deterministic(self):
        a = generate_packing(40, 8, 0.5, make_rng(6))
        b = generate_packing(40, 8, 0.5, make_rng(6))
        assert all(np.array_equal(x, y) for x, y in zip(a.matrices, b.matrices))
        assert a.report == b.report

    def test_exhausted_attempts(self, monkeypatch):
        monkeypatch.setattr(packing, "_candidate_ok", lambda *a: False)
        with pytest.raises(PackingError) as info:
            generate_packing(40, 8, 1.0, make_rng(7), max_attempts=3)
        assert info.value.best_report == {"size": 0, "needed": 3, "attempt": 1, "pass": False}

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            generate_packing(40, 8, 0.0, make_rng(0))


class TestVerify:
    def test_unrotated_spike(self):
        d = 12
        m = np.zeros((d, d))
        m[0, 0] = 0.7
        rep = verify_packing(PackingSet([m], 0.7, 1))
        assert rep["frobenius"]["pass"]
        assert not rep["spikiness"]["pass"]
        assert rep["spikiness"]["max"] == pytest.approx(d)
        assert not rep["pass"]

    def test_delta_homogeneity(self):
        pset = generate_packing(40, 8, 1.0, make_rng(8))
        scaled = PackingSet([2 * m for m in pset.matrices], 2.0, 8)
        a, b = verify_packing(pset), verify_packing(scaled)
        assert b["pass"]
        assert b["separation"]["min"] == pytest.approx(2 * a["separation"]["min"])
        assert b["operator_norm"]["threshold"] == pytest.approx(2 * a["operator_norm"]["threshold"])
        assert b["frobenius"]["max"] == pytest.approx(2 * a["frobenius"]["max"])
        assert b["spikiness"]["max"] == pytest.approx(a["spikiness"]["max"])

    def test_close_pair_fails_separation(self):
        rng = make_rng(9)
        m = rotated_sign_matrix(12, 12, 2, rng)
        m /= np.linalg.norm(m)
        rep = verify_packing(PackingSet([m, m], 1.0, 2))
        assert rep["separation"]["min"] == pytest.approx(0.0, abs=1e-7)
        assert not rep["separation"]["pass"]

    def test_spikiness_uses_uniform_weights(self):
        pset = generate_packing(40, 8, 1.0, make_rng(10))
        w = WeightPair.uniform(40)
        assert verify_packing(pset)["spikiness"]["max"] == pytest.approx(max(spikiness(m, w) for m in pset.matrices))

    def test_empty(self):
        with pytest.raises(ValueError):
            verify_packing(PackingSet([], 1.0, 1))
