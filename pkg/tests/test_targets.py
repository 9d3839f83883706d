import numpy as np
import pytest
import scipy.stats

from quditpulse import (
    RngStream,
    sample_haar_unitary,
    sample_random_state,
    sample_subspace_target,
    sample_target,
)


class TestRngStream:
    def test_identical_streams_identical_draws(self):
        a = RngStream(123, 4).generator().uniform(size=100)
        b = RngStream(123, 4).generator().uniform(size=100)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(123, 0).generator().uniform(size=100)
        b = RngStream(123, 1).generator().uniform(size=100)
        assert not np.array_equal(a, b)

    def test_validation(self):
        with pytest.raises(ValueError):
            RngStream(-1)
        with pytest.raises(ValueError):
            RngStream(0, algorithm="mt19937")


class TestHaarUnitary:
    def test_dim_one_is_phase(self):
        u = sample_haar_unitary(1, RngStream(0))
        assert u.shape == (1, 1)
        assert abs(abs(u[0, 0]) - 1.0) < 1e-12

    def test_unitarity(self):
        u = sample_haar_unitary(16, RngStream(1))
        assert np.abs(u.conj().T @ u - np.eye(16)).max() < 1e-12

    def test_determinism(self):
        a = sample_haar_unitary(8, RngStream(7))
        b = sample_haar_unitary(8, RngStream(7))
        assert np.array_equal(a, b)

    def test_entry_moments(self):
        # E|U_ij|^2 = 1/dim for the Haar measure
        dim, n = 4, 10_000
        gen = RngStream(42).generator()
        acc = np.zeros((dim, dim))
        for _ in range(n):
            acc += np.abs(sample_haar_unitary(dim, gen)) ** 2
        mean = acc / n
        # |U_ij|^2 ~ Beta(1, dim-1): var = (dim-1)/(dim^2 (dim+1))
        se = np.sqrt((dim - 1) / (dim**2 * (dim + 1)) / n)
        assert np.abs(mean - 1 / dim).max() < 3 * se + 1e-12

    def test_left_invariance_moments(self):
        # distributions of VU and U agree; compare first moments of |entries|^2
        dim, n = 4, 4000
        gen = RngStream(9).generator()
        v = sample_haar_unitary(dim, RngStream(11))
        acc = np.zeros((dim, dim))
        for _ in range(n):
            acc += np.abs(v @ sample_haar_unitary(dim, gen)) ** 2
        se = np.sqrt((dim - 1) / (dim**2 * (dim + 1)) / n)
        assert np.abs(acc / n - 1 / dim).max() < 4 * se

    def test_invalid_dim(self):
        with pytest.raises(ValueError):
            sample_haar_unitary(0, RngStream(0))


class TestRandomState:
    def test_unit_norm(self):
        gen = RngStream(5).generator()
        for _ in range(50):
            psi = sample_random_state(16, gen)
            assert abs(np.linalg.norm(psi) - 1.0) < 1e-12

    def test_population_moments(self):
        dim, n = 16, 10_000
        gen = RngStream(6).generator()
        acc = np.zeros(dim)
        for _ in range(n):
            acc += np.abs(sample_random_state(dim, gen)) ** 2
        # populations ~ Dirichlet(1,...,1): var = (dim-1)/(dim^2 (dim+1))
        se = np.sqrt((dim - 1) / (dim**2 * (dim + 1)) / n)
        assert np.abs(acc / n - 1 / dim).max() < 3 * se

    def test_determinism(self):
        a = sample_random_state(8, RngStream(3))
        b = sample_random_state(8, RngStream(3))
        assert np.array_equal(a, b)


class TestSubspaceTarget:
    def test_full_p_reduces_to_full_space(self):
        t = sample_subspace_target(8, 8, RngStream(2))
        assert t.indices_in == tuple(range(8))
        assert t.indices_out == tuple(range(8))
        assert t.p == 8

    def test_p_one_is_basis_state_map(self):
        t = sample_subspace_target(16, 1, RngStream(4))
        assert t.p == 1
        assert len(t.indices_in) == 1
        assert abs(abs(t.w[0, 0]) - 1.0) < 1e-12

    def test_index_set_uniformity(self):
        # chi-square over the C(16,2) = 120 pairs at the 1% level
        dim, p, n = 16, 2, 10_000
        gen = RngStream(8).generator()
        pairs = {}
        for _ in range(n):
            t = sample_subspace_target(dim, p, gen)
            pairs[t.indices_in] = pairs.get(t.indices_in, 0) + 1
        n_pairs = 120
        expected = n / n_pairs
        chi2 = sum((c - expected) ** 2 for c in pairs.values()) / expected
        chi2 += (n_pairs - len(pairs)) * expected  # unseen pairs
        threshold = scipy.stats.chi2.ppf(0.99, n_pairs - 1)
        assert chi2 < threshold

    def test_haar_subspace_mode(self):
        t = sample_subspace_target(8, 3, RngStream(10), haar_subspaces=True)
        assert t.indices_in is None
        assert np.abs(t.v_in.conj().T @ t.v_in - np.eye(3)).max() < 1e-12

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            sample_subspace_target(8, 0, RngStream(0))
        with pytest.raises(ValueError):
            sample_subspace_target(8, 9, RngStream(0))


class TestSampleTarget:
    def test_kinds(self):
        assert sample_target("full_unitary", 8, RngStream(1)).kind == "full_unitary"
        assert sample_target("subspace_map", 8, RngStream(1), p=2).kind == "subspace_map"
        assert sample_target("state_map", 8, RngStream(1)).kind == "state_map"

    def test_pinned_indices(self):
        t = sample_target("subspace_map", 16, RngStream(2), indices=tuple(range(9)))
        assert t.indices_in == tuple(range(9))
        assert t.indices_out == tuple(range(9))
        assert t.p == 9

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            sample_target("clifford", 8, RngStream(0))

    def test_subspace_requires_p(self):
        with pytest.raises(ValueError):
            sample_target("subspace_map", 8, RngStream(0))
