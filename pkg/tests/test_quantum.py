import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multires import quantum as qm

seeds = st.integers(0, 2**31)
dims = st.sampled_from([2, 3, 4])


def diag(*p):
    return qm.DensityMatrix(np.diag(p).astype(complex))


def ket(i, d=2):
    v = np.zeros(d)
    v[i] = 1
    return qm.pure_state(v)


SINGLET = qm.pure_state(np.array([0, 1, -1, 0]) / math.sqrt(2), (2, 2))


class TestValidation:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            qm.DensityMatrix(np.array([[0.5, 0.1], [0.0, 0.5]]))

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            qm.DensityMatrix(np.eye(2) * 0.6)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            qm.DensityMatrix(np.diag([1.2, -0.2]))

    def test_dims_must_multiply(self):
        with pytest.raises(ValueError):
            qm.DensityMatrix(np.eye(4) / 4, (2, 3))

    def test_dimension_cap_env(self, monkeypatch):
        monkeypatch.setenv("MULTIRES_MAX_DIM", "8")
        with pytest.raises(qm.DimensionError):
            qm.maximally_mixed(16)
        monkeypatch.delenv("MULTIRES_MAX_DIM")
        assert qm.max_dim() == 4096


class TestComposition:
    def test_identity_tensor(self):
        out = qm.tensor(qm.maximally_mixed(2), qm.maximally_mixed(2))
        np.testing.assert_allclose(out.data, np.eye(4) / 4)
        assert out.dims == (2, 2)

    def test_pure_product(self):
        out = qm.tensor(ket(0), ket(1))
        expect = np.zeros((4, 4))
        expect[1, 1] = 1
        np.testing.assert_allclose(out.data, expect)

    def test_sum_embed_by_hand(self):
        h = qm.Observable(np.diag([0.0, 1.0]))
        np.testing.assert_allclose(qm.sum_embed(h, 2).data, np.diag([0, 1, 1, 2]))
        assert np.allclose(qm.sum_embed(h, 1).data, h.data)

    @given(st.integers(1, 4), seeds)
    def test_sum_embed_trace(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((2, 2))
        obs = qm.Observable(a + a.T)
        tr = np.trace(qm.sum_embed(obs, n).data).real
        assert tr == pytest.approx(n * 2 ** (n - 1) * np.trace(obs.data).real, abs=1e-9)

    def test_sum_embed_overflow(self, monkeypatch):
        monkeypatch.setenv("MULTIRES_MAX_DIM", "16")
        with pytest.raises(qm.DimensionError):
            qm.sum_embed(qm.Observable(np.diag([0.0, 1.0])), 5)

    def test_partial_trace_singlet(self):
        np.testing.assert_allclose(qm.partial_trace(SINGLET, [0]).data, np.eye(2) / 2, atol=1e-15)

    def test_partial_trace_empty_keep(self):
        with pytest.raises(ValueError):
            qm.partial_trace(SINGLET, [])

    @given(seeds, seeds)
    def test_partial_trace_of_product(self, s1, s2):
        a, b = qm.random_density(2, s1), qm.random_density(3, s2)
        ab = qm.tensor(a, b)
        np.testing.assert_allclose(qm.partial_trace(ab, [0]).data, a.data, atol=1e-12)
        np.testing.assert_allclose(qm.partial_trace(ab, [1]).data, b.data, atol=1e-12)
        assert abs(np.trace(qm.partial_trace(ab, [1]).data) - 1) < 1e-12


class TestSpectral:
    def test_entropy_examples(self):
        assert qm.von_neumann_entropy(ket(0)) == pytest.approx(0, abs=1e-15)
        assert qm.von_neumann_entropy(qm.maximally_mixed(2)) == pytest.approx(1)
        # two-level Bell mixture at p0 = 0.9; h(0.9) evaluated by hand
        h09 = -(0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))
        assert h09 == pytest.approx(0.4690, abs=5e-5)
        rho = qm.mixture([SINGLET, qm.pure_state(np.array([0, 1, 1, 0]) / math.sqrt(2), (2, 2))], [0.9, 0.1])
        assert qm.von_neumann_entropy(rho) == pytest.approx(h09, abs=1e-12)

    def test_relative_entropy_examples(self):
        rho = qm.random_density(3, 4)
        assert qm.relative_entropy(rho, rho) == pytest.approx(0, abs=1e-12)
        assert qm.relative_entropy(ket(0), qm.maximally_mixed(2)) == pytest.approx(1)
        assert qm.relative_entropy(ket(0), ket(1)) == math.inf

    def test_trace_distance_examples(self):
        assert qm.trace_distance(ket(0), ket(0)) == 0
        assert qm.trace_distance(ket(0), ket(1)) == pytest.approx(2)
        assert qm.trace_distance(diag(0.9, 0.1), qm.maximally_mixed(2)) == pytest.approx(0.8)

    def test_expectation_examples(self):
        z = qm.Observable(np.diag([1.0, -1.0]))
        assert qm.expectation(qm.maximally_mixed(2), z) == pytest.approx(0)
        assert qm.expectation(ket(0), qm.Observable(np.diag([0.0, 1.0]))) == 0

    def test_expectation_imaginary_residue(self):
        bad = qm.Observable.__new__(qm.Observable)
        bad.data = np.array([[0, 1], [0, 0]], dtype=complex)
        bad.dims = (2,)
        bad.label = ""
        with pytest.raises(qm.ConsistencyError):
            qm.expectation(qm.DensityMatrix(np.array([[0.5, 0.5j], [-0.5j, 0.5]])), bad)

    @given(dims, seeds)
    def test_entropy_bounds(self, d, seed):
        s = qm.von_neumann_entropy(qm.random_density(d, seed))
        assert -1e-10 <= s <= math.log2(d) + 1e-10

    @given(dims, seeds, seeds)
    def test_klein(self, d, s1, s2):
        a, b = qm.random_density(d, s1), qm.random_density(d, s2)
        dab = qm.relative_entropy(a, b)
        assert dab >= -1e-12
        if qm.trace_distance(a, b) > 1e-8:
            assert dab > 0

    @given(seeds, seeds)
    def test_data_processing(self, s1, s2):
        a = qm.random_density(6, s1, (2, 3))
        b = qm.random_density(6, s2, (2, 3))
        for keep in ([0], [1]):
            lhs = qm.relative_entropy(qm.partial_trace(a, keep), qm.partial_trace(b, keep))
            assert lhs <= qm.relative_entropy(a, b) + 1e-9

    @given(seeds, seeds, seeds, seeds, st.floats(0, 1))
    def test_joint_convexity(self, s1, s2, s3, s4, lam):
        r1, r2, t1, t2 = (qm.random_density(3, s) for s in (s1, s2, s3, s4))
        lhs = qm.relative_entropy(qm.mixture([r1, r2], [lam, 1 - lam]), qm.mixture([t1, t2], [lam, 1 - lam]))
        rhs = lam * qm.relative_entropy(r1, t1) + (1 - lam) * qm.relative_entropy(r2, t2)
        assert lhs <= rhs + 1e-9

    @given(seeds, seeds, seeds, seeds)
    def test_additivity(self, s1, s2, s3, s4):
        r, rp, t, tp = (qm.random_density(2, s) for s in (s1, s2, s3, s4))
        joint = qm.relative_entropy(qm.tensor(r, rp), qm.tensor(t, tp))
        assert joint == pytest.approx(qm.relative_entropy(r, t) + qm.relative_entropy(rp, tp), abs=1e-9)


class TestGibbs:
    H = qm.Observable(np.diag([0.0, 1.0]), "H")

    def test_zero_beta_uniform(self):
        x = qm.Observable(np.array([[0, 1], [1, 0]]))
        np.testing.assert_allclose(qm.gibbs_state([x, self.H], [0, 0]).data, np.eye(2) / 2, atol=1e-15)

    def test_ground_limit(self):
        assert qm.gibbs_state([self.H], [60]).data[0, 0].real == pytest.approx(1, abs=1e-15)

    def test_base_two_qubit(self):
        # tau = 2^{-beta H}/Z: excited population 2^{-1}/(1 + 2^{-1}) = 1/3 at beta = 1
        tau = qm.gibbs_state([self.H], [1.0])
        assert qm.expectation(tau, self.H) == pytest.approx(1 / 3, abs=1e-14)
        # natural units: beta_nat = beta ln 2
        b_nat = math.log(2)
        assert qm.expectation(tau, self.H) == pytest.approx(math.exp(-b_nat) / (1 + math.exp(-b_nat)))

    def test_log_partition(self):
        assert qm.log2_partition([self.H], [1.0]) == pytest.approx(math.log2(1.5))


class TestRandomDensity:
    @given(dims, seeds)
    def test_invariants(self, d, seed):
        rho = qm.random_density(d, seed)
        assert np.allclose(rho.data, rho.data.conj().T, atol=1e-12)
        assert abs(np.trace(rho.data) - 1) < 1e-12
        assert rho.spectrum.min() >= -1e-10

    def test_deterministic(self):
        np.testing.assert_array_equal(qm.random_density(3, 11).data, qm.random_density(3, 11).data)

    def test_mean_is_uniform(self):
        mean = sum(qm.random_density(3, s).data for s in range(10000)) / 10000
        assert np.max(np.abs(mean - np.eye(3) / 3)) < 0.02


class TestFrechet:
    @given(seeds, seeds)
    def test_matches_finite_difference(self, s1, s2):
        rho = qm.random_density(3, s1)
        sigma = qm.random_density(3, s2)
        g = qm.frechet_log_gradient(rho, sigma.data)
        direction = qm.random_density(3, s1 + 1).data - sigma.data
        eps = 1e-6

        def f(t):
            m = sigma.data + t * direction
            return -np.trace(rho.data @ qm.hermitian_function(m, np.log2)).real

        fd = (f(eps) - f(-eps)) / (2 * eps)
        assert np.trace(g @ direction).real == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_matrix_literal_round_trip():
    m = qm.random_density(3, 2).data
    np.testing.assert_array_equal(qm.parse_matrix(qm.matrix_literal(m)), m)
    with pytest.raises(ValueError):
        qm.parse_matrix([[1, 2]])
