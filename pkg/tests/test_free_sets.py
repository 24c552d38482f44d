import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multires import quantum as qm
from multires.free_sets import ParamFamily, Singleton, VertexPolytope, closest_state, grid_oracle, membership
from multires.theories import bell_diagonal, bell_state, css_polytope, s_p0_polytope, sigma_mm, solve_betas

seeds = st.integers(0, 2**31)
H = qm.Observable(np.diag([0.0, 1.0]), "H")
X = qm.Observable(np.array([[0, 1], [1, 0]]), "X")
Z = qm.Observable(np.diag([1.0, -1.0]), "Z")


def h(p):
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p)) if 0 < p < 1 else 0.0


def sandwiched(res, grid, resolution):
    """A grid minimum over-estimates the infimum; the solver value minus its gap under-estimates it."""
    return res.value - res.certificate_gap <= grid + 1e-9 and grid <= res.value + 2 / resolution


def bell_sample(seed, p0_min=0.0):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(4))
    if p0_min:
        p0 = rng.uniform(p0_min, 1.0)
        p = np.concatenate([[p0], (1 - p0) * rng.dirichlet(np.ones(3))])
    return p, bell_diagonal(p)


class TestSpecs:
    def test_polytope_needs_vertex(self):
        with pytest.raises(ValueError):
            VertexPolytope([])

    def test_family_box_nonempty(self):
        with pytest.raises(ValueError):
            ParamFamily([(1.0, 0.0)], lambda t: qm.maximally_mixed(2))

    def test_full_rank_witness_must_belong(self):
        fam = ParamFamily([(0.0, 5.0)], lambda b: qm.gibbs_state([H], b))
        ParamFamily([(0.0, 5.0)], lambda b: qm.gibbs_state([H], b), full_rank_witness=qm.gibbs_state([H], [1.3]))
        with pytest.raises(ValueError):
            ParamFamily([(0.0, 5.0)], fam.builder, full_rank_witness=qm.gibbs_state([H], [-1.0]))

    def test_tensor_power_of_polytope(self):
        sq = css_polytope().tensor_power(2)
        assert len(sq.vertices) == 9 and sq.dim == 16


class TestMembership:
    def test_examples(self):
        mm = Singleton(qm.maximally_mixed(3))
        assert membership(mm, qm.maximally_mixed(3), 1e-9)
        assert not membership(mm, qm.pure_state([1, 0, 0]), 1e-9)
        assert not membership(css_polytope(), bell_state(0), 1e-9)

    def test_polytope_interior(self):
        assert membership(css_polytope(), sigma_mm(), 1e-9)
        assert membership(css_polytope(), bell_diagonal([0.5, 0.2, 0.2, 0.1]), 1e-9)
        assert not membership(css_polytope(), bell_diagonal([0.6, 0.2, 0.1, 0.1]), 1e-9)

    def test_family(self):
        fam = ParamFamily([(0.0, 5.0)], lambda b: qm.gibbs_state([H], b))
        assert membership(fam, qm.gibbs_state([H], [2.2]), 1e-7)
        assert not membership(fam, qm.maximally_mixed(2) if False else qm.gibbs_state([X], [1.0]), 1e-7)


class TestClosestState:
    def test_singleton_exact(self):
        rho, gam = qm.random_density(3, 1), qm.random_density(3, 2)
        res = closest_state(Singleton(gam), rho)
        assert res.value == qm.relative_entropy(rho, gam)
        assert res.certificate_gap == 0 and res.converged

    @given(st.sampled_from([2, 3, 4]), seeds)
    def test_purity_closed_form(self, d, seed):
        rho = qm.random_density(d, seed)
        res = closest_state(Singleton(qm.maximally_mixed(d)), rho)
        assert res.value == pytest.approx(math.log2(d) - qm.von_neumann_entropy(rho), abs=1e-9)

    def test_css_examples(self):
        assert closest_state(css_polytope(), bell_diagonal([0.9, 0.1, 0, 0])).value == pytest.approx(0.5310, abs=5e-5)
        assert 1 - h(0.9) == pytest.approx(0.5310, abs=5e-5)

    @given(seeds)
    def test_css_closed_form_on_S1(self, seed):
        p, rho = bell_sample(seed, 0.5)
        res = closest_state(css_polytope(), rho)
        assert res.value == pytest.approx(1 - h(p[0]), abs=1e-9)
        assert res.converged and res.certificate_gap >= 0

    @given(seeds)
    def test_css_zero_at_half(self, seed):
        # every Bell-diagonal state with singlet weight 1/2 lies in F_css
        t = np.random.default_rng(seed).dirichlet(np.ones(3)) / 2
        rho = bell_diagonal(np.concatenate([[0.5], t]))
        assert closest_state(css_polytope(), rho).value == pytest.approx(0, abs=1e-9)

    def test_general_path_off_diagonal(self):
        # non-Bell-diagonal inputs go through the same commuting fast path after dephasing
        rho = qm.random_density(4, 7, (2, 2))
        fast = closest_state(css_polytope(), rho)
        assert sandwiched(fast, grid_oracle(css_polytope(), rho, 80), 80)

    def test_non_commuting_polytope(self):
        verts = [qm.random_density(2, s) for s in (1, 2, 3)]
        poly = VertexPolytope(verts, "random")
        assert poly.common_basis() is None
        rho = qm.random_density(2, 9)
        res = closest_state(poly, rho, tol=1e-10)
        grid = grid_oracle(poly, rho, 120)
        assert sandwiched(res, grid, 120)
        assert res.method != "closed-form"

    def test_max_iter_flags_nonconvergence(self):
        verts = [qm.random_density(3, s) for s in (1, 2, 3, 4)]
        res = closest_state(VertexPolytope(verts), qm.random_density(3, 5), tol=1e-14, max_iter=1)
        assert not res.converged

    def test_gibbs_family_matches_newton(self):
        fam = ParamFamily([(0.0, 10.0)], lambda b: qm.gibbs_state([H], b), "gibbs")
        rho = qm.DensityMatrix(np.array([[0.8, 0.1], [0.1, 0.2]]))
        beta = solve_betas([H], [qm.expectation(rho, H)])[0]
        exact = qm.relative_entropy(rho, qm.gibbs_state([H], [beta]))
        assert closest_state(fam, rho).value == pytest.approx(exact, abs=1e-8)
        assert grid_oracle(fam, rho, 1000) == pytest.approx(exact, abs=1e-4)

    def test_two_parameter_family_sandwich(self):
        fam = ParamFamily([(-3.0, 3.0), (-3.0, 3.0)], lambda b: qm.gibbs_state([X, Z], b), "gibbs2")
        rho = qm.random_density(2, 3)
        res = closest_state(fam, rho)
        grid = grid_oracle(fam, rho, 40)
        assert sandwiched(res, grid, 40)


class TestGridOracle:
    def test_constant_family(self):
        fam = ParamFamily([(0.0, 1.0)], lambda t: qm.maximally_mixed(3))
        rho = qm.random_density(3, 4)
        exact = math.log2(3) - qm.von_neumann_entropy(rho)
        assert grid_oracle(fam, rho, 10) == pytest.approx(exact, abs=2 / 10)

    def test_css_resolution_200(self):
        assert grid_oracle(css_polytope(), bell_diagonal([0.75, 0.25, 0, 0]), 200) == pytest.approx(0.1887, abs=1e-3)

    def test_rejects_many_parameters(self):
        fam = ParamFamily([(0.0, 1.0)] * 5, lambda t: qm.maximally_mixed(2))
        with pytest.raises(ValueError):
            grid_oracle(fam, qm.maximally_mixed(2), 3)

    @given(seeds)
    def test_sandwich_css(self, seed):
        _, rho = bell_sample(seed)
        res = closest_state(css_polytope(), rho)
        grid = grid_oracle(css_polytope(), rho, 50)
        assert sandwiched(res, grid, 50)

    @given(seeds, st.floats(0.55, 0.95))
    def test_sandwich_s_p0(self, seed, p0):
        _, rho = bell_sample(seed)
        poly = s_p0_polytope(p0)
        res = closest_state(poly, rho)
        grid = grid_oracle(poly, rho, 50)
        assert sandwiched(res, grid, 50)


class TestSetProperties:
    @given(seeds, seeds, st.floats(0, 1))
    def test_convexity_css(self, s1, s2, lam):
        a, b = qm.random_density(4, s1, (2, 2)), qm.random_density(4, s2, (2, 2))
        poly = css_polytope()
        mix = closest_state(poly, qm.mixture([a, b], [lam, 1 - lam]))
        ra, rb = closest_state(poly, a), closest_state(poly, b)
        assert mix.value <= lam * ra.value + (1 - lam) * rb.value + mix.certificate_gap + 1e-9

    @given(seeds, seeds)
    def test_superadditivity_singleton(self, s1, s2):
        gam = qm.random_density(2, s1)
        joint = Singleton(qm.tensor(gam, gam))
        rho = qm.random_density(4, s2, (2, 2))
        lhs = closest_state(joint, rho).value
        rhs = sum(closest_state(Singleton(gam), qm.partial_trace(rho, [k])).value for k in (0, 1))
        assert lhs >= rhs - 1e-9

    @given(seeds, seeds)
    def test_superadditivity_equality_on_products(self, s1, s2):
        gam = qm.random_density(2, s1)
        a, b = qm.random_density(2, s2), qm.random_density(2, s2 + 1)
        lhs = qm.relative_entropy(qm.tensor(a, b), qm.tensor(gam, gam))
        assert lhs == pytest.approx(qm.relative_entropy(a, gam) + qm.relative_entropy(b, gam), abs=1e-9)

    def test_zero_on_members(self):
        poly = css_polytope()
        for g in poly.members(10, seed=3):
            assert abs(closest_state(poly, g).value) <= 1e-9
        fam = ParamFamily([(0.0, 4.0)], lambda b: qm.gibbs_state([H], b))
        for g in fam.members(5, seed=1):
            assert -1e-9 <= closest_state(fam, g).value <= 1e-7

    def test_css_additive_on_two_copies(self):
        rho = bell_diagonal([0.8, 0.1, 0.06, 0.04])
        one = closest_state(css_polytope(), rho).value
        two = closest_state(css_polytope().tensor_power(2), qm.tensor_power(rho, 2))
        assert two.value == pytest.approx(2 * one, abs=1e-7)

    def test_tie_break_deterministic(self):
        v = bell_diagonal([0.5, 0.5, 0, 0])
        poly = VertexPolytope([v, v, bell_diagonal([0.5, 0, 0.5, 0])])
        rho = bell_diagonal([0.7, 0.2, 0.1, 0.0])
        a, b = closest_state(poly, rho), closest_state(poly, rho)
        assert a.value == b.value
        np.testing.assert_array_equal(a.argmin.data, b.argmin.data)
