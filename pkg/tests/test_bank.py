import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multires import quantum as qm
from multires.bank import (
    BankCurve,
    BankGeometryError,
    BankMonotoneCoeffs,
    BankPoint,
    bank_vs_relent_check,
    first_law_check,
    is_bank_state,
    normal_vector_coeffs,
    resource_deltas,
    subset_convexity_margin,
    tangency_margin,
    tangent_coeffs,
    tangent_plane_coeffs,
    trace_bank_curve,
)
from multires.theories import (
    bell_diagonal,
    build_local_control_theory,
    build_thermo_theory,
    e_s_p0_linear,
    s_p0_polytope,
    two_level_state,
)

H = qm.Observable(np.diag([0.0, 1.0]), "H")
X = qm.Observable(np.array([[0, 1], [1, 0]]), "X")
Z = qm.Observable(np.diag([1.0, -1.0]), "Z")


def h(p):
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p)) if 0 < p < 1 else 0.0


@pytest.fixture(scope="module")
def thermo():
    return build_thermo_theory([H])


@pytest.fixture(scope="module")
def local():
    return build_local_control_theory(0.0, 1.0)


@pytest.fixture(scope="module")
def thermo_curve(thermo):
    return trace_bank_curve(thermo, n_points=200)


@pytest.fixture(scope="module")
def local_curve(local):
    return trace_bank_curve(local, n_points=200)


def _index_of(curve, param):
    return int(np.argmin([abs(p.param[0] - param) for p in curve.points]))


def _curve_with(theory, e1):
    base = trace_bank_curve(theory, n_points=200)
    grid = sorted(set(base.E1.tolist()) | {e1})
    c = trace_bank_curve(theory, grid=grid)
    return c, int(np.argmin(np.abs(c.E1 - e1)))


class TestCurves:
    def test_thermo_endpoints(self, thermo_curve):
        first, last = thermo_curve.points[0], thermo_curve.points[-1]
        assert (first.E1, first.E2) == pytest.approx((0.0, 1.0), abs=1e-12)
        assert (last.E1, last.E2) == pytest.approx((0.5, 0.0), abs=1e-12)

    def test_invariants(self, thermo_curve, local_curve):
        for c in (thermo_curve, local_curve):
            assert len(c.points) == 200
            assert c.violations() == []

    def test_local_control_curve_is_binary_entropy(self, local_curve):
        for p in local_curve.points:
            p0 = p.param[0]
            assert p.E1 == pytest.approx(1 - p0, abs=1e-12)
            assert p.E2 == pytest.approx(1 - h(p0), abs=1e-12)

    def test_out_of_range_target_dropped(self, thermo):
        c = trace_bank_curve(thermo, grid=[0.1, 0.2, 0.7])
        assert len(c.points) == 2 and any("outside" in n for n in c.notes)

    def test_csv_header(self, local_curve):
        text = local_curve.to_csv().splitlines()
        assert text[0] == "E1,E2,p0" and len(text) == 201

    def test_violation_detection(self):
        pts = [BankPoint(x, y, None) for x, y in [(0, 1), (1, 0.8), (2, 0.0)]]
        assert any("convexity" in v for v in BankCurve(pts, ("a", "b")).violations())
        pts = [BankPoint(x, y, None) for x, y in [(0, 1), (1, 1.2), (2, 0.0)]]
        assert any("increases" in v for v in BankCurve(pts, ("a", "b")).violations())


class TestTangent:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
    def test_thermo_alpha_is_inverse_temperature(self, thermo, beta):
        e1 = qm.expectation(qm.gibbs_state([H], [beta]), H)
        curve, idx = _curve_with(thermo, e1)
        c = tangent_coeffs(curve, idx)
        assert c.alpha == pytest.approx(beta, rel=1e-6)
        assert c.beta == 1.0
        assert c.rate == pytest.approx(-1 / beta, rel=1e-6)
        assert not c.flagged

    @pytest.mark.parametrize("p0", [0.6, 0.75, 0.9, 0.97])
    def test_local_control_rate(self, local, p0):
        curve, idx = _curve_with(local, 1 - p0)
        c = tangent_coeffs(curve, idx)
        assert c.rate == pytest.approx(-1 / math.log2(p0 / (1 - p0)), rel=1e-6)

    def test_rate_scales_with_gap(self):
        th = build_local_control_theory(0.5, 2.5)
        curve, idx = _curve_with(th, 2.0 * 0.1)
        assert tangent_coeffs(curve, idx).rate == pytest.approx(-2.0 / math.log2(9), rel=1e-6)

    def test_b1_normalisation(self, thermo_curve):
        c = tangent_coeffs(thermo_curve, 57)
        assert c.gamma == pytest.approx(c.alpha * c.anchor[0] + c.beta * c.anchor[1], abs=1e-9)
        assert c.f_bank(build_thermo_theory([H]), c.anchor_state) == pytest.approx(0, abs=1e-9)

    def test_endpoints_rejected(self, thermo_curve):
        for idx in (0, len(thermo_curve.points) - 1, -1):
            with pytest.raises(BankGeometryError, match="endpoint"):
                tangent_coeffs(thermo_curve, idx)

    def test_affine_segment_rejected(self):
        pts = [BankPoint(x, 1 - x, None) for x in np.linspace(0, 1, 7)]
        with pytest.raises(BankGeometryError, match="non-convex"):
            tangent_coeffs(BankCurve(pts, ("a", "b")), 3)

    def test_symmetric_curve_slope(self):
        # sqrt(x) + sqrt(y) = 1 is symmetric under x <-> y; slope -1 at x = y
        t = np.linspace(0.3, 0.7, 41)
        pts = [BankPoint(a * a, (1 - a) ** 2, None) for a in t]
        c = tangent_coeffs(BankCurve(pts, ("a", "b")), 20)
        assert c.slope == pytest.approx(-1.0, abs=1e-3)

    def test_sign_law_every_interior_anchor(self, thermo_curve, local_curve):
        for curve in (thermo_curve, local_curve):
            for idx in range(5, len(curve.points) - 5, 15):
                assert tangent_coeffs(curve, idx).rate < 0

    def test_tangency_margin(self, thermo, local, thermo_curve, local_curve):
        for th, curve in ((thermo, thermo_curve), (local, local_curve)):
            c = tangent_coeffs(curve, 80)
            states = [th.sample_state(s) for s in range(500)] + [p.witness for p in curve.points]
            assert tangency_margin(th, c, states) >= -1e-6
            assert min(abs(c.f_bank(th, p.witness)) for p in curve.points) < 1e-9


class TestBankState:
    def test_gibbs_is_bank(self, thermo):
        v = is_bank_state(thermo, qm.gibbs_state([H], [1.3]), samples=200)
        assert v.is_bank and "family" in v.method

    def test_maximally_mixed_is_bank(self, thermo):
        assert is_bank_state(thermo, qm.maximally_mixed(2), samples=200)

    def test_non_gibbs_dominated(self, thermo):
        rho = qm.DensityMatrix(np.array([[0.7, 0.3], [0.3, 0.3]]))
        v = is_bank_state(thermo, rho, samples=50)
        assert not v.is_bank
        e1, e2 = v.witness_coords
        assert e1 <= v.coords[0] + 1e-9 and e2 < v.coords[1]
        # the dominating witness is the max-entropy state at equal energy
        assert qm.trace_distance(v.witness, qm.gibbs_state([H], [math.log2(0.7 / 0.3)])) < 1e-6

    def test_local_control(self, local):
        assert is_bank_state(local, two_level_state(0.8), samples=100)
        assert is_bank_state(local, bell_diagonal([0.8, 0.1, 0.05, 0.05]), samples=100)
        assert not is_bank_state(local, qm.random_density(4, 1, (2, 2)), samples=100)


class TestNormalVector:
    def test_proportional_to_betas(self):
        th = build_thermo_theory([X, Z])
        for b in ([0.7, -1.2], [2.0, 0.5], [-0.3, 1.1]):
            assert normal_vector_coeffs(th, b) == pytest.approx([b[0], b[1], 1.0], rel=1e-5, abs=1e-7)

    def test_uniform_anchor_purity_only(self):
        th = build_thermo_theory([X, Z])
        assert normal_vector_coeffs(th, [0.0, 0.0]) == pytest.approx([0.0, 0.0, 1.0], abs=1e-7)

    def test_commuting_closed_form(self):
        a = qm.Observable(np.diag([0.0, 1.0, 3.0]), "A")
        b = qm.Observable(np.diag([0.5, 0.0, 2.0]), "B")
        th = build_thermo_theory([a, b])
        beta = np.array([0.4, 0.9])
        # analytic partials: d<A_i>/d beta_j = -ln2 Cov(A_i, A_j), dE_FS/d beta_j = -sum_i beta_i d<A_i>/d beta_j
        ea, eb = np.diag(a.data).real, np.diag(b.data).real
        w = 2.0 ** -(beta[0] * ea + beta[1] * eb)
        p = w / w.sum()
        ops = np.vstack([ea, eb])
        mean = ops @ p
        cov = (ops * p) @ ops.T - np.outer(mean, mean)
        dA = -math.log(2) * cov
        r = [np.array([dA[0, j], dA[1, j], -(beta @ dA[:, j])]) for j in range(2)]
        n = np.cross(r[0], r[1])
        expect = n / n[2]
        assert normal_vector_coeffs(th, beta) == pytest.approx(expect.tolist(), rel=1e-6)

    def test_plane_is_relative_entropy_to_tau(self):
        th = build_thermo_theory([X, Z])
        c = tangent_plane_coeffs(th, [1.1, -0.4])
        tau = c.anchor_state
        for s in range(20):
            rho = qm.random_density(2, s)
            assert c.f_bank(th, rho) == pytest.approx(qm.relative_entropy(rho, tau), abs=1e-7)

    def test_requires_three_resources(self, thermo):
        with pytest.raises(ValueError):
            normal_vector_coeffs(thermo, [1.0, 1.0])


class TestFirstLaw:
    def test_identity(self, thermo, thermo_curve):
        c = tangent_coeffs(thermo_curve, 60)
        rho = qm.random_density(2, 3)
        rep = first_law_check(thermo, c, rho, rho, 0.0, 0.0)
        assert rep.residual == 0

    @given(st.integers(0, 2**31), st.integers(0, 2**31))
    @settings(max_examples=20)
    def test_balanced_thermo(self, s1, s2):
        th = build_thermo_theory([H])
        curve = trace_bank_curve(th, n_points=60)
        c = tangent_coeffs(curve, 30)
        rho, sigma = qm.random_density(2, s1), qm.random_density(2, s2)
        dw1 = qm.expectation(rho, H) - qm.expectation(sigma, H)
        dw2 = qm.von_neumann_entropy(sigma) - qm.von_neumann_entropy(rho)
        assert (dw1, dw2) == pytest.approx(resource_deltas(th, rho, sigma), abs=1e-12)
        rep = first_law_check(th, c, rho, sigma, dw1, dw2)
        assert abs(rep.residual) <= 1e-8
        b = rep.breakdown
        assert b["T"] == pytest.approx(1 / c.alpha)
        assert b["dU"] == pytest.approx(b["Q"] - b["W"], abs=1e-9)

    def test_breach(self, thermo, thermo_curve):
        c = tangent_coeffs(thermo_curve, 60)
        rho, sigma = qm.random_density(2, 1), qm.random_density(2, 2)
        d1, d2 = resource_deltas(thermo, rho, sigma)
        assert not first_law_check(thermo, c, rho, sigma, d1 + 1e-3, d2).ok(1e-8)

    def test_rate_marker_when_alpha_vanishes(self, thermo):
        c = BankMonotoneCoeffs(0.0, 1.0, 0.0, (0.5, 0.0))
        rep = first_law_check(thermo, c, qm.maximally_mixed(2), qm.maximally_mixed(2), 0.0, 0.0)
        assert rep.rate == math.inf


class TestRelEnt:
    def test_thermo_anchor(self, thermo, thermo_curve):
        c = tangent_coeffs(thermo_curve, 70)
        cmp_ = bank_vs_relent_check(thermo, c, c.anchor_state, samples=300)
        assert cmp_.c > 0 and cmp_.max_deviation <= 1e-6

    def test_uniform_anchor(self, thermo):
        c = BankMonotoneCoeffs(0.0, 1.0, 0.0, (0.5, 0.0))
        cmp_ = bank_vs_relent_check(thermo, c, qm.maximally_mixed(2), samples=100)
        assert cmp_.c == pytest.approx(1.0) and cmp_.max_deviation < 1e-12

    def test_local_control_linear_combination(self, local):
        p0 = 0.85
        curve, idx = _curve_with(local, 1 - p0)
        c = tangent_coeffs(curve, idx)
        cmp_ = bank_vs_relent_check(local, c, s_p0_polytope(p0), samples=150)
        assert cmp_.max_deviation <= 1e-6 and cmp_.c == pytest.approx(1.0, abs=1e-6)
        rng = np.random.default_rng(0)
        for _ in range(50):
            rho = bell_diagonal(rng.dirichlet(np.ones(4)))
            assert c.f_bank(local, rho) == pytest.approx(e_s_p0_linear(rho, p0, 0.0, 1.0), abs=1e-6)

    def test_rejects_rank_deficient_anchor(self, thermo, thermo_curve):
        c = tangent_coeffs(thermo_curve, 70)
        with pytest.raises(ValueError):
            bank_vs_relent_check(thermo, c, qm.pure_state([1, 0]))


def test_subset_convexity(local):
    p0 = 0.8
    a = bell_diagonal([p0, 0.2, 0.0, 0.0])
    b = bell_diagonal([p0, 0.05, 0.1, 0.05])
    assert subset_convexity_margin(local, a, b) < 1e-9
