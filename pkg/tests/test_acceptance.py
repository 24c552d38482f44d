"""One check per acceptance criterion; each prints a PASS/FAIL line before asserting."""
import math
import time

import numpy as np
import pytest

from multires import quantum as qm
from multires.bank import (
    bank_vs_relent_check,
    first_law_check,
    resource_deltas,
    tangency_margin,
    tangent_coeffs,
    tangent_plane_coeffs,
    trace_bank_curve,
)
from multires.free_sets import Singleton, closest_state, grid_oracle
from multires.monotones import property_suite_M, superadditivity_check
from multires.protocol import back_action_scaling, run_interconversion
from multires.theories import (
    bell_diagonal,
    build_local_control_theory,
    build_thermo_theory,
    css_polytope,
    solve_betas,
)

H = qm.Observable(np.diag([0.0, 1.0]), "H")
X = qm.Observable(np.array([[0, 1], [1, 0]]), "X")
Z = qm.Observable(np.diag([1.0, -1.0]), "Z")


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def h(p):
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p)) if 0 < p < 1 else 0.0


def curve_with(theory, e1):
    base = trace_bank_curve(theory, n_points=200)
    c = trace_bank_curve(theory, grid=sorted(set(base.E1.tolist()) | {e1}))
    return c, int(np.argmin(np.abs(c.E1 - e1)))


def test_1_purity_closed_form(report):
    t = time.perf_counter()
    worst = 0.0
    for d in (2, 3, 4):
        fset = Singleton(qm.maximally_mixed(d))
        for s in range(1000):
            rho = qm.random_density(d, 1000 * d + s)
            worst = max(worst, abs(closest_state(fset, rho).value - (math.log2(d) - qm.von_neumann_entropy(rho))))
    dt = time.perf_counter() - t
    ok = worst <= 1e-9 and dt < 10
    assert report(1, ok, f"max |E_FS - (log d - S)| = {worst:.2e} over 3000 states, {dt:.2f} s")


def test_2_local_control_entanglement(report):
    worst_fw, worst_grid = 0.0, 0.0
    for p0 in np.round(np.arange(0.5, 1.0001, 0.05), 2):
        rest = 1 - p0
        for w in ([p0, rest, 0, 0], [p0, rest / 3, rest / 3, rest / 3], [p0, rest / 2, 0, rest / 2]):
            rho = bell_diagonal(w)
            exact = 1 - h(p0)
            worst_fw = max(worst_fw, abs(closest_state(css_polytope(), rho).value - exact))
            worst_grid = max(worst_grid, abs(grid_oracle(css_polytope(), rho, 200) - exact))
    ok = worst_fw <= 1e-6 and worst_grid <= 1e-3
    assert report(2, ok, f"solver error {worst_fw:.2e} (tol 1e-6), grid error {worst_grid:.2e} (tol 1e-3)")


def test_3_jaynes_round_trip(report):
    rng = np.random.default_rng(0)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        b = rng.uniform(-3, 3, 2)
        tau = qm.gibbs_state([X, Z], b)
        rec = solve_betas([X, Z], [qm.expectation(tau, X), qm.expectation(tau, Z)])
        worst = max(worst, float(np.max(np.abs(np.asarray(rec) - b))))
    dt = time.perf_counter() - t
    ok = worst <= 1e-6 and dt < 30
    assert report(3, ok, f"max |beta - recovered| = {worst:.2e} over 100 pairs, {dt:.2f} s")


def test_4_thermo_tangent_identity(report):
    th = build_thermo_theory([X, Z])
    rng = np.random.default_rng(0)
    worst_rel, worst_dev, cs = 0.0, 0.0, []
    for _ in range(20):
        b = rng.uniform(0, 3, 2)
        c = tangent_plane_coeffs(th, b)
        # E_tau = b1<A> + b2<B> - S + log Z; with E_FS = log d - S the entropy slot maps to +1
        expect = np.array([b[0], b[1], 1.0])
        worst_rel = max(worst_rel, float(np.max(np.abs(np.array(c.weights) - expect) / np.abs(expect))))
        cmp_ = bank_vs_relent_check(th, c, c.anchor_state, samples=200)
        worst_dev = max(worst_dev, cmp_.max_deviation)
        cs.append(cmp_.c)
    ok = worst_rel <= 1e-4 and worst_dev <= 1e-6
    assert report(4, ok, f"normal rel error {worst_rel:.2e}, relent deviation {worst_dev:.2e}, "
                         f"fitted c in [{min(cs):.6f}, {max(cs):.6f}]")


def test_5_first_law(report):
    th = build_thermo_theory([H])
    worst = 0.0
    for beta in (0.25, 0.5, 1.0, 2.0, 4.0):
        curve, idx = curve_with(th, qm.expectation(qm.gibbs_state([H], [beta]), H))
        c = tangent_coeffs(curve, idx)
        for s in range(100):
            rho, sigma = qm.random_density(2, 2 * s), qm.random_density(2, 2 * s + 1)
            dw1, dw2 = resource_deltas(th, rho, sigma)
            worst = max(worst, abs(first_law_check(th, c, rho, sigma, dw1, dw2).residual))
    ok = worst <= 1e-8
    assert report(5, ok, f"max first-law residual {worst:.2e} over 5 temperatures x 100 pairs")


def test_6_interconversion_rate(report):
    parts, ok = [], True
    for p0 in (0.7, 0.9):
        rel = []
        for n in (100, 1000, 10_000):
            t = run_interconversion(n, p0, 10)
            rel.append(t.rate_error / abs(t.asymptotic_rate))
        ok &= rel[0] > rel[1] > rel[2] and rel[2] < 0.02
        parts.append(f"p0={p0}: " + ", ".join(f"{x:.3%}" for x in rel))
    assert report(6, ok, "relative rate error at n=1e2,1e3,1e4 -> " + "; ".join(parts))


def test_7_back_action_scaling(report):
    slopes = {p0: back_action_scaling(p0, 10, [100, 1000, 10_000, 100_000]).slope_delta for p0 in (0.7, 0.9)}
    ok = all(-1.3 <= s <= -0.7 for s in slopes.values())
    assert report(7, ok, "log-log slope of delta_n: " + ", ".join(f"p0={k}: {v:.4f}" for k, v in slopes.items()))


def test_8_bank_geometry(report):
    parts, ok = [], True
    for th in (build_thermo_theory([H]), build_local_control_theory(0.0, 1.0)):
        curve = trace_bank_curve(th, n_points=200)
        viol = curve.violations()
        # random states plus the curve witnesses, where the certificate is tight
        states = [th.sample_state(s) for s in range(10_000)] + [p.witness for p in curve.points]
        margins = [tangency_margin(th, tangent_coeffs(curve, i), states) for i in (40, 100, 160)]
        ok &= len(curve.points) == 200 and not viol and min(margins) >= -1e-6
        parts.append(f"{th.label}: {len(curve.points)} pts, {len(viol)} violations, min tangency {min(margins):.2e}")
    assert report(8, ok, "; ".join(parts))


def test_9_property_suites(report):
    parts, ok = [], True
    for th in (build_thermo_theory([H]), build_local_control_theory(0.0, 1.0)):
        rep = property_suite_M(th, 1000, seed=0, properties=("M3", "M4", "M5"))
        worst = min(rep.worst(k) for k in ("M3", "M4", "M5"))
        ok &= worst >= -1e-8
        parts.append(f"{th.label} M3/M4/M5 worst {worst:.2e}")
    sup, _ = superadditivity_check(qm.gibbs_state([H], [1.0]), qm.gibbs_state([Z], [0.5]), 1000, seed=0)
    ok &= sup >= -1e-9
    lip = property_suite_M(build_thermo_theory([H]), 1000, seed=0, properties=("M7",))
    lip_m = min(r.worst_margin for r in lip.records if r.monotone == "M_H")
    ok &= lip_m >= 0
    parts.append(f"superadditivity worst {sup:.2e}; Lipschitz worst {lip_m:.2e}")
    assert report(9, ok, "; ".join(parts))
