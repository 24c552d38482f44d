"""Bank states, bank curves, tangent bank monotones and the first law.

For a two-resource theory with monotones ``(E1, E2)`` the bank curve is the
lower-left Pareto frontier of the resource diagram.  At an interior, strictly
convex point with slope ``s = dE2/dE1`` the bank monotone is

    f_bank(rho) = alpha E1(rho) + beta E2(rho) - gamma,   (alpha, beta) = (-s, 1)

and ``-beta/alpha`` is the exchange rate between the two batteries.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from . import quantum as qm
from .free_sets import FreeSetSpec, ParamFamily, closest_state
from .quantum import DensityMatrix

FD_STEP = 1e-4
RICHARDSON_TOL = 1e-5
CONVEXITY_MIN = 1e-8


class BankGeometryError(ValueError):
    """Anchor is an endpoint or sits on a non-convex stretch of the curve."""


def _require_two(theory):
    if theory.resources != 2:
        raise ValueError(f"{theory.label} has {theory.resources} resources; bank curves need two")


def _family_coords(theory, family: ParamFamily):
    m1, m2 = theory.monotones

    def coords(theta):
        st = family.builder(family.clip(np.atleast_1d(theta)))
        return m1.evaluate(st), m2.evaluate(st), st

    return coords


# --------------------------------------------------------------------------- bank-state test


@dataclass
class BankVerdict:
    is_bank: bool
    witness: DensityMatrix | None
    method: str
    note: str = ""
    coords: tuple = ()
    witness_coords: tuple = ()

    def __bool__(self):
        return self.is_bank


def _dominates(a, b, tol):
    """Whether point ``a`` Pareto-dominates ``b`` (both coordinates, one strictly)."""
    return a[0] <= b[0] + tol and a[1] <= b[1] + tol and (a[0] < b[0] - tol or a[1] < b[1] - tol)


def is_bank_state(theory, rho: DensityMatrix, sampler: Callable[[int], DensityMatrix] | None = None,
                  samples: int = 1000, tol: float = 1e-7, seed: int = 0) -> BankVerdict:
    """Pareto-minimality of ``rho`` in the two-monotone diagram.

    With a state family the check first solves ``min E2 s.t. E1 <= E1(rho)``
    (and the symmetric problem) over the family, which certifies the verdict
    relative to the family.  Sampled states are then scanned for a dominating
    point; the verdict records which method decided it.
    """
    _require_two(theory)
    m1, m2 = theory.monotones
    here = (m1.evaluate(rho), m2.evaluate(rho))
    fam = theory.state_family
    if fam is not None:
        curve = _FamilyCurve(theory, fam)
        for probe in (curve.min_e2_given_e1(here[0]), curve.min_e1_given_e2(here[1])):
            if probe is not None:
                pt, st = probe
                if _dominates(pt, here, tol):
                    return BankVerdict(False, st, "family-certificate",
                                       f"family state dominates at {pt[0]:.6g}, {pt[1]:.6g}", here, pt)
    sampler = sampler or (lambda s: theory.sample_state(s))
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        st = sampler(int(rng.integers(2**62)))
        pt = (m1.evaluate(st), m2.evaluate(st))
        if _dominates(pt, here, tol):
            return BankVerdict(False, st, "sampling", "sampled state dominates", here, pt)
    method = "family-certificate+sampling" if fam is not None else "sampling"
    note = f"no dominating state among {samples} samples"
    if fam is not None:
        note = "family optimum does not dominate; " + note
    return BankVerdict(True, None, method, note, here)


class _FamilyCurve:
    """Constrained minimisation of one monotone given the other over a family."""

    def __init__(self, theory, family: ParamFamily):
        self.family = family
        self.coords = _family_coords(theory, family)
        self.one_d = family.n_params == 1

    def _solve_1d(self, target, idx):
        lo, hi = self.family.bounds[0]
        a, b = self.coords(lo)[idx], self.coords(hi)[idx]
        tmin, tmax = min(a, b), max(a, b)
        if target <= tmin + 1e-13:
            return lo if a <= b else hi
        if target >= tmax - 1e-13:
            return hi if a <= b else lo
        return brentq(lambda t: self.coords(t)[idx] - target, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def locate(self, e1_target):
        """Family parameter of the curve point with ``E1 = e1_target``."""
        if self.one_d:
            return np.atleast_1d(self._solve_1d(e1_target, 0))
        return self._penalty(e1_target, 0, None)

    def _penalty(self, target, idx, x0):
        other = 1 - idx
        lo, hi = self.family.bounds[:, 0], self.family.bounds[:, 1]
        x = self.family.bounds.mean(axis=1) if x0 is None else np.asarray(x0, float)
        for mu in (1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8):
            def obj(th, mu=mu):
                c = self.coords(th)
                return c[other] + mu * (c[idx] - target) ** 2
            x = minimize(obj, x, method="L-BFGS-B", bounds=self.family.bounds).x
        return x

    def min_e2_given_e1(self, e1):
        th = self.locate(e1) if self.one_d else self._penalty(e1, 0, None)
        c = self.coords(th)
        if c[0] > e1 + 1e-9:
            return None
        return (c[0], c[1]), c[2]

    def min_e1_given_e2(self, e2):
        th = np.atleast_1d(self._solve_1d(e2, 1)) if self.one_d else self._penalty(e2, 1, None)
        c = self.coords(th)
        if c[1] > e2 + 1e-9:
            return None
        return (c[0], c[1]), c[2]


# --------------------------------------------------------------------------- bank curve


@dataclass
class BankPoint:
    E1: float
    E2: float
    witness: DensityMatrix
    param: tuple = ()


@dataclass
class BankCurve:
    points: list
    monotone_labels: tuple
    param_names: tuple = ()
    notes: list = field(default_factory=list)
    locator: Callable | None = None
    evaluator: Callable | None = None

    @property
    def E1(self) -> np.ndarray:
        return np.array([p.E1 for p in self.points])

    @property
    def E2(self) -> np.ndarray:
        return np.array([p.E2 for p in self.points])

    def violations(self, convex_tol: float = 1e-6, mono_tol: float = 1e-12) -> list:
        e1, e2 = self.E1, self.E2
        out = []
        for i in range(1, len(e1)):
            if not e1[i] > e1[i - 1]:
                out.append(f"E1 not strictly increasing at {i}")
            if e2[i] > e2[i - 1] + mono_tol:
                out.append(f"E2 increases at {i}")
        for i in range(1, len(e1) - 1):
            chord = _chord(e1, e2, i)
            if e2[i] > chord + convex_tol:
                out.append(f"convexity violated at {i} by {e2[i] - chord:.3e}")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["E1", "E2", *self.param_names])
        for p in self.points:
            w.writerow([repr(float(p.E1)), repr(float(p.E2)), *[repr(float(x)) for x in p.param]])
        return buf.getvalue()


def _chord(e1, e2, i):
    lam = (e1[i] - e1[i - 1]) / (e1[i + 1] - e1[i - 1])
    return (1 - lam) * e2[i - 1] + lam * e2[i + 1]


def trace_bank_curve(theory, grid: Sequence[float] | None = None, n_points: int = 200) -> BankCurve:
    """Minimiser of ``E2`` subject to ``E1 = target`` for each grid target.

    One-parameter families are solved exactly by root finding on ``E1``;
    larger families use penalty continuation warm-started along the grid.
    Targets outside the achievable range are dropped with a note.
    """
    _require_two(theory)
    fam = theory.state_family
    if fam is None:
        raise ValueError("bank curve tracing needs a state family")
    fc = _FamilyCurve(theory, fam)
    notes = []
    if fc.one_d:
        lo, hi = fam.bounds[0]
        e_ends = sorted([fc.coords(lo)[0], fc.coords(hi)[0]])
    else:
        e_ends = None
    if grid is None:
        if e_ends is None:
            raise ValueError("a grid of E1 targets is required for multi-parameter families")
        grid = np.linspace(e_ends[0], e_ends[1], n_points)
    pts = []
    x_prev = None
    for t in grid:
        if e_ends is not None and not (e_ends[0] - 1e-12 <= t <= e_ends[1] + 1e-12):
            notes.append(f"target {t:.6g} outside achievable interval [{e_ends[0]:.6g}, {e_ends[1]:.6g}]")
            continue
        th = fc.locate(t) if fc.one_d else fc._penalty(t, 0, x_prev)
        x_prev = th
        e1, e2, st = fc.coords(th)
        if abs(e1 - t) > 1e-6:
            notes.append(f"target {t:.6g} not reached (E1={e1:.6g})")
            continue
        pts.append(BankPoint(e1, e2, st, tuple(float(x) for x in np.atleast_1d(th))))
    pts.sort(key=lambda p: p.E1)
    dedup = []
    for p in pts:
        if dedup and p.E1 <= dedup[-1].E1:
            continue
        dedup.append(p)

    def evaluator(e1):
        th = fc.locate(e1)
        c = fc.coords(th)
        return c[0], c[1]

    return BankCurve(dedup, tuple(theory.labels), tuple(fam.names), notes, fc.locate, evaluator)


# --------------------------------------------------------------------------- tangent monotone


@dataclass(frozen=True)
class BankMonotoneCoeffs:
    alpha: float
    beta: float
    gamma: float
    anchor: tuple
    slope: float = math.nan
    richardson: float = 0.0
    flagged: bool = False
    anchor_state: DensityMatrix | None = None
    weights: tuple = ()  # one coefficient per monotone; overrides (alpha, beta) when set

    @property
    def rate(self) -> float:
        """Interconversion rate ``-beta/alpha`` (``-inf`` when alpha vanishes)."""
        return -self.beta / self.alpha if self.alpha > 1e-12 else -math.inf

    def f_bank(self, theory, rho: DensityMatrix) -> float:
        if self.weights:
            return sum(w * m.evaluate(rho) for w, m in zip(self.weights, theory.monotones)) - self.gamma
        e1, e2 = (m.evaluate(rho) for m in theory.monotones)
        return self.alpha * e1 + self.beta * e2 - self.gamma


def tangent_coeffs(curve: BankCurve, anchor_index: int, h: float = FD_STEP) -> BankMonotoneCoeffs:
    """Tangent line of the bank curve at an interior, strictly convex point."""
    n = len(curve.points)
    if anchor_index < 0:
        anchor_index += n
    if anchor_index <= 0 or anchor_index >= n - 1:
        raise BankGeometryError("rate undefined at invariant-set endpoint")
    e1, e2 = curve.E1, curve.E2
    second = _chord(e1, e2, anchor_index) - e2[anchor_index]
    if not second > CONVEXITY_MIN:
        raise BankGeometryError(
            f"non-convex neighbourhood at index {anchor_index}: chord gap {second:.3e} <= {CONVEXITY_MIN:g}"
        )
    a1, a2 = float(e1[anchor_index]), float(e2[anchor_index])
    if curve.evaluator is not None:
        h = min(h, 0.5 * (e1[anchor_index] - e1[anchor_index - 1]), 0.5 * (e1[anchor_index + 1] - e1[anchor_index]))

        def central(step):
            lo = curve.evaluator(a1 - step)
            hi = curve.evaluator(a1 + step)
            return (hi[1] - lo[1]) / (hi[0] - lo[0])

        s = central(h)
        s_half = central(h / 2)
        disc = abs(s - s_half)
        slope = (4 * s_half - s) / 3
    else:
        # three-point derivative on the non-uniform grid
        x0, x1, x2 = e1[anchor_index - 1 : anchor_index + 2]
        y0, y1, y2 = e2[anchor_index - 1 : anchor_index + 2]
        slope = (
            y0 * (x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2 * x1 - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (x1 - x0) / ((x2 - x0) * (x2 - x1))
        )
        disc = 0.0
    if slope > 0:
        raise BankGeometryError(f"curve increases at index {anchor_index} (slope {slope:.3e})")
    alpha, beta = -float(slope), 1.0
    gamma = alpha * a1 + beta * a2
    return BankMonotoneCoeffs(
        alpha, beta, gamma, (a1, a2), float(slope), disc, disc > RICHARDSON_TOL,
        curve.points[anchor_index].witness,
    )


def tangency_margin(theory, coeffs: BankMonotoneCoeffs, states) -> float:
    """Minimum of ``f_bank`` over ``states`` (non-negative when the tangent supports the state space)."""
    return min(coeffs.f_bank(theory, s) for s in states)


def normal_vector_coeffs(theory, betas: Sequence[float], h: float = 1e-4) -> list:
    """Tangent-plane coefficients at ``tau_beta`` for the three-resource thermo theory.

    The plane normal is ``r_1 x r_2`` with ``r_i`` the derivative of
    ``(M_A, M_B, E_FS)`` along ``beta_i``; it is scaled so the purity
    coefficient is ``+1``, which makes it equal to ``(beta_1, beta_2, 1)``.
    """
    if theory.kind != "thermo" or theory.resources != 3:
        raise ValueError("normal vectors need the two-charge thermodynamic theory")
    charges = theory.charges
    b = np.asarray(betas, dtype=float)

    def coords(bb):
        return np.array(theory.coordinates(qm.gibbs_state(charges, bb)))

    r = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        r.append((coords(b + e) - coords(b - e)) / (2 * h))
    nvec = np.cross(r[0], r[1])
    if np.linalg.norm(nvec) < 1e-10 or abs(nvec[2]) < 1e-14:
        raise BankGeometryError("degenerate tangent plane (cross product vanishes)")
    return (nvec / nvec[2]).tolist()


def tangent_plane_coeffs(theory, betas: Sequence[float], h: float = 1e-4) -> BankMonotoneCoeffs:
    """Affine monotone ``n . (M_A, M_B, E_FS) - gamma`` vanishing at ``tau_beta``."""
    nvec = normal_vector_coeffs(theory, betas, h)
    tau = qm.gibbs_state(theory.charges, np.asarray(betas, dtype=float))
    anchor = tuple(theory.coordinates(tau))
    gamma = float(np.dot(nvec, anchor))
    return BankMonotoneCoeffs(nvec[0], nvec[1], gamma, anchor, anchor_state=tau, weights=tuple(nvec))


# --------------------------------------------------------------------------- first law


@dataclass
class FirstLawReport:
    lhs: float
    rhs: float
    residual: float
    rate: float
    breakdown: dict = field(default_factory=dict)

    def ok(self, tol: float = 1e-8) -> bool:
        return abs(self.residual) <= tol


def first_law_check(theory, coeffs: BankMonotoneCoeffs, rho: DensityMatrix, sigma: DensityMatrix,
                    dW1: float, dW2: float) -> FirstLawReport:
    """Compare ``alpha dW1 + beta dW2`` with ``f_bank(rho) - f_bank(sigma)``.

    For thermodynamic theories the report also carries the ``dU = Q - W``
    decomposition with ``T = 1/alpha`` (energy per bit).
    """
    lhs = coeffs.alpha * dW1 + coeffs.beta * dW2
    rhs = coeffs.f_bank(theory, rho) - coeffs.f_bank(theory, sigma)
    residual = lhs - rhs
    rate = -coeffs.beta / coeffs.alpha if coeffs.alpha > 1e-12 else math.inf
    breakdown = {}
    if theory.kind == "thermo" and coeffs.alpha > 1e-12:
        temp = 1.0 / coeffs.alpha
        du = -dW1
        q = temp * dW2
        w = temp * rhs
        breakdown = {"T": temp, "dU": du, "Q": q, "W": w, "dU-(Q-W)": du - (q - w)}
    return FirstLawReport(lhs, rhs, residual, rate, breakdown)


def resource_deltas(theory, rho: DensityMatrix, sigma: DensityMatrix) -> tuple:
    """``dW_i = f_i(rho) - f_i(sigma)``: battery changes that pay for ``rho -> sigma``."""
    return tuple(m.evaluate(rho) - m.evaluate(sigma) for m in theory.monotones)


# --------------------------------------------------------------------------- bank vs relative entropy


@dataclass
class RelEntComparison:
    c: float
    max_deviation: float
    samples: int
    anchor: str


def bank_vs_relent_check(theory, coeffs: BankMonotoneCoeffs, anchor_witness, samples: int = 200,
                         seed: int = 0, sampler: Callable[[int], DensityMatrix] | None = None) -> RelEntComparison:
    """Fit ``f_bank ~ c * D(. || anchor)`` by least squares over sampled states.

    ``anchor_witness`` is either a full-rank state (singleton bank subset) or
    a :class:`FreeSetSpec` describing the bank subset.  The reported deviation
    is ``max |f - c D| / max |f|``.
    """
    sampler = sampler or (lambda s: theory.sample_state(s))
    rng = np.random.default_rng(seed)
    if isinstance(anchor_witness, DensityMatrix):
        if anchor_witness.spectrum[0] <= qm.SUPPORT_TOL:
            raise ValueError("anchor witness must be full rank")

        def dist(r):
            return qm.relative_entropy(r, anchor_witness)

        label = "state"
    elif isinstance(anchor_witness, FreeSetSpec):
        def dist(r):
            return closest_state(anchor_witness, r).value

        label = anchor_witness.label
    else:
        raise TypeError("anchor must be a DensityMatrix or FreeSetSpec")
    f = np.empty(samples)
    d = np.empty(samples)
    for i in range(samples):
        st = sampler(int(rng.integers(2**62)))
        f[i] = coeffs.f_bank(theory, st)
        d[i] = dist(st)
    c = float(f @ d / (d @ d)) if d @ d > 0 else math.nan
    dev = float(np.max(np.abs(f - c * d)) / np.max(np.abs(f))) if np.max(np.abs(f)) > 0 else 0.0
    return RelEntComparison(c, dev, samples, label)


def subset_convexity_margin(theory, a: DensityMatrix, b: DensityMatrix, lambdas=(0.25, 0.5, 0.75)) -> float:
    """Largest change of either monotone along mixtures of two bank-subset members."""
    ref = theory.coordinates(a)
    worst = 0.0
    for lam in lambdas:
        mix = qm.mixture([a, b], [lam, 1 - lam])
        worst = max(worst, max(abs(x - y) for x, y in zip(theory.coordinates(mix), ref)))
    return worst
