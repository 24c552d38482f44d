"""Resource monotones, battery accounting and finite-scale property checks.

Two physical kinds are provided: the relative-entropy distance from a convex
set (:class:`RelEntropyDistance`) and the shifted average of an observable
(:class:`AvgObservable`).  :class:`FunctionMonotone` wraps an arbitrary state
functional and exists for diagnostics, e.g. to confirm that the property suite
catches a broken candidate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quantum as qm
from .free_sets import FreeSetSpec, Singleton, closest_state
from .quantum import DensityMatrix, Observable

CLOSED_FORM_TOL = 1e-8
ITERATIVE_TOL = 1e-5


@dataclass(frozen=True)
class MonotoneValue:
    value: float
    gap: float = 0.0
    converged: bool = True


class Monotone:
    kind = ""
    label = ""
    exact = True  # False when an iterative solver participates

    def evaluate_detail(self, rho: DensityMatrix) -> MonotoneValue:
        raise NotImplementedError

    def evaluate(self, rho: DensityMatrix) -> float:
        return self.evaluate_detail(rho).value

    def __call__(self, rho: DensityMatrix) -> float:
        return self.evaluate(rho)

    def n_copy(self, n: int) -> "Monotone":
        """The same monotone on ``n`` copies of the system."""
        raise NotImplementedError(f"{self.kind} has no n-copy extension")

    @property
    def default_tol(self) -> float:
        return CLOSED_FORM_TOL if self.exact else ITERATIVE_TOL


class RelEntropyDistance(Monotone):
    """``E_F(rho) = inf_{sigma in F} D(rho || sigma)`` in bits.

    ``closed_form`` may return the exact value for inputs it recognises (or
    None to defer to the solver); it is not carried over to ``n_copy``.
    """

    kind = "RelEntropyDistance"

    def __init__(
        self,
        fset: FreeSetSpec,
        label: str = "",
        tol: float = 1e-10,
        max_iter: int = 5000,
        closed_form: Callable[[DensityMatrix], float | None] | None = None,
    ):
        self.fset = fset
        self.label = label or f"E[{fset.label}]"
        self.tol = tol
        self.max_iter = max_iter
        self.closed_form = closed_form
        self.exact = isinstance(fset, Singleton)
        self._copies: dict[int, RelEntropyDistance] = {1: self}

    def evaluate_detail(self, rho):
        if self.closed_form is not None:
            v = self.closed_form(rho)
            if v is not None:
                return MonotoneValue(float(v))
        res = closest_state(self.fset, rho, self.tol, self.max_iter)
        return MonotoneValue(res.value, res.certificate_gap, res.converged)

    def n_copy(self, n):
        if n not in self._copies:
            self._copies[n] = RelEntropyDistance(
                self.fset.tensor_power(n), f"{self.label}^({n})", self.tol, self.max_iter
            )
        return self._copies[n]

    def __repr__(self):
        return f"RelEntropyDistance({self.label!r}, {self.fset!r})"


class AvgObservable(Monotone):
    """``M_A(rho) = tr(A rho) - E_g`` with ``E_g`` the smallest eigenvalue of ``A``."""

    kind = "AvgObservable"

    def __init__(self, observable: Observable, label: str = "", ground_value: float | None = None):
        g = observable.min_eigenvalue
        if ground_value is not None and abs(ground_value - g) > 1e-10:
            raise ValueError(f"ground value {ground_value} differs from min eigenvalue {g}")
        self.observable = observable
        self.ground_value = g if ground_value is None else float(ground_value)
        self.label = label or f"M[{observable.label}]"
        self._copies: dict[int, AvgObservable] = {1: self}

    def evaluate_detail(self, rho):
        return MonotoneValue(qm.expectation(rho, self.observable) - self.ground_value)

    def n_copy(self, n):
        if n not in self._copies:
            self._copies[n] = AvgObservable(
                qm.sum_embed(self.observable, n), f"{self.label}^({n})", n * self.ground_value
            )
        return self._copies[n]

    @property
    def norm(self) -> float:
        return self.observable.norm

    def __repr__(self):
        return f"AvgObservable({self.label!r})"


class FunctionMonotone(Monotone):
    """Wraps ``fn(rho) -> float``; ``fn`` must accept states of any dimension."""

    kind = "Function"

    def __init__(self, fn: Callable[[DensityMatrix], float], label: str = "custom"):
        self.fn = fn
        self.label = label

    def evaluate_detail(self, rho):
        return MonotoneValue(float(self.fn(rho)))

    def n_copy(self, n):
        return self


def negated_entropy(label: str = "negated_entropy") -> FunctionMonotone:
    """``-S(rho)``: not a monotone (it grows under partial trace of pure states)."""
    return FunctionMonotone(lambda rho: -qm.von_neumann_entropy(rho), label)


# --------------------------------------------------------------------------- accounting


@dataclass(frozen=True)
class ResourceCoordinates:
    values: tuple[float, ...]
    labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class BatteryDelta:
    monotone_label: str
    delta: float


def evaluate(m: Monotone, rho: DensityMatrix) -> float:
    return m.evaluate(rho)


def coordinates(monotones, rho: DensityMatrix) -> ResourceCoordinates:
    return ResourceCoordinates(tuple(m.evaluate(rho) for m in monotones), tuple(m.label for m in monotones))


def delta_W(m: Monotone, omega_before: DensityMatrix, omega_after: DensityMatrix) -> BatteryDelta:
    """Resource deposited in a battery: ``f(after) - f(before)``."""
    if omega_before.dim != omega_after.dim:
        raise ValueError("battery states must share one dimension")
    return BatteryDelta(m.label, m.evaluate(omega_after) - m.evaluate(omega_before))


def transformation_cost(m: Monotone, rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Battery change needed for ``rho -> sigma`` without a bank: ``f(rho) - f(sigma)``."""
    return m.evaluate(rho) - m.evaluate(sigma)


@dataclass(frozen=True)
class TrendResult:
    values: list
    truncated: bool = False
    note: str = ""


def regularization_trend(m: Monotone, rho: DensityMatrix, n_max: int) -> TrendResult:
    """``f(rho^{(x)n}) / n`` for ``n = 1..n_max``, stopping early at the dimension cap."""
    out = []
    for n in range(1, n_max + 1):
        if rho.dim ** n > qm.max_dim():
            return TrendResult(out, True, f"stopped at n={n - 1}: dimension cap {qm.max_dim()}")
        out.append(m.n_copy(n).evaluate(qm.tensor_power(rho, n)) / n)
    return TrendResult(out)


# --------------------------------------------------------------------------- property suite


@dataclass
class PropertyRecord:
    name: str
    monotone: str
    samples: int
    worst_margin: float
    passed: bool | None  # None: reported only
    note: str = ""
    counterexample: str = ""


@dataclass
class SuiteReport:
    theory: str
    seed: int
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.records)

    def failures(self):
        return [r for r in self.records if r.passed is False]

    def worst(self, name: str) -> float:
        vals = [r.worst_margin for r in self.records if r.name == name]
        return min(vals) if vals else math.nan

    def to_text(self) -> str:
        lines = [f"# suite theory={self.theory} seed={self.seed}"]
        for r in self.records:
            verdict = {True: "pass", False: "FAIL", None: "report"}[r.passed]
            line = f"{r.name}\t{r.monotone}\tsamples={r.samples}\tworst_margin={r.worst_margin:.3e}\t{verdict}"
            if r.note:
                line += f"\t{r.note}"
            if r.counterexample:
                line += f"\tcounterexample={r.counterexample}"
            lines.append(line)
        return "\n".join(lines)


class _Tracker:
    """Keeps the worst margin and where it happened."""

    def __init__(self):
        self.worst = math.inf
        self.where = ""
        self.count = 0

    def add(self, margin: float, where: str):
        self.count += 1
        if margin < self.worst:
            self.worst, self.where = margin, where


def _record(name, m, tr: _Tracker, tol, note="", hard=True):
    passed = (tr.worst >= -tol) if hard else None
    return PropertyRecord(name, m.label, tr.count, tr.worst, passed, note, "" if passed is not False else tr.where)


def _detail(m: Monotone, rho):
    d = m.evaluate_detail(rho)
    return d.value, d.gap


def _apply_unitary_mixture(rho: DensityMatrix, unitaries, weights) -> DensityMatrix:
    data = sum(w * (u @ rho.data @ u.conj().T) for w, u in zip(weights, unitaries))
    return DensityMatrix(data, rho.dims, check=False)


def property_suite_M(theory, sample_count: int = 100, seed: int = 0, tol: float | None = None,
                     properties=("M1", "M2", "M3", "M4", "M5", "M6", "M7", "monotonicity")) -> SuiteReport:
    """Finite-scale checks of M1-M7 and of monotonicity under sampled allowed maps.

    Margins are signed so that a non-negative margin means the inequality holds;
    certificate gaps of iterative solves are credited to the margin.  A record
    passes when its worst margin is at least ``-tol`` (default 1e-8 for
    closed-form monotones, 1e-5 when an iterative solver participates).
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport(theory.label, seed)
    d = theory.dim
    dims = theory.dims

    def sample(i, dim=d, sub=dims):
        return qm.random_density(dim, int(rng.integers(2**62)), sub)

    main = [sample(i) for i in range(sample_count)]
    for mi, m in enumerate(theory.monotones):
        t = m.default_tol if tol is None else tol
        own_sets = [theory.invariant_sets[mi]]
        f1 = [_detail(m, r) for r in main]

        if "M1" in properties:
            for bat in getattr(theory, "batteries", []):
                bm = bat.monotones[mi]
                vals = [bm.evaluate(st) for _, st in bat.states]
                tr = _Tracker()
                if mi == bat.stores:
                    # the stored resource must change strictly with the cell count
                    tr.add(float(np.min(np.diff(vals))) if len(vals) > 1 else 0.0, f"battery {bat.label}")
                    report.records.append(_record("M1", m, tr, 0.0, f"{bat.label} stores {m.label}"))
                else:
                    tr.add(-(max(vals) - min(vals)), f"battery {bat.label}")
                    report.records.append(_record("M1", m, tr, t, f"{bat.label} keeps {m.label} fixed"))

        if "M3" in properties:
            tr = _Tracker()
            for k, fset in enumerate(own_sets):
                for j, g in enumerate(fset.members(5, seed)):
                    v = m.evaluate(g)
                    tr.add(min(v, t - v), f"set {k} member {j}")
            if tr.count:
                report.records.append(_record("M3", m, tr, 1e-9, "value in [-1e-9, tol] on members"))

        two = None
        try:
            two = m.n_copy(2)
        except NotImplementedError:
            pass

        if two is not None and d * d <= qm.max_dim():
            pairs = [(main[i], main[(i + 1) % sample_count]) for i in range(sample_count)]
            if "M2" in properties or "M5" in properties:
                tr2, tr5 = _Tracker(), _Tracker()
                for i, (a, b) in enumerate(pairs):
                    v2, g2 = _detail(two, qm.tensor(a, b))
                    fa, ga = f1[i]
                    fb, gb = f1[(i + 1) % sample_count]
                    gaps = g2 + ga + gb
                    tr2.add(gaps - abs(v2 - fa - fb), f"pair {i}")
                    tr5.add(fa + fb - v2 + g2, f"pair {i}")
                if "M2" in properties:
                    report.records.append(_record("M2", m, tr2, t, "additivity on product states"))
                if "M5" in properties:
                    report.records.append(_record("M5", m, tr5, t, "f(a⊗b) <= f(a)+f(b)"))
            if "M4" in properties:
                tr = _Tracker()
                for i in range(sample_count):
                    big = sample(i, d * d, dims + dims)
                    v2, g2 = _detail(two, big)
                    for keep in ((0,), (1,)) if len(dims) == 1 else (tuple(range(len(dims))), tuple(range(len(dims), 2 * len(dims)))):
                        red = qm.partial_trace(big, keep)
                        vr, gr = _detail(m, red)
                        tr.add(v2 - vr + g2, f"sample {i} keep {keep}")
                report.records.append(_record("M4", m, tr, t, "f(Tr_k rho) <= f(rho)"))

        if "M6" in properties and (isinstance(m, AvgObservable) or (m.kind == "RelEntropyDistance" and m.exact)):
            tr = _Tracker()
            for i, r in enumerate(main[: max(1, sample_count // 10)]):
                for n in (2, 3):
                    if d ** n > qm.max_dim():
                        break
                    vn = m.n_copy(n).evaluate(qm.tensor_power(r, n)) / n
                    tr.add(f1[i][0] - vn, f"sample {i} n={n}")
            report.records.append(_record("M6", m, tr, t, "f(rho^n)/n <= f(rho), n<=3"))

        if "M7" in properties:
            if isinstance(m, AvgObservable):
                tr = _Tracker()
                for n in (1, 2):
                    if d ** n > qm.max_dim():
                        break
                    mn = m.n_copy(n)
                    cnt = sample_count if n == 1 else max(1, sample_count // 10)
                    for i in range(cnt):
                        a = sample(i, d ** n, dims * n)
                        b = sample(i, d ** n, dims * n)
                        bound = n * m.norm * qm.trace_distance(a, b)
                        tr.add(bound - abs(mn.evaluate(a) - mn.evaluate(b)), f"pair {i} n={n}")
                report.records.append(_record("M7", m, tr, 0.0, "|ΔM| <= n||A|| ||ρ-σ||_1"))
            else:
                # empirical modulus of continuity, reported only
                ratios = []
                for i in range(min(sample_count, 50)):
                    a = main[i]
                    eps = 10.0 ** -rng.uniform(1, 4)
                    b = qm.mixture([a, sample(i)], [1 - eps, eps])
                    td = qm.trace_distance(a, b)
                    if td > 0:
                        ratios.append(abs(m.evaluate(a) - m.evaluate(b)) / (td * math.log2(d)))
                tr = _Tracker()
                tr.add(max(ratios) if ratios else 0.0, "")
                tr.count = len(ratios)
                report.records.append(
                    _record("M7", m, tr, t, "max |ΔE|/(||ρ-σ||_1 log d) over near pairs", hard=False)
                )

        if "monotonicity" in properties:
            tr = _Tracker()
            sym = getattr(theory, "symmetry_unitary", None)
            for i, r in enumerate(main):
                v, g = f1[i]
                outs = []
                if sym is not None:
                    us = [sym(rng) for _ in range(3)]
                    outs.append(("unitary-mixture", _apply_unitary_mixture(r, us, rng.dirichlet(np.ones(3)))))
                for label, ch in getattr(theory, "channels", []):
                    outs.append((label, ch(r, rng)))
                for k, fset in enumerate(own_sets):
                    gamma = fset.members(1, seed)[0]
                    p = float(rng.uniform())
                    outs.append((f"swap-with-member({k})", qm.mixture([r, gamma], [1 - p, p])))
                for label, out in outs:
                    vo, go = _detail(m, out)
                    tr.add(v - vo + g + go, f"sample {i} {label}")
            if tr.count:
                report.records.append(_record("monotonicity", m, tr, t, "f(E(rho)) <= f(rho)"))
    return report


def superadditivity_check(gamma_a: DensityMatrix, gamma_b: DensityMatrix, samples: int, seed: int = 0):
    """Margins of ``E(rho_AB) >= E(rho_A) + E(rho_B)`` for the singleton ``{gamma_a ⊗ gamma_b}``.

    Returns ``(worst_margin, equality_residual_on_products)``.
    """
    rng = np.random.default_rng(seed)
    da, db = gamma_a.dim, gamma_b.dim
    joint = qm.tensor(gamma_a, gamma_b)
    worst = math.inf
    for _ in range(samples):
        rho = qm.random_density(da * db, int(rng.integers(2**62)), (da, db))
        ra, rb = qm.partial_trace(rho, [0]), qm.partial_trace(rho, [1])
        lhs = qm.relative_entropy(rho, joint)
        rhs = qm.relative_entropy(ra, gamma_a) + qm.relative_entropy(rb, gamma_b)
        worst = min(worst, lhs - rhs)
    eq = 0.0
    for _ in range(max(1, samples // 10)):
        a = qm.random_density(da, int(rng.integers(2**62)))
        b = qm.random_density(db, int(rng.integers(2**62)))
        prod = qm.tensor(a, b)
        eq = max(eq, abs(qm.relative_entropy(prod, joint) - qm.relative_entropy(a, gamma_a) - qm.relative_entropy(b, gamma_b)))
    return worst, eq
