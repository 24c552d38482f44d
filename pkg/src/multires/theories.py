"""Built-in multi-resource theories.

* Thermodynamics with one or two conserved charges: average-charge monotones
  plus the purity monotone ``E_FS = log2 d - S``; bank states are the
  grand-canonical states ``2**(-sum beta_i A_i) / Z``.
* Two-qubit local control under an energy constraint: the singlet is the
  ground state of ``H = E0 |s><s| + E1 Pi_triplet`` and entanglement is measured
  against the polytope ``F_css`` of half-singlet, half-triplet mixtures.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import Delaunay

from . import quantum as qm
from .free_sets import FreeSetSpec, ParamFamily, Singleton, VertexPolytope
from .monotones import AvgObservable, Monotone, RelEntropyDistance
from .quantum import DensityMatrix, Observable


class TheoryError(ValueError):
    """Invalid theory construction (degenerate ground space, bad energies, ...)."""


class InfeasibleTargetError(ValueError):
    """Targets outside the probed joint numerical range of the charges."""


@dataclass
class BatterySpec:
    """Declared battery: states ordered by increasing stored resource.

    ``monotones[i]`` is theory monotone ``i`` on the battery space and
    ``stores`` is the index of the resource the battery holds.
    """

    label: str
    states: list
    monotones: list
    stores: int


@dataclass
class TheorySpec:
    label: str
    kind: str
    dims: tuple
    monotones: list
    invariant_sets: list
    state_family: ParamFamily | None = None
    batteries: list = field(default_factory=list)
    symmetry_unitary: Callable | None = None
    channels: list = field(default_factory=list)
    charges: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.monotones) != len(self.invariant_sets):
            raise TheoryError("monotones and invariant sets must correspond one-to-one")
        for s in self.invariant_sets:
            if s.dim != self.dim:
                raise TheoryError(f"invariant set {s.label!r} has dim {s.dim}, theory has {self.dim}")
        if self.state_family is not None and self.state_family.dim != self.dim:
            raise TheoryError("state family dimension mismatch")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def resources(self) -> int:
        return len(self.monotones)

    @property
    def labels(self) -> list:
        return [m.label for m in self.monotones]

    def sample_state(self, seed: int) -> DensityMatrix:
        return qm.random_density(self.dim, seed, self.dims)

    def coordinates(self, rho: DensityMatrix) -> list:
        return [m.evaluate(rho) for m in self.monotones]


# --------------------------------------------------------------------------- thermodynamics


def _ground_singleton(a: Observable) -> Singleton:
    w, v = a.eig
    if len(w) > 1 and w[1] - w[0] <= 1e-9:
        raise TheoryError(f"charge {a.label!r} has a degenerate ground space")
    return Singleton(qm.pure_state(v[:, 0], a.dims), f"ground[{a.label}]")


def _commuting(charges) -> bool:
    return all(
        np.max(np.abs(a.data @ b.data - b.data @ a.data)) <= 1e-10 for a in charges for b in charges
    )


def _joint_eigenbasis(charges) -> np.ndarray:
    rng = np.random.default_rng(7)
    combo = sum(rng.standard_normal() * c.data for c in charges)
    return np.linalg.eigh(combo)[1]


def gibbs_family(charges: Sequence[Observable], beta_bounds) -> ParamFamily:
    charges = list(charges)
    names = [f"beta_{c.label or i}" for i, c in enumerate(charges)]
    return ParamFamily(beta_bounds, lambda b: qm.gibbs_state(charges, b), "gibbs", names)


def build_thermo_theory(charges: Sequence[Observable], beta_max: float = 100.0, battery_cells: int = 2) -> TheorySpec:
    """Thermodynamics with one or two conserved charges.

    Monotones are ``[M_A, (M_B), E_FS]`` with invariant sets ``[ground(A),
    (ground(B)), {I/d}]``.  The state family is the Gibbs family with
    ``beta in [0, beta_max]`` for one charge and ``[-beta_max, beta_max]^2``
    for two.
    """
    charges = list(charges)
    if not 1 <= len(charges) <= 2:
        raise TheoryError("thermo theory takes one or two charges")
    d = charges[0].dim
    if any(c.dim != d for c in charges):
        raise TheoryError("charges must share one dimension")
    dims = charges[0].dims
    grounds = [_ground_singleton(c) for c in charges]
    mm = Singleton(qm.maximally_mixed(d, dims), "I/d")
    names = ["A", "B"]
    mons: list[Monotone] = [
        AvgObservable(c, f"M_{c.label or names[i]}") for i, c in enumerate(charges)
    ]
    mons.append(RelEntropyDistance(mm, "E_FS"))
    notes = []
    vecs = np.array([c.data.ravel() for c in charges])
    if len(charges) > 1 and np.linalg.matrix_rank(np.vstack([vecs, np.eye(d).ravel()]), tol=1e-9) < len(charges) + 1:
        notes.append("charges are linearly dependent (modulo identity): Jaynes Hessian will be singular")
    if len(charges) == 1:
        bounds = [(0.0, beta_max)]
    else:
        bounds = [(-beta_max, beta_max)] * len(charges)
    family = gibbs_family(charges, bounds)

    sym = None
    if _commuting(charges):
        u = _joint_eigenbasis(charges)

        def sym(rng, u=u):
            return (u * np.exp(2j * np.pi * rng.random(d))) @ u.conj().T

    batteries = _thermo_batteries(charges, grounds, battery_cells)
    label = "thermo[" + ",".join(c.label or names[i] for i, c in enumerate(charges)) + "]"
    return TheorySpec(
        label, "thermo", dims, mons, grounds + [mm], family, batteries, sym, [], charges,
        {"beta_max": beta_max}, notes,
    )


def _thermo_batteries(charges, grounds, cells):
    d = charges[0].dim
    out = []
    zero = Observable(np.zeros((d, d)), "0")
    for i, c in enumerate(charges):
        w, v = c.eig
        g = grounds[i].state
        top = qm.pure_state(v[:, -1])
        states = [(k, _product([top] * k + [g] * (cells - k))) for k in range(cells + 1)]
        mons = [
            AvgObservable(qm.sum_embed(c if j == i else zero, cells)) for j in range(len(charges))
        ] + [RelEntropyDistance(Singleton(qm.maximally_mixed(d ** cells)), "E_FS")]
        out.append(BatterySpec(f"battery[{c.label}]", states, mons, i))
    g0 = grounds[0].state
    mm = qm.maximally_mixed(d)
    states = [(h, _product([g0] * h + [mm] * (cells - h))) for h in range(cells + 1)]
    mons = [AvgObservable(qm.sum_embed(zero, cells)) for _ in charges] + [
        RelEntropyDistance(Singleton(qm.maximally_mixed(d ** cells)), "E_FS")
    ]
    out.append(BatterySpec("battery[purity]", states, mons, len(charges)))
    return out


def _product(states):
    out = states[0]
    for s in states[1:]:
        out = qm.tensor(out, s)
    return out


# --------------------------------------------------------------------------- Jaynes inverse


@dataclass(frozen=True)
class JaynesResult:
    betas: list
    residual: float
    iterations: int
    degenerate: bool
    condition: float


def _probe_points(charges, n_probes=50, radius=60.0):
    k = len(charges)
    if k == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif k == 2:
        ang = 2 * np.pi * np.arange(n_probes) / n_probes
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((n_probes, k))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = []
    for u in dirs:
        tau = qm.gibbs_state(charges, radius * u)
        pts.append([qm.expectation(tau, c) for c in charges])
    return np.array(pts)


def targets_feasible(charges, targets) -> bool:
    """Whether ``targets`` lie strictly inside the hull of 50 large-|beta| probes."""
    pts = _probe_points(charges)
    t = np.asarray(targets, dtype=float)
    # work in the affine span of the probes (flat when charges are dependent)
    centre = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centre, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * max(s[0], 1e-300)))
    basis = vt[:rank]
    off = (t - centre) - basis.T @ (basis @ (t - centre))
    if np.linalg.norm(off) > 1e-9:
        return False
    red = (pts - centre) @ basis.T
    tr = basis @ (t - centre)
    if rank == 0:
        return False
    if rank == 1:
        return bool(red.min() < tr[0] < red.max())
    return bool(Delaunay(red).find_simplex(tr) >= 0)


def solve_betas_detail(charges, targets, tol: float = 1e-10, max_iter: int = 200, check: bool = True) -> JaynesResult:
    """Max-entropy inverse: betas with ``<A_i>_tau = t_i`` (base-2 convention).

    Minimises the convex dual ``log2 Z(beta) + sum_i beta_i t_i`` by damped
    Newton steps: exact gradient ``t_i - <A_i>``, Hessian from central
    differences of the gradient, least-squares solve so singular directions
    are tolerated, and Armijo backtracking on the dual.
    """
    charges = list(charges)
    t = np.asarray(targets, dtype=float)
    if len(t) != len(charges):
        raise ValueError("one target per charge")
    if check and not targets_feasible(charges, t):
        raise InfeasibleTargetError(f"targets {t.tolist()} are outside the joint numerical range")

    def dual(b):
        return qm.log2_partition(charges, b) + float(b @ t)

    def grad(b):
        tau = qm.gibbs_state(charges, b)
        return t - np.array([qm.expectation(tau, c) for c in charges])

    b = np.zeros(len(charges))
    g = grad(b)
    cond = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= tol:
            break
        h = 1e-5
        hess = np.empty((len(b), len(b)))
        for i in range(len(b)):
            e = np.zeros_like(b)
            e[i] = h
            hess[:, i] = (grad(b + e) - grad(b - e)) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        cond = float(np.linalg.cond(hess))
        step = -np.linalg.lstsq(hess, g, rcond=1e-12)[0]
        f0, slope = dual(b), float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
        a = 1.0
        while dual(b + a * step) > f0 + 1e-4 * a * slope and a > 1e-12:
            a *= 0.5
        b = b + a * step
        g = grad(b)
    degenerate = cond > 1e12
    if degenerate:
        warnings.warn(f"Jaynes Hessian is ill-conditioned (cond={cond:.2e}); betas are not unique", RuntimeWarning)
    return JaynesResult(b.tolist(), float(np.max(np.abs(g))), it, degenerate, cond)


def solve_betas(charges, targets, tol: float = 1e-10) -> list:
    return solve_betas_detail(charges, targets, tol).betas


# --------------------------------------------------------------------------- two-qubit local control

_R2 = 1.0 / math.sqrt(2.0)
# singlet, triplet 1..3 in the computational basis |00>,|01>,|10>,|11>
BELL_VECTORS = np.array(
    [
        [0.0, _R2, -_R2, 0.0],
        [0.0, _R2, _R2, 0.0],
        [_R2, 0.0, 0.0, -_R2],
        [_R2, 0.0, 0.0, _R2],
    ]
)
BELL_BASIS = BELL_VECTORS.T.astype(complex)  # columns are the Bell vectors


def bell_state(i: int) -> DensityMatrix:
    return qm.pure_state(BELL_VECTORS[i], (2, 2))


@dataclass(frozen=True)
class BellDiagonalState:
    """Weights over (singlet, triplet1, triplet2, triplet3)."""

    p: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (4,) or np.any(p < -1e-15) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("Bell-diagonal weights must be a probability 4-vector")

    @property
    def p0(self) -> float:
        return float(self.p[0])

    @property
    def in_S1(self) -> bool:
        return self.p0 >= 0.5

    def density(self) -> DensityMatrix:
        return bell_diagonal(self.p)


def bell_diagonal(p) -> DensityMatrix:
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    return DensityMatrix((BELL_BASIS * p) @ BELL_BASIS.conj().T, (2, 2), check=False)


def bell_weights(rho: DensityMatrix) -> np.ndarray:
    return np.real(np.einsum("ji,jk,ki->i", BELL_BASIS.conj(), rho.data, BELL_BASIS))


def bell_offdiagonal(rho: DensityMatrix) -> float:
    m = BELL_BASIS.conj().T @ rho.data @ BELL_BASIS
    return float(np.max(np.abs(m - np.diag(np.diag(m)))))


def bell_twirl(rho: DensityMatrix, tol: float = 1e-12) -> tuple[DensityMatrix, bool]:
    """Dephase in the Bell basis; the flag reports whether anything was removed."""
    return bell_diagonal(bell_weights(rho)), bell_offdiagonal(rho) > tol


def sigma_mm() -> DensityMatrix:
    return bell_diagonal([0.5, 0.5, 0.0, 0.0])


def css_polytope() -> VertexPolytope:
    verts = [bell_diagonal([0.5] + [0.5 if j == i else 0.0 for j in range(3)]) for i in range(3)]
    return VertexPolytope(verts, "F_css")


def s_p0_polytope(p0: float) -> VertexPolytope:
    """Bell-diagonal states with singlet weight ``p0``: hull of ``p0 s + (1-p0) t_i``."""
    verts = [bell_diagonal([p0] + [(1 - p0) if j == i else 0.0 for j in range(3)]) for i in range(3)]
    return VertexPolytope(verts, f"S_p0={p0:g}")


def local_control_hamiltonian(E0: float, E1: float) -> Observable:
    return Observable((BELL_BASIS * np.array([E0, E1, E1, E1])) @ BELL_BASIS.conj().T, "H_AB", (2, 2))


def _css_closed_form(rho: DensityMatrix):
    if rho.dim == 4 and bell_offdiagonal(rho) <= 1e-12:
        return 1.0 - qm.binary_entropy(min(max(bell_weights(rho)[0], 0.0), 1.0))
    return None


def _eta_unitary() -> np.ndarray:
    # |t_i>|theta_j> -> |t_j>|theta_i>, identity on |s>|theta_j>; system index major
    u = np.zeros((12, 12))
    for j in range(3):
        u[0 * 3 + j, 0 * 3 + j] = 1.0
    for i in range(3):
        for j in range(3):
            u[(j + 1) * 3 + i, (i + 1) * 3 + j] = 1.0
    bell = np.kron(BELL_BASIS, np.eye(3))
    return bell @ u @ bell.conj().T


_ETA_U = _eta_unitary()


def allowed_map_E_eta(eta_probs) -> Callable[[DensityMatrix], DensityMatrix]:
    """Channel ``Tr_A[U (rho ⊗ eta) U^dag]`` with ``eta = sum_i q_i |theta_i><theta_i|``.

    Keeps the singlet weight and redistributes the triplet weight as ``q``.
    """
    q = np.asarray(eta_probs, dtype=float)
    if q.shape != (3,) or np.any(q < -1e-15) or abs(q.sum() - 1) > 1e-12:
        raise ValueError("eta must be a probability 3-vector")
    eta = np.diag(q).astype(complex)

    def channel(rho: DensityMatrix) -> DensityMatrix:
        big = _ETA_U @ np.kron(rho.data, eta) @ _ETA_U.conj().T
        red = np.trace(big.reshape(4, 3, 4, 3), axis1=1, axis2=3)
        return DensityMatrix(red, rho.dims, check=False)

    channel.eta = q
    return channel


def _bell_symmetry(rng) -> np.ndarray:
    perm = rng.permutation(3)
    p = np.zeros((4, 4))
    p[0, 0] = 1.0
    for i, j in enumerate(perm):
        p[j + 1, i + 1] = 1.0
    phases = np.exp(2j * np.pi * rng.random(4))
    return BELL_BASIS @ (p * phases[:, None]) @ BELL_BASIS.conj().T


def two_level_state(p0: float) -> DensityMatrix:
    """``p0 |s><s| + (1 - p0) |t1><t1|``."""
    return bell_diagonal([p0, 1.0 - p0, 0.0, 0.0])


def energy_battery_state(m: int, excited: int) -> DensityMatrix:
    """``m`` cells, ``m - excited`` singlets (ground) then ``excited`` triplets."""
    return _product([bell_state(0)] * (m - excited) + [bell_state(1)] * excited)


def entanglement_battery_state(l: int, h: int) -> DensityMatrix:
    """``h`` singlets followed by ``l - h`` copies of ``sigma_mm``."""
    return _product([bell_state(0)] * h + [sigma_mm()] * (l - h))


def build_local_control_theory(E0: float = 0.0, E1: float = 1.0, battery_cells: int = 2) -> TheorySpec:
    """Two-qubit energy/entanglement theory.

    Monotones ``[M_H, E_css]`` with invariant sets ``[{singlet}, F_css]``; the
    state family is the two-level slice ``p0 |s><s| + (1-p0) |t1><t1|`` with
    ``p0 in [1/2, 1]``, which carries the whole bank curve of ``S_1``.
    """
    if not E0 < E1:
        raise TheoryError(f"need E0 < E1, got E0={E0}, E1={E1}")
    h = local_control_hamiltonian(E0, E1)
    singlet = Singleton(bell_state(0), "singlet")
    css = css_polytope()
    mons = [
        AvgObservable(h, "M_H", E0),
        RelEntropyDistance(css, "E_css", closed_form=_css_closed_form),
    ]
    family = ParamFamily([(0.5, 1.0)], lambda th: two_level_state(float(th[0])), "S1", ["p0"])
    zero = Observable(np.zeros((4, 4)), "0", (2, 2))
    m = battery_cells
    e_cells = RelEntropyDistance(css.tensor_power(m), "E_css")
    batteries = [
        BatterySpec(
            "omega_W",
            [(k, energy_battery_state(m, k)) for k in range(m + 1)],
            [AvgObservable(qm.sum_embed(h, m), "M_H"), e_cells],
            0,
        ),
        BatterySpec(
            "omega_E",
            [(k, entanglement_battery_state(m, k)) for k in range(m + 1)],
            [AvgObservable(qm.sum_embed(zero, m), "M_H"), e_cells],
            1,
        ),
    ]
    channels = [("E_eta", lambda rho, rng: allowed_map_E_eta(rng.dirichlet(np.ones(3)))(rho))]
    return TheorySpec(
        f"local-control[E0={E0:g},E1={E1:g}]", "local-control", (2, 2), mons, [singlet, css], family,
        batteries, _bell_symmetry, channels, [h], {"E0": E0, "E1": E1},
    )


def local_control_rate(p0: float, E0: float, E1: float) -> float:
    """Energy paid per bit of entanglement at the bank ``S_p0``: ``-dE / log2(p0/(1-p0))``."""
    return -(E1 - E0) / math.log2(p0 / (1 - p0))


def e_s_p0_linear(rho: DensityMatrix, p0: float, E0: float, E1: float) -> float:
    """Distance from ``S_p0`` as the linear combination of ``E_css`` and ``M_H``.

    Valid for Bell-diagonal ``rho``; off-diagonal parts are ignored.
    """
    theory_h = local_control_hamiltonian(E0, E1)
    m_h = qm.expectation(rho, theory_h) - E0
    w = bell_weights(rho)[0]
    e_css = 1.0 - qm.binary_entropy(min(max(w, 0.0), 1.0))
    m_bar = (1 - p0) * (E1 - E0)
    e_bar = 1.0 - qm.binary_entropy(p0)
    return (e_css - e_bar) + math.log2(p0 / (1 - p0)) / (E1 - E0) * (m_h - m_bar)
