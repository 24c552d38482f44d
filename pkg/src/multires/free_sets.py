"""Convex invariant sets of states and closest-state solvers under the relative entropy.

Three representations are supported: a single state, a box-parameterised family
and the convex hull of finitely many vertex states.  Distances are in bits and
``math.inf`` signals a support-condition failure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize, nnls
from scipy.stats import qmc

from . import quantum as qm
from .kernels import classical_pairwise_fw, simplex_grid_kl_min
from .quantum import DensityMatrix

COMMUTE_TOL = 1e-10
GRID_MAX_PARAMS = 4


@dataclass(frozen=True)
class ClosestStateResult:
    argmin: DensityMatrix | None
    value: float
    iterations: int
    certificate_gap: float
    converged: bool = True
    method: str = ""


class FreeSetSpec:
    """Base class; ``kind`` is one of Singleton, ParamFamily, VertexPolytope."""

    kind = ""
    label = ""
    full_rank_witness: DensityMatrix | None = None

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def dims(self) -> tuple[int, ...]:
        raise NotImplementedError

    def tensor_power(self, n: int) -> "FreeSetSpec":
        raise NotImplementedError(f"{self.kind} sets have no n-copy extension")

    def members(self, count: int, seed: int = 0) -> list[DensityMatrix]:
        """A few deterministic members, used by the property suites."""
        raise NotImplementedError


class Singleton(FreeSetSpec):
    kind = "Singleton"

    def __init__(self, state: DensityMatrix, label: str = ""):
        self.state = state
        self.label = label or "singleton"
        self.full_rank_witness = state if state.spectrum[0] > qm.SUPPORT_TOL else None

    @property
    def dim(self) -> int:
        return self.state.dim

    @property
    def dims(self):
        return self.state.dims

    def tensor_power(self, n: int) -> "Singleton":
        return Singleton(qm.tensor_power(self.state, n), f"{self.label}^{n}")

    def members(self, count: int, seed: int = 0):
        return [self.state]

    def __repr__(self):
        return f"Singleton({self.label!r}, dim={self.dim})"


class ParamFamily(FreeSetSpec):
    """States ``builder(theta)`` for ``theta`` in a box ``[lo_i, hi_i]``."""

    kind = "ParamFamily"

    def __init__(
        self,
        bounds: Sequence[tuple[float, float]],
        builder: Callable[[np.ndarray], DensityMatrix],
        label: str = "",
        names: Sequence[str] | None = None,
        full_rank_witness: DensityMatrix | None = None,
    ):
        self.bounds = np.array(bounds, dtype=float).reshape(-1, 2)
        if self.bounds.size == 0 or np.any(self.bounds[:, 0] > self.bounds[:, 1]):
            raise ValueError("parameter box must be non-empty")
        self.builder = builder
        self.label = label or "family"
        self.names = list(names) if names else [f"theta{i}" for i in range(len(self.bounds))]
        self._probe = builder(self.bounds.mean(axis=1))
        if full_rank_witness is not None and not membership(self, full_rank_witness, 1e-8):
            raise ValueError("full_rank_witness is not a member of the family")
        self.full_rank_witness = full_rank_witness

    @property
    def n_params(self) -> int:
        return len(self.bounds)

    @property
    def dim(self):
        return self._probe.dim

    @property
    def dims(self):
        return self._probe.dims

    def clip(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.bounds[:, 0], self.bounds[:, 1])

    def members(self, count: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return [self.builder(lo + (hi - lo) * rng.random(len(lo))) for _ in range(count)]

    def __repr__(self):
        return f"ParamFamily({self.label!r}, params={self.names})"


class VertexPolytope(FreeSetSpec):
    """Convex hull of finitely many vertex states."""

    kind = "VertexPolytope"

    def __init__(self, vertices: Sequence[DensityMatrix], label: str = ""):
        if not vertices:
            raise ValueError("a polytope needs at least one vertex")
        d = vertices[0].dim
        if any(v.dim != d for v in vertices):
            raise ValueError("polytope vertices must share one dimension")
        self.vertices = list(vertices)
        self.label = label or "polytope"
        self._stack = np.array([v.data for v in self.vertices])
        centre = self.centroid()
        self.full_rank_witness = centre if centre.spectrum[0] > qm.SUPPORT_TOL else None
        self._basis: np.ndarray | None | bool = False

    @property
    def dim(self):
        return self.vertices[0].dim

    @property
    def dims(self):
        return self.vertices[0].dims

    def centroid(self) -> DensityMatrix:
        return DensityMatrix(self._stack.mean(axis=0), self.dims, check=False)

    def combine(self, w) -> DensityMatrix:
        return DensityMatrix(np.tensordot(np.asarray(w, float), self._stack, axes=1), self.dims, check=False)

    def tensor_power(self, n: int) -> "VertexPolytope":
        qm._check_dim(self.dim ** n)
        verts = [_kron_all(combo) for combo in itertools.product(self.vertices, repeat=n)]
        return VertexPolytope(verts, f"{self.label}^{n}")

    def members(self, count: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        out = list(self.vertices[:count])
        while len(out) < count:
            out.append(self.combine(rng.dirichlet(np.ones(len(self.vertices)))))
        return out

    def common_basis(self) -> np.ndarray | None:
        """Unitary diagonalising every vertex, or None if they do not commute."""
        if self._basis is False:
            self._basis = _common_eigenbasis(self._stack)
        return self._basis

    def __repr__(self):
        return f"VertexPolytope({self.label!r}, vertices={len(self.vertices)}, dim={self.dim})"


def _kron_all(states) -> DensityMatrix:
    out = states[0]
    for s in states[1:]:
        out = qm.tensor(out, s)
    return out


def _common_eigenbasis(stack: np.ndarray) -> np.ndarray | None:
    k = len(stack)
    for i in range(k):
        for j in range(i + 1, k):
            c = stack[i] @ stack[j] - stack[j] @ stack[i]
            if np.max(np.abs(c)) > COMMUTE_TOL:
                return None
    rng = np.random.default_rng(12345)
    coeffs = rng.standard_normal(k)
    _, u = np.linalg.eigh(np.tensordot(coeffs, stack, axes=1))
    for m in stack:
        rot = u.conj().T @ m @ u
        if np.max(np.abs(rot - np.diag(np.diag(rot)))) > 1e-9:
            return None
    return u


# --------------------------------------------------------------------------- membership


def membership(fset: FreeSetSpec, rho: DensityMatrix, tol: float = 1e-9) -> bool:
    """Whether ``rho`` lies within trace distance ``tol`` of the set."""
    if rho.dim != fset.dim:
        raise ValueError("membership: dimension mismatch")
    if isinstance(fset, Singleton):
        return qm.trace_distance(rho, fset.state) <= tol
    if isinstance(fset, VertexPolytope):
        return qm.trace_distance(rho, _ls_projection(fset, rho)) <= tol
    if isinstance(fset, ParamFamily):
        return _family_distance(fset, rho) <= tol
    raise TypeError(f"unknown set kind {fset!r}")


def _ls_projection(poly: VertexPolytope, rho: DensityMatrix) -> DensityMatrix:
    # least squares over the simplex: NNLS with a heavily weighted sum-to-one row
    k = len(poly.vertices)
    cols = poly._stack.reshape(k, -1)
    a = np.vstack([cols.real.T, cols.imag.T, 1e3 * np.ones((1, k))])
    b = np.concatenate([rho.data.real.ravel(), rho.data.imag.ravel(), [1e3]])
    w, _ = nnls(a, b)
    w = w / w.sum() if w.sum() > 0 else np.full(k, 1.0 / k)
    return poly.combine(w)


def _starts(fset: ParamFamily, count: int = 8) -> np.ndarray:
    lo, hi = fset.bounds[:, 0], fset.bounds[:, 1]
    sob = qmc.Sobol(d=fset.n_params, scramble=False).random(count)
    # the unscrambled Sobol sequence starts at the corner; shift into the interior
    pts = (sob + 0.5 / count) % 1.0
    return lo + (hi - lo) * pts


def _family_distance(fset: ParamFamily, rho: DensityMatrix) -> float:
    def obj(theta):
        return float(np.sum(np.abs(fset.builder(fset.clip(theta)).data - rho.data) ** 2))

    best = None
    for x0 in _starts(fset):
        res = minimize(obj, x0, method="L-BFGS-B", bounds=fset.bounds, options={"ftol": 1e-15, "gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    return qm.trace_distance(rho, fset.builder(fset.clip(best.x)))


# --------------------------------------------------------------------------- closest state


def closest_state(
    fset: FreeSetSpec, rho: DensityMatrix, tol: float = 1e-10, max_iter: int = 5000
) -> ClosestStateResult:
    """Minimise ``D(rho || sigma)`` over the set.

    The returned value is attained by ``argmin`` (an upper bound on the
    infimum) and ``certificate_gap`` bounds the suboptimality: exact zero for a
    singleton, the Frank-Wolfe gap for polytopes, and a projected-gradient
    estimate for parameterised families.
    """
    if rho.dim != fset.dim:
        raise ValueError("closest_state: dimension mismatch")
    if isinstance(fset, Singleton):
        return ClosestStateResult(fset.state, qm.relative_entropy(rho, fset.state), 0, 0.0, True, "closed-form")
    if isinstance(fset, VertexPolytope):
        u = fset.common_basis()
        if u is not None:
            return _fw_commuting(fset, rho, u, tol, max_iter)
        return _fw_general(fset, rho, tol, max_iter)
    if isinstance(fset, ParamFamily):
        return _family_search(fset, rho, tol, max_iter)
    raise TypeError(f"unknown set kind {fset!r}")


def _pairwise_step(w, g, line_search):
    """One pairwise Frank-Wolfe step on simplex weights. Returns (w, gap)."""
    fw = int(np.argmin(g))
    active = np.flatnonzero(w > 0)
    away = int(active[np.argmax(g[active])])
    gap = float(g @ w - g[fw])
    if fw == away or g[away] - g[fw] <= 0:
        return w, gap
    tmax = float(w[away])
    t = line_search(fw, away, tmax)
    w = w.copy()
    w[fw] += t
    w[away] -= t
    if w[away] <= 1e-17:
        w[away] = 0.0
    return w, gap


def _fw_commuting(poly: VertexPolytope, rho: DensityMatrix, u: np.ndarray, tol, max_iter):
    k = len(poly.vertices)
    vp = np.real(np.einsum("ij,kjl,li->ki", u.conj().T, poly._stack, u))
    vp = np.clip(vp, 0.0, None)
    r = np.real(np.einsum("ij,jl,li->i", u.conj().T, rho.data, u))
    mask = r > qm.SUPPORT_TOL
    rm, vm = r[mask], vp[:, mask]
    s_rho = qm.von_neumann_entropy(rho)

    def value(s):
        if np.any(s <= 0):
            return math.inf
        return -s_rho - float(rm @ np.log2(s))

    w = np.full(k, 1.0 / k)
    if value(w @ vm) == math.inf:
        return ClosestStateResult(None, math.inf, 0, 0.0, True, "commuting-fw")
    w, gap, it = classical_pairwise_fw(r, vp, w, tol, max_iter)
    s = w @ vm
    s_full = w @ vp
    sigma = DensityMatrix((u * s_full) @ u.conj().T, poly.dims, check=False)
    return ClosestStateResult(sigma, max(value(s), 0.0), it, max(gap, 0.0), gap <= tol, "commuting-fw")


def _fw_general(poly: VertexPolytope, rho: DensityMatrix, tol, max_iter):
    k = len(poly.vertices)
    stack = poly._stack
    w = np.full(k, 1.0 / k)
    sigma = poly.combine(w)
    if qm.relative_entropy(rho, sigma) == math.inf:
        return ClosestStateResult(None, math.inf, 0, 0.0, True, "pairwise-fw")

    def grad(sig_data):
        g = qm.frechet_log_gradient(rho, sig_data)
        return np.real(np.einsum("ij,kji->k", g, stack))

    def line_search(fw, away, tmax):
        d = stack[fw] - stack[away]
        base = sigma.data

        def dphi(t):
            g = qm.frechet_log_gradient(rho, base + t * d)
            return float(np.real(np.einsum("ij,ji->", g, d)))

        hi = tmax * (1 - 1e-12)
        if dphi(hi) <= 0:
            return tmax
        return brentq(dphi, 0.0, hi, xtol=1e-15)

    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        w_new, gap = _pairwise_step(w, grad(sigma.data), line_search)
        if gap <= tol or np.array_equal(w_new, w):
            break
        w = w_new
        sigma = poly.combine(w)
    return ClosestStateResult(
        sigma, qm.relative_entropy(rho, sigma), it, max(gap, 0.0), gap <= tol, "pairwise-fw"
    )


def _fd_grad(f, x, lo, hi, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        step = h * max(1.0, abs(x[i]))
        a = min(x[i] + step, hi[i])
        b = max(x[i] - step, lo[i])
        xa, xb = x.copy(), x.copy()
        xa[i], xb[i] = a, b
        g[i] = (f(xa) - f(xb)) / (a - b) if a > b else 0.0
    return g


def _family_search(fset: ParamFamily, rho: DensityMatrix, tol, max_iter):
    lo, hi = fset.bounds[:, 0], fset.bounds[:, 1]

    def f(theta):
        v = qm.relative_entropy(rho, fset.builder(fset.clip(theta)))
        return v if math.isfinite(v) else 1e300

    best = None
    total_it = 0
    for x0 in _starts(fset):
        if f(x0) >= 1e300:
            continue
        res = minimize(
            f,
            x0,
            method="L-BFGS-B",
            jac=lambda x: _fd_grad(f, x, lo, hi),
            bounds=fset.bounds,
            options={"ftol": 1e-15, "gtol": 1e-11, "maxiter": max_iter},
        )
        total_it += int(res.nit)
        if best is None or res.fun < best.fun - 1e-15:
            best = res
    if best is None:
        return ClosestStateResult(None, math.inf, 0, 0.0, True, "multistart")
    x = fset.clip(best.x)
    g = _fd_grad(f, x, lo, hi)
    # projected gradient: drop components pushing out of an active bound
    pg = g.copy()
    pg[(x <= lo) & (g > 0)] = 0.0
    pg[(x >= hi) & (g < 0)] = 0.0
    diam = float(np.linalg.norm(hi - lo))
    gap = float(np.linalg.norm(pg)) * (diam if math.isfinite(diam) else 1.0)
    value = float(best.fun)
    return ClosestStateResult(fset.builder(x), max(value, 0.0), total_it, gap, gap <= max(tol, 1e-6), "multistart")


# --------------------------------------------------------------------------- brute-force oracle


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for a in range(total + 1):
        for rest in _compositions(total - a, parts - 1):
            yield (a,) + rest


def grid_oracle(fset: FreeSetSpec, rho: DensityMatrix, resolution: int) -> float:
    """Brute-force minimum of ``D(rho || sigma)`` over a uniform grid of the set.

    Families are gridded with ``resolution + 1`` points per parameter, polytopes
    over simplex weights with step ``1/resolution``.  Intended as a test oracle.
    """
    if isinstance(fset, Singleton):
        return qm.relative_entropy(rho, fset.state)
    if isinstance(fset, ParamFamily):
        if fset.n_params > GRID_MAX_PARAMS:
            raise ValueError(f"grid oracle supports at most {GRID_MAX_PARAMS} parameters")
        axes = [np.linspace(lo, hi, resolution + 1) for lo, hi in fset.bounds]
        return min(qm.relative_entropy(rho, fset.builder(np.array(t))) for t in itertools.product(*axes))
    if isinstance(fset, VertexPolytope):
        k = len(fset.vertices)
        if k - 1 > GRID_MAX_PARAMS:
            raise ValueError(f"grid oracle supports at most {GRID_MAX_PARAMS + 1} vertices")
        u = fset.common_basis()
        if u is not None:
            vp = np.clip(np.real(np.einsum("ij,kjl,li->ki", u.conj().T, fset._stack, u)), 0.0, None)
            r = np.real(np.einsum("ij,jl,li->i", u.conj().T, rho.data, u))
            val, _ = simplex_grid_kl_min(r, vp, resolution)
            if not math.isfinite(val):
                return math.inf
            # classical KL of the diagonal plus the dephasing term S(diag) - S(rho)
            rm = r[r > qm.SUPPORT_TOL]
            return float(val) - float(rm @ np.log2(rm)) - qm.von_neumann_entropy(rho)
        return min(
            qm.relative_entropy(rho, fset.combine(np.array(c) / resolution))
            for c in _compositions(resolution, k)
        )
    raise TypeError(f"unknown set kind {fset!r}")
