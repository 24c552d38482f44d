"""Dense linear algebra for finite-dimensional states and observables.

All logarithms are base 2: entropies and divergences are in bits, and inverse
temperatures ``beta`` multiply observables inside ``2**(-beta * A)``.  To convert
a base-2 beta to the natural-log convention use ``beta_natural = beta_bits * ln 2``,
which gives the same state ``exp(-beta_natural * A)``.
"""
from __future__ import annotations

import math
import os
from functools import cached_property, reduce
from typing import Iterable, Sequence

import numpy as np

from .kernels import loewner_log2

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
SUPPORT_TOL = 1e-10
ENTROPY_CUTOFF = 1e-12
IMAG_TOL = 1e-10
DEFAULT_MAX_DIM = 4096

LN2 = math.log(2.0)


class DimensionError(ValueError):
    """Raised when a composite space exceeds the configured dimension cap."""


class ConsistencyError(ArithmeticError):
    """Raised when a quantity that must be real carries an imaginary residue."""


def max_dim() -> int:
    """Dimension cap, overridable through ``MULTIRES_MAX_DIM``."""
    raw = os.environ.get("MULTIRES_MAX_DIM")
    return int(raw) if raw else DEFAULT_MAX_DIM


def _check_dim(d: int) -> None:
    if d > max_dim():
        raise DimensionError(f"dimension {d} exceeds cap {max_dim()} (MULTIRES_MAX_DIM)")


def _as_square(data) -> np.ndarray:
    arr = np.array(data, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def _resolve_dims(d: int, dims: Sequence[int] | None) -> tuple[int, ...]:
    if dims is None:
        return (d,)
    dims = tuple(int(x) for x in dims)
    if any(x < 1 for x in dims) or int(np.prod(dims)) != d:
        raise ValueError(f"subsystem dims {dims} do not multiply to {d}")
    return dims


class _Operator:
    __slots__ = ("data", "dims", "__dict__")

    def __init__(self, data, dims=None):
        arr = _as_square(data)
        _check_dim(arr.shape[0])
        self.dims = _resolve_dims(arr.shape[0], dims)
        self.data = arr

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and eigenvectors of the Hermitian matrix."""
        w, v = np.linalg.eigh(self.data)
        return w, v

    def _freeze(self, arr: np.ndarray) -> None:
        arr = 0.5 * (arr + arr.conj().T)
        arr.setflags(write=False)
        self.data = arr


class DensityMatrix(_Operator):
    """Positive semidefinite, unit-trace Hermitian matrix on a tensor-product space.

    Construction validates the invariants (Hermitian within 1e-12 elementwise,
    unit trace within 1e-12, smallest eigenvalue above -1e-10) and stores the
    exactly Hermitian part as a read-only array.  Pass ``check=False`` only for
    matrices produced by operations that preserve the invariants.
    """

    def __init__(self, data, dims=None, *, check: bool = True):
        super().__init__(data, dims)
        arr = self.data
        if check:
            if np.max(np.abs(arr - arr.conj().T), initial=0.0) > HERMITIAN_TOL:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(arr) - 1.0) > TRACE_TOL:
                raise ValueError(f"density matrix trace {np.trace(arr).real!r} != 1")
        self._freeze(arr.copy())
        if check and self.eig[0][0] < -PSD_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {self.eig[0][0]:.3e}")

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, dims={self.dims})"

    @property
    def spectrum(self) -> np.ndarray:
        return self.eig[0]


class Observable(_Operator):
    """Hermitian observable with a text label."""

    def __init__(self, data, label: str = "", dims=None):
        super().__init__(data, dims)
        if np.max(np.abs(self.data - self.data.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError(f"observable {label!r} is not Hermitian")
        self._freeze(self.data.copy())
        self.label = label

    def __repr__(self) -> str:
        return f"Observable({self.label!r}, dim={self.dim})"

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eig[0][0])

    @property
    def norm(self) -> float:
        """Operator norm (largest absolute eigenvalue)."""
        return float(np.max(np.abs(self.eig[0])))


# --------------------------------------------------------------------------- construction


def pure_state(vec, dims=None) -> DensityMatrix:
    v = np.asarray(vec, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()), dims, check=False)


def maximally_mixed(d: int, dims=None) -> DensityMatrix:
    _check_dim(d)
    return DensityMatrix(np.eye(d) / d, dims, check=False)


def mixture(states: Sequence[DensityMatrix], weights: Sequence[float]) -> DensityMatrix:
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < -1e-15) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must form a probability vector")
    data = sum(w * s.data for w, s in zip(weights, states))
    return DensityMatrix(data, states[0].dims, check=False)


def random_density(dim: int, seed: int, dims=None) -> DensityMatrix:
    """Hilbert-Schmidt random state ``G G^dag / tr(G G^dag)``; pure in ``(dim, seed)``."""
    if dim < 1:
        raise ValueError("dim must be positive")
    _check_dim(dim)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real, dims, check=False)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary via QR of a Ginibre matrix with phase correction."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


# --------------------------------------------------------------------------- composition


def tensor(a, b):
    """Kronecker composition of two states or two observables."""
    if type(a) is not type(b):
        raise TypeError("tensor operands must be of the same kind")
    dims = a.dims + b.dims
    _check_dim(a.dim * b.dim)
    data = np.kron(a.data, b.data)
    if isinstance(a, DensityMatrix):
        return DensityMatrix(data, dims, check=False)
    return Observable(data, f"{a.label}⊗{b.label}", dims)


def tensor_power(a, n: int):
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_dim(a.dim ** n)
    return reduce(tensor, [a] * n)


def sum_embed(a: Observable, n: int) -> Observable:
    """``sum_i I ⊗ ... ⊗ A^(i) ⊗ ... ⊗ I`` on the n-fold space."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = a.dim
    _check_dim(d ** n)
    total = np.zeros((d ** n, d ** n), dtype=complex)
    for i in range(n):
        left = np.eye(d ** i)
        right = np.eye(d ** (n - i - 1))
        total += np.kron(np.kron(left, a.data), right)
    return Observable(total, f"sum{n}({a.label})", a.dims * n)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    keep = sorted(set(int(k) for k in keep))
    n = len(rho.dims)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep indices {keep} out of range for {n} subsystems")
    t = rho.data.reshape(rho.dims * 2)
    for idx in reversed([i for i in range(n) if i not in keep]):
        cur = t.ndim // 2
        t = np.trace(t, axis1=idx, axis2=idx + cur)
    kept_dims = tuple(rho.dims[k] for k in keep)
    d = int(np.prod(kept_dims))
    return DensityMatrix(t.reshape(d, d), kept_dims, check=False)


# --------------------------------------------------------------------------- spectra


def hermitian_function(mat: np.ndarray, f) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    return (v * f(w)) @ v.conj().T


def binary_entropy(p):
    """``h(p) = -p log2 p - (1-p) log2 (1-p)``; vectorised, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
        b = np.where(q > 0, -q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    out = a + b
    return float(out) if out.ndim == 0 else out


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > ENTROPY_CUTOFF]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits; eigenvalues below 1e-12 contribute zero."""
    return shannon_entropy(rho.spectrum)


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """``tr rho (log2 rho - log2 sigma)``, ``math.inf`` when the support condition fails."""
    if rho.dim != sigma.dim:
        raise ValueError("relative_entropy: dimension mismatch")
    lam, u = rho.eig
    mu, v = sigma.eig
    overlap = np.abs(u.conj().T @ v) ** 2
    in_support = lam > SUPPORT_TOL
    null = mu <= SUPPORT_TOL
    if np.any(overlap[np.ix_(in_support, null)] > SUPPORT_TOL):
        return math.inf
    lam_s = lam[in_support]
    cross = overlap[np.ix_(in_support, ~null)] @ np.log2(mu[~null])
    value = float(np.sum(lam_s * np.log2(lam_s)) - np.sum(lam_s * cross))
    return max(value, 0.0) if value > -1e-12 else value


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Trace norm ``||rho - sigma||_1`` (no factor 1/2)."""
    if rho.dim != sigma.dim:
        raise ValueError("trace_distance: dimension mismatch")
    return float(np.sum(np.abs(np.linalg.eigvalsh(rho.data - sigma.data))))


def expectation(rho: DensityMatrix, a: Observable) -> float:
    if rho.dim != a.dim:
        raise ValueError("expectation: dimension mismatch")
    val = np.einsum("ij,ji->", rho.data, a.data)
    if abs(val.imag) > IMAG_TOL:
        raise ConsistencyError(f"tr(rho A) has imaginary part {val.imag:.3e}")
    return float(val.real)


def _exponent(charges: Sequence[Observable], betas: Sequence[float]) -> np.ndarray:
    if len(charges) != len(betas) or not charges:
        raise ValueError("charges and betas must be non-empty and of equal length")
    d = charges[0].dim
    if any(c.dim != d for c in charges):
        raise ValueError("charges must share one dimension")
    return -sum(float(b) * c.data for b, c in zip(betas, charges))


def log2_partition(charges: Sequence[Observable], betas: Sequence[float]) -> float:
    """``log2 tr 2**(-sum beta_i A_i)``, evaluated stably."""
    w = np.linalg.eigvalsh(_exponent(charges, betas))
    top = w[-1]
    return float(top + np.log2(np.sum(np.exp2(w - top))))


def gibbs_state(charges: Sequence[Observable], betas: Sequence[float]) -> DensityMatrix:
    """Grand-canonical state ``2**(-sum beta_i A_i) / Z``."""
    k = _exponent(charges, betas)
    w, v = np.linalg.eigh(k)
    p = np.exp2(w - w[-1])
    p /= p.sum()
    return DensityMatrix((v * p) @ v.conj().T, charges[0].dims, check=False)


def frechet_log_gradient(rho: DensityMatrix, sigma_data: np.ndarray, reg: float = 1e-12) -> np.ndarray:
    """Gradient of ``sigma -> -tr[rho log2 sigma]`` as a Hermitian matrix.

    Uses the Loewner (divided-difference) form in the eigenbasis of ``sigma``
    after mixing in ``reg`` of the maximally mixed state, so the result stays
    finite for rank-deficient ``sigma``.
    """
    d = sigma_data.shape[0]
    s = (1.0 - reg) * sigma_data + reg * np.eye(d) / d
    mu, v = np.linalg.eigh(s)
    mu = np.clip(mu, reg / d, None)
    r = v.conj().T @ rho.data @ v
    grad_eig = -(r * loewner_log2(mu))
    return v @ grad_eig @ v.conj().T


# --------------------------------------------------------------------------- matrix literals


def parse_matrix(obj) -> np.ndarray:
    """Parse nested row-major arrays of ``[re, im]`` pairs (plain reals also accepted)."""
    rows = []
    for row in obj:
        parsed = []
        for entry in row:
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    raise ValueError(f"matrix entry {entry!r} is not a [re, im] pair")
                parsed.append(complex(float(entry[0]), float(entry[1])))
            else:
                parsed.append(complex(float(entry)))
        rows.append(parsed)
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError("matrix literal must be square and non-empty")
    return np.array(rows, dtype=complex)


def matrix_literal(mat: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(mat)]
