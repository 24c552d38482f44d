"""Pure-Python/NumPy implementations of the hot kernels.

Same signatures and tie-breaking as the compiled ``_kernels`` module; used when
the extension is unavailable or ``MULTIRES_PURE_PYTHON=1``.
"""
from functools import lru_cache
import math

import numpy as np

_LN2 = math.log(2.0)
_SUPPORT_TOL = 1e-10


def loewner_log2(mu):
    mu = np.asarray(mu, dtype=float)
    a = mu[:, None]
    b = mu[None, :]
    diff = a - b
    close = np.abs(diff) <= 1e-8 * np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log2(a / b) / diff
    return np.where(close, 2.0 / ((a + b) * _LN2), out)


@lru_cache(maxsize=512)
def _compositions(total, parts):
    # lexicographic over the leading parts-1 coordinates
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for a in range(total + 1):
        sub = _compositions(total - a, parts - 1)
        blocks.append(np.column_stack([np.full(len(sub), a, dtype=np.int64), sub]))
    return np.vstack(blocks)


def simplex_grid_kl_min(r, vprobs, resolution):
    """Minimum of ``sum_i r_i log2(r_i / s_i)`` over ``s = sum_j w_j v_j``, ``w`` on the
    uniform simplex grid with step ``1/resolution``.  Returns ``(value, weights)``;
    ties go to the first grid point in lexicographic order.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(vprobs, dtype=float)
    k = v.shape[0]
    n = int(resolution)
    mask = r > _SUPPORT_TOL
    rm = r[mask]
    vm = v[:, mask]
    base = float(np.sum(rm * np.log2(rm)))
    best = math.inf
    best_w = np.zeros(k)
    best_w[-1] = 1.0
    if k == 1:
        s = vm[0]
        if np.all(s > 0):
            best = base - float(np.sum(rm * np.log2(s)))
        return best, np.ones(1)
    for a in range(n + 1):
        sub = _compositions(n - a, k - 1)
        s = (a * vm[0][None, :] + sub @ vm[1:]) / n
        with np.errstate(divide="ignore"):
            logs = np.where(s > 0, np.log2(np.where(s > 0, s, 1.0)), -np.inf)
        vals = base - logs @ rm
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            best_w = np.concatenate([[a], sub[i]]) / n
    return best, best_w


def _h(p):
    q = 1.0 - p
    out = 0.0
    if p > 0:
        out -= p * math.log2(p)
    if q > 0:
        out -= q * math.log2(q)
    return out


def binary_entropy_upper_inverse(target, tol=1e-12):
    """``p`` in ``[1/2, 1]`` with ``h(p) = target`` by bisection (h decreases there)."""
    if target < 0.0 or target > 1.0:
        raise ValueError(f"binary entropy target {target} outside [0, 1]")
    lo, hi = 0.5, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _h(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _dphi(rm, s, d, t):
    out = 0.0
    for k in range(len(rm)):
        den = s[k] + t * d[k]
        if den <= 0.0:
            if d[k] != 0.0:
                return math.inf
            continue
        out -= rm[k] * d[k] / den
    return out


def _d2phi(rm, s, d, t):
    den = s + t * d
    return float(np.sum(rm * d * d / (den * den)))


def _line_search(rm, s, d, tmax):
    # root of the increasing derivative on [0, tmax]: safeguarded Newton
    if _dphi(rm, s, d, tmax) <= 0.0:
        return tmax
    lo, hi = 0.0, tmax
    t = 0.5 * tmax
    for _ in range(200):
        g = _dphi(rm, s, d, t)
        if g > 0:
            hi = t
        else:
            lo = t
        h2 = _d2phi(rm, s, d, t) if math.isfinite(g) else 0.0
        nt = t - g / h2 if h2 > 0 else 0.5 * (lo + hi)
        if not (lo < nt < hi):
            nt = 0.5 * (lo + hi)
        if abs(nt - t) <= 1e-16 * max(1.0, t) or hi - lo <= 1e-17:
            return nt
        t = nt
    return t


def classical_pairwise_fw(r, vprobs, w0, tol, max_iter):
    """Pairwise Frank-Wolfe for ``min_w -sum_k r_k log2 (w @ V)_k`` over the simplex.

    Only entries with ``r_k > 1e-10`` enter.  Returns ``(w, gap, iterations)``;
    ties in vertex selection go to the lowest index.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(vprobs, dtype=float)
    mask = r > _SUPPORT_TOL
    rm = r[mask]
    vm = v[:, mask]
    w = np.array(w0, dtype=float)
    s = w @ vm
    gap = math.inf
    it = 0
    while it < max_iter:
        it += 1
        g = -(vm @ (rm / s)) / _LN2
        fw = int(np.argmin(g))
        active = np.flatnonzero(w > 0)
        away = int(active[np.argmax(g[active])])
        gap = float(g @ w - g[fw])
        if gap <= tol or fw == away:
            break
        d = vm[fw] - vm[away]
        t = _line_search(rm, s, d, float(w[away]))
        if t <= 0.0:
            break
        w[fw] += t
        w[away] -= t
        if w[away] <= 1e-17:
            w[away] = 0.0
        s = w @ vm
    return w, max(gap, 0.0), it
