# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, fabs, INFINITY

cnp.import_array()

cdef double _LN2 = 0.6931471805599453
cdef double _SUPPORT_TOL = 1e-10


def loewner_log2(mu):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef Py_ssize_t d = m.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((d, d), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double a, b, diff, big
    for i in range(d):
        a = m[i]
        for j in range(d):
            b = m[j]
            diff = a - b
            big = a if a > b else b
            if fabs(diff) <= 1e-8 * big:
                out[i, j] = 2.0 / ((a + b) * _LN2)
            else:
                out[i, j] = log2(a / b) / diff
    return out


def simplex_grid_kl_min(r, vprobs, int resolution):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rr = np.ascontiguousarray(r, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vv = np.ascontiguousarray(vprobs, dtype=np.float64)
    cdef Py_ssize_t k = vv.shape[0]
    cdef Py_ssize_t d = vv.shape[1]
    cdef Py_ssize_t i, j, pos
    cdef long n = resolution
    cdef long used, last
    cdef double base = 0.0, val, s, best = INFINITY
    cdef bint bad
    cdef cnp.ndarray[cnp.int64_t, ndim=1] w = np.zeros(k, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_w = np.zeros(k, dtype=np.float64)
    best_w[k - 1] = 1.0
    for i in range(d):
        if rr[i] > _SUPPORT_TOL:
            base += rr[i] * log2(rr[i])
    if k == 1:
        val = base
        for i in range(d):
            if rr[i] > _SUPPORT_TOL:
                if vv[0, i] <= 0.0:
                    return INFINITY, np.ones(1)
                val -= rr[i] * log2(vv[0, i])
        return val, np.ones(1)
    used = 0
    while True:
        last = n - used
        w[k - 1] = last
        val = base
        bad = False
        for i in range(d):
            if rr[i] > _SUPPORT_TOL:
                s = 0.0
                for j in range(k):
                    s += w[j] * vv[j, i]
                s /= n
                if s <= 0.0:
                    bad = True
                    break
                val -= rr[i] * log2(s)
        if not bad and val < best:
            best = val
            for j in range(k):
                best_w[j] = w[j] / <double>n
        # odometer over the leading k-1 coordinates
        pos = k - 2
        while pos >= 0:
            if used < n:
                w[pos] += 1
                used += 1
                break
            used -= w[pos]
            w[pos] = 0
            pos -= 1
        if pos < 0:
            break
    return best, best_w


cdef double _h(double p):
    cdef double q = 1.0 - p
    cdef double out = 0.0
    if p > 0:
        out -= p * log2(p)
    if q > 0:
        out -= q * log2(q)
    return out


def binary_entropy_upper_inverse(double target, double tol=1e-12):
    if target < 0.0 or target > 1.0:
        raise ValueError(f"binary entropy target {target} outside [0, 1]")
    cdef double lo = 0.5, hi = 1.0, mid
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _h(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef double _dphi(double[:] rm, double[:] s, double[:] d, double t) nogil:
    cdef Py_ssize_t k
    cdef double out = 0.0, den
    for k in range(rm.shape[0]):
        den = s[k] + t * d[k]
        if den <= 0.0:
            if d[k] != 0.0:
                return INFINITY
            continue
        out -= rm[k] * d[k] / den
    return out


cdef double _d2phi(double[:] rm, double[:] s, double[:] d, double t) nogil:
    cdef Py_ssize_t k
    cdef double out = 0.0, den
    for k in range(rm.shape[0]):
        den = s[k] + t * d[k]
        out += rm[k] * d[k] * d[k] / (den * den)
    return out


cdef double _line_search(double[:] rm, double[:] s, double[:] d, double tmax) nogil:
    cdef double lo = 0.0, hi = tmax, t = 0.5 * tmax, g, h2, nt
    cdef int i
    if _dphi(rm, s, d, tmax) <= 0.0:
        return tmax
    for i in range(200):
        g = _dphi(rm, s, d, t)
        if g > 0:
            hi = t
        else:
            lo = t
        h2 = _d2phi(rm, s, d, t) if g != INFINITY else 0.0
        if h2 > 0:
            nt = t - g / h2
        else:
            nt = 0.5 * (lo + hi)
        if not (lo < nt < hi):
            nt = 0.5 * (lo + hi)
        if fabs(nt - t) <= 1e-16 * (t if t > 1.0 else 1.0) or hi - lo <= 1e-17:
            return nt
        t = nt
    return t


def classical_pairwise_fw(r, vprobs, w0, double tol, int max_iter):
    rr = np.ascontiguousarray(r, dtype=np.float64)
    vv = np.ascontiguousarray(vprobs, dtype=np.float64)
    mask = rr > _SUPPORT_TOL
    cdef double[:] rm = np.ascontiguousarray(rr[mask])
    cdef double[:, :] vm = np.ascontiguousarray(vv[:, mask])
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_arr = np.array(w0, dtype=np.float64)
    cdef double[:] w = w_arr
    cdef Py_ssize_t nv = vm.shape[0], m = vm.shape[1]
    cdef double[:] s = np.zeros(m)
    cdef double[:] g = np.zeros(nv)
    cdef double[:] d = np.zeros(m)
    cdef Py_ssize_t j, k, fw, away
    cdef double gap = INFINITY, gw, t, gmin, gmax
    cdef int it = 0
    with nogil:
        for k in range(m):
            s[k] = 0.0
            for j in range(nv):
                s[k] += w[j] * vm[j, k]
        while it < max_iter:
            it += 1
            gw = 0.0
            fw = 0
            away = -1
            for j in range(nv):
                g[j] = 0.0
                for k in range(m):
                    g[j] -= vm[j, k] * rm[k] / s[k]
                g[j] /= _LN2
                gw += g[j] * w[j]
                if g[j] < g[fw]:
                    fw = j
                if w[j] > 0 and (away < 0 or g[j] > g[away]):
                    away = j
            gap = gw - g[fw]
            if gap <= tol or fw == away:
                break
            for k in range(m):
                d[k] = vm[fw, k] - vm[away, k]
            t = _line_search(rm, s, d, w[away])
            if t <= 0.0:
                break
            w[fw] += t
            w[away] -= t
            if w[away] <= 1e-17:
                w[away] = 0.0
            for k in range(m):
                s[k] = 0.0
                for j in range(nv):
                    s[k] += w[j] * vm[j, k]
    return w_arr, (gap if gap > 0.0 else 0.0), it
