# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-loan kernels.

Same algorithms and uniform stream as ``_pykernels``; loans are independent
given a key, so the OpenMP loop is thread-count invariant.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, log, log1p, sqrt, INFINITY, isfinite, nextafter
from libc.stdint cimport uint64_t, int64_t
from scipy.special.cython_special cimport log_ndtr, ndtr, ndtri

from ..errors import NumericError

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TAIL = 4.0
cdef double LOG_2PI = 1.8378770664093453
cdef double TWO53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline uint64_t _seed(uint64_t key, uint64_t i) noexcept nogil:
    return _mix(key + (i + 1) * GOLDEN)


cdef inline double _unif(uint64_t seed, uint64_t k) noexcept nogil:
    cdef uint64_t bits = _mix(seed + (k + 1) * GOLDEN)
    return (<double>(bits >> 11) + 0.5) * TWO53


cdef double _tail(double a, double b, uint64_t seed, uint64_t *k) noexcept nogil:
    cdef double alpha = 0.5 * (a + sqrt(a * a + 4.0))
    cdef bint up = (b - a) < 2.0 / a
    cdef double u1, u2, x, logacc
    while True:
        u1 = _unif(seed, k[0])
        u2 = _unif(seed, k[0] + 1)
        k[0] += 2
        if up:
            x = a + u1 * (b - a)
            logacc = 0.5 * (a * a - x * x)
        else:
            x = a - log(u1) / alpha
            logacc = -0.5 * (x - alpha) * (x - alpha)
        if log(u2) <= logacc and x <= b:
            return x


cdef double _truncstd(double l, double h, uint64_t seed, uint64_t *k) noexcept nogil:
    cdef double u, ql, qh, pl, ph
    if l >= TAIL:
        return _tail(l, h, seed, k)
    if h <= -TAIL:
        return -_tail(-h, -l, seed, k)
    u = _unif(seed, k[0])
    k[0] += 1
    if l > 0.0:
        ql = ndtr(-l)
        qh = ndtr(-h)
        return -ndtri(qh + u * (ql - qh))
    pl = ndtr(l)
    ph = ndtr(h)
    return ndtri(pl + u * (ph - pl))


cdef inline double _finish(double z, double lo, double hi) noexcept nogil:
    if z <= lo:
        z = nextafter(lo, INFINITY)
    if z > hi:
        z = hi
    return z


cdef inline double _log_interval_t(double l, double h, double tl, double th) noexcept nogil:
    # tl, th: log of the smaller normal tail beyond l and h (-inf at +-inf)
    if not l < h:
        return -INFINITY
    if l >= 0.0 or h <= 0.0:
        if l >= 0.0:
            return tl + log1p(-exp(th - tl))
        return th + log1p(-exp(tl - th))
    return log1p(-(exp(tl) + exp(th)))


cdef inline double _small_tail(double d) noexcept nogil:
    if not isfinite(d):
        return -INFINITY
    if d > 0.0:
        d = -d
    return log_ndtr(d)


def stream_seeds(uint64_t key, idx):
    cdef const cnp.uint64_t[::1] iv = np.ascontiguousarray(idx, dtype=np.uint64)
    out = np.empty(iv.shape[0], dtype=np.uint64)
    cdef cnp.uint64_t[::1] ov = out
    cdef Py_ssize_t i
    for i in range(iv.shape[0]):
        ov[i] = _seed(key, iv[i])
    return out


def uniforms(uint64_t key, Py_ssize_t n, Py_ssize_t m):
    out = np.empty((n, m))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef uint64_t s
    for i in range(n):
        s = _seed(key, i)
        for j in range(m):
            ov[i, j] = _unif(s, j)
    return out


def truncnorm(mean, lo, hi, uint64_t key, int nthreads=1):
    cdef const double[::1] mv = np.ascontiguousarray(mean, dtype=np.float64)
    cdef const double[::1] lv = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t n = mv.shape[0], i
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef uint64_t k
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
        k = 0
        ov[i] = _finish(
            mv[i] + _truncstd(lv[i] - mv[i], hv[i] - mv[i], _seed(key, i), &k),
            lv[i], hv[i])
    return out


def log_weights(a, y, c, mu, sigma2):
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[::1] s2v = np.ascontiguousarray(sigma2, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], J = cv.shape[0] - 1, i, j
    out = np.empty((n, J))
    cdef double[:, ::1] ov = out
    cdef double r
    cdef double t[65]
    if J > 64:
        raise ValueError("at most 64 mixture components supported")
    for i in range(n):
        for j in range(J + 1):
            t[j] = _small_tail(cv[j] - av[i])
        for j in range(J):
            r = yv[i] - muv[j]
            ov[i, j] = (_log_interval_t(cv[j] - av[i], cv[j + 1] - av[i], t[j], t[j + 1])
                        - 0.5 * (LOG_2PI + log(s2v[j])) - 0.5 * r * r / s2v[j])
    return out


cdef int _one_loan(double a, double y, double *c, double *mu, double *s2,
                   double *halfls, Py_ssize_t J, uint64_t seed,
                   int64_t *zs_out, double *z_out) noexcept nogil:
    cdef double w[64]
    cdef double t[65]
    cdef double m = -INFINITY, tot = 0.0, acc = 0.0, target, lw, r
    cdef Py_ssize_t j, jj = J - 1
    cdef uint64_t k = 1
    for j in range(J + 1):
        t[j] = _small_tail(c[j] - a)
    for j in range(J):
        r = y - mu[j]
        lw = _log_interval_t(c[j] - a, c[j + 1] - a, t[j], t[j + 1]) + halfls[j] - 0.5 * r * r / s2[j]
        w[j] = lw
        if lw > m:
            m = lw
    if not isfinite(m):
        zs_out[0] = 0
        z_out[0] = 0.0
        return 1
    for j in range(J):
        w[j] = exp(w[j] - m)
        tot += w[j]
    target = _unif(seed, 0) * tot
    for j in range(J):
        acc += w[j]
        if acc > target:
            jj = j
            break
    while w[jj] == 0.0:
        jj -= 1
    zs_out[0] = jj + 1
    z_out[0] = _finish(a + _truncstd(c[jj] - a, c[jj + 1] - a, seed, &k), c[jj], c[jj + 1])
    return 0


def draw_loans(a, y, c, mu, sigma2, uint64_t key, int nthreads=1):
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[::1] s2v = np.ascontiguousarray(sigma2, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], J = cv.shape[0] - 1, i
    if J > 64:
        raise ValueError("at most 64 mixture components supported")
    zs = np.empty(n, dtype=np.int64)
    z = np.empty(n)
    cdef int64_t[::1] zsv = zs
    cdef double[::1] zv = z
    halfls_arr = -0.5 * (LOG_2PI + np.log(np.asarray(s2v)))
    cdef double[::1] halfls = halfls_arr
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
        _one_loan(av[i], yv[i], &cv[0], &muv[0], &s2v[0], &halfls[0], J,
                  _seed(key, i), &zsv[i], &zv[i])
    if n and zs.min() == 0:
        bad = int(np.flatnonzero(zs == 0)[0])
        raise NumericError(f"all mixture weights vanish for loan {bad}", step="indicators")
    return zs, z
