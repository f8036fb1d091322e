"""Vectorised NumPy implementation of the per-loan kernels.

Mirrors ``_ckernels.pyx`` operation for operation: the same counter-based
uniform stream, the same branch structure for the truncated normal, the same
categorical search.  Given a key both backends consume identical uniforms.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from ..errors import NumericError

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO53 = 1.0 / 9007199254740992.0

TAIL = 4.0
LOG_2PI = float(np.log(2.0 * np.pi))
BACKEND = "python"


def _mix(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _M1
        x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def stream_seeds(key, idx):
    """Per-loan stream seed for loan indices ``idx`` under ``key``."""
    idx = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(key) + (idx + np.uint64(1)) * GOLDEN)


def stream_uniform(seeds, k):
    """The ``k``-th uniform on (0, 1) of each stream."""
    k = np.asarray(k, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix(seeds + (k + np.uint64(1)) * GOLDEN)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO53


def uniforms(key, n, m):
    """``n x m`` block of stream uniforms (row i = loan i), for testing."""
    seeds = stream_seeds(key, np.arange(n))
    return np.stack([stream_uniform(seeds, np.full(n, k)) for k in range(m)], axis=1)


def _truncstd(l, h, seeds, counters):
    """Standard normal truncated to (l, h]; one value per stream.

    ``counters`` holds the next unused uniform index of each stream and is
    advanced in place.
    """
    n = l.shape[0]
    x = np.empty(n)
    right = l >= TAIL
    left = h <= -TAIL
    bulk = ~(right | left)

    if bulk.any():
        lb, hb = l[bulk], h[bulk]
        u = stream_uniform(seeds[bulk], counters[bulk])
        counters[bulk] += 1
        upper = lb > 0.0
        out = np.empty(lb.shape[0])
        if upper.any():
            ql, qh = ndtr(-lb[upper]), ndtr(-hb[upper])
            out[upper] = -ndtri(qh + u[upper] * (ql - qh))
        lower = ~upper
        if lower.any():
            pl, ph = ndtr(lb[lower]), ndtr(hb[lower])
            out[lower] = ndtri(pl + u[lower] * (ph - pl))
        x[bulk] = out

    for mask, sign in ((right, 1.0), (left, -1.0)):
        if not mask.any():
            continue
        idx = np.flatnonzero(mask)
        if sign > 0:
            a, b = l[idx], h[idx]
        else:
            a, b = -h[idx], -l[idx]
        x[idx] = sign * _tail(a, b, seeds[idx], counters, idx)
    return x


def _tail(a, b, seeds, counters, idx):
    """Right-tail rejection sampler on (a, b], a >= TAIL."""
    res = np.empty(a.shape[0])
    uniform_prop = (b - a) < 2.0 / a
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    pending = np.arange(a.shape[0])
    while pending.size:
        pa, pb, ps = a[pending], b[pending], seeds[pending]
        c = counters[idx[pending]]
        u1 = stream_uniform(ps, c)
        u2 = stream_uniform(ps, c + 1)
        counters[idx[pending]] += 2
        up = uniform_prop[pending]
        prop = np.where(up, pa + u1 * (pb - pa), pa - np.log(u1) / alpha[pending])
        logacc = np.where(
            up, 0.5 * (pa * pa - prop * prop), -0.5 * (prop - alpha[pending]) ** 2
        )
        ok = (np.log(u2) <= logacc) & (prop <= pb)
        res[pending[ok]] = prop[ok]
        pending = pending[~ok]
    return res


def _finish(z, lo, hi):
    below = z <= lo
    if below.any():
        z[below] = np.nextafter(lo[below], np.inf)
    z[z > hi] = hi[z > hi]
    return z


def truncnorm(mean, lo, hi, key, nthreads=1):
    """Draw ``N(mean_i, 1)`` truncated to ``(lo_i, hi_i]`` using stream i."""
    mean = np.ascontiguousarray(mean, dtype=float)
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    n = mean.shape[0]
    seeds = stream_seeds(key, np.arange(n))
    counters = np.zeros(n, dtype=np.uint64)
    x = _truncstd(lo - mean, hi - mean, seeds, counters)
    return _finish(mean + x, lo, hi)


def _small_tail(d):
    """log of the smaller standard-normal tail beyond ``d``; -inf at +-inf."""
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(d), log_ndtr(-np.abs(d)), -np.inf)


def _log_interval(l, h):
    """log(Phi(h) - Phi(l)) elementwise, stable in both tails."""
    l, h = np.broadcast_arrays(l, h)
    tl, th = _small_tail(l), _small_tail(h)
    out = np.full(l.shape, -np.inf)
    valid = l < h
    up = valid & (l >= 0.0)
    dn = valid & (h <= 0.0) & ~up
    mid = valid & ~up & ~dn
    with np.errstate(divide="ignore", invalid="ignore"):
        out[up] = tl[up] + np.log1p(-np.exp(th[up] - tl[up]))
        out[dn] = th[dn] + np.log1p(-np.exp(tl[dn] - th[dn]))
        out[mid] = np.log1p(-(np.exp(tl[mid]) + np.exp(th[mid])))
    return out


def log_weights(a, y, c, mu, sigma2):
    """Unnormalised log mixture-indicator weights, shape ``(n, J)``."""
    a = np.asarray(a, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[:, None]
    c = np.asarray(c, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    lp = _log_interval(c[None, :-1] - a, c[None, 1:] - a)
    ld = -0.5 * (LOG_2PI + np.log(sigma2)) - 0.5 * (y - mu) ** 2 / sigma2
    return lp + ld


def draw_loans(a, y, c, mu, sigma2, key, nthreads=1):
    """Joint draw of (indicator, latent score) for every loan.

    Returns ``(zstar, z)`` with ``zstar`` 1-based.  Uniform 0 of each loan's
    stream picks the component; the rest feed the truncated normal.
    """
    a = np.ascontiguousarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    n = a.shape[0]
    J = c.shape[0] - 1
    lw = log_weights(a, y, c, mu, sigma2)
    m = lw.max(axis=1)
    if not np.all(np.isfinite(m)):
        bad = int(np.flatnonzero(~np.isfinite(m))[0])
        raise NumericError(f"all mixture weights vanish for loan {bad}", step="indicators")
    w = np.exp(lw - m[:, None])
    cum = np.cumsum(w, axis=1)
    seeds = stream_seeds(key, np.arange(n))
    u = stream_uniform(seeds, np.zeros(n, dtype=np.uint64))
    target = u * cum[:, -1]
    j = np.minimum((cum <= target[:, None]).sum(axis=1), J - 1)
    # Never land on a zero-weight component through round-off at the boundary.
    while True:
        bad = w[np.arange(n), j] == 0.0
        if not bad.any():
            break
        j[bad] -= 1
    counters = np.ones(n, dtype=np.uint64)
    lo, hi = c[j], c[j + 1]
    x = _truncstd(lo - a, hi - a, seeds, counters)
    z = _finish(a + x, lo, hi)
    return (j + 1).astype(np.int64), z
