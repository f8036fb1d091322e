"""Hamilton filter and backward sampling of the two-state credit cycle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DomainError
from .priors import stationary_prob

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FilterResult:
    predicted: np.ndarray  # T x 2, Pr(S_t | z_1..t-1)
    filtered: np.ndarray  # T x 2, Pr(S_t | z_1..t)
    loglik: float
    log_filtered: np.ndarray


def year_loglik(z_year, X_year, beta):
    """Sum of standard-normal log densities of the regression residuals.

    An empty year contributes 0.
    """
    z_year = np.asarray(z_year, dtype=float)
    if z_year.size == 0:
        return 0.0
    r = z_year - np.asarray(X_year, dtype=float) @ np.asarray(beta, dtype=float)
    return float(-_HALF_LOG_2PI * r.shape[0] - 0.5 * np.dot(r, r))


def state_logliks(z, X, year_index, T, beta0, beta1):
    """Per-year log-likelihood of the latent scores under each state, T x 2.

    ``year_index`` is 1-based.  Years without loans get zeros.
    """
    t0 = np.asarray(year_index) - 1
    out = np.empty((T, 2))
    for s, beta in enumerate((beta0, beta1)):
        r = z - X @ beta
        out[:, s] = np.bincount(t0, weights=-_HALF_LOG_2PI - 0.5 * r * r, minlength=T)
    return out


def _log_transition(p, q):
    with np.errstate(divide="ignore"):
        return np.log(np.array([[p, 1.0 - p], [1.0 - q, q]]))


def _lse(a, b):
    m = a if a > b else b
    if m == -math.inf:
        return -math.inf
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def _log(x):
    return math.log(x) if x > 0.0 else -math.inf


def _logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _check_pq(p, q, allow_degenerate):
    if allow_degenerate:
        if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
            raise ConfigError(f"transition probabilities outside [0, 1]: p={p}, q={q}")
        if p == 1.0 and q == 1.0:
            raise DomainError("p = q = 1 has no unique stationary distribution")
    elif not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ConfigError(f"transition probabilities must lie in (0, 1): p={p}, q={q}")


def hamilton_filter(ll, p, q, allow_degenerate=False):
    """Forward filter over years given per-state log-likelihoods ``ll`` (T x 2).

    Starts from the stationary distribution; each step predicts through the
    transition matrix and updates with that year's likelihood, in log space.
    ``allow_degenerate`` admits p or q on {0, 1} (a pinned chain).
    """
    ll = np.asarray(ll, dtype=float)
    T = ll.shape[0]
    if T < 1:
        raise DomainError("at least one year is required")
    _check_pq(p, q, allow_degenerate)
    l00, l01, l10, l11 = _log(p), _log(1.0 - p), _log(1.0 - q), _log(q)
    pi1 = stationary_prob(p, q)
    pr0, pr1 = _log(1.0 - pi1), _log(pi1)
    log_pred = np.empty((T, 2))
    log_filt = np.empty((T, 2))
    total = 0.0
    llr = ll.tolist()
    f0 = f1 = 0.0
    for t in range(T):
        if t > 0:
            pr0 = _lse(f0 + l00, f1 + l10)
            pr1 = _lse(f0 + l01, f1 + l11)
        log_pred[t, 0], log_pred[t, 1] = pr0, pr1
        a0 = pr0 + llr[t][0]
        a1 = pr1 + llr[t][1]
        norm = _lse(a0, a1)
        if not math.isfinite(norm):
            raise DomainError(f"filter lost all mass in year {t + 1}")
        f0, f1 = a0 - norm, a1 - norm
        log_filt[t, 0], log_filt[t, 1] = f0, f1
        total += norm
    return FilterResult(np.exp(log_pred), np.exp(log_filt), float(total), log_filt)


def backward_sample(f: FilterResult, p, q, rng):
    """Draw S_T from the last filtered row, then each S_t given S_{t+1}."""
    lt = ((_log(p), _log(1.0 - p)), (_log(1.0 - q), _log(q)))
    lf = f.log_filtered.tolist()
    T = len(lf)
    u = rng.random(T)
    S = np.empty(T, dtype=np.int64)
    s = int(u[T - 1] < math.exp(lf[T - 1][1]))
    S[T - 1] = s
    for t in range(T - 2, -1, -1):
        w0 = lf[t][0] + lt[0][s]
        w1 = lf[t][1] + lt[1][s]
        # Pr(S_t = 1 | S_{t+1}, z_1..t)
        pr1 = _logistic(w1 - w0) if w1 > -math.inf else 0.0
        s = int(u[t] < pr1)
        S[t] = s
    return S


def smoothed_marginals(f: FilterResult, p, q):
    """Exact Pr(S_t = 1 | all years) by the backward smoothing recursion."""
    logP = _log_transition(p, q)
    lf = f.log_filtered
    T = lf.shape[0]
    ls = np.empty((T, 2))
    ls[T - 1] = lf[T - 1]
    for t in range(T - 2, -1, -1):
        # log Pr(S_{t+1} = b | z_1..t)
        lpred = logsumexp(lf[t][:, None] + logP, axis=0)
        ls[t] = lf[t] + logsumexp(logP + (ls[t + 1] - lpred)[None, :], axis=1)
    return np.exp(ls[:, 1])


def ffbs(ll, p, q, rng, allow_degenerate=False):
    f = hamilton_filter(ll, p, q, allow_degenerate)
    return backward_sample(f, p, q, rng), f


def steady_state_prob(p, q):
    """Long-run probability of the good state, (1 - p) / (2 - p - q)."""
    return stationary_prob(p, q)
