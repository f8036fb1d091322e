"""Full-conditional samplers, one per Gibbs block.

Every function is pure given an explicit ``numpy.random.Generator``.  Draws
that go through the per-loan kernels take a 64-bit key from the generator, so
results do not depend on the kernel backend's thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import kernels
from .errors import DomainError, InsufficientDataError, NumericError
from .priors import HyperParams, stationary_prob


def new_key(rng):
    return int(rng.integers(0, 2**64, dtype=np.uint64))


# ---------------------------------------------------------------- indicators

def mixture_weights(a, y_i, c, mu, sigma2):
    """Normalised component probabilities for one loan.

    ``a`` is the loan's regression mean x'beta.  Computed in log space, so
    the result is a proper simplex vector even when every raw weight would
    underflow.
    """
    lw = kernels.log_weights(np.array([a], float), np.array([y_i], float), c, mu, sigma2)[0]
    m = lw.max()
    if not np.isfinite(m):
        raise NumericError(
            f"mixture weights vanish: a={a!r}, y={y_i!r}, c={list(c)}, mu={list(mu)}, "
            f"sigma2={list(sigma2)}",
            step="indicators",
        )
    w = np.exp(lw - m)
    return w / w.sum()


def draw_indicator(w, rng):
    """Sample a 1-based component index with probabilities ``w``."""
    w = np.asarray(w, dtype=float)
    cum = np.cumsum(w)
    j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    j = min(j, w.shape[0] - 1)
    while w[j] == 0.0:
        j -= 1
    return j + 1


def draw_latent_score(a, j, c, rng, size=None):
    """N(a, 1) truncated to ``(c[j-1], c[j]]``.

    With ``size`` returns that many independent draws.
    """
    m = 1 if size is None else int(size)
    lo = float(c[j - 1])
    hi = float(c[j])
    z = kernels.truncnorm(np.full(m, float(a)), np.full(m, lo), np.full(m, hi), new_key(rng))
    return float(z[0]) if size is None else z


def draw_loans(a, y, c, mu, sigma2, rng, nthreads=1):
    """Step 1 for all loans at once: returns ``(zstar, z)``."""
    return kernels.draw_loans(a, y, c, mu, sigma2, new_key(rng), nthreads)


# ---------------------------------------------------------------- regression

@dataclass(frozen=True)
class StatePartition:
    idx0: np.ndarray
    idx1: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    z0: np.ndarray
    z1: np.ndarray


def partition(X, z, state_of_loan):
    idx1 = np.flatnonzero(state_of_loan == 1)
    idx0 = np.flatnonzero(state_of_loan != 1)
    return StatePartition(idx0, idx1, X[idx0], X[idx1], z[idx0], z[idx1])


def beta_posterior(X, z, tau2, intercept_var):
    """Mean and covariance of the conditional posterior of beta."""
    prec = X.T @ X
    prec[np.diag_indices_from(prec)] += 1.0 / np.concatenate(([intercept_var], tau2))
    cf = linalg.cho_factor(prec, lower=True)
    mean = linalg.cho_solve(cf, X.T @ z)
    cov = linalg.cho_solve(cf, np.eye(prec.shape[0]))
    return mean, cov


def draw_beta(X, z, tau2, intercept_var, rng):
    """Draw from N(D d, D) with D = (X'X + diag(prior precisions))^-1, d = X'z.

    The intercept has prior variance ``intercept_var``; determinant k has
    ``tau2[k-1]``.  An empty partition (zero rows) yields a prior draw.
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    prec = X.T @ X
    prec[np.diag_indices_from(prec)] += 1.0 / np.concatenate(([intercept_var], tau2))
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericError("beta precision matrix is not positive definite", step="beta") from exc
    mean = linalg.cho_solve((L, True), X.T @ z)
    eps = rng.standard_normal(prec.shape[0])
    return mean + linalg.solve_triangular(L.T, eps, lower=False)


def draw_tau_inv2(beta_k, lambda2, rng):
    """Draw 1/tau^2 from InverseGaussian(sqrt(lambda2/beta^2), lambda2).

    Vectorised over ``beta_k``.  Exact zeros fall back to the prior draw
    tau^2 ~ Exp(rate lambda2/2).
    """
    beta_k = np.asarray(beta_k, dtype=float)
    scalar = beta_k.ndim == 0
    b = np.atleast_1d(beta_k)
    out = np.empty(b.shape)
    nz = b != 0.0
    if nz.any():
        out[nz] = rng.wald(np.sqrt(lambda2 / b[nz] ** 2), lambda2)
    if (~nz).any():
        out[~nz] = 1.0 / rng.exponential(2.0 / lambda2, size=int((~nz).sum()))
    # wald can return exactly 0 for extreme means in double precision
    out = np.maximum(out, np.finfo(float).tiny)
    return float(out[0]) if scalar else out


def draw_lambda2(tau2, r_bar, delta_bar, rng):
    """Gamma(shape K + r_bar, rate sum(tau2)/2 + delta_bar)."""
    tau2 = np.asarray(tau2, dtype=float)
    shape = tau2.shape[0] + r_bar
    rate = 0.5 * tau2.sum() + delta_bar
    return float(rng.gamma(shape, 1.0 / rate))


# ---------------------------------------------------------------- cut-points

def cutpoint_bounds(z, zstar, c, j, bound=math.inf):
    """Support (l_j, u_j) of interior cut-point j given its neighbours."""
    in_j = z[zstar == j]
    in_next = z[zstar == j + 1]
    lo = max(c[j - 1], in_j.max()) if in_j.size else c[j - 1]
    hi = min(c[j + 1], in_next.min()) if in_next.size else c[j + 1]
    return float(lo), float(min(hi, bound))


def draw_cutpoints(z, zstar, c, rng, bound=math.inf):
    """Redraw interior cut-points c_2..c_{J-1} one at a time, ascending.

    Each is uniform on its current bounds.  ``bound`` caps the support for
    the proper-prior harness; the model's flat prior uses ``inf``.  When the
    components above are empty the flat conditional is improper and the
    cut-point keeps its current value.
    """
    c = np.array(c, dtype=float)
    J = c.shape[0] - 1
    for j in range(2, J):
        lo, hi = cutpoint_bounds(z, zstar, c, j, bound)
        if not lo < hi:
            raise DomainError(f"cut-point {j} has empty support ({lo}, {hi})")
        if math.isfinite(hi):
            c[j] = rng.uniform(lo, hi)
    return c


# ---------------------------------------------------------------- mixture

def mu_conditional(y, zstar, sigma2, h: HyperParams, j):
    """Unconstrained conditional (mean, variance) of mu_j."""
    sel = zstar == j
    nj = int(sel.sum())
    prec = nj / sigma2[j - 1] + 1.0 / h.V_mu_bar[j - 1]
    num = y[sel].sum() / sigma2[j - 1] + h.mu_bar[j - 1] / h.V_mu_bar[j - 1]
    return num / prec, 1.0 / prec


def draw_mu(y, zstar, sigma2, mu, h: HyperParams, rng):
    """Component means in ascending order, each truncated to lie strictly
    between its freshest neighbours."""
    mu = np.array(mu, dtype=float)
    J = mu.shape[0]
    for j in range(1, J + 1):
        m, v = mu_conditional(y, zstar, sigma2, h, j)
        s = math.sqrt(v)
        lo = mu[j - 2] if j > 1 else -math.inf
        hi = mu[j] if j < J else math.inf
        x = kernels.truncnorm(
            np.zeros(1), np.array([(lo - m) / s]), np.array([(hi - m) / s]), new_key(rng)
        )[0]
        val = m + s * x
        if val <= lo:
            val = np.nextafter(lo, math.inf)
        if val >= hi:
            val = np.nextafter(hi, -math.inf)
        mu[j - 1] = val
    return mu


def draw_sigma2(y, zstar, mu, h: HyperParams, rng):
    """IG(a_bar + n_j/2, b_bar + SS_j/2) per component."""
    J = mu.shape[0]
    idx = zstar - 1
    nj = np.bincount(idx, minlength=J)
    ss = np.bincount(idx, weights=(y - mu[idx]) ** 2, minlength=J)
    shape = np.array(h.a_bar) + 0.5 * nj
    scale = np.array(h.b_bar) + 0.5 * ss
    return scale / rng.gamma(shape, 1.0)


# ---------------------------------------------------------------- transitions

def transition_counts(S, weights=None):
    """2x2 table n[a, b] of transitions a -> b over consecutive years.

    With ``weights`` (one per year) each transition into year t counts
    ``weights[t]`` times instead of once.
    """
    S = np.asarray(S, dtype=np.int64)
    w = np.ones(S.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    n = np.zeros((2, 2))
    np.add.at(n, (S[:-1], S[1:]), w[1:])
    return n


def draw_pq(S, h: HyperParams, rng, weights=None, stationary_start=False, max_tries=1_000_000):
    """Transition probabilities given the state path.

    Plain form: p ~ Beta(u00 + n00, u01 + n01), q ~ Beta(u11 + n11, u10 + n10).
    With ``stationary_start`` the stationary law of S_1 is also conditioned
    on, by accepting each beta pair with probability Pr(S_1 | p, q) <= 1.
    """
    S = np.asarray(S)
    if S.shape[0] < 2:
        raise InsufficientDataError("at least two years are needed to count transitions")
    n = transition_counts(S, weights)
    a0, b0 = h.u00 + n[0, 0], h.u01 + n[0, 1]
    a1, b1 = h.u11 + n[1, 1], h.u10 + n[1, 0]
    for _ in range(max_tries):
        # Keep draws off the boundary; the filter needs p, q in (0, 1).
        p = float(np.clip(rng.beta(a0, b0), 1e-300, 1.0 - 2**-53))
        q = float(np.clip(rng.beta(a1, b1), 1e-300, 1.0 - 2**-53))
        if not stationary_start:
            return p, q
        pi1 = stationary_prob(p, q)
        if rng.random() < (pi1 if S[0] == 1 else 1.0 - pi1):
            return p, q
    raise NumericError("initial-state correction failed to accept", step="pq")
