"""Hyperparameters, the latent/parameter state container, prior sampling and
the joint prior log-density."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class HyperParams:
    """Fixed prior constants.

    Inverse-gamma priors use ``a_bar`` as shape and ``b_bar`` as scale
    (density proportional to ``x**-(a+1) * exp(-b/x)``).  Gamma priors on the
    LASSO parameters use shape ``r_bar`` and rate ``delta_bar``.

    ``cut_bound`` caps the interior cut-points; the model itself uses the
    improper flat prior (``inf``).  A finite bound turns the flat prior into a
    proper uniform one, which only the correctness harnesses need.
    ``cut_ref_width`` is the width of the reference uniform used when
    initialising cut-points under the improper prior.
    """

    J: int
    K: int
    mu_bar: tuple
    V_mu_bar: tuple
    a_bar: tuple
    b_bar: tuple
    r_bar: float = 3.0
    delta_bar: float = 1.0
    u00: float = 0.5
    u01: float = 0.5
    u10: float = 0.5
    u11: float = 0.5
    sigma_eps2: float = 1.0
    intercept_var: float = 100.0
    cut_bound: float = math.inf
    cut_ref_width: float = 4.0

    def __post_init__(self):
        if self.J < 2:
            raise ConfigError(f"J must be at least 2, got {self.J}")
        if self.K < 0:
            raise ConfigError(f"K must be non-negative, got {self.K}")
        for name in ("mu_bar", "V_mu_bar", "a_bar", "b_bar"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != self.J:
                raise ConfigError(f"{name} must have length J={self.J}")
            object.__setattr__(self, name, v)
        positive = list(self.V_mu_bar) + list(self.a_bar) + list(self.b_bar) + [
            self.r_bar, self.delta_bar, self.u00, self.u01, self.u10, self.u11,
            self.intercept_var, self.cut_ref_width,
        ]
        if any(not (v > 0.0) for v in positive):
            raise ConfigError("prior variances and gamma/beta constants must be positive")
        if self.sigma_eps2 != 1.0:
            raise ConfigError("the latent regression variance is fixed at 1")
        if not self.cut_bound > 0.0:
            raise ConfigError("cut_bound must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


def default_hyperparams(J=4, K=20, **overrides):
    """Diffuse defaults: N(0, 100) component means, IG(3, 1) variances,
    Gamma(3, 1) LASSO parameters and Beta(0.5, 0.5) transition priors."""
    if J < 2:
        raise ConfigError(f"J must be at least 2, got {J}")
    if K < 1:
        raise ConfigError(f"K must be at least 1, got {K}")
    base = dict(
        J=J,
        K=K,
        mu_bar=(0.0,) * J,
        V_mu_bar=(100.0,) * J,
        a_bar=(3.0,) * J,
        b_bar=(1.0,) * J,
    )
    base.update(overrides)
    return HyperParams(**base)


def load_hyperparams(path, J, K):
    """Defaults for (J, K) overridden by the keys of a JSON file."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read hyperparameter file {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("hyperparameter file must hold a JSON object")
    d = dict(d)
    d.setdefault("J", J)
    d.setdefault("K", K)
    for name in ("mu_bar", "V_mu_bar", "a_bar", "b_bar"):
        if name in d and not isinstance(d[name], (list, tuple)):
            d[name] = (float(d[name]),) * d["J"]
    base = default_hyperparams(d["J"], max(d["K"], 1)).to_dict()
    base.update(d)
    return HyperParams.from_dict(base)


@dataclass
class ModelState:
    """One configuration of every unknown.

    ``c`` has length J+1 with ``c[0] = -inf``, ``c[1] = 0``, ``c[J] = inf``.
    ``beta0``/``beta1`` hold the intercept first.  ``tau2_0``/``tau2_1`` are
    the local LASSO variances of the K determinant coefficients.  ``S`` is
    indexed by year, ``z`` and ``zstar`` (1-based components) by loan.
    """

    mu: np.ndarray
    sigma2: np.ndarray
    c: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    tau2_0: np.ndarray
    tau2_1: np.ndarray
    lambda2_0: float
    lambda2_1: float
    p: float
    q: float
    S: np.ndarray
    z: np.ndarray = field(default_factory=lambda: np.empty(0))
    zstar: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def J(self):
        return self.mu.shape[0]

    def copy(self):
        return replace(
            self,
            **{
                f.name: getattr(self, f.name).copy()
                for f in fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)
            },
        )

    def violations(self, strict_pq=True):
        """Names of violated invariants (empty list when valid)."""
        out = []
        J = self.J
        if not np.all(np.diff(self.mu) > 0):
            out.append("mu_order")
        if not np.all(self.sigma2 > 0):
            out.append("sigma2_positive")
        c = self.c
        if (
            c.shape[0] != J + 1
            or c[0] != -np.inf
            or c[1] != 0.0
            or c[J] != np.inf
            or not np.all(np.diff(c[1:J]) > 0)
        ):
            out.append("cut_order")
        if not (np.all(self.tau2_0 > 0) and np.all(self.tau2_1 > 0)):
            out.append("tau_positive")
        if not (self.lambda2_0 > 0 and self.lambda2_1 > 0):
            out.append("lambda_positive")
        lo, hi = (0.0, 1.0)
        if strict_pq and not (lo < self.p < hi and lo < self.q < hi):
            out.append("pq_interior")
        if not np.all((self.S == 0) | (self.S == 1)):
            out.append("S_binary")
        if self.z.size:
            zs = self.zstar
            if np.any((zs < 1) | (zs > J)):
                out.append("zstar_range")
            elif not np.all((c[zs - 1] < self.z) & (self.z <= c[zs])):
                out.append("z_consistency")
        return out

    def validate(self, strict_pq=True):
        bad = self.violations(strict_pq)
        if bad:
            raise DomainError(f"ModelState invariants violated: {', '.join(bad)}")
        return self


def stationary_prob(p, q):
    """Long-run probability of state 1 for the two-state chain."""
    den = 2.0 - p - q
    if den <= 0.0:
        raise DomainError("p = q = 1 has no unique stationary distribution")
    return (1.0 - p) / den


def assign_components(z, c):
    """Component index j (1-based) with ``c[j-1] < z <= c[j]``."""
    return np.searchsorted(c[1:-1], z, side="left").astype(np.int64) + 1


def simulate_states(p, q, T, rng):
    """Markov chain path started from its stationary distribution."""
    S = np.empty(T, dtype=np.int64)
    S[0] = rng.random() < stationary_prob(p, q)
    for t in range(1, T):
        stay = p if S[t - 1] == 0 else q
        S[t] = S[t - 1] if rng.random() < stay else 1 - S[t - 1]
    return S


def _sample_ordered_mu(h, rng):
    mb = np.array(h.mu_bar)
    sd = np.sqrt(np.array(h.V_mu_bar))
    homogeneous = np.all(mb == mb[0]) and np.all(sd == sd[0])
    while True:
        mu = rng.normal(mb, sd)
        if homogeneous:
            return np.sort(mu)
        if np.all(np.diff(mu) > 0):
            return mu


def sample_prior_state(h: HyperParams, n, T, rng, X=None, year_index=None,
                       static=False, fixed_pq=None):
    """Draw every unknown from the prior, then latent scores given covariates.

    The cut-point prior is improper, so interior cut-points come from sorted
    uniforms on ``(0, W)`` with ``W = h.cut_bound`` when finite, else
    ``h.cut_ref_width``.  Without ``X`` the design is intercept-only padded
    with zero determinants; without ``year_index`` loans cycle through years.
    ``static`` pins every year to state 1.
    """
    if n < 1 or T < 1:
        raise DomainError("n and T must be at least 1")
    J, K = h.J, h.K
    if X is None:
        X = np.zeros((n, K + 1))
        X[:, 0] = 1.0
    if year_index is None:
        year_index = np.arange(n) % T + 1

    mu = _sample_ordered_mu(h, rng)
    sigma2 = np.array(h.b_bar) / rng.gamma(np.array(h.a_bar), 1.0)

    W = h.cut_bound if math.isfinite(h.cut_bound) else h.cut_ref_width
    c = np.empty(J + 1)
    c[0], c[1], c[J] = -np.inf, 0.0, np.inf
    c[2:J] = np.sort(rng.uniform(0.0, W, size=J - 2))

    lam = rng.gamma(h.r_bar, 1.0 / h.delta_bar, size=2)
    tau2 = [rng.exponential(2.0 / lam[s], size=K) for s in (0, 1)]
    betas = []
    for s in (0, 1):
        b = np.empty(K + 1)
        b[0] = rng.normal(0.0, math.sqrt(h.intercept_var))
        b[1:] = rng.normal(0.0, np.sqrt(h.sigma_eps2 * tau2[s]))
        betas.append(b)

    if fixed_pq is not None:
        p, q = (float(v) for v in fixed_pq)
    else:
        # same boundary guard as the posterior update
        p = min(max(rng.beta(h.u00, h.u01), 1e-300), 1.0 - 2**-53)
        q = min(max(rng.beta(h.u11, h.u10), 1e-300), 1.0 - 2**-53)
    if static:
        S = np.ones(T, dtype=np.int64)
    else:
        S = simulate_states(p, q, T, rng)

    t0 = np.asarray(year_index) - 1
    st = S[t0]
    a = np.where(st == 1, X @ betas[1], X @ betas[0])
    z = a + rng.standard_normal(n)
    zstar = assign_components(z, c)
    return ModelState(
        mu=mu,
        sigma2=sigma2,
        c=c,
        beta0=betas[0],
        beta1=betas[1],
        tau2_0=tau2[0],
        tau2_1=tau2[1],
        lambda2_0=float(lam[0]),
        lambda2_1=float(lam[1]),
        p=float(p),
        q=float(q),
        S=S,
        z=z,
        zstar=zstar,
    )


_LOG_2PI = math.log(2.0 * math.pi)


def _lnorm(x, m, v):
    return -0.5 * (_LOG_2PI + np.log(v)) - 0.5 * (x - m) ** 2 / v


def _lbeta_pdf(x, a, b):
    return (
        (a - 1.0) * math.log(x)
        + (b - 1.0) * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )


def log_prior_density(s: ModelState, h: HyperParams, static=False):
    """Joint log prior density over the proper prior components.

    Covers the ordered component means (normalised by J! when the prior
    means and variances are homogeneous), the inverse-gamma variances, the
    LASSO hierarchy (intercept normal, normal given local variance,
    exponential local variances, gamma global parameter) for each state, the
    beta transition priors and the Markov path of S.  The improper cut-point
    prior is excluded.  ``static`` keeps only the state-1 regression block.

    Out-of-support values (non-positive variances, probabilities outside
    (0, 1)) give ``-inf``; a broken ordering raises :class:`DomainError`.
    """
    if not np.all(np.diff(s.mu) > 0):
        raise DomainError("component means are not strictly increasing")
    c = s.c
    if c.shape[0] != h.J + 1 or not np.all(np.diff(c[1:h.J]) > 0):
        raise DomainError("cut-points are not strictly increasing")
    if np.any(s.sigma2 <= 0):
        return -math.inf

    mb, V = np.array(h.mu_bar), np.array(h.V_mu_bar)
    lp = float(np.sum(_lnorm(s.mu, mb, V)))
    if np.all(mb == mb[0]) and np.all(V == V[0]):
        lp += math.lgamma(h.J + 1)

    a, b = np.array(h.a_bar), np.array(h.b_bar)
    lp += float(np.sum(
        a * np.log(b) - np.vectorize(math.lgamma)(a) - (a + 1.0) * np.log(s.sigma2) - b / s.sigma2
    ))

    blocks = [(s.beta1, s.tau2_1, s.lambda2_1)]
    if not static:
        blocks.insert(0, (s.beta0, s.tau2_0, s.lambda2_0))
    for beta, tau2, lam in blocks:
        if lam <= 0 or np.any(tau2 <= 0):
            return -math.inf
        lp += float(_lnorm(beta[0], 0.0, h.intercept_var))
        lp += float(np.sum(_lnorm(beta[1:], 0.0, h.sigma_eps2 * tau2)))
        rate = 0.5 * lam
        lp += float(np.sum(math.log(rate) - rate * tau2))
        lp += (
            h.r_bar * math.log(h.delta_bar) - math.lgamma(h.r_bar)
            + (h.r_bar - 1.0) * math.log(lam) - h.delta_bar * lam
        )

    if not static:
        p, q = s.p, s.q
        if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
            return -math.inf
        lp += _lbeta_pdf(p, h.u00, h.u01) + _lbeta_pdf(q, h.u11, h.u10)
        lp += log_path_prob(s.S, p, q)
    return lp


def log_path_prob(S, p, q):
    """log Pr(S | p, q) with a stationary initial state."""
    S = np.asarray(S)
    pi1 = stationary_prob(p, q)
    lp = math.log(pi1 if S[0] == 1 else 1.0 - pi1)
    logT = np.log(np.array([[p, 1.0 - p], [1.0 - q, q]]))
    if S.shape[0] > 1:
        lp += float(np.sum(logT[S[:-1], S[1:]]))
    return lp
