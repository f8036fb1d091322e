"""Joint-distribution (Geweke) test of the Gibbs sweep.

Marginal-conditional draws sample parameters from the prior and data given
them.  Successive-conditional draws alternate one Gibbs sweep with a fresh
draw of y given the latent allocation.  Both target the same joint law, so
any test function must have the same mean under the two schemes.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import conditionals as cond
from .data import design_from_arrays
from .engine import FitConfig, gibbs_step
from .priors import default_hyperparams, sample_prior_state

# Uniform(0, W) stand-in for the flat cut-point prior.
GEWEKE_CUT_BOUND = 3.0


def _mean_sq(v):
    return float(np.mean(np.asarray(v) ** 2))


DYNAMIC_FUNCTIONS = {
    "mu_1": lambda s: s.mu[0],
    "mu_J": lambda s: s.mu[-1],
    "mean_mu_sq": lambda s: _mean_sq(s.mu),
    "mean_sigma2": lambda s: float(np.mean(s.sigma2)),
    "mean_log_sigma2_sq": lambda s: _mean_sq(np.log(s.sigma2)),
    "beta1_slope": lambda s: s.beta1[1],
    "beta1_slope_sq": lambda s: s.beta1[1] ** 2,
    "beta0_intercept": lambda s: s.beta0[0],
    "p": lambda s: s.p,
    "q_sq": lambda s: s.q ** 2,
    "lambda2_0": lambda s: s.lambda2_0,
    "lambda2_1_sq": lambda s: s.lambda2_1 ** 2,
}

STATIC_FUNCTIONS = {
    "mu_1": lambda s: s.mu[0],
    "mu_J": lambda s: s.mu[-1],
    "mean_mu_sq": lambda s: _mean_sq(s.mu),
    "mean_sigma2": lambda s: float(np.mean(s.sigma2)),
    "mean_log_sigma2_sq": lambda s: _mean_sq(np.log(s.sigma2)),
    "beta_slope": lambda s: s.beta1[1],
    "beta_slope_sq": lambda s: s.beta1[1] ** 2,
    "beta_intercept": lambda s: s.beta1[0],
    "beta_last_slope": lambda s: s.beta1[-1],
    "cut_2": lambda s: s.c[2],
    "lambda2": lambda s: s.lambda2_1,
    "lambda2_sq": lambda s: s.lambda2_1 ** 2,
}


@dataclass
class GewekeResult:
    model: str
    names: list
    z: np.ndarray
    mc_mean: np.ndarray
    sc_mean: np.ndarray
    threshold: float

    @property
    def passed(self):
        return bool(np.all(np.abs(self.z) < self.threshold))

    def failures(self):
        return [n for n, v in zip(self.names, self.z) if not abs(v) < self.threshold]

    def lines(self):
        return [f"{n:22s} z={v:+7.2f}" for n, v in zip(self.names, self.z)]


def desk_problem(n=200, T=10, K=3, J=3, seed=12345):
    """Fixed covariates and year layout for the harness."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, K))])
    year_index = np.arange(n) % T + 1
    h = dataclasses.replace(default_hyperparams(J, K), cut_bound=GEWEKE_CUT_BOUND)
    return X, year_index, h


def _regenerate_y(s, rng):
    j = s.zstar - 1
    return s.mu[j] + np.sqrt(s.sigma2[j]) * rng.standard_normal(j.shape[0])


def run_geweke(model="dynamic", n_mc=20_000, n_chains=2_000, chain_length=10, seed=0,
               n=200, T=10, K=3, J=3, threshold=4.0, exact_pq=True):
    """Compare marginal-conditional and successive-conditional means.

    The successive-conditional side runs ``n_chains`` independent chains of
    ``chain_length`` sweeps, each started from an exact joint draw, so the
    per-chain averages are iid and their spread gives the standard error
    without autocorrelation estimates.  At desk scale the regimes and the
    ordered-probit intercepts are so well identified that one long chain
    would take far too long to mix.  ``exact_pq=False`` runs the literal
    Beta update for (p, q), which ignores the stationary start.
    """
    X, year_index, h = desk_problem(n, T, K, J)
    static = model == "static"
    funcs = STATIC_FUNCTIONS if static else DYNAMIC_FUNCTIONS
    names = list(funcs)
    rng = np.random.default_rng(seed)

    def prior_draw():
        return sample_prior_state(h, n, T, rng, X=X, year_index=year_index, static=static)

    def g(s):
        return [f(s) for f in funcs.values()]

    mc = np.array([g(prior_draw()) for _ in range(n_mc)])

    cfg = FitConfig(model=model, draws=1, burnin=0, seed=seed, J=J, exact_pq=exact_pq)
    sc = np.empty((n_chains, len(names)))
    for c in range(n_chains):
        s = prior_draw()
        d = design_from_arrays(_regenerate_y(s, rng), X, year_index, T=T)
        acc = np.zeros(len(names))
        for _ in range(chain_length):
            s = gibbs_step(s, d, h, cfg, rng)
            d = dataclasses.replace(d, y=_regenerate_y(s, rng))
            acc += g(s)
        sc[c] = acc / chain_length

    mc_mean = mc.mean(axis=0)
    sc_mean = sc.mean(axis=0)
    se = np.sqrt(mc.var(axis=0, ddof=1) / n_mc + sc.var(axis=0, ddof=1) / n_chains)
    z = (mc_mean - sc_mean) / np.where(se > 0, se, math.inf)
    return GewekeResult(model, names, z, mc_mean, sc_mean, threshold)


# ---------------------------------------------------------------- mutations

def _wrong_gamma_rate(tau2, r_bar, delta_bar, rng):
    tau2 = np.asarray(tau2, dtype=float)
    return float(rng.gamma(tau2.shape[0] + r_bar, 1.0 / (tau2.sum() + delta_bar)))


def _wrong_sigma2_shape(y, zstar, mu, h, rng):
    J = mu.shape[0]
    idx = zstar - 1
    nj = np.bincount(idx, minlength=J)
    ss = np.bincount(idx, weights=(y - mu[idx]) ** 2, minlength=J)
    return (np.array(h.b_bar) + 0.5 * ss) / rng.gamma(np.array(h.a_bar) + nj, 1.0)


FAULTS = {
    "gamma-rate": ("draw_lambda2", _wrong_gamma_rate),
    "sigma2-shape": ("draw_sigma2", _wrong_sigma2_shape),
}


@contextlib.contextmanager
def inject_fault(name):
    """Temporarily replace one conditional sampler with a known-wrong one."""
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise KeyError(f"unknown fault {name!r}; choose from {sorted(FAULTS)}")
    attr, fn = FAULTS[name]
    orig = getattr(cond, attr)
    setattr(cond, attr, fn)
    try:
        yield
    finally:
        setattr(cond, attr, orig)
