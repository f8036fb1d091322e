"""Desk-scale verification suites behind ``rrmix check``.

Each check returns a :class:`CheckResult`; a suite is a list of checks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import conditionals as cond
from . import ffbs as ffbs_mod
from . import kernels
from .geweke import inject_fault, run_geweke
from .priors import default_hyperparams
from .synthgen import enumerate_state_posterior

ALPHA = 1e-3
GOF_DRAWS = 100_000


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}/{self.name}: {self.detail}"


def _ks(u, name, t0):
    """KS test of probability-integral transforms against U(0, 1)."""
    res = stats.kstest(np.asarray(u, float).ravel(), "uniform")
    return CheckResult("conditionals", name, bool(res.pvalue > ALPHA),
                       f"KS p={res.pvalue:.4f} over {np.size(u)} PITs", time.perf_counter() - t0)


def _tn_cdf(x, a, lo, hi):
    return stats.truncnorm.cdf(x, lo - a, hi - a, loc=a)


# ---------------------------------------------------------------- GoF checks

def gof_indicators(n=GOF_DRAWS, seed=1):
    """Collapsed indicator draws from the loan kernel against mixture_weights."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    c = np.array([-np.inf, 0.0, 0.7, 1.5, np.inf])
    mu = np.array([-2.0, -0.5, 0.4, 2.0])
    s2 = np.array([0.5, 0.3, 0.4, 0.6])
    a, y = 0.6, 0.1
    w = cond.mixture_weights(a, y, c, mu, s2)
    zs, _ = cond.draw_loans(np.full(n, a), np.full(n, y), c, mu, s2, rng)
    counts = np.bincount(zs - 1, minlength=4)
    res = stats.chisquare(counts, n * w)
    return CheckResult("conditionals", "indicators", bool(res.pvalue > ALPHA),
                       f"chi2 p={res.pvalue:.4f}", time.perf_counter() - t0)


def gof_latent_scores(n=GOF_DRAWS, seed=2):
    """Truncated-normal scores: bulk, both tails and the joint loan kernel."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    c = np.array([-np.inf, 0.0, 0.7, 5.0, np.inf])
    pits = []
    m = n // 4
    for a, j in ((0.3, 2), (-1.0, 4), (6.5, 1), (0.0, 3)):
        z = cond.draw_latent_score(a, j, c, rng, size=m)
        pits.append(_tn_cdf(z, a, c[j - 1], c[j]))
    # scores drawn jointly with the indicator, scored against their component
    mu = np.array([-2.0, -0.5, 0.4, 2.0])
    s2 = np.array([0.5, 0.3, 0.4, 0.6])
    zs, z = cond.draw_loans(np.full(m, 0.6), np.full(m, 0.1), c, mu, s2, rng)
    pits.append(_tn_cdf(z, 0.6, c[zs - 1], c[zs]))
    return _ks(np.concatenate(pits), "latent_scores", t0)


def gof_beta(n=GOF_DRAWS, seed=3):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(30), rng.standard_normal((30, 3))])
    z = X @ np.array([0.5, 1.0, -0.3, 0.0]) + rng.standard_normal(30)
    tau2 = np.array([0.4, 1.5, 0.05])
    mean, cov = cond.beta_posterior(X, z, tau2, 100.0)
    L = np.linalg.cholesky(cov)
    draws = np.array([cond.draw_beta(X, z, tau2, 100.0, rng) for _ in range(n)])
    white = np.linalg.solve(L, (draws - mean).T).T
    return _ks(stats.norm.cdf(white), "beta", t0)


def gof_tau(n=GOF_DRAWS, seed=4):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    beta = np.array([0.8, -0.05, 2.5])
    lam2 = 3.0
    draws = np.array([cond.draw_tau_inv2(beta, lam2, rng) for _ in range(n)])
    mu = np.sqrt(lam2 / beta ** 2)
    # scipy's invgauss(mu/lambda, scale=lambda) is IG(mean mu, shape lambda)
    u = stats.invgauss.cdf(draws, mu / lam2, scale=lam2)
    return _ks(u, "tau", t0)


def gof_lambda2(n=GOF_DRAWS, seed=5):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    tau2 = np.array([0.2, 1.1, 0.7, 3.0])
    draws = np.array([cond.draw_lambda2(tau2, 3.0, 1.0, rng) for _ in range(n)])
    u = stats.gamma.cdf(draws, 4 + 3.0, scale=1.0 / (tau2.sum() / 2 + 1.0))
    return _ks(u, "lambda2", t0)


def gof_cutpoints(n=GOF_DRAWS, seed=6):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    c = np.array([-np.inf, 0.0, 0.9, 2.0, np.inf])
    z = np.array([-0.5, 0.2, 0.4, 1.1, 1.3, 2.4])
    zstar = np.array([1, 2, 2, 3, 3, 4])
    draws = np.array([cond.draw_cutpoints(z, zstar, c, rng) for _ in range(n)])
    # bounds are pinned by data on both sides of each cut-point
    u2 = (draws[:, 2] - 0.4) / (1.1 - 0.4)
    u3 = (draws[:, 3] - 1.3) / (2.4 - 1.3)
    return _ks(np.concatenate([u2, u3]), "cutpoints", t0)


def gof_mu(n=GOF_DRAWS, seed=7):
    """First component mean, truncated above by the current second mean."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    h = default_hyperparams(3, 1)
    y = np.array([-1.0, -0.6, -0.2, 0.1, 0.3, 2.0])
    zstar = np.array([1, 1, 1, 2, 2, 3])
    s2 = np.array([0.5, 0.2, 0.3])
    mu0 = np.array([-0.4, -0.2, 2.0])
    m, v = cond.mu_conditional(y, zstar, s2, h, 1)
    draws = np.array([cond.draw_mu(y, zstar, s2, mu0, h, rng)[0] for _ in range(n)])
    u = stats.truncnorm.cdf(draws, -np.inf, (mu0[1] - m) / math.sqrt(v), loc=m, scale=math.sqrt(v))
    return _ks(u, "mu", t0)


def gof_sigma2(n=GOF_DRAWS, seed=8):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    h = default_hyperparams(3, 1)
    y = np.array([-1.0, -0.6, 0.1, 0.3, 0.2])
    zstar = np.array([1, 1, 2, 2, 2])
    mu = np.array([-0.9, 0.2, 1.0])
    draws = np.array([cond.draw_sigma2(y, zstar, mu, h, rng) for _ in range(-(-n // 3))])
    nj = np.array([2, 3, 0])
    ss = np.array([0.01 + 0.09, 0.01 + 0.01 + 0.0, 0.0])
    u = stats.invgamma.cdf(draws, 3.0 + nj / 2, scale=1.0 + ss / 2)
    return _ks(u, "sigma2", t0)


def gof_pq(n=GOF_DRAWS, seed=9):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    h = default_hyperparams(2, 1)
    S = np.array([0, 0, 1, 1, 1, 0, 1, 1])
    draws = np.array([cond.draw_pq(S, h, rng) for _ in range(n // 2)])
    n_ = cond.transition_counts(S)
    up = stats.beta.cdf(draws[:, 0], 0.5 + n_[0, 0], 0.5 + n_[0, 1])
    uq = stats.beta.cdf(draws[:, 1], 0.5 + n_[1, 1], 0.5 + n_[1, 0])
    return _ks(np.concatenate([up, uq]), "pq", t0)


GOF_CHECKS = (gof_indicators, gof_latent_scores, gof_beta, gof_tau, gof_lambda2,
              gof_cutpoints, gof_mu, gof_sigma2, gof_pq)


# ---------------------------------------------------------------- FFBS

def random_ffbs_instance(rng, max_T=10, max_nt=5, K=2):
    T = int(rng.integers(1, max_T + 1))
    nt = rng.integers(0, max_nt + 1, size=T)
    n = int(nt.sum())
    year_index = np.repeat(np.arange(1, T + 1), nt)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, K))])
    beta0 = rng.normal(0, 0.7, K + 1)
    beta1 = rng.normal(0, 0.7, K + 1)
    S = rng.integers(0, 2, T)
    z = np.where(S[year_index - 1] == 1, X @ beta1, X @ beta0) + rng.standard_normal(n)
    p, q = rng.uniform(0.05, 0.95, 2)
    return dict(z=z, X=X, year_index=year_index, T=T, beta0=beta0, beta1=beta1, p=p, q=q)


def ffbs_check(inst, sweeps, rng):
    ll = ffbs_mod.state_logliks(inst["z"], inst["X"], inst["year_index"], inst["T"],
                                inst["beta0"], inst["beta1"])
    f = ffbs_mod.hamilton_filter(ll, inst["p"], inst["q"])
    total = np.zeros(inst["T"])
    for _ in range(sweeps):
        total += ffbs_mod.backward_sample(f, inst["p"], inst["q"], rng)
    exact = enumerate_state_posterior(inst["z"], inst["X"], inst["year_index"], inst["T"],
                                      inst["beta0"], inst["beta1"], inst["p"], inst["q"])
    return float(np.max(np.abs(total / sweeps - exact)))


def ffbs_suite(instances=25, sweeps=100_000, seed=11, tol=0.01):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(instances):
        t0 = time.perf_counter()
        inst = random_ffbs_instance(rng)
        err = ffbs_check(inst, sweeps, rng)
        out.append(CheckResult("ffbs", f"instance_{i + 1:02d}", err < tol,
                               f"T={inst['T']} max|err|={err:.4f}", time.perf_counter() - t0))
    return out


# ---------------------------------------------------------------- suites

def conditionals_suite(draws=GOF_DRAWS):
    return [fn(draws) for fn in GOF_CHECKS]


def geweke_suite(fault=None, n_mc=20_000, n_chains=2_000, chain_length=10, seed=1):
    out = []
    with inject_fault(fault):
        for model in ("static", "dynamic"):
            t0 = time.perf_counter()
            r = run_geweke(model, n_mc=n_mc, n_chains=n_chains, chain_length=chain_length,
                           seed=seed)
            worst = r.names[int(np.argmax(np.abs(r.z)))]
            out.append(CheckResult(
                "geweke", model, r.passed,
                f"max|z|={np.max(np.abs(r.z)):.2f} ({worst}); failing: {r.failures() or 'none'}",
                time.perf_counter() - t0,
            ))
    return out


def backend_suite(seed=13):
    """Compiled and fallback kernels agree bitwise on the loan-level draws."""
    t0 = time.perf_counter()
    cb = kernels.compiled_backend
    if cb is None:
        return [CheckResult("backend", "agreement", True, "compiled backend not built; skipped")]
    py = kernels.python_backend
    rng = np.random.default_rng(seed)
    n = 2000
    a = rng.normal(0, 1, n)
    y = rng.normal(0, 2, n)
    c = np.array([-np.inf, 0.0, 0.8, 1.6, np.inf])
    mu = np.array([-5.6, -1.0, 0.5, 5.6])
    s2 = np.array([0.01, 0.3, 0.2, 0.001])
    zc = cb.draw_loans(a, y, c, mu, s2, 99, 1)
    zp = py.draw_loans(a, y, c, mu, s2, 99, 1)
    same = np.array_equal(zc[0], zp[0]) and np.array_equal(zc[1], zp[1])
    return [CheckResult("backend", "agreement", bool(same),
                        "bitwise identical" if same else "mismatch", time.perf_counter() - t0)]


SUITES = {
    "conditionals": conditionals_suite,
    "ffbs": ffbs_suite,
    "geweke": geweke_suite,
    "backend": backend_suite,
}


def run_suites(names=None, fault=None):
    names = list(SUITES) if not names else names
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        if name == "geweke":
            results += geweke_suite(fault=fault)
        else:
            results += SUITES[name]()
    return results
