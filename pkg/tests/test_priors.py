import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rrmix.errors import ConfigError, DomainError
from rrmix.priors import (
    HyperParams,
    assign_components,
    default_hyperparams,
    load_hyperparams,
    log_path_prob,
    log_prior_density,
    sample_prior_state,
    stationary_prob,
)


def test_defaults_match_published_constants():
    h = default_hyperparams(4, 20)
    assert (h.r_bar, h.delta_bar) == (3.0, 1.0)
    assert h.V_mu_bar == (100.0,) * 4
    assert h.mu_bar == (0.0,) * 4
    assert h.a_bar == (3.0,) * 4 and h.b_bar == (1.0,) * 4
    assert (h.u00, h.u01, h.u10, h.u11) == (0.5, 0.5, 0.5, 0.5)
    assert h.sigma_eps2 == 1.0


def test_small_defaults_and_errors():
    h = default_hyperparams(2, 1)
    assert len(h.mu_bar) == 2 and h.K == 1
    with pytest.raises(ConfigError):
        default_hyperparams(1, 20)
    with pytest.raises(ConfigError):
        default_hyperparams(4, 0)
    with pytest.raises(ConfigError):
        dataclasses.replace(h, sigma_eps2=2.0)
    with pytest.raises(ConfigError):
        dataclasses.replace(h, r_bar=-1.0)
    with pytest.raises(ConfigError):
        HyperParams.from_dict({**h.to_dict(), "bogus": 1})


def test_load_hyperparams(tmp_path):
    p = tmp_path / "h.json"
    p.write_text(json.dumps({"V_mu_bar": 10.0, "r_bar": 2.0}))
    h = load_hyperparams(p, 4, 20)
    assert h.V_mu_bar == (10.0,) * 4 and h.r_bar == 2.0 and h.K == 20


def test_prior_moments(rng):
    h = default_hyperparams(4, 5)
    lam, sig, p, kurt = [], [], [], []
    for _ in range(10_000):
        s = sample_prior_state(h, 3, 4, rng)
        lam.append(s.lambda2_0)
        sig.append(s.sigma2[0])
        p.append(s.p)
        kurt.append(s.beta0[1])
    assert np.mean(lam) == pytest.approx(3.0, abs=0.05)
    # IG(3, 1): mean 0.5, sd 0.5
    assert np.mean(sig) == pytest.approx(0.5, abs=4 * 0.5 / math.sqrt(10_000))
    assert np.mean(p) == pytest.approx(0.5, abs=0.02)


def test_beta_prior_is_laplace_shaped():
    # Given lambda2 the normal-exponential mixture is Laplace (kurtosis 6).
    # Pin lambda2 near 3 with a very concentrated gamma hyperprior.
    h = default_hyperparams(2, 5, r_bar=1e6, delta_bar=1e6 / 3.0)
    rng = np.random.default_rng(3)
    b = []
    for _ in range(10_000):
        s = sample_prior_state(h, 1, 1, rng)
        b.append(s.beta0[1:])
        b.append(s.beta1[1:])
    b = np.concatenate(b)
    assert b.size == 100_000
    assert stats.kurtosis(b, fisher=False) == pytest.approx(6.0, abs=0.5)
    assert b.var() == pytest.approx(2.0 / 3.0, rel=0.03)


def test_prior_state_invariants(rng):
    h = default_hyperparams(4, 3)
    X = np.column_stack([np.ones(50), rng.normal(size=(50, 3))])
    for _ in range(200):
        s = sample_prior_state(h, 50, 6, rng, X=X)
        assert s.violations() == []


def test_fixed_half_pq_gives_fair_first_state(rng):
    h = default_hyperparams(2, 1)
    first = [sample_prior_state(h, 1, 3, rng, fixed_pq=(0.5, 0.5)).S[0] for _ in range(20_000)]
    assert np.mean(first) == pytest.approx(0.5, abs=4 * 0.5 / math.sqrt(20_000))


def _oracle_log_prior(s, h):
    lp = stats.multivariate_normal.logpdf(s.mu, np.array(h.mu_bar), np.diag(h.V_mu_bar))
    lp += math.log(math.factorial(h.J))
    lp += sum(stats.invgamma.logpdf(s.sigma2[j], h.a_bar[j], scale=h.b_bar[j]) for j in range(h.J))
    for beta, tau2, lam in ((s.beta0, s.tau2_0, s.lambda2_0), (s.beta1, s.tau2_1, s.lambda2_1)):
        lp += stats.norm.logpdf(beta[0], 0, math.sqrt(h.intercept_var))
        lp += stats.norm.logpdf(beta[1:], 0, np.sqrt(tau2)).sum()
        lp += stats.expon.logpdf(tau2, scale=2.0 / lam).sum()
        lp += stats.gamma.logpdf(lam, h.r_bar, scale=1.0 / h.delta_bar)
    lp += stats.beta.logpdf(s.p, h.u00, h.u01) + stats.beta.logpdf(s.q, h.u11, h.u10)
    P = np.array([[s.p, 1 - s.p], [1 - s.q, s.q]])
    pi1 = (1 - s.p) / (2 - s.p - s.q)
    lp += math.log(pi1 if s.S[0] == 1 else 1 - pi1)
    for a, b in zip(s.S[:-1], s.S[1:]):
        lp += math.log(P[a, b])
    return lp


def test_log_prior_matches_oracle(rng):
    h = default_hyperparams(3, 4)
    for _ in range(100):
        s = sample_prior_state(h, 5, 7, rng)
        s.p = float(np.clip(s.p, 1e-6, 1 - 1e-6))
        s.q = float(np.clip(s.q, 1e-6, 1 - 1e-6))
        ours = log_prior_density(s, h)
        ref = _oracle_log_prior(s, h)
        assert ours == pytest.approx(ref, rel=1e-10, abs=1e-8)


def test_log_prior_mode_and_support(rng):
    h = default_hyperparams(3, 2)
    s = sample_prior_state(h, 4, 3, rng)
    s.mu = np.array([-5.0, 0.3, 6.0])
    vals = []
    for m in (-0.2, 0.0, 0.2):
        s.mu[1] = m
        vals.append(log_prior_density(s, h))
    assert vals[1] > vals[0] and vals[1] > vals[2]
    s.sigma2 = np.array([1.0, -1.0, 1.0])
    assert log_prior_density(s, h) == -math.inf
    s.sigma2 = np.ones(3)
    s.mu = np.array([1.0, 0.0, 2.0])
    with pytest.raises(DomainError):
        log_prior_density(s, h)


def test_path_prob_sums_to_one():
    p, q = 0.3, 0.8
    T = 5
    total = 0.0
    for k in range(2 ** T):
        S = np.array([(k >> t) & 1 for t in range(T)])
        total += math.exp(log_path_prob(S, p, q))
    assert total == pytest.approx(1.0, abs=1e-14)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_stationary_prob_in_unit_interval(p, q):
    if p == 1.0 and q == 1.0:
        with pytest.raises(DomainError):
            stationary_prob(p, q)
        return
    pi1 = stationary_prob(p, q)
    assert 0.0 <= pi1 <= 1.0


def test_assign_components_boundaries():
    c = np.array([-np.inf, 0.0, 1.0, np.inf])
    z = np.array([-3.0, 0.0, 1e-12, 1.0, 1.5])
    np.testing.assert_array_equal(assign_components(z, c), [1, 1, 2, 2, 3])
