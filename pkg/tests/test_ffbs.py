import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrmix import ffbs
from rrmix.errors import ConfigError, DomainError
from rrmix.synthgen import enumerate_state_posterior

LOG_PHI0 = -0.91893853320467274178  # -log(2 pi)/2, mpmath


def brute_force(ll, p, q):
    """Posterior over every path, in plain floats (small T only)."""
    T = len(ll)
    pi1 = (1 - p) / (2 - p - q)
    P = [[p, 1 - p], [1 - q, q]]
    marg = [0.0] * T
    pred = [[0.0, 0.0] for _ in range(T)]
    total = 0.0
    joint = {}
    for path in itertools.product((0, 1), repeat=T):
        w = pi1 if path[0] else 1 - pi1
        for t in range(1, T):
            w *= P[path[t - 1]][path[t]]
        for t in range(T):
            w *= math.exp(ll[t][path[t]])
        joint[path] = w
        total += w
    for path, w in joint.items():
        for t in range(T):
            marg[t] += path[t] * w / total
    return marg, math.log(total)


def test_year_loglik_empty():
    assert ffbs.year_loglik(np.empty(0), np.empty((0, 3)), np.zeros(3)) == 0.0


def test_year_loglik_single_at_mean():
    x = np.array([[1.0, 0.5]])
    b = np.array([0.2, -1.0])
    assert ffbs.year_loglik(x @ b, x, b) == pytest.approx(LOG_PHI0, abs=1e-15)


def test_year_loglik_five_loans(rng):
    from scipy.stats import norm

    X = np.column_stack([np.ones(5), rng.normal(size=(5, 2))])
    b = np.array([0.3, 1.0, -0.4])
    z = rng.normal(size=5)
    ref = sum(norm.logpdf(z[i] - X[i] @ b) for i in range(5))
    assert ffbs.year_loglik(z, X, b) == pytest.approx(ref, abs=1e-12)


def test_state_logliks_matches_per_year(rng):
    T = 4
    yi = np.array([1, 1, 3, 3, 3, 4])
    X = np.column_stack([np.ones(6), rng.normal(size=6)])
    z = rng.normal(size=6)
    b0, b1 = np.array([0.0, 1.0]), np.array([1.0, -1.0])
    ll = ffbs.state_logliks(z, X, yi, T, b0, b1)
    for t in range(T):
        sel = yi == t + 1
        assert ll[t, 0] == pytest.approx(ffbs.year_loglik(z[sel], X[sel], b0), abs=1e-12)
        assert ll[t, 1] == pytest.approx(ffbs.year_loglik(z[sel], X[sel], b1), abs=1e-12)
    assert ll[1, 0] == ll[1, 1] == 0.0


def test_filter_equal_betas():
    ll = np.repeat(np.array([[-3.0], [-1.0], [-7.0]]), 2, axis=1)
    f = ffbs.hamilton_filter(ll, 0.8, 0.6)
    np.testing.assert_allclose(f.filtered, f.predicted, atol=1e-14)


def test_filter_half_transitions(rng):
    ll = rng.normal(0, 5, (6, 2))
    f = ffbs.hamilton_filter(ll, 0.5, 0.5)
    np.testing.assert_allclose(f.predicted, 0.5, atol=1e-14)


def test_filter_t3_enumeration(rng):
    ll = rng.normal(-2, 1.5, (3, 2))
    p, q = 0.7, 0.4
    f = ffbs.hamilton_filter(ll, p, q)
    marg, logz = brute_force(ll.tolist(), p, q)
    assert f.loglik == pytest.approx(logz, abs=1e-12)
    np.testing.assert_allclose(ffbs.smoothed_marginals(f, p, q), marg, atol=1e-12)
    # filtered at the last year equals the smoothed marginal there
    assert f.filtered[-1, 1] == pytest.approx(marg[-1], abs=1e-12)


def test_filter_rejects_boundary():
    ll = np.zeros((3, 2))
    for p, q in ((0.0, 0.5), (0.5, 1.0)):
        with pytest.raises(ConfigError):
            ffbs.hamilton_filter(ll, p, q)
    # pinned chain is allowed only on request
    f = ffbs.hamilton_filter(ll, 0.0, 1.0, allow_degenerate=True)
    np.testing.assert_allclose(f.filtered[:, 1], 1.0)


def test_large_year_stays_finite(rng):
    # 500 loans: each state likelihood is around exp(-1000), which underflows
    X = np.column_stack([np.ones(500), rng.normal(size=500)])
    z = X @ np.array([1.0, 0.5]) + rng.normal(0, 1.5, 500)
    ll = ffbs.state_logliks(z, X, np.ones(500, int), 1, np.array([0.0, 0.0]),
                            np.array([1.0, 0.5]))
    assert np.all(np.exp(ll) == 0.0)
    f = ffbs.hamilton_filter(ll, 0.6, 0.7)
    assert np.isfinite(f.loglik)
    assert f.filtered[0, 1] == pytest.approx(1.0)


def test_linear_space_agreement(rng):
    ll = rng.normal(-1, 0.5, (8, 2))
    p, q = 0.65, 0.8
    L = np.exp(ll)
    P = np.array([[p, 1 - p], [1 - q, q]])
    pi1 = (1 - p) / (2 - p - q)
    alpha = np.array([1 - pi1, pi1]) * L[0]
    for t in range(1, 8):
        alpha = (alpha @ P) * L[t]
    f = ffbs.hamilton_filter(ll, p, q)
    assert f.loglik == pytest.approx(math.log(alpha.sum()), abs=1e-10)


@given(st.integers(1, 15), st.floats(0.01, 0.99), st.floats(0.01, 0.99),
       st.integers(0, 2**32 - 1))
def test_filter_rows_are_simplex(T, p, q, seed):
    ll = np.random.default_rng(seed).normal(-50, 40, (T, 2))
    f = ffbs.hamilton_filter(ll, p, q)
    np.testing.assert_allclose(f.filtered.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(f.predicted.sum(axis=1), 1.0, atol=1e-12)
    assert np.isfinite(f.loglik)


@given(st.integers(1, 12), st.floats(0.01, 0.99), st.floats(0.01, 0.99),
       st.integers(0, 2**32 - 1))
def test_label_symmetry(T, p, q, seed):
    ll = np.random.default_rng(seed).normal(-5, 3, (T, 2))
    a = ffbs.hamilton_filter(ll, p, q)
    b = ffbs.hamilton_filter(ll[:, ::-1], q, p)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-9)
    np.testing.assert_allclose(a.filtered, b.filtered[:, ::-1], atol=1e-12)


def test_backward_certain_last_state(rng):
    ll = np.array([[0.0, 0.0], [0.0, -np.inf]])
    f = ffbs.hamilton_filter(ll, 0.6, 0.6)
    assert all(ffbs.backward_sample(f, 0.6, 0.6, rng)[-1] == 0 for _ in range(500))


def test_backward_no_information(rng):
    T, n = 5, 100_000
    f = ffbs.hamilton_filter(np.zeros((T, 2)), 0.5, 0.5)
    draws = np.array([ffbs.backward_sample(f, 0.5, 0.5, rng) for _ in range(n)])
    sd = math.sqrt(0.25 / n)
    assert np.all(np.abs(draws.mean(axis=0) - 0.5) < 3 * sd)
    # consecutive years are independent
    agree = (draws[:, 1:] == draws[:, :-1]).mean()
    assert abs(agree - 0.5) < 3 * math.sqrt(0.25 / (n * (T - 1)))


def test_backward_t4_enumeration(rng):
    T = 4
    yi = np.repeat(np.arange(1, T + 1), 3)
    X = np.column_stack([np.ones(12), rng.normal(size=12)])
    b0, b1 = np.array([-0.3, 0.5]), np.array([0.4, 0.2])
    z = X @ b1 + rng.normal(size=12)
    p, q = 0.7, 0.6
    exact = enumerate_state_posterior(z, X, yi, T, b0, b1, p, q)
    ll = ffbs.state_logliks(z, X, yi, T, b0, b1)
    f = ffbs.hamilton_filter(ll, p, q)
    draws = np.array([ffbs.backward_sample(f, p, q, rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), exact, atol=0.01)
    np.testing.assert_allclose(ffbs.smoothed_marginals(f, p, q), exact, atol=1e-12)


def test_empty_years_carried(rng):
    ll = np.array([[-1.0, -4.0], [0.0, 0.0], [0.0, 0.0], [-5.0, -0.5]])
    f = ffbs.hamilton_filter(ll, 0.8, 0.7)
    np.testing.assert_allclose(f.filtered[1], f.predicted[1], atol=1e-14)
    S, _ = ffbs.ffbs(ll, 0.8, 0.7, rng)
    assert S.shape == (4,)


def test_steady_state_values():
    assert ffbs.steady_state_prob(0.5, 0.5) == 0.5
    assert ffbs.steady_state_prob(0.53, 0.33) == pytest.approx(0.41228070175438596491, rel=1e-14)
    with pytest.raises(DomainError):
        ffbs.steady_state_prob(1.0, 1.0)


@settings(max_examples=200)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_steady_state_fixed_point(p, q):
    pi1 = ffbs.steady_state_prob(p, q)
    pi0 = 1 - pi1
    assert 0 <= pi1 <= 1
    assert pi0 * (1 - p) + pi1 * q == pytest.approx(pi1, abs=1e-14)
