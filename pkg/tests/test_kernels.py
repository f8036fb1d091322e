import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.special import logsumexp

from rrmix import kernels
from rrmix.kernels import _pykernels as py

cy = kernels.compiled_backend
needs_compiled = pytest.mark.skipif(cy is None, reason="compiled kernels not built")

C4 = np.array([-np.inf, 0.0, 0.8, 1.6, np.inf])
MU4 = np.array([-5.61, -1.0, 0.5, 5.61])
S24 = np.array([0.01, 0.3, 0.2, 0.0004])


def test_uniforms_open_unit_interval():
    u = py.uniforms(123, 1000, 8)
    assert u.shape == (1000, 8)
    assert np.all((u > 0) & (u < 1))
    assert stats.kstest(u.ravel(), "uniform").pvalue > 1e-3


def test_streams_are_per_loan():
    # loan i's stream does not depend on how many loans are drawn
    a = py.uniforms(9, 10, 3)
    b = py.uniforms(9, 50, 3)
    np.testing.assert_array_equal(a, b[:10])


@needs_compiled
def test_backends_agree_on_streams():
    np.testing.assert_array_equal(cy.uniforms(77, 100, 5), py.uniforms(77, 100, 5))
    idx = np.arange(20, dtype=np.uint64)
    np.testing.assert_array_equal(cy.stream_seeds(5, idx), py.stream_seeds(5, idx))


@needs_compiled
@pytest.mark.parametrize("lo, hi", [(0.0, 0.7), (5.0, np.inf), (-np.inf, -6.0), (4.1, 4.2),
                                    (-np.inf, np.inf), (-1e-3, 1e-3)])
def test_backends_agree_truncnorm(lo, hi):
    rng = np.random.default_rng(0)
    m = rng.normal(0, 1, 500)
    a = cy.truncnorm(m, np.full(500, lo), np.full(500, hi), 31)
    b = py.truncnorm(m, np.full(500, lo), np.full(500, hi), 31)
    np.testing.assert_array_equal(a, b)


@needs_compiled
def test_backends_agree_draw_loans():
    rng = np.random.default_rng(1)
    n = 3000
    a = rng.normal(0.5, 1.5, n)
    y = np.where(rng.random(n) < 0.4, 5.612, rng.normal(0, 1.5, n))
    zs_c, z_c = cy.draw_loans(a, y, C4, MU4, S24, 2024, 1)
    zs_p, z_p = py.draw_loans(a, y, C4, MU4, S24, 2024, 1)
    np.testing.assert_array_equal(zs_c, zs_p)
    np.testing.assert_array_equal(z_c, z_p)


@needs_compiled
def test_thread_count_invariance():
    rng = np.random.default_rng(2)
    n = 5000
    a = rng.normal(size=n)
    y = rng.normal(size=n)
    ref = cy.draw_loans(a, y, C4, MU4, S24, 11, 1)
    for t in (2, 4):
        out = cy.draw_loans(a, y, C4, MU4, S24, 11, t)
        np.testing.assert_array_equal(ref[0], out[0])
        np.testing.assert_array_equal(ref[1], out[1])


@needs_compiled
def test_log_weights_agree():
    rng = np.random.default_rng(3)
    a = rng.normal(0, 2, 400)
    y = rng.normal(0, 3, 400)
    np.testing.assert_allclose(cy.log_weights(a, y, C4, MU4, S24),
                               py.log_weights(a, y, C4, MU4, S24), rtol=1e-12, atol=1e-9)


def test_log_weights_oracle():
    a = np.array([0.3])
    y = np.array([0.1])
    lw = kernels.log_weights(a, y, C4, MU4, S24)[0]
    ref = [
        np.log(stats.norm.cdf(C4[j + 1] - 0.3) - stats.norm.cdf(C4[j] - 0.3))
        + stats.norm.logpdf(0.1, MU4[j], np.sqrt(S24[j]))
        for j in range(4)
    ]
    np.testing.assert_allclose(lw, ref, rtol=1e-12)


def test_log_weights_deep_tail_finite():
    # every raw weight underflows, log space keeps them finite and ordered
    lw = kernels.log_weights(np.array([40.0]), np.array([5.612]), C4, MU4, S24)[0]
    assert np.all(np.isfinite(lw))
    assert np.argmax(lw) == 3
    assert lw[0] < -500


@given(st.floats(-8, 8), st.floats(-10, 10), st.floats(0.001, 5))
def test_truncnorm_support(m, lo, width):
    hi = lo + width
    z = kernels.truncnorm(np.full(64, m), np.full(64, lo), np.full(64, hi), 5)
    assert np.all((z > lo) & (z <= hi))


@pytest.mark.parametrize("backend", [py] + ([cy] if cy is not None else []))
@pytest.mark.parametrize("lo, hi", [(4.0, np.inf), (6.0, 6.05), (-np.inf, -7.5), (9.0, 30.0)])
def test_truncnorm_tails_gof(backend, lo, hi):
    n = 50_000
    z = backend.truncnorm(np.zeros(n), np.full(n, lo), np.full(n, hi), 17)
    u = stats.truncnorm.cdf(z, lo, hi)
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_draw_loans_consistency():
    rng = np.random.default_rng(4)
    a = rng.normal(size=1000)
    y = rng.normal(0, 3, 1000)
    zs, z = kernels.draw_loans(a, y, C4, MU4, S24, 8)
    assert zs.min() >= 1 and zs.max() <= 4
    assert np.all((C4[zs - 1] < z) & (z <= C4[zs]))


def test_draw_loans_frequencies():
    n = 100_000
    a = np.full(n, 0.4)
    y = np.full(n, 0.2)
    zs, _ = kernels.draw_loans(a, y, C4, MU4, S24, 3)
    lw = kernels.log_weights(a[:1], y[:1], C4, MU4, S24)[0]
    w = np.exp(lw - logsumexp(lw))
    assert stats.chisquare(np.bincount(zs - 1, minlength=4)[w > 1e-12],
                           (n * w)[w > 1e-12]).pvalue > 1e-3
