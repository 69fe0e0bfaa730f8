import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import betaln, eval_gegenbauer

from su2markov.specfun import gauss_jacobi_rule, gegenbauer, krawtchouk, log_pochhammer, pochhammer


def test_pochhammer_examples():
    assert pochhammer(3.0, 0) == 1.0
    assert pochhammer(1.0, 5) == 120.0
    # (2 nu + 3)_{n-1} at nu = 0, n = 3
    assert pochhammer(3.0, 2) == 12.0


def test_pochhammer_negative_arguments():
    assert pochhammer(-2.0, 3) == 0.0
    assert pochhammer(-0.5, 2) == pytest.approx(-0.25)
    assert log_pochhammer(-2.0, 3) == (-math.inf, 0.0)
    with pytest.raises(ValueError):
        pochhammer(1.0, -1)


def test_pochhammer_large_n_uses_log_gamma():
    # (1)_40 = 40!
    assert pochhammer(1.0, 40) == pytest.approx(math.factorial(40), rel=1e-12)
    logabs, sign = log_pochhammer(-10.5, 40)
    direct = np.prod(-10.5 + np.arange(40))
    assert sign == np.sign(direct)
    assert logabs == pytest.approx(math.log(abs(direct)), rel=1e-12)


def test_krawtchouk_examples():
    for N in range(5):
        for x in range(N + 1):
            assert krawtchouk(0, x, N) == 1.0
    assert krawtchouk(2, 2, 4) == pytest.approx(-1 / 3, abs=1e-15)
    assert krawtchouk(1, 2, 4) == 0.0
    with pytest.raises(ValueError):
        krawtchouk(3, 0, 2)


def test_krawtchouk_identities_at_the_centre():
    # K_h(ell; 1/2, 2 ell) vanishes for odd h and equals (-1)^j C(ell, j) / C(2ell, 2j) for h = 2j.
    for ell in range(1, 6):
        for j in range(ell + 1):
            ref = (-1) ** j * math.comb(ell, j) / math.comb(2 * ell, 2 * j)
            assert krawtchouk(2 * j, ell, 2 * ell) == pytest.approx(ref, abs=1e-15)
        for h in range(1, 2 * ell, 2):
            assert krawtchouk(h, ell, 2 * ell) == 0.0


@pytest.mark.parametrize("N", range(9))
def test_krawtchouk_orthogonality(N):
    K = np.array([[krawtchouk(n, x, N) for x in range(N + 1)] for n in range(N + 1)])
    w = np.array([math.comb(N, x) for x in range(N + 1)]) / 2.0**N
    gram = K @ np.diag(w) @ K.T
    norms = np.diag(gram)
    # brute-force normaliser: 1 / C(N, n)
    np.testing.assert_allclose(norms, [1 / math.comb(N, n) for n in range(N + 1)], rtol=1e-13)
    np.testing.assert_allclose(gram - np.diag(norms), 0.0, atol=1e-14)


def test_gegenbauer_examples():
    x = np.linspace(-1, 1, 11)
    np.testing.assert_array_equal(gegenbauer(0, 1.7, x), np.ones_like(x))
    np.testing.assert_allclose(gegenbauer(1, 1.7, x), 3.4 * x)


@pytest.mark.parametrize("nu", [0.0, 0.25, 1.0, 2.5])
def test_gegenbauer_value_at_zero(nu):
    lam = nu + 1
    for m in range(6):
        # brute-force series C_n(x) = sum_k (-1)^k (lam)_{n-k} (2x)^{n-2k} / (k! (n-2k)!) at x = 0
        ref = (-1) ** m * pochhammer(lam, m) / math.factorial(m)
        assert gegenbauer(2 * m, lam, 0.0) == pytest.approx(ref, rel=1e-13)
        assert gegenbauer(2 * m + 1, lam, 0.0) == 0.0


def test_gegenbauer_matches_scipy_and_parity():
    x = np.linspace(-1, 1, 41)
    for n in range(10):
        for lam in (0.5, 1.25, 3.0):
            val = gegenbauer(n, lam, x)
            np.testing.assert_allclose(val, eval_gegenbauer(n, lam, x), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(gegenbauer(n, lam, -x), (-1) ** n * val, rtol=1e-13, atol=1e-13)


def test_gauss_jacobi_examples():
    rule = gauss_jacobi_rule(1, 0.0, 0.0)
    np.testing.assert_allclose(rule.nodes, [0.5])
    np.testing.assert_allclose(rule.weights, [1.0])
    rule = gauss_jacobi_rule(2, 0.0, 0.0)
    assert rule.integrate(rule.nodes**2) == pytest.approx(1 / 3, rel=1e-15)
    rule = gauss_jacobi_rule(5, 0.5, 0.5)
    assert rule.weights.sum() == pytest.approx(math.pi / 8, rel=1e-14)


def test_gauss_jacobi_rejects_bad_exponents():
    with pytest.raises(ValueError):
        gauss_jacobi_rule(3, -1.0, 0.0)
    with pytest.raises(ValueError):
        gauss_jacobi_rule(0, 0.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(
    order=st.integers(1, 40),
    alpha=st.floats(-0.95, 4.0),
    beta=st.floats(-0.95, 4.0),
)
def test_gauss_jacobi_exact_on_monomials(order, alpha, beta):
    rule = gauss_jacobi_rule(order, alpha, beta)
    assert np.all(np.diff(rule.nodes) > 0)
    assert rule.nodes[0] > 0 and rule.nodes[-1] < 1
    assert np.all(rule.weights > 0)
    for k in range(2 * order):
        ref = math.exp(betaln(alpha + k + 1, beta + 1))
        assert rule.integrate(rule.nodes**k) == pytest.approx(ref, rel=1e-12)
