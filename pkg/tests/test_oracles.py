import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from su2markov import qbd
from su2markov.diffusion import build_model, eigenvalue, model_eigenfunctions
from su2markov.oracles import OracleReport, apply_operator_fd, brute_krawtchouk_sum, compare, expm, mc_mean
from su2markov.spherical import ell_column_coefficient


def test_compare_modes():
    r = compare("x", [1.0, 2.0], [1.0, 2.1], 0.2)
    assert r.passed and r.abs_err == pytest.approx(0.1)
    assert not compare("x", 110.0, 100.0, 0.05, mode="abs").passed
    assert compare("x", 101.0, 100.0, 0.05, mode="rel").passed
    assert compare("x", 101.0, 100.0, 0.05, mode="either").passed
    assert not compare("x", np.nan, 1.0, 1.0).passed
    with pytest.raises(ValueError):
        compare("x", 1.0, 1.0, 0.1, mode="max")


def test_report_json_roundtrip():
    r = compare("complex", np.array([1 + 2j]), np.array([1 + 2j]), 1e-12)
    d = json.loads(r.to_json())
    assert d["passed"] is True and d["computed"] == {"re": [1.0], "im": [2.0]}
    r = OracleReport("flag", np.bool_(True), 1, 0.0, 0.0, 0.0, "abs", np.bool_(True))
    assert json.loads(r.to_json())["computed"] is True


def test_expm_examples():
    np.testing.assert_array_equal(expm(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.0), np.eye(2))
    assert expm(np.array([[-0.5]]), 2.0)[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_expm_two_state_chain():
    a, b, t = 0.7, 1.9, 1.3
    P = expm(np.array([[-a, a], [b, -b]]), t)
    s = a + b
    e = math.exp(-s * t)
    ref = np.array([[b + a * e, a - a * e], [b - b * e, a + b * e]]) / s
    np.testing.assert_allclose(P, ref, atol=1e-15)


def test_expm_two_level_truncation():
    # 2x2 exponential from its eigen-decomposition (Sylvester's formula)
    G = qbd.build_generator(0.0, 2, "bd").dense()
    l1, l2 = np.sort(np.linalg.eigvals(G).real)
    t = 1.7
    ref = ((G - l2 * np.eye(2)) * math.exp(l1 * t) - (G - l1 * np.eye(2)) * math.exp(l2 * t)) / (l1 - l2)
    np.testing.assert_allclose(expm(G, t), ref, atol=1e-14)


def test_expm_rows_of_conservative_generator():
    G = qbd.build_generator(0.25, 100, "qbd2").dense()
    P = expm(G, 5.0)
    np.testing.assert_allclose(P[:20].sum(axis=1), 1.0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)), st.floats(0.0, 4.0))
def test_expm_matches_scipy(A, t):
    ref = scipy.linalg.expm(A * t)
    np.testing.assert_allclose(expm(A, t), ref, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(ref).max()))


def test_expm_rejects_bad_input():
    with pytest.raises(ValueError):
        expm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        expm(np.array([[np.inf]]))


def test_fd_examples():
    y = np.linspace(0.1, 0.9, 9)
    drift = lambda z: 1 + z**2
    const = apply_operator_fd(drift, None, lambda z: np.full_like(z, 3.0), y)
    np.testing.assert_allclose(const, 0.0, atol=1e-12)
    lin = apply_operator_fd(drift, None, lambda z: z, y)
    np.testing.assert_allclose(lin, drift(y), rtol=1e-6)
    with pytest.raises(ValueError):
        apply_operator_fd(drift, None, lambda z: z, np.array([1e-6]))


def test_fd_on_killed_eigenfunction():
    nu = 1.0
    m = build_model(nu, "l1-killed")
    y = np.linspace(0.05, 0.45, 21)
    lam = eigenvalue(nu, "l1-killed", 1)[0, 0]

    def f(z):
        return model_eigenfunctions(nu, "l1-killed", 1, z)[1, :, 0, 0]

    G = apply_operator_fd(m.drifts[0], lambda z: m.rates(z)[:, 0, 0], f, y, h=1e-3, richardson=True)
    np.testing.assert_allclose(G, lam * f(y), atol=1e-7 * np.abs(f(y)).max())


def test_fd_second_order_convergence():
    y = np.array([0.3, 0.6])
    f, fpp, fp = np.sin, lambda z: -np.sin(z), np.cos
    exact = y * (1 - y) * fpp(y) + 2 * y * fp(y) + 0.5 * f(y)
    errs = [
        np.abs(apply_operator_fd(lambda z: 2 * z, lambda z: 0.5 + 0 * z, f, y, h=h) - exact).max()
        for h in (1e-2, 5e-3)
    ]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    rich = np.abs(apply_operator_fd(lambda z: 2 * z, lambda z: 0.5 + 0 * z, f, y, h=1e-2, richardson=True) - exact).max()
    assert rich < errs[1] / 100


def test_brute_krawtchouk_sum_examples():
    assert brute_krawtchouk_sum(3, 2, 0) == 1.0
    assert brute_krawtchouk_sum(1, 1, 1) == 2.0
    with pytest.raises(ValueError):
        brute_krawtchouk_sum(1, 3, 0)


@pytest.mark.parametrize("ell", [1, 2, 3, 4])
def test_brute_sum_matches_closed_form(ell):
    for k in range(2 * ell + 1):
        for h in range(ell + 1):
            closed = ell_column_coefficient(ell, k, h) / ((-1) ** h * math.comb(ell, h))
            assert abs(brute_krawtchouk_sum(ell, k, h) - closed) <= 1e-12


def test_mc_mean_examples():
    mean, se = mc_mean(lambda rng, n: np.full(n, 2.5), 1000, base_seed=0)
    assert mean == 2.5 and se == 0.0
    mean, se = mc_mean(lambda rng, n: rng.integers(0, 2, n), 100_000, base_seed=1)
    assert abs(mean - 0.5) < 3 * se
    assert mc_mean(lambda rng, n: rng.random(n), 500, 7, batch=64) == mc_mean(lambda rng, n: rng.random(n), 500, 7, batch=64)
    with pytest.raises(ValueError):
        mc_mean(lambda rng, n: rng.random(n), 1, 0)
    with pytest.raises(ValueError):
        mc_mean(lambda rng, n: rng.random(n + 1), 10, 0)


def test_mc_mean_transition_estimate():
    gen = qbd.build_generator(0.0, 60, "bd")
    km = qbd.km_transition(0.0, "bd", 1, 1, 1.0)

    def estimator(rng, n):
        seed = int(rng.integers(2**31))
        ens = qbd.gillespie_ensemble(gen, qbd.ChainState(1, 1), [1.0], n, seed)
        return (ens.states[:, 0] == 1).astype(float)

    mean, se = mc_mean(estimator, 20_000, base_seed=3, batch=5000)
    assert abs(mean - km) < 3 * se
