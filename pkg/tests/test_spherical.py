import math

import numpy as np
import pytest

from su2markov.oracles import brute_krawtchouk_sum
from su2markov.specfun import gauss_jacobi_rule
from su2markov.spherical import (
    ModelParams,
    certify_stochastic_structure,
    conjugated_operator,
    diffop_coefficients,
    eigenvalue_matrix,
    ell_column_coefficient,
    f_nu,
    monic_norms,
    monic_polynomials,
    monic_recurrence,
    psi0,
    s_matrix,
    structure_matrices,
    weight_W,
    y_involution,
)


def _dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def test_model_params():
    p = ModelParams(2, 0.25)
    assert p.N == 5 and p.integer_ell and p.stochastic
    assert not ModelParams(1, -0.25).stochastic
    with pytest.raises(ValueError):
        ModelParams(1, -0.5)
    with pytest.raises(ValueError):
        ModelParams(0.3, 1.0)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_structure_matrices(ell):
    p = ModelParams(ell, 0.7)
    sm = structure_matrices(p)
    N = p.N
    np.testing.assert_array_equal(sm.J + sm.Jbreve, (N - 1) * np.eye(N))
    assert not np.linalg.matrix_power(sm.A, N).any()
    np.testing.assert_array_equal(sm.H @ sm.H, np.eye(N))
    np.testing.assert_array_equal(sm.H, sm.H.T)
    np.testing.assert_array_equal(sm.H @ sm.J @ sm.H, sm.Jbreve)
    assert np.all(np.diag(sm.Tnu) > 0)


def test_psi0_examples():
    y = np.linspace(0, 1, 11)
    col = psi0(ModelParams(1, 1.0), y)[:, :, 1]
    np.testing.assert_allclose(col, np.stack([np.ones_like(y), 1 - 2 * y, np.ones_like(y)], -1), atol=1e-14)
    entry = psi0(ModelParams(2, 1.0), y)[:, 2, 2]
    np.testing.assert_allclose(entry, 1 - 8 / 3 * y * (1 - y), atol=1e-14)
    p = ModelParams(1, 1.0)
    sm = structure_matrices(p)
    ref = sm.K @ sm.M @ np.diag([1.0, 0.0, 0.0]) @ sm.K.T
    np.testing.assert_allclose(psi0(p, 0.0), ref, atol=1e-15)


def test_ell_column_coefficient_examples():
    for ell in range(1, 5):
        for k in range(2 * ell + 1):
            assert ell_column_coefficient(ell, k, 0) == 1.0
    assert ell_column_coefficient(1, 1, 1) == -2.0


@pytest.mark.parametrize("ell", [1, 2, 3, 4])
def test_ell_column_coefficient_matches_brute_force(ell):
    for k in range(2 * ell + 1):
        for h in range(ell + 1):
            closed = ell_column_coefficient(ell, k, h)
            brute = (-1) ** h * math.comb(ell, h) * brute_krawtchouk_sum(ell, k, h)
            assert abs(closed - brute) <= 1e-12


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_s_matrix_is_the_middle_column_of_psi0(ell):
    p = ModelParams(ell, 0.5)
    y = np.linspace(0, 1, 23)
    S = s_matrix(p, y)
    np.testing.assert_allclose(np.diagonal(S, axis1=1, axis2=2), psi0(p, y)[:, :, ell].real, atol=1e-13)
    poly = [
        sum(ell_column_coefficient(ell, k, h) * y**h for h in range(ell + 1)) for k in range(2 * ell + 1)
    ]
    np.testing.assert_allclose(np.diagonal(S, axis1=1, axis2=2), np.stack(poly, -1), atol=1e-13)


def test_s_matrix_examples():
    y = np.linspace(0, 1, 9)
    u = 1 - 2 * y
    one = np.ones_like(y)
    np.testing.assert_allclose(np.diagonal(s_matrix(ModelParams(1, 0), y), axis1=1, axis2=2), np.stack([one, u, one], -1), atol=1e-15)
    mid = 1 - 8 / 3 * y * (1 - y)
    np.testing.assert_allclose(
        np.diagonal(s_matrix(ModelParams(2, 0), y), axis1=1, axis2=2), np.stack([one, u, mid, u, one], -1), atol=1e-14
    )


@pytest.mark.parametrize("ell", [1, 2, 3, 4])
def test_s_matrix_consecutive_ratio_signs(ell):
    y = np.linspace(0, 1, 1001)
    s = np.diagonal(s_matrix(ModelParams(ell, 1.0), y), axis1=1, axis2=2)
    prod = s[:, 1:] * s[:, :-1]
    assert np.all(prod[y < 0.5] >= 0)
    assert np.all(prod[y > 0.5] <= 1e-15)


def test_s_derivatives_are_analytic():
    p = ModelParams(2, 1.0)
    y = np.linspace(0.1, 0.9, 9)
    h = 1e-4
    d1 = (s_matrix(p, y + h) - s_matrix(p, y - h)) / (2 * h)
    d2 = (s_matrix(p, y + h) - 2 * s_matrix(p, y) + s_matrix(p, y - h)) / h**2
    np.testing.assert_allclose(s_matrix(p, y, 1), d1, atol=1e-7)
    np.testing.assert_allclose(s_matrix(p, y, 2), d2, atol=1e-5)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_f_nu_is_tridiagonal(ell):
    p = ModelParams(ell, 0.4)
    y = np.linspace(0.01, 0.99, 33)
    F = f_nu(p, y)
    i, j = np.indices((p.N, p.N))
    assert np.abs(F[:, np.abs(i - j) >= 2]).max() == 0
    half = f_nu(p, 0.5)
    np.testing.assert_allclose(half - np.diag(np.diag(half)), 0, atol=1e-15)
    with pytest.raises(ValueError):
        f_nu(p, 0.0)
    with pytest.raises(ValueError):
        f_nu(p, 1.0)


@pytest.mark.parametrize("ell", [1, 2, 3])
@pytest.mark.parametrize("nu", [0.0, 0.25, 1.0])
def test_conjugated_operator_is_a_generator(ell, nu):
    report = certify_stochastic_structure(ModelParams(ell, nu))
    assert report["points"] > 900
    assert report["max_row_sum"] < 1e-10
    assert report["min_off_diagonal"] >= -1e-12


def test_conjugated_operator_drift_is_diagonal():
    y = np.array([0.1, 0.3, 0.7])
    drift, _ = conjugated_operator(ModelParams(2, 1.0), y)
    off = drift - np.diagonal(drift, axis1=1, axis2=2)[..., None] * np.eye(5)
    assert np.abs(off).max() < 1e-12


@pytest.mark.parametrize("ell", [1, 2])
def test_weight_is_hermitian_psd_and_splits(ell):
    p = ModelParams(ell, 1.0)
    W = weight_W(p)
    y = np.linspace(0.005, 0.995, 101)
    Wy = W(y)
    np.testing.assert_allclose(Wy, _dagger(Wy), atol=1e-13)
    assert np.linalg.eigvalsh(Wy).min() >= -1e-12
    Y = y_involution(p)
    np.testing.assert_allclose(Y @ Y.T, np.eye(p.N), atol=1e-15)
    tilde = Y @ Wy @ Y.T
    assert np.abs(tilde[:, : ell + 1, ell + 1 :]).max() < 1e-12


def test_weight_rejects_small_nu():
    with pytest.raises(ValueError):
        weight_W(ModelParams(1, -0.6))


def test_y_involution_ell_one():
    r = 1 / math.sqrt(2)
    ref = r * np.array([[1, 0, 1], [0, math.sqrt(2), 0], [-1, 0, 1]])
    np.testing.assert_allclose(y_involution(ModelParams(1, 0.0)), ref, atol=1e-16)


def test_weight_mass_equals_first_norm():
    p = ModelParams(1, 1.0)
    W = weight_W(p)
    rule = gauss_jacobi_rule(30, W.alpha, W.beta)
    mass = np.einsum("k,kab->ab", rule.weights, W.smooth(rule.nodes))
    np.testing.assert_allclose(mass, monic_norms(p, 0), rtol=1e-12, atol=1e-12)


def _moments(p, k_max, order=60):
    W = weight_W(p)
    rule = gauss_jacobi_rule(order, W.alpha, W.beta)
    Wy = W.smooth(rule.nodes)
    return [np.einsum("k,kab->ab", rule.weights * rule.nodes**k, Wy) for k in range(k_max + 1)], rule, Wy


@pytest.mark.parametrize("nu", [0.25, 1.0])
def test_recurrence_against_gram_schmidt(nu):
    p = ModelParams(1, nu)
    rec = monic_recurrence(p)
    M, rule, Wy = _moments(p, 3)
    np.testing.assert_allclose(np.diag(rec.B(0)), 0.5 * np.ones(3), atol=1e-14)
    B0 = M[1] @ np.linalg.inv(M[0])
    np.testing.assert_allclose(rec.B(0), B0, atol=1e-12)
    # C_1 = (int y P_1 W) M_0^{-1} with P_1 = y - B_0
    yP1W = M[2] - B0 @ M[1]
    np.testing.assert_allclose(rec.C(1), yP1W @ np.linalg.inv(M[0]), atol=1e-12)
    assert np.all(np.abs(np.diag(rec.C(1))) > 0)
    for n in range(1, 6):
        np.testing.assert_allclose(np.diag(rec.B(n)), 0.5 * np.ones(3), atol=1e-14)


@pytest.mark.parametrize("ell,nu", [(1, 1.0), (1, 0.25), (1, 0.0), (2, 0.25), (2, 1.0)])
def test_monic_orthogonality_and_norms(ell, nu):
    p = ModelParams(ell, nu)
    rec = monic_recurrence(p)
    W = weight_W(p)
    rule = gauss_jacobi_rule(80, W.alpha, W.beta)
    P = monic_polynomials(rec, 8, rule.nodes)
    gram = np.einsum("k,nkab,kbc,mkdc->nadm", rule.weights, P, W.smooth(rule.nodes), P)
    for n in range(9):
        ref = monic_norms(p, n) * 16.0**n
        scale = np.abs(ref).max()
        for m in range(9):
            expect = ref if m == n else 0.0
            assert np.abs(gram[n, :, :, m] - expect).max() / scale < 1e-9


def test_monic_norms_positive():
    for nu in (0.1, 1.0, 3.0):
        for n in range(10):
            assert np.all(np.diag(monic_norms(ModelParams(1, nu), n)) > 0)


def test_monic_polynomials_are_monic():
    rec = monic_recurrence(ModelParams(1, 1.0))
    y = np.array([1e3, 2e3])
    P = monic_polynomials(rec, 4, y, scale=1.0)
    lead = P[4] / y[:, None, None] ** 4
    np.testing.assert_allclose(lead, np.broadcast_to(np.eye(3), lead.shape), atol=1e-2)


def test_eigenfunction_property_by_finite_differences():
    p = ModelParams(1, 1.0)
    X, V = diffop_coefficients(p)
    rec = monic_recurrence(p)
    y = np.linspace(0.02, 0.98, 49)
    h = 1e-4

    def G(z, n):
        return _dagger(monic_polynomials(rec, 5, z)[n])

    for n in range(6):
        f0, fp, fm = G(y, n), G(y + h, n), G(y - h, n)
        d2 = (fp - 2 * f0 + fm) / h**2
        d1 = (fp - fm) / (2 * h)
        lhs = (y * (1 - y))[:, None, None] * d2 + X(y) @ d1 + V @ f0
        rhs = f0 @ eigenvalue_matrix(p, n)
        assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 1e-6


def test_operator_is_symmetric_for_the_weight():
    p = ModelParams(1, 0.75)
    X, V = diffop_coefficients(p)
    W = weight_W(p)
    rule = gauss_jacobi_rule(40, W.alpha, W.beta)
    y = rule.nodes
    rng = np.random.default_rng(0)

    def poly(c, d=0):
        out = np.zeros((y.size, 3, 3))
        for k in range(d, len(c)):
            out = out + math.perm(k, d) * y[:, None, None] ** (k - d) * c[k]
        return out

    def act(c):
        # right action P -> (D P^*)^*
        return (y * (1 - y))[:, None, None] * poly(c, 2) + poly(c, 1) @ _dagger(X(y)) + poly(c) @ V.T

    Wy = W.smooth(y)
    for _ in range(3):
        c1, c2 = rng.normal(size=(4, 3, 3)), rng.normal(size=(4, 3, 3))
        lhs = np.einsum("k,kab,kbc,kdc->ad", rule.weights, act(c1), Wy, poly(c2))
        rhs = np.einsum("k,kab,kbc,kdc->ad", rule.weights, poly(c1), Wy, act(c2))
        assert np.abs(lhs - rhs).max() < 1e-9 * np.abs(lhs).max()
