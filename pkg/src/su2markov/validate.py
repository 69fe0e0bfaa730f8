"""Oracle suites for each model, as run by ``su2markov validate``.

Every check returns an :class:`OracleReport`. ``perturb`` scales one
recurrence coefficient (chains) or one drift (diffusions) by ``1 + perturb``
so that the suites can be seen to fail.
"""

from __future__ import annotations

import math

import numpy as np

from . import qbd
from .diffusion import (
    DiffusionLabel,
    SwitchingDiffusionModel,
    build_model,
    em_ensemble,
    eigenvalue,
    invariant_psi,
    mass,
    model_eigenfunctions,
    model_weight,
    norm2q,
    norms_inv_switch2,
    spherical_blocks,
    survival,
)
from .diffusion.spectral import log_norms_inv
from .oracles import OracleReport, apply_operator_fd, compare, expm
from .specfun import gauss_jacobi_rule

__all__ = ["CHAIN_MODELS", "DIFFUSION_MODELS", "validate", "eigen_identity_error", "interior_grid"]

CHAIN_MODELS = ("bd", "qbd2")
DIFFUSION_MODELS = tuple(label.value for label in DiffusionLabel)


def interior_grid(points: int = 401, gap: float = 1e-3) -> np.ndarray:
    """Uniform grid on ``[gap, 1-gap]`` without the ``gap``-neighbourhood of 1/2."""
    y = np.linspace(gap, 1 - gap, points)
    return y[np.abs(y - 0.5) > gap]


def eigen_identity_error(model: SwitchingDiffusionModel, n_max: int = 5, y=None, step: float = 0.01) -> np.ndarray:
    """Relative residual of ``G Q_n = Q_n Lambda_n`` by finite differences, per ``n``.

    The second derivative uses Richardson-extrapolated central differences
    with a step ``step * dist(y, {0, 1/2, 1})``. The residual at each point
    is scaled by ``max(|Q_n Lambda_n|, |Q_n|)`` there.
    """
    y = interior_grid() if y is None else np.asarray(y, dtype=float)
    dist = np.minimum(np.minimum(y, 1 - y), np.abs(y - 0.5))
    out = []
    recur = None
    for n in range(n_max + 1):

        def f(pts, n=n):
            return model_eigenfunctions(model.nu, model.label, n_max, pts, recurrence=recur)[n]

        G = apply_operator_fd(model.drift, model.rates, f, y, h=step * dist, richardson=True)
        Q = f(y)
        QL = Q @ eigenvalue(model.nu, model.label, n)
        scale = np.maximum(np.abs(QL), np.abs(Q)).max(axis=(1, 2))
        out.append(float((np.abs(G - QL).max(axis=(1, 2)) / scale).max()))
    return np.array(out)


def _perturbed_coefficients(nu, model, perturb):
    def coefficients(n):
        A, B, C = qbd.chain_coefficients(nu, model, n)
        if n == 1:
            B = B * (1 + perturb)
        return A, B, C

    return coefficients


def _chain_suite(model: str, nu: float, perturb: float, seed: int, n_paths: int) -> list[OracleReport]:
    reports = []
    gen = qbd.build_generator(nu, 50, model)
    rows = gen.dense().sum(axis=1)[: (gen.levels - 1) * gen.phases]
    reports.append(compare("generator.interior_row_sums", rows, np.zeros_like(rows), 1e-12))
    coeffs = _perturbed_coefficients(nu, model, perturb) if perturb else None
    big = expm(qbd.build_generator(nu, 200, model).dense(), 1.0)
    d = gen.phases
    for t in (0.5, 1.0, 5.0):
        ref = big if t == 1.0 else expm(qbd.build_generator(nu, 200, model).dense(), t)
        km = qbd.km_matrix(nu, model, 5, t, check=False, coefficients=coeffs)
        reports.append(compare(f"km_vs_expm.t={t}", km, ref[: 6 * d, : 6 * d], 1e-6))
    # Orthogonality of the chain polynomials against their weight.
    fam = qbd.normalized_polynomials(nu, model, 8, coeffs)
    if model == "bd":
        rule = gauss_jacobi_rule(120, nu + 0.5, nu + 0.5)
        Q = fam(rule.nodes)[:, :, 0, 0]
        gram = np.einsum("k,ik,jk->ij", rule.weights, Q, Q) / rule.weights.sum()
        ref = np.diag([1 / qbd.potential_coefficients(nu, n, model) for n in range(9)])
        reports.append(compare("orthogonality.gram", gram, ref, 1e-8, mode="rel"))
        lam_mu = [qbd.bd_rates(nu, n) for n in range(52)]
        pis = [qbd.potential_coefficients(nu, n, model) for n in range(52)]
        lhs = np.array([pis[n] * lam_mu[n][0] for n in range(51)])
        rhs = np.array([pis[n + 1] * lam_mu[n + 1][1] for n in range(51)])
        reports.append(compare("detailed_balance", lhs / rhs, np.ones_like(lhs), 1e-12))
    else:
        W = qbd.matrix_weight_w1(nu)
        rule = gauss_jacobi_rule(120, W.alpha, W.beta)
        Q = fam(rule.nodes)
        gram = np.einsum("k,ikab,kbc,jkdc->iajd", rule.weights, Q, W.smooth(rule.nodes), Q)
        err = 0.0
        for i in range(9):
            for j in range(9):
                ref = np.linalg.inv(qbd.potential_coefficients(nu, i, model)) if i == j else np.zeros((2, 2))
                err = max(err, np.abs(gram[i, :, j, :] - ref).max() / np.abs(gram[i, :, i, :]).max())
        reports.append(OracleReport("orthogonality.gram", err, 0.0, err, err, 1e-8, "rel", err <= 1e-8))
        pi = qbd.invariant_measure(nu, 200)
        res = (pi @ qbd.build_generator(nu, 200, model).dense())[: 199 * 2]
        reports.append(compare("invariant_measure.residual", res / np.maximum(pi[: 199 * 2], 1.0), 0 * res, 1e-10))
    # Monte Carlo: P_0j(1) from exact simulation against KM.
    km = qbd.km_matrix(nu, model, 5, 1.0, check=False, coefficients=coeffs)
    ens = qbd.gillespie_ensemble(gen, qbd.ChainState(0, 1), [1.0], n_paths, seed)
    states = ens.states[:, 0]
    worst = 0.0
    for j in range(5 * d):
        p = np.mean(states == j)
        se = max(math.sqrt(p * (1 - p) / n_paths), 1 / n_paths)
        worst = max(worst, abs(p - km[0, j]) / se)
    reports.append(OracleReport("gillespie_vs_km.sigmas", worst, 0.0, worst, worst, 4.0, "abs", worst <= 4.0))
    return reports


def _perturbed_model(model: SwitchingDiffusionModel, perturb: float) -> SwitchingDiffusionModel:
    drifts = list(model.drifts)
    first = drifts[0]
    drifts[0] = lambda y: (1 + perturb) * first(y)
    return SwitchingDiffusionModel(model.phases, tuple(drifts), model.switch_kill, model.nu, model.label)


def _diffusion_suite(label: str, nu: float, perturb: float, seed: int, n_paths: int, tol: float) -> list[OracleReport]:
    reports = []
    model = build_model(nu, label)
    if perturb:
        model = _perturbed_model(model, perturb)
    y = np.linspace(0.005, 0.995, 100)
    y = y[np.abs(y - 0.5) > 1e-3]
    d, p = spherical_blocks(nu, label, y)
    reports.append(compare("model_vs_spherical.drift", model.drift(y), np.real(np.diagonal(d, axis1=-2, axis2=-1)), 1e-10))
    reports.append(compare("model_vs_spherical.switch_kill", model.rates(y), np.real(p), 1e-10, mode="either"))
    R = model.rates(y)
    off = R - np.einsum("mii->mi", R)[..., None] * np.eye(model.phases)
    reports.append(compare("switch_kill.off_diagonal_nonnegative", np.minimum(off.min(), 0.0), 0.0, 1e-12))
    reports.append(compare("switch_kill.row_deficit_nonnegative", np.maximum(R.sum(axis=-1).max(), 0.0), 0.0, 1e-10))
    err = eigen_identity_error(model)
    reports.append(OracleReport("eigen_identity.fd", err, 0.0, float(err.max()), float(err.max()), 1e-6, "rel", bool(err.max() <= 1e-6)))
    if nu > 0:
        W = model_weight(nu, label)
        rule = gauss_jacobi_rule(80, W.alpha, W.beta)
        Q = model_eigenfunctions(nu, label, 8, rule.nodes)
        gram = np.einsum("k,nkba,kbc,mkcd->nmad", rule.weights, np.conj(Q), W.smooth(rule.nodes), Q)
        worst = 0.0
        for n in range(9):
            norms = np.exp(log_norms_inv(nu, label, n))
            if label == "l1-killed":
                norms = np.array([norm2q(nu, n)])
            elif label == "l1-switch2":
                norms = np.diag(norms_inv_switch2(nu, n))
            for m in range(9):
                ref = np.diag(norms) if n == m else 0.0
                worst = max(worst, np.abs(gram[n, m] - ref).max() / norms.max())
        reports.append(OracleReport("orthogonality.gram", worst, 0.0, worst, worst, 1e-8, "rel", worst <= 1e-8))
    if label == "l1-killed":
        s = [survival(nu, t, 0.5, tol) for t in (0.5, 1.0, 2.0)]
        reports.append(OracleReport("survival.decreasing", s, sorted(s, reverse=True), 0.0, 0.0, 0.0, "abs", bool(s[0] > s[1] > s[2] and s[0] <= 1)))
        # a regular boundary at 0 (nu < 1/2) needs a finer step to keep the EM bias under 1e-2
        dt = 1e-4 if nu < 0.5 else 1e-3
        ens = em_ensemble(model, 0.5, 1, dt, 1.0, n_paths, seed, record_times=[1.0])
        reports.append(compare("survival_vs_em.t=1", ens.hazard_survival[0], s[1], 1e-2))
    if label == "l1-switch2" and nu > 0:
        M = mass(model, 0.5, 0.3, tol)
        reports.append(compare("mass_conservation", M.sum(axis=1), np.ones(2), 1e-6))
        if nu >= 0.5:
            rule = gauss_jacobi_rule(60, nu - 0.5, nu - 0.5)
            psi = invariant_psi(nu, rule.nodes) / (rule.nodes * (1 - rule.nodes))[:, None] ** (nu - 0.5)
            reports.append(compare("invariant_psi.normalisation", rule.weights @ psi.sum(axis=1), 1.0, 1e-10))
    return reports


def validate(
    model: str,
    nu: float,
    perturb: float = 0.0,
    seed: int = 0,
    n_paths: int = 20_000,
    tol: float = 1e-10,
) -> list[OracleReport]:
    """Run the oracle suite of one model."""
    model = str(model).lower()
    if model in CHAIN_MODELS:
        return _chain_suite(model, nu, perturb, seed, n_paths)
    if model in DIFFUSION_MODELS:
        return _diffusion_suite(model, nu, perturb, seed, min(n_paths, 4000), tol)
    raise ValueError(f"unknown model {model!r}")
