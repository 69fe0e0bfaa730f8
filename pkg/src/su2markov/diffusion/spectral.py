"""Spectral objects of the switching diffusions.

The eigenfunctions of every model come from the monic matrix polynomials
of :mod:`su2markov.spherical`:

    Q_n(y) = [R(y)^{-1} P_n(y)^* T^*]_block,   R^{-1} = T^{-*} S^{-1} Psi0,

and satisfy ``G Q_n = Q_n Lambda_n`` (columns are eigenfunctions) and
``int Q_n^* W Q_m dy = delta_nm Pi_n^{-1}``. Degrees grow fast, so the
polynomials are carried with a factor ``4**n`` and the norms in log form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import eval_gegenbauer, gammaln

from ..specfun import gauss_jacobi_rule, log_pochhammer, pochhammer
from ..spherical import (
    MatrixWeight,
    ModelParams,
    MonicRecurrence,
    diffusion_transform,
    log_monic_norms,
    monic_polynomials,
    monic_recurrence,
    r_inverse,
    r_inverse_derivatives,
)
from .models import DiffusionLabel, _label, build_model, eigenvalue, model_block, model_weight

__all__ = [
    "SpectralSeries",
    "spectral_series",
    "eigenfunction_q2",
    "eigenfunction_Q1",
    "model_eigenfunctions",
    "model_eigenfunction_derivatives",
    "log_norms_inv",
    "norm2q",
    "norms_inv_switch2",
    "density",
    "survival",
    "TruncationError",
]

HARD_CAP = 500
_SCALE = 4.0


class TruncationError(RuntimeError):
    """The series needs more terms than the hard cap allows."""


def norm2q(nu: float, n: int) -> float:
    """``pi_n^{-1} = ||q_{n,2}||^2`` in closed form."""
    log = (
        math.log(math.pi)
        + gammaln(n + 1)
        + math.log(n + nu + 1)
        + log_pochhammer(nu + 1, 2)[0]
        + gammaln(n + 2 * nu + 2)
        - n * math.log(16)
        - nu * math.log(4)
        - math.log(2 * nu + 1)
        - 2 * gammaln(n + nu + 2)
    )
    return math.exp(log)


def norms_inv_switch2(nu: float, n: int) -> np.ndarray:
    """``Pi_n^{-1} = pi_n^{-1} diag(1, nu(n+nu+2) / (4(nu+1)(n+nu)))``.

    At ``n = nu = 0`` the ratio is read as its limit ``(nu+2)/(4(nu+1))``.
    """
    second = (n + nu + 2) / (4 * (nu + 1)) if n == 0 else nu * (n + nu + 2) / (4 * (nu + 1) * (n + nu))
    return norm2q(nu, n) * np.diag([1.0, second])


def eigenfunction_q2(nu: float, n: int, y) -> np.ndarray:
    """Scalar eigenfunction of the killed model.

    ``q_n(y) = -i n! sqrt(y(1-y)) / (2**(2n-2) (nu+1)_n) C_n^(nu+1)(2y-1)``.
    This is the normalisation produced by the construction above; its
    squared norm against the killed weight equals :func:`norm2q`.
    """
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("y must lie in [0, 1]")
    logc = gammaln(n + 1) - (2 * n - 2) * math.log(2) - log_pochhammer(nu + 1, n)[0]
    return -1j * math.exp(logc) * np.sqrt(y * (1 - y)) * eval_gegenbauer(n, nu + 1, 2 * y - 1)


def _block_setup(nu: float, label):
    label = _label(label)
    ell, idx = model_block(label)
    params = ModelParams(ell, nu)
    T = diffusion_transform(params)
    return label, params, T, np.array(idx)


def model_eigenfunctions(
    nu: float,
    label,
    n_max: int,
    y,
    recurrence: MonicRecurrence | None = None,
    scaled: bool = False,
) -> np.ndarray:
    """``Q_n(y)`` for ``n = 0..n_max``, shape ``(n_max+1, m, b, b)``.

    Rows are phases and columns index the eigenfunctions. With
    ``scaled=True`` the values are multiplied by ``4**n``.
    """
    label, params, T, idx = _block_setup(nu, label)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if recurrence is None:
        recurrence = monic_recurrence(params)
    scale = _SCALE if scaled else 1.0

    def evaluate(pts):
        P = monic_polynomials(recurrence, n_max, pts, scale=scale)
        Q = r_inverse(params, pts, T)[None] @ np.conj(np.swapaxes(P, -1, -2)) @ np.conj(T).T
        return Q[..., idx[:, None], idx[None, :]]

    half = y == 0.5
    if not half.any():
        return evaluate(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = evaluate(np.where(half, 0.25, y))
    Q[:, half] = _limit_at_half(evaluate)[:, None]
    return Q


def _limit_at_half(evaluate, eps: float = 1e-4) -> np.ndarray:
    """Value at ``y = 1/2`` where ``R^{-1}`` is singular but the block may not be.

    Symmetric Richardson on ``1/2 +- eps`` and ``1/2 +- 2 eps`` removes the
    ``eps**2`` error. Entries whose odd part grows like ``1/eps`` are true
    poles and come back as NaN.
    """
    v = evaluate(np.array([0.5 - 2 * eps, 0.5 - eps, 0.5 + eps, 0.5 + 2 * eps]))
    even1 = (v[:, 1] + v[:, 2]) / 2
    even2 = (v[:, 0] + v[:, 3]) / 2
    value = (4 * even1 - even2) / 3
    odd = np.abs(v[:, 2] - v[:, 1]) / 2
    pole = odd * eps > 1e-6 * np.maximum(1.0, np.abs(value))
    return np.where(pole, np.nan, value)


def model_eigenfunction_derivatives(nu: float, label, n_max: int, y):
    """``Q_n``, ``Q_n'`` and ``Q_n''`` computed analytically (unscaled)."""
    label, params, T, idx = _block_setup(nu, label)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    rec = monic_recurrence(params)
    N = params.N
    eye = np.eye(N)
    P = np.empty((3, n_max + 1, y.size, N, N))
    P[:, 0] = 0
    P[0, 0] = eye
    yy = y[:, None, None]
    if n_max >= 1:
        P[0, 1] = yy * eye - rec.B(0)
        P[1, 1] = eye
        P[2, 1] = 0
    for n in range(1, n_max):
        B, C = rec.B(n), rec.C(n)
        P[0, n + 1] = (yy * eye - B) @ P[0, n] - C @ P[0, n - 1]
        P[1, n + 1] = P[0, n] + (yy * eye - B) @ P[1, n] - C @ P[1, n - 1]
        P[2, n + 1] = 2 * P[1, n] + (yy * eye - B) @ P[2, n] - C @ P[2, n - 1]
    R0, R1, R2 = r_inverse_derivatives(params, y, T)
    Ts = np.conj(T).T
    Ps = [np.conj(np.swapaxes(P[k], -1, -2)) @ Ts for k in range(3)]
    Q0 = R0 @ Ps[0]
    Q1 = R1 @ Ps[0] + R0 @ Ps[1]
    Q2 = R2 @ Ps[0] + 2 * R1 @ Ps[1] + R0 @ Ps[2]
    sel = (Ellipsis, idx[:, None], idx[None, :])
    return Q0[sel], Q1[sel], Q2[sel]


def eigenfunction_Q1(nu: float, n: int, y) -> np.ndarray:
    """Two-by-two eigenfunction block of the two-phase model.

    The phase-2 row carries a factor ``1/(1-2y)`` (for example
    ``Q_0 = [[2(1-2y), 1], [2/(1-2y), 1]]``), so ``y = 1/2`` is rejected.
    The second column of ``Q_0`` is the constant ``(1, 1)``.
    """
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0) | (y >= 1)):
        raise ValueError("y must lie in (0, 1)")
    if np.any(y == 0.5):
        raise ValueError("the phase-2 row has a pole at y = 1/2")
    out = model_eigenfunctions(nu, DiffusionLabel.L1_SWITCH2, n, np.atleast_1d(y))[n]
    return out[0] if y.ndim == 0 else out


def log_norms_inv(nu: float, label, n: int) -> np.ndarray:
    """Log of the diagonal of ``Pi_n^{-1}`` for the model block (unscaled)."""
    label, params, T, idx = _block_setup(nu, label)
    logs = log_monic_norms(params, n)
    top = np.max(logs)
    M = T @ np.diag(np.exp(logs - top)) @ np.conj(T).T
    block = np.real(np.diagonal(M)[idx])
    with np.errstate(divide="ignore"):
        return np.log(block) + top


@dataclass(frozen=True)
class SpectralSeries:
    """Spectral data of one model, enough to sum the transition density.

    ``eigenvalues(n)`` and ``log_norms_inv(n)`` return diagonals;
    ``eigenfunctions(n_max, y)`` returns scaled values ``4**n Q_n(y)``.
    """

    label: DiffusionLabel
    nu: float
    eigenvalues: Callable[[int], np.ndarray]
    eigenfunctions: Callable[[int, np.ndarray], np.ndarray]
    log_norms_inv: Callable[[int], np.ndarray]
    weight: MatrixWeight
    tolerance: float = 1e-10
    truncation: int = HARD_CAP

    def coefficients(self, n_max: int, t: float) -> np.ndarray:
        """``exp(Lambda_n t) Pi_n / 16**n`` as rows of diagonals, shape ``(n_max+1, b)``."""
        rows = []
        for n in range(n_max + 1):
            lam = self.eigenvalues(n)
            lni = self.log_norms_inv(n) + n * math.log(_SCALE**2)
            with np.errstate(over="ignore"):
                rows.append(np.exp(lam * t - lni))
        return np.array(rows)


def spectral_series(nu: float, label, tol: float = 1e-10, truncation: int = HARD_CAP) -> SpectralSeries:
    label = _label(label)
    if label is DiffusionLabel.L1_SWITCH2 and nu == 0:
        raise ValueError("at nu = 0 the phase-2 weight vanishes; the two-phase series needs nu > 0")
    if label is DiffusionLabel.L2_SWITCH3 and nu == 0 or label is DiffusionLabel.L2_KILLSWITCH2 and nu == 0:
        raise ValueError("the ell = 2 weights are degenerate at nu = 0; the series needs nu > 0")
    rec = monic_recurrence(ModelParams(model_block(label)[0], nu))

    def eigfun(n_max, y, _rec=rec):
        return model_eigenfunctions(nu, label, n_max, y, recurrence=_rec, scaled=True)

    return SpectralSeries(
        label=label,
        nu=float(nu),
        eigenvalues=lambda n: np.real(np.diagonal(eigenvalue(nu, label, n))),
        eigenfunctions=eigfun,
        log_norms_inv=lambda n: log_norms_inv(nu, label, n),
        weight=model_weight(nu, label),
        tolerance=tol,
        truncation=truncation,
    )


def _truncation_guess(series: SpectralSeries, t: float) -> int:
    """Smallest n with the Gaussian factor below tol, with polynomial-growth slack."""
    target = math.log(1 / series.tolerance) + 10.0
    n = 2
    while n <= series.truncation:
        lam_gap = -np.max(series.eigenvalues(n)) + np.max(series.eigenvalues(0))
        if lam_gap * t >= target + 12 * math.log(n + 2):
            return n
        n += 1
    raise TruncationError(
        f"t={t} needs more than {series.truncation} terms for tol={series.tolerance}; use a larger t or tol"
    )


def _series_terms(series: SpectralSeries, t: float, x, y, n_max: int) -> np.ndarray:
    """Terms ``Q_n(x) Pi_n e^{Lambda_n t} Q_n(y)^* W(y)``, shape ``(n_max+1, m, b, b)``."""
    Qx = series.eigenfunctions(n_max, np.atleast_1d(x))[:, 0]
    Qy = series.eigenfunctions(n_max, y)
    coef = series.coefficients(n_max, t)
    Wy = series.weight(y)
    # A pole of Q at 1/2 meets a double zero of the weight: the product is 0.
    zero_w = np.diagonal(Wy, axis1=-2, axis2=-1) == 0
    Qy = np.where(np.isnan(Qy) & zero_w[None, :, :, None], 0.0, Qy)
    left = Qx * coef[:, None, :]
    return np.einsum("nab,nmcb,mcd->nmad", left, np.conj(Qy), Wy)


def density(model, t: float, x: float, y, tol: float = 1e-10, truncation: int = HARD_CAP):
    """Transition density ``p(t; x, y)`` by its spectral series.

    ``model`` is a :class:`SwitchingDiffusionModel` or a label (then ``nu``
    must be taken from the model). ``y`` may be an array; the result has
    shape ``(m, phases, phases)`` (or ``(m,)`` for the killed model), entry
    ``[i, j]`` being the density of moving from phase ``i`` at ``x`` to
    phase ``j`` at ``y``.
    """
    if t <= 0:
        raise ValueError("the series needs t > 0")
    if not 0 < x < 1:
        raise ValueError("x must lie in (0, 1)")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any((y_arr <= 0) | (y_arr >= 1)):
        raise ValueError("y must lie in (0, 1)")
    series = spectral_series(model.nu, model.label, tol=tol, truncation=truncation)
    n_max = _truncation_guess(series, t)
    terms = _series_terms(series, t, x, y_arr, n_max)
    tail = np.abs(terms[-3:]).max()
    scale = max(1.0, np.abs(terms).sum(axis=0).max())
    if tail > tol * scale:
        raise TruncationError(f"series tail {tail:.2e} above tol at n={n_max}; use a larger t or tol")
    out = np.real(terms.sum(axis=0))
    if out.min() < -tol * scale:
        warnings.warn(f"density dips to {out.min():.3e} below -tol; clipping", RuntimeWarning, stacklevel=2)
    out = np.maximum(out, 0.0)
    if series.label is DiffusionLabel.L1_KILLED:
        out = out[:, 0, 0]
    return out[0] if np.ndim(y) == 0 else out


def _weighted_moments(series: SpectralSeries, n_max: int, order: int = 120) -> np.ndarray:
    """``int Q_n^*(y) W(y) dy`` for ``n = 0..n_max`` (scaled), shape ``(n_max+1, b, b)``."""
    a = series.weight.alpha
    if series.label is DiffusionLabel.L1_KILLED:
        # sqrt(y(1-y)) from q_n joins the Jacobi factor.
        rule = gauss_jacobi_rule(order, a + 0.5, a + 0.5)
        y = rule.nodes
        vals = np.conj(np.swapaxes(series.eigenfunctions(n_max, y), -1, -2)) @ series.weight.smooth(y)
        vals = vals / np.sqrt(y * (1 - y))[None, :, None, None]
    else:
        rule = gauss_jacobi_rule(order + (order % 2), a, a)
        y = rule.nodes
        vals = np.conj(np.swapaxes(series.eigenfunctions(n_max, y), -1, -2)) @ series.weight.smooth(y)
    return np.einsum("k,nkab->nab", rule.weights, vals)


def mass(model, t: float, x: float, tol: float = 1e-10) -> np.ndarray:
    """``int p(t; x, y) dy`` per (phase_from, phase_to), by term-wise quadrature."""
    series = spectral_series(model.nu, model.label, tol=tol)
    n_max = _truncation_guess(series, t)
    Qx = series.eigenfunctions(n_max, np.atleast_1d(x))[:, 0]
    coef = series.coefficients(n_max, t)
    mom = _weighted_moments(series, n_max, order=max(120, 2 * n_max + 20))
    return np.real(np.einsum("nab,nb,nbc->ac", Qx, coef, mom))


def survival(nu: float, t: float, x: float, tol: float = 1e-10) -> float:
    """Survival probability of the killed model started at ``x``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not 0 < x < 1:
        raise ValueError("x must lie in (0, 1)")
    if t == 0:
        return 1.0
    model = build_model(nu, DiffusionLabel.L1_KILLED)
    return float(min(1.0, max(0.0, mass(model, t, x, tol)[0, 0])))
