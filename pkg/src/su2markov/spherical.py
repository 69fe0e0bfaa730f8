"""Matrix-valued spherical functions of (SU(2) x SU(2), diag) on [0, 1].

Everything here is indexed by a half-integer spin ``ell`` and a weight
parameter ``nu > -1/2``; matrices have size ``N = 2*ell + 1``. Functions
of ``y`` accept a scalar or a 1-D array and return arrays whose trailing
two axes are the matrix axes.

The conventions are fixed as follows.

* ``J = diag(2ell, ..., 1, 0)``, ``Jbreve = diag(0, 1, ..., 2ell)`` and
  ``A`` is the shift with ones on the superdiagonal.
* ``K[i, j] = K_j(i; 1/2, 2ell)`` and ``M = diag(binom(2ell, j))``.
* ``Psi0(y) = K M Upsilon(y) K^T`` with
  ``Upsilon_jj = (-i)**j y**(j/2) (1-y)**((2ell-j)/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import gammaln

from .specfun import krawtchouk, log_pochhammer, pochhammer

__all__ = [
    "ModelParams",
    "StructureMatrices",
    "MatrixWeight",
    "MonicRecurrence",
    "structure_matrices",
    "psi0",
    "ell_column_coefficient",
    "s_matrix",
    "f_nu",
    "conjugated_operator",
    "weight_W",
    "monic_recurrence",
    "monic_polynomials",
    "monic_norms",
    "log_monic_norms",
    "eigenvalue_matrix",
    "diffop_coefficients",
    "y_involution",
    "diffusion_transform",
    "qbd_transform",
    "r_inverse",
    "r_inverse_derivatives",
    "certify_stochastic_structure",
]


@dataclass(frozen=True)
class ModelParams:
    """Spin ``ell`` (integer or half-integer, ``>= 0``) and weight ``nu``."""

    ell: float
    nu: float

    def __post_init__(self):
        twice = 2 * self.ell
        if self.ell < 0 or abs(twice - round(twice)) > 1e-12:
            raise ValueError(f"ell must be a nonnegative half-integer, got {self.ell}")
        if not self.nu > -0.5:
            raise ValueError(f"nu must exceed -1/2, got {self.nu}")

    @property
    def N(self) -> int:
        return int(round(2 * self.ell)) + 1

    @property
    def integer_ell(self) -> bool:
        return self.N % 2 == 1

    @property
    def stochastic(self) -> bool:
        """True when the stochastic constructions apply (integer ell, nu >= 0)."""
        return self.integer_ell and self.nu >= 0


@dataclass(frozen=True)
class StructureMatrices:
    J: np.ndarray
    Jbreve: np.ndarray
    A: np.ndarray
    K: np.ndarray
    M: np.ndarray
    Tnu: np.ndarray

    @property
    def H(self) -> np.ndarray:
        """Involution ``e_j -> e_{2ell-j}``."""
        return np.fliplr(np.eye(self.J.shape[0]))


def structure_matrices(params: ModelParams) -> StructureMatrices:
    N = params.N
    two_ell = N - 1
    j = np.arange(N, dtype=float)
    K = np.array([[krawtchouk(col, row, two_ell) for col in range(N)] for row in range(N)])
    M = np.diag([float(math.comb(two_ell, i)) for i in range(N)])
    nu = params.nu
    # At i = 2ell numerator and denominator coincide; this keeps nu = 0 finite.
    tnu = [
        math.comb(two_ell, i) * (1.0 if i == two_ell else pochhammer(nu, i) / pochhammer(nu + two_ell - i, i))
        for i in range(N)
    ]
    return StructureMatrices(
        J=np.diag(two_ell - j),
        Jbreve=np.diag(j),
        A=np.diag(np.ones(N - 1), 1),
        K=K,
        M=M,
        Tnu=np.diag(tnu),
    )


def _as_grid(y):
    y = np.asarray(y, dtype=float)
    return y, y.ndim == 0


def psi0(params: ModelParams, y) -> np.ndarray:
    """Evaluate the spherical function ``Psi0`` at ``y`` in [0, 1]."""
    y, scalar = _as_grid(y)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("psi0 is defined on [0, 1]")
    sm = structure_matrices(params)
    N = params.N
    j = np.arange(N)
    phase = (-1j) ** j
    yy = np.atleast_1d(y)[:, None]
    ups = phase * yy ** (j / 2) * (1 - yy) ** ((N - 1 - j) / 2)
    out = np.einsum("ab,bc,mc,dc->mad", sm.K, sm.M, ups, sm.K)
    return out[0] if scalar else out


def _psi0_derivatives(params: ModelParams, y):
    """Psi0 and its first two y-derivatives, computed analytically."""
    sm = structure_matrices(params)
    N = params.N
    j = np.arange(N, dtype=float)
    a = j / 2
    b = (N - 1 - j) / 2
    yy = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
    base = (-1j) ** np.arange(N) * yy**a * (1 - yy) ** b
    d1f = a / yy - b / (1 - yy)
    d2f = d1f**2 - a / yy**2 - b / (1 - yy) ** 2
    out = []
    for ups in (base, base * d1f, base * d2f):
        out.append(np.einsum("ab,bc,mc,dc->mad", sm.K, sm.M, ups, sm.K))
    return out


def ell_column_coefficient(ell: int, k: int, h: int) -> float:
    """Coefficient of ``y**h`` in the middle column entry ``(Psi0)_{k, ell}``.

    Integer ``ell`` only; the entry is a polynomial of degree ``ell``.
    """
    if int(ell) != ell or ell < 0:
        raise ValueError(f"ell must be a nonnegative integer, got {ell}")
    ell = int(ell)
    if not (0 <= k <= 2 * ell):
        raise ValueError(f"k={k} outside 0..{2 * ell}")
    if not (0 <= h <= ell):
        return 0.0
    num = pochhammer(-k, h) * pochhammer(-2 * ell + k, h)
    den = pochhammer(-ell, h) * pochhammer(-ell + 0.5, h)
    return (-1) ** h * math.comb(ell, h) * num / den


def _s_coefficients(params: ModelParams) -> list[np.ndarray]:
    if not params.integer_ell:
        raise ValueError("S(y) needs integer ell")
    ell = int(round(params.ell))
    return [np.array([ell_column_coefficient(ell, k, h) for h in range(ell + 1)]) for k in range(params.N)]


def s_matrix(params: ModelParams, y, derivative: int = 0) -> np.ndarray:
    """Diagonal matrix of the middle column of ``Psi0`` (or its derivative)."""
    y, scalar = _as_grid(y)
    coefs = _s_coefficients(params)
    yy = np.atleast_1d(y)
    diag = np.stack([npoly.polyval(yy, npoly.polyder(c, derivative) if derivative else c) for c in coefs], axis=-1)
    out = diag[..., :, None] * np.eye(params.N)
    return out[0] if scalar else out


def f_nu(params: ModelParams, y) -> np.ndarray:
    """Potential ``F(y)`` of the operator ``Omega`` with ``Omega Psi0 = Psi0 Lambda0``.

    Undefined at ``y = 0`` and ``y = 1``.
    """
    y, scalar = _as_grid(y)
    yy = np.atleast_1d(y)
    if np.any((yy <= 0) | (yy >= 1)):
        raise ValueError("F is singular at y = 0 and y = 1")
    sm = structure_matrices(params)
    ell, nu = params.ell, params.nu
    N = params.N
    eye = np.eye(N)
    JJb = sm.J @ sm.Jbreve
    const = (ell * (ell + 2) + (nu - 1) * (2 * ell + nu + 1)) * eye + JJb
    hop = sm.Jbreve @ sm.A.T @ (sm.J + (nu - 1) * eye) + sm.J @ sm.A @ (sm.Jbreve + (nu - 1) * eye)
    u = (1 - 2 * yy)[:, None, None]
    s = (yy * (1 - yy))[:, None, None]
    out = const - (ell * (nu - 1) * u**2 * eye + ell * eye + JJb) / (2 * s) + u * hop / (4 * s)
    return out[0] if scalar else out


def _lambda0_ll(params: ModelParams) -> float:
    ell, nu = params.ell, params.nu
    return ell * ell + (nu - 1) * (2 * ell + nu + 1)


def conjugated_operator(params: ModelParams, y, shift: bool = False):
    """Coefficients of ``Xi = S^{-1} Omega S`` at ``y``.

    Returns ``(drift, potential)`` with
    ``Xi G = y(1-y) G'' + drift G' + potential G``. With ``shift=True`` the
    scalar ``(Lambda0)_{ell ell}`` is removed from the potential, which is
    then a generator matrix (zero row sums, nonnegative off-diagonal
    entries) for integer ``ell`` and ``nu >= 0``.
    """
    y, scalar = _as_grid(y)
    yy = np.atleast_1d(y)
    S = s_matrix(params, yy)
    sdiag = np.diagonal(S, axis1=-2, axis2=-1)
    if np.any(np.abs(sdiag) < 1e-12):
        raise ValueError("S(y) is singular at the requested point")
    sinv = np.reciprocal(sdiag)[..., None] * np.eye(params.N)
    S1 = s_matrix(params, yy, 1)
    S2 = s_matrix(params, yy, 2)
    nu = params.nu
    a = (0.5 + nu - yy * (2 * nu + 1))[:, None, None]
    s = (yy * (1 - yy))[:, None, None]
    drift = 2 * s * sinv @ S1 + a * np.eye(params.N)
    pot = s * sinv @ S2 + a * sinv @ S1 + sinv @ f_nu(params, yy) @ S
    if shift:
        pot = pot - _lambda0_ll(params) * np.eye(params.N)
    if scalar:
        return drift[0], pot[0]
    return drift, pot


def certify_stochastic_structure(params: ModelParams, grid=None) -> dict:
    """Check that the shifted conjugated potential is a generator on a grid.

    Returns the largest relative row sum and the most negative off-diagonal
    entry. Grid points where ``S`` nearly vanishes are skipped.
    """
    if grid is None:
        grid = np.linspace(0, 1, 1003)[1:-1]
    grid = np.asarray(grid, dtype=float)
    sdiag = np.diagonal(s_matrix(params, grid), axis1=-2, axis2=-1)
    keep = np.min(np.abs(sdiag), axis=-1) >= 1e-6
    _, pot = conjugated_operator(params, grid[keep], shift=True)
    rows = np.abs(pot.sum(axis=-1)).max(axis=-1)
    scale = np.maximum(1.0, np.abs(pot).max(axis=(-2, -1)))
    off = pot - np.diagonal(pot, axis1=-2, axis2=-1)[..., None] * np.eye(params.N)
    return {
        "max_row_sum": float((rows / scale).max()),
        "min_off_diagonal": float(min(0.0, off.min())),
        "points": int(keep.sum()),
    }


@dataclass(frozen=True)
class MatrixWeight:
    """Weight ``y**alpha (1-y)**beta * smooth(y)`` on [0, 1].

    ``smooth`` maps an array of points of shape ``(m,)`` to ``(m, d, d)``
    and is bounded on [0, 1].
    """

    smooth: Callable[[np.ndarray], np.ndarray]
    alpha: float
    beta: float
    dimension: int

    def __call__(self, y) -> np.ndarray:
        y, scalar = _as_grid(y)
        yy = np.atleast_1d(y)
        out = (yy**self.alpha * (1 - yy) ** self.beta)[:, None, None] * self.smooth(yy)
        return out[0] if scalar else out


def weight_W(params: ModelParams) -> MatrixWeight:
    """Orthogonality weight ``W(y) = c [y(1-y)]**(nu-1/2) Psi0^* Tnu Psi0``.

    The constant is chosen so that ``int W`` equals the norm of ``P_0``.
    The imaginary part cancels analytically; it is checked to be below
    ``1e-12`` and dropped.
    """
    ell, nu = params.ell, params.nu
    sm = structure_matrices(params)
    if params.integer_ell:
        m = int(round(ell))
        c = 4 ** (nu - ell) * pochhammer(nu + ell, m + 1) / (2 * pochhammer(nu + 0.5, m))
    else:
        # (nu+ell)_{ell+1} / (nu+1/2)_ell through gamma functions.
        c = 4 ** (nu - ell) * math.exp(
            gammaln(nu + 2 * ell + 1) - gammaln(nu + ell) - math.log(2) - gammaln(nu + 0.5 + ell) + gammaln(nu + 0.5)
        )

    def smooth(yy):
        P = psi0(params, yy)
        W = c * np.conj(np.swapaxes(P, -1, -2)) @ sm.Tnu @ P
        if np.abs(W.imag).max(initial=0.0) > 1e-12 * max(1.0, np.abs(W).max()):
            raise ArithmeticError("weight has a non-negligible imaginary part")
        return W.real

    return MatrixWeight(smooth=smooth, alpha=nu - 0.5, beta=nu - 0.5, dimension=params.N)


def _cancelled_ratio(num: np.ndarray, den: np.ndarray, zero_num: np.ndarray) -> np.ndarray:
    """Elementwise num/den with entries flagged in ``zero_num`` set to 0."""
    out = np.zeros_like(num, dtype=float)
    live = ~zero_num
    if np.any(den[live] == 0):
        raise ZeroDivisionError("recurrence coefficient has a genuine pole")
    out[live] = num[live] / den[live]
    return out


@dataclass(frozen=True)
class MonicRecurrence:
    """``y P_n = P_{n+1} + B(n) P_n + C(n) P_{n-1}`` with ``P_0 = I``."""

    params: ModelParams
    B: Callable[[int], np.ndarray]
    C: Callable[[int], np.ndarray]


def monic_recurrence(params: ModelParams) -> MonicRecurrence:
    """Three-term recurrence of the monic orthogonal polynomials for ``W``.

    The diagonal factors are evaluated elementwise with the removable
    zero/zero cancellations resolved, so ``B(0)`` exists for every
    admissible ``nu`` and ``nu = 0`` is handled.
    """
    sm = structure_matrices(params)
    j = np.diagonal(sm.J).copy()
    jb = np.diagonal(sm.Jbreve).copy()
    nu, ell = params.nu, params.ell
    eye = np.eye(params.N)

    def factor(d, n):
        if n == 0:
            return _cancelled_ratio(d, d + nu, d == 0)
        return _cancelled_ratio(d * (d + nu - 1), (d + n + nu - 1) * (d + n + nu), d == 0)

    def B(n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be nonnegative")
        return 0.5 * eye - 0.25 * np.diag(factor(j, n)) @ sm.A - 0.25 * np.diag(factor(jb, n)) @ sm.A.T

    def C(n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be nonnegative")
        if n == 0:
            return np.zeros((params.N, params.N))
        pre = n * (2 * ell + n + nu) * (2 * ell + n + 2 * nu - 1) / 16.0
        diag = np.empty(params.N)
        for i in range(params.N):
            den = (j[i] + n + nu) * (jb[i] + n + nu)
            # The factor (n+nu-1) cancels against J+n+nu-1 or Jbreve+n+nu-1
            # when J or Jbreve vanishes there; this is what makes nu = 0 work.
            if j[i] == 0:
                den *= jb[i] + n + nu - 1
                num = pre
            elif jb[i] == 0:
                den *= j[i] + n + nu - 1
                num = pre
            else:
                den *= (j[i] + n + nu - 1) * (jb[i] + n + nu - 1)
                num = pre * (n + nu - 1)
            if den == 0:
                raise ZeroDivisionError("recurrence coefficient has a genuine pole")
            diag[i] = num / den
        return np.diag(diag)

    return MonicRecurrence(params=params, B=B, C=C)


def monic_polynomials(recurrence: MonicRecurrence, n_max: int, y, scale: float = 4.0) -> np.ndarray:
    """Evaluate ``scale**n P_n(y)`` for ``n = 0..n_max``.

    The default scale of 4 keeps the values of order one on [0, 1] for
    large degrees. Returns an array of shape ``(n_max+1, m, N, N)`` for
    ``m`` points (or ``(n_max+1, N, N)`` for scalar ``y``).
    """
    y, scalar = _as_grid(y)
    yy = np.atleast_1d(y)[:, None, None]
    N = recurrence.params.N
    eye = np.eye(N)
    out = np.empty((n_max + 1, yy.shape[0], N, N))
    out[0] = eye
    if n_max >= 1:
        out[1] = scale * (yy * eye - recurrence.B(0))
    for n in range(1, n_max):
        out[n + 1] = scale * ((yy * eye - recurrence.B(n)) @ out[n]) - scale**2 * (recurrence.C(n) @ out[n - 1])
    return out[:, 0] if scalar else out


def log_monic_norms(params: ModelParams, n: int) -> np.ndarray:
    """Logarithm of the diagonal of ``int P_n W P_n^*`` (length ``N``).

    Entries that vanish (``nu = 0``, ``n >= 1``, interior ``k``) are ``-inf``.
    For ``-1/2 < nu < 0`` the weight is indefinite and some entries are
    negative; this returns the log of the absolute value, see
    :func:`monic_norms` for the signed matrix.
    """
    return _norm_terms(params, n)[0]


def _norm_terms(params: ModelParams, n: int):
    ell, nu = params.ell, params.nu
    N = params.N
    two_ell = N - 1
    out = np.empty(N)
    sign = np.ones(N)
    for k in range(N):
        v = 0.5 * math.log(math.pi) - math.log(2) - n * math.log(4) + gammaln(nu + 0.5) - gammaln(nu + 1)
        v += math.log(2 * ell + nu + n)
        v += gammaln(k + 1) + gammaln(two_ell - k + 1) - gammaln(two_ell + 1)
        v += log_pochhammer(n + nu + 1, two_ell)[0] - log_pochhammer(n + nu + 1, k)[0]
        v -= log_pochhammer(n + nu + 1, two_ell - k)[0]
        v += gammaln(n + 1) + log_pochhammer(ell + 0.5 + nu, n)[0] + log_pochhammer(2 * ell + nu, n)[0]
        v += log_pochhammer(ell + nu, n)[0] - log_pochhammer(2 * ell + nu + 1, n)[0]
        v -= log_pochhammer(2 * ell + 2 * nu + n, n)[0]
        # Remaining factor nu / ((nu+n) (nu+k)_n (2ell+nu-k)_n).
        if n == 0:
            out[k] = v
            continue
        if nu == 0:
            if two_ell == 0 or k not in (0, two_ell):
                out[k] = -math.inf
                continue
            # nu / (nu)_n -> 1 / (n-1)!
            other = log_pochhammer(float(two_ell), n)[0]
            out[k] = v - math.log(n) - gammaln(n) - other
            continue
        lp_k, s_k = log_pochhammer(nu + k, n)
        lp_kb, s_kb = log_pochhammer(2 * ell + nu - k, n)
        sign[k] = np.sign(nu) * s_k * s_kb
        out[k] = v + math.log(abs(nu)) - math.log(nu + n) - lp_k - lp_kb
    return out, sign


def monic_norms(params: ModelParams, n: int) -> np.ndarray:
    """Squared norm ``int P_n W P_n^* dy``, a diagonal matrix."""
    logs, sign = _norm_terms(params, n)
    return np.diag(sign * np.exp(logs))


def eigenvalue_matrix(params: ModelParams, n: int) -> np.ndarray:
    """Diagonal eigenvalue ``Lambda_n`` with ``D P_n^* = P_n^* Lambda_n``."""
    sm = structure_matrices(params)
    ell, nu = params.ell, params.nu
    eye = np.eye(params.N)
    return (-n * (n - 1) - n * (2 * ell + 2 * nu + 1) + (nu - 1) * (2 * ell + nu + 1)) * eye + sm.J @ sm.Jbreve


def diffop_coefficients(params: ModelParams):
    """Coefficients of ``D``: ``D G = y(1-y) G'' + X(y) G' + V G``.

    With this convention ``D P_n^* = P_n^* Lambda_n``.

    Returns ``(X, V)`` where ``X`` is a callable of ``y`` and ``V`` is constant.
    """
    sm = structure_matrices(params)
    ell, nu = params.ell, params.nu
    eye = np.eye(params.N)
    C = (2 * ell + 1) / 2 * eye - 0.5 * (sm.A.T @ sm.J + sm.A @ sm.Jbreve)
    V = sm.J @ sm.Jbreve + (nu - 1) * (2 * ell + nu + 1) * eye

    def X(y):
        y = np.asarray(y, dtype=float)
        return C + nu * eye - y[..., None, None] * (2 * ell + 2 * nu + 1) * eye

    return X, V


def y_involution(params: ModelParams) -> np.ndarray:
    """Orthogonal ``Y`` with ``Y**4 = I`` commuting with ``S``, ``Xi`` and ``W``-transforms."""
    if not params.integer_ell:
        raise ValueError("Y is defined for integer ell")
    N = params.N
    ell = N // 2
    r = 1 / math.sqrt(2)
    Y = np.zeros((N, N))
    for i in range(ell):
        k = N - 1 - i
        Y[i, i] = r
        Y[i, k] = r
        Y[k, i] = -r
        Y[k, k] = r
    Y[ell, ell] = 1.0
    return Y


def diffusion_transform(params: ModelParams) -> np.ndarray:
    """``T = -(sqrt2/2) I + (1+sqrt2) Y - (sqrt2/2) Y**2`` used for the diffusions."""
    Y = y_involution(params)
    eye = np.eye(params.N)
    s = math.sqrt(2)
    T = -s / 2 * eye + (1 + s) * Y - s / 2 * Y @ Y
    return np.round(T, 14)


def qbd_transform(params: ModelParams) -> np.ndarray:
    """``T = I + Y**2`` used for the chains."""
    Y = y_involution(params)
    return np.round(np.eye(params.N) + Y @ Y, 14)


def r_inverse(params: ModelParams, y, T: np.ndarray | None = None) -> np.ndarray:
    """``R(y)^{-1} = T^{-*} S(y)^{-1} Psi0(y)`` for the diffusion reduction."""
    if T is None:
        T = diffusion_transform(params)
    y, scalar = _as_grid(y)
    yy = np.atleast_1d(y)
    sdiag = np.diagonal(s_matrix(params, yy), axis1=-2, axis2=-1)
    with np.errstate(divide="ignore"):
        sinv = np.reciprocal(sdiag)[..., None] * np.eye(params.N)
    out = np.linalg.inv(np.conj(T).T) @ sinv @ psi0(params, yy)
    return out[0] if scalar else out


def r_inverse_derivatives(params: ModelParams, y, T: np.ndarray | None = None):
    """``R^{-1}`` and its first two derivatives, analytically."""
    if T is None:
        T = diffusion_transform(params)
    yy = np.atleast_1d(np.asarray(y, dtype=float))
    s0 = np.diagonal(s_matrix(params, yy), axis1=-2, axis2=-1)
    s1 = np.diagonal(s_matrix(params, yy, 1), axis1=-2, axis2=-1)
    s2 = np.diagonal(s_matrix(params, yy, 2), axis1=-2, axis2=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        i0 = 1 / s0
        i1 = -s1 / s0**2
        i2 = 2 * s1**2 / s0**3 - s2 / s0**2
    P0, P1, P2 = _psi0_derivatives(params, yy)
    eye = np.eye(params.N)
    d = [i[..., None] * eye for i in (i0, i1, i2)]
    Tis = np.linalg.inv(np.conj(T).T)
    R0 = Tis @ d[0] @ P0
    R1 = Tis @ (d[1] @ P0 + d[0] @ P1)
    R2 = Tis @ (d[2] @ P0 + 2 * d[1] @ P1 + d[0] @ P2)
    return R0, R1, R2
