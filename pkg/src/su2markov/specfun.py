"""Special functions used throughout the package.

Pochhammer symbols, Krawtchouk polynomials at p = 1/2, Gegenbauer
polynomials and Gauss-Jacobi quadrature on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import betaln, gammaln

__all__ = [
    "pochhammer",
    "log_pochhammer",
    "krawtchouk",
    "gegenbauer",
    "QuadratureRule",
    "gauss_jacobi_rule",
]


def log_pochhammer(a: float, n: int) -> tuple[float, float]:
    """Return ``(log|(a)_n|, sign)`` for the rising factorial.

    The sign is 0 when one of the factors vanishes, in which case the log
    magnitude is ``-inf``.
    """
    if n < 0 or int(n) != n:
        raise ValueError(f"pochhammer needs a nonnegative integer n, got {n!r}")
    n = int(n)
    if n == 0:
        return 0.0, 1.0
    a = float(a)
    # All factors positive: use log-gamma directly.
    if a > 0:
        return float(gammaln(a + n) - gammaln(a)), 1.0
    factors = a + np.arange(n, dtype=float)
    if np.any(factors == 0.0):
        return -math.inf, 0.0
    sign = -1.0 if np.count_nonzero(factors < 0) % 2 else 1.0
    return float(np.sum(np.log(np.abs(factors)))), sign


def pochhammer(a: float, n: int) -> float:
    """Rising factorial ``(a)_n = a (a+1) ... (a+n-1)`` with ``(a)_0 = 1``.

    Small cases are a plain product. Large ones go through log-gamma and
    overflow to ``±inf`` rather than raising.
    """
    if n < 0 or int(n) != n:
        raise ValueError(f"pochhammer needs a nonnegative integer n, got {n!r}")
    n = int(n)
    if n <= 32:
        out = 1.0
        for k in range(n):
            out *= a + k
        return out
    logabs, sign = log_pochhammer(a, n)
    if sign == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        return sign * float(np.exp(logabs))


def _rising_exact(a: int, n: int) -> Fraction:
    out = Fraction(1)
    for k in range(n):
        out *= a + k
    return out


def krawtchouk(n: int, x: int, N: int) -> float:
    """Krawtchouk polynomial ``K_n(x; 1/2, N)`` at an integer point.

    Evaluated as the terminating hypergeometric sum
    ``sum_k (-n)_k (-x)_k / (-N)_k * 2**k / k!`` in exact rational
    arithmetic, so ``K_n(0) = 1`` and the symmetry
    ``K_n(x) = (-1)**n K_n(N - x)`` hold exactly.

    Parameters
    ----------
    n, x : int
        Degree and evaluation point, both in ``0..N``.
    N : int
        Size parameter, ``N >= 0``.
    """
    if N < 0:
        raise ValueError(f"N must be nonnegative, got {N}")
    if not (0 <= n <= N):
        raise ValueError(f"degree n={n} outside 0..N={N}")
    if not (0 <= x <= N):
        raise ValueError(f"point x={x} outside 0..N={N}")
    total = Fraction(0)
    for k in range(min(n, x) + 1):
        term = _rising_exact(-n, k) * _rising_exact(-x, k) / _rising_exact(-N, k)
        total += term * Fraction(2**k, math.factorial(k))
    return float(total)


def gegenbauer(n: int, lam: float, x):
    """Gegenbauer polynomial ``C_n^(lam)(x)`` by the three-term recurrence.

    ``(n+1) C_{n+1} = 2 (n+lam) x C_n - (n+2 lam-1) C_{n-1}``, with
    ``C_0 = 1`` and ``C_1 = 2 lam x``. Vectorised over ``x``.
    """
    if n < 0:
        raise ValueError(f"degree must be nonnegative, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = 2.0 * lam * x
    for k in range(1, n):
        prev, cur = cur, (2.0 * (k + lam) * x * cur - (k + 2.0 * lam - 1.0) * prev) / (k + 1)
    return cur


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule for ``int_0^1 f(y) y**alpha (1-y)**beta dy``."""

    nodes: np.ndarray
    weights: np.ndarray
    alpha: float
    beta: float

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    def integrate(self, values) -> np.ndarray:
        """Contract ``values`` (first axis over nodes) against the weights."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def _jacobi_recurrence(order: int, a: float, b: float):
    """Monic recurrence for the weight ``(1-x)**a (1+x)**b`` on [-1, 1]."""
    n = np.arange(order, dtype=float)
    s = 2.0 * n + a + b
    diag = np.empty(order)
    with np.errstate(divide="ignore", invalid="ignore"):
        diag[:] = (b * b - a * a) / (s * (s + 2.0))
    # n = 0 needs the cancelled form when a + b is 0.
    diag[0] = (b - a) / (a + b + 2.0)
    off = np.empty(max(order - 1, 0))
    if order > 1:
        off[0] = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b) ** 2 * (3.0 + a + b))
        k = n[2:]
        sk = 2.0 * k + a + b
        off[1:] = 4.0 * k * (k + a) * (k + b) * (k + a + b) / (sk * sk * (sk + 1.0) * (sk - 1.0))
    return diag, np.sqrt(off)


def gauss_jacobi_rule(order: int, alpha: float, beta: float) -> QuadratureRule:
    """Gauss-Jacobi rule on [0, 1] for the weight ``y**alpha (1-y)**beta``.

    Nodes and weights come from the Golub-Welsch eigenproblem of the
    Jacobi matrix. The rule is exact for polynomials of degree up to
    ``2*order - 1``.
    """
    if order < 1:
        raise ValueError(f"order must be positive, got {order}")
    if alpha <= -1.0 or beta <= -1.0:
        raise ValueError(f"need alpha, beta > -1, got alpha={alpha}, beta={beta}")
    # y = (1+x)/2 turns y**alpha (1-y)**beta into (1+x)**alpha (1-x)**beta.
    diag, off = _jacobi_recurrence(order, beta, alpha)
    x, vecs = eigh_tridiagonal(diag, off)
    log_mass = betaln(alpha + 1.0, beta + 1.0)
    weights = np.exp(log_mass) * vecs[0, :] ** 2
    nodes = 0.5 * (1.0 + x)
    return QuadratureRule(nodes=nodes, weights=weights, alpha=float(alpha), beta=float(beta))
