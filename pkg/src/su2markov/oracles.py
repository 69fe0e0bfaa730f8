"""Independent reference computations used to verify the library.

Nothing here calls the formulas it checks: the matrix exponential does not
touch the Karlin--McGregor code, the Krawtchouk sum is its own exact
rational evaluation, and finite differences only see function values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

__all__ = [
    "OracleReport",
    "compare",
    "expm",
    "apply_operator_fd",
    "brute_krawtchouk_sum",
    "mc_mean",
]


def _jsonable(value):
    arr = np.asarray(value)
    if np.iscomplexobj(arr):
        if np.abs(arr.imag).max(initial=0.0) == 0:
            arr = arr.real
        else:
            return {"re": arr.real.tolist(), "im": arr.imag.tolist()}
    return arr.tolist()


@dataclass(frozen=True)
class OracleReport:
    """Outcome of one comparison.

    ``mode`` is "abs", "rel" or "either"; ``passed`` follows from it.
    """

    name: str
    computed: object
    reference: object
    abs_err: float
    rel_err: float
    tolerance: float
    mode: str
    passed: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "computed": _jsonable(self.computed),
                "reference": _jsonable(self.reference),
                "abs_err": float(self.abs_err),
                "rel_err": float(self.rel_err),
                "tolerance": float(self.tolerance),
                "mode": self.mode,
                "passed": bool(self.passed),
            }
        )


def compare(name: str, computed, reference, tolerance: float, mode: str = "abs") -> OracleReport:
    """Max-norm comparison of ``computed`` against ``reference``."""
    if mode not in ("abs", "rel", "either"):
        raise ValueError("mode must be 'abs', 'rel' or 'either'")
    c = np.asarray(computed)
    r = np.asarray(reference)
    abs_err = float(np.max(np.abs(c - r), initial=0.0))
    scale = float(np.max(np.abs(r), initial=0.0))
    rel_err = abs_err / scale if scale > 0 else (0.0 if abs_err == 0 else math.inf)
    if not np.isfinite(abs_err):
        passed = False
    elif mode == "abs":
        passed = abs_err <= tolerance
    elif mode == "rel":
        passed = rel_err <= tolerance
    else:
        passed = abs_err <= tolerance or rel_err <= tolerance
    return OracleReport(name, computed, reference, abs_err, rel_err, tolerance, mode, bool(passed))


# Pade(13) coefficients and the matching 1-norm threshold for scaling and squaring.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def expm(matrix, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` by scaling and squaring with a degree-13 Pade approximant."""
    A = np.asarray(matrix, dtype=float if not np.iscomplexobj(matrix) else complex) * t
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expm needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm needs a finite matrix")
    n = A.shape[0]
    norm = np.abs(A).sum(axis=0).max(initial=0.0)
    if norm == 0:
        return np.eye(n, dtype=A.dtype)
    s = max(0, int(math.ceil(math.log2(norm / _THETA13)))) if norm > 0 else 0
    A = A / 2.0**s
    b = _PADE13
    eye = np.eye(n, dtype=A.dtype)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye
    X = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        X = X @ X
    return X


def _wright_fisher(y):
    return y * (1 - y)


def _expand(arr, ndim):
    arr = np.asarray(arr)
    return arr.reshape(arr.shape + (1,) * (ndim - arr.ndim))


def _apply_once(drift, potential, f, y, h, diffusion_sq):
    f0, fp, fm = (np.asarray(f(p)) for p in (y, y + h, y - h))
    hh = _expand(h, f0.ndim)
    d2 = (fp - 2 * f0 + fm) / hh**2
    d1 = (fp - fm) / (2 * hh)
    out = _expand(diffusion_sq(y), d2.ndim) * d2
    b = np.asarray(drift(y))
    if b.ndim == d1.ndim and b.ndim >= 3 and b.shape[-1] == b.shape[-2]:
        out = out + b @ d1
    else:
        out = out + _expand(b, d1.ndim) * d1
    if potential is not None:
        V = np.asarray(potential(y))
        if V.ndim >= 3 and f0.ndim == V.ndim and V.shape[-1] == f0.shape[-2]:
            out = out + V @ f0
        else:
            out = out + _expand(V, f0.ndim) * f0
    return out


def apply_operator_fd(
    drift: Callable,
    potential: Callable | None,
    f: Callable,
    y,
    h=1e-5,
    diffusion_sq: Callable = _wright_fisher,
    richardson: bool = False,
) -> np.ndarray:
    """``a f'' + b f' + V f`` at ``y`` by central differences.

    Shapes: scalar ``f`` with scalar ``b``, ``V``; or ``f(y)`` of shape
    ``(m, P, k)`` with ``b`` of shape ``(m, P)`` (one drift per row) or
    ``(m, P, P)`` (left-acting matrix) and ``V`` of shape ``(m, P, P)``.
    ``h`` may be an array, one step per point. With ``richardson`` the
    results for ``h`` and ``h/2`` are combined to remove the ``h**2`` error.
    """
    y = np.asarray(y, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), y.shape)
    if np.any(y - h <= 0) or np.any(y + h >= 1):
        raise ValueError("y +- h must lie in (0, 1)")
    if not richardson:
        return _apply_once(drift, potential, f, y, h, diffusion_sq)
    fine = _apply_once(drift, potential, f, y, h / 2, diffusion_sq)
    return (4 * fine - _apply_once(drift, potential, f, y, h, diffusion_sq)) / 3


def _krawtchouk_exact(n: int, x: int, N: int) -> Fraction:
    """``K_n(x; 1/2, N) = 2F1(-n, -x; -N; 2)`` as an exact rational."""
    total = Fraction(1)
    term = Fraction(1)
    for k in range(min(n, x)):
        term = term * (-n + k) * (-x + k) * 2 / ((-N + k) * (k + 1))
        total += term
    return total


def brute_krawtchouk_sum(ell: int, k: int, h: int) -> float:
    """``sum_j (-1)**j C(h, j) K_{2j}(k; 1/2, 2 ell)`` by direct summation."""
    if not (0 <= k <= 2 * ell and 0 <= h <= ell):
        raise ValueError("need 0 <= k <= 2 ell and 0 <= h <= ell")
    total = sum((-1) ** j * math.comb(h, j) * _krawtchouk_exact(2 * j, k, 2 * ell) for j in range(h + 1))
    return float(total)


def mc_mean(
    estimator: Callable[[np.random.Generator, int], np.ndarray],
    n_samples: int,
    base_seed: int,
    batch: int = 100_000,
) -> tuple[float, float]:
    """Sample mean and standard error of ``estimator(rng, size)`` draws.

    Batch ``k`` uses ``default_rng([base_seed, k])``, so the result depends
    on ``base_seed`` and ``batch`` only.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    total = 0.0
    total_sq = 0.0
    k = 0
    done = 0
    while done < n_samples:
        size = min(batch, n_samples - done)
        x = np.asarray(estimator(np.random.default_rng([base_seed, k]), size), dtype=float)
        if x.shape != (size,):
            raise ValueError("estimator must return one value per sample")
        total += x.sum()
        total_sq += np.dot(x, x)
        done += size
        k += 1
    mean = total / n_samples
    var = max(0.0, (total_sq - n_samples * mean * mean) / (n_samples - 1))
    return float(mean), math.sqrt(var / n_samples)
