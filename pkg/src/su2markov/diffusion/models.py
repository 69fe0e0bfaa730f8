"""Switching diffusions on [0, 1] with optional killing.

Each model has generator

    (G f)_i(y) = y(1-y) f_i''(y) + b_i(y) f_i'(y) + sum_j Q_ij(y) f_j(y)

where ``b_i`` is the drift of phase ``i`` and ``Q(y)`` has nonnegative
off-diagonal switching rates and row sums ``<= 0``; the deficit of a row
is the killing rate in that phase.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from ..specfun import pochhammer
from ..spherical import (
    MatrixWeight,
    ModelParams,
    conjugated_operator,
    diffusion_transform,
)

__all__ = [
    "DiffusionLabel",
    "SwitchingDiffusionModel",
    "build_model",
    "model_block",
    "spherical_blocks",
    "eigenvalue",
    "model_weight",
    "phase_jump_probs",
    "invariant_psi",
]


class DiffusionLabel(str, enum.Enum):
    L1_KILLED = "l1-killed"
    L1_SWITCH2 = "l1-switch2"
    L2_SWITCH3 = "l2-switch3"
    L2_KILLSWITCH2 = "l2-killswitch2"


# (ell, indices of the block of the reduced 2ell+1 system)
_BLOCKS = {
    DiffusionLabel.L1_KILLED: (1, (2,)),
    DiffusionLabel.L1_SWITCH2: (1, (0, 1)),
    DiffusionLabel.L2_SWITCH3: (2, (0, 1, 2)),
    DiffusionLabel.L2_KILLSWITCH2: (2, (3, 4)),
}


def _label(label) -> DiffusionLabel:
    return label if isinstance(label, DiffusionLabel) else DiffusionLabel(str(label).lower().replace("_", "-"))


def model_block(label) -> tuple[int, tuple[int, ...]]:
    """``(ell, indices)`` locating the model inside the reduced system."""
    return _BLOCKS[_label(label)]


def _wright_fisher(y):
    y = np.asarray(y, dtype=float)
    return y * (1 - y)


@dataclass(frozen=True)
class SwitchingDiffusionModel:
    """Drifts, switching/killing matrix and diffusion coefficient of a model.

    ``drifts`` holds one vectorised callable per phase. ``switch_kill`` maps
    an array of ``m`` points to an ``(m, phases, phases)`` array.
    ``label`` is ``None`` for hand-built models.
    """

    phases: int
    drifts: Sequence[Callable]
    switch_kill: Callable
    nu: float
    label: DiffusionLabel | None = None
    diffusion_sq: Callable = _wright_fisher

    def drift(self, y) -> np.ndarray:
        """Drift of every phase, shape ``(m, phases)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.stack([np.broadcast_to(b(y), y.shape) for b in self.drifts], axis=-1)

    def rates(self, y) -> np.ndarray:
        return self.switch_kill(np.atleast_1d(np.asarray(y, dtype=float)))

    def killing_rate(self, y) -> np.ndarray:
        """Row deficits ``-sum_j Q_ij(y)``, shape ``(m, phases)``."""
        return -self.rates(y).sum(axis=-1)

    def apply(self, f, y, h: float = 1e-5) -> np.ndarray:
        """Apply the generator to ``f`` (values ``(m, phases, k)``) by central differences."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        f0, fp, fm = f(y), f(y + h), f(y - h)
        d2 = (fp - 2 * f0 + fm) / h**2
        d1 = (fp - fm) / (2 * h)
        return self.diffusion_sq(y)[:, None, None] * d2 + self.drift(y)[:, :, None] * d1 + self.rates(y) @ f0


def _q(y):
    return 3 - 8 * y + 8 * y * y


def build_model(nu: float, label) -> SwitchingDiffusionModel:
    """Assemble one of the four models for ``nu >= 0``."""
    label = _label(label)
    if nu < 0:
        raise ValueError(f"switching diffusions require ν≥0, got nu={nu}")

    def u(y):
        return 1 - 2 * y

    if label is DiffusionLabel.L1_KILLED:

        def rates(y):
            return (-nu * u(y) ** 2 / (2 * y * (1 - y)))[:, None, None]

        drifts = (lambda y: (nu + 0.5) * u(y),)
        return SwitchingDiffusionModel(1, drifts, rates, float(nu), label)

    if label is DiffusionLabel.L1_SWITCH2:

        def rates(y):
            s = 2 * y * (1 - y)
            a = nu * u(y) ** 2 / s
            b = np.broadcast_to((1 + nu) / s, y.shape)
            return np.stack([np.stack([-a, a], -1), np.stack([b, -b], -1)], -2)

        drifts = (
            lambda y: (nu + 0.5) * u(y),
            lambda y: (nu + 1.5) * u(y) - 1 / u(y),
        )
        return SwitchingDiffusionModel(2, drifts, rates, float(nu), label)

    if label is DiffusionLabel.L2_SWITCH3:

        def rates(y):
            s = y * (1 - y)
            q = _q(y)
            z = np.zeros_like(y)
            a = nu * u(y) ** 2
            b = np.broadcast_to((3 + nu) / 4, y.shape)
            c = (1 + nu) * q / 4
            d = 3 * (nu + 2) * u(y) ** 2 / q
            rows = [
                np.stack([-a, a, z], -1),
                np.stack([b, -(b + c), c], -1),
                np.stack([z, d, -d], -1),
            ]
            return np.stack(rows, -2) / s[:, None, None]

        drifts = (
            lambda y: (nu + 0.5) * u(y),
            lambda y: (nu + 1.5) * u(y) - 1 / u(y),
            lambda y: (nu + 2.5) * u(y) - 6 * u(y) / _q(y),
        )
        return SwitchingDiffusionModel(3, drifts, rates, float(nu), label)

    # L2_KILLSWITCH2
    def rates(y):
        s = y * (1 - y)
        q = _q(y)
        a = np.broadcast_to((nu + 3) / 4, y.shape)
        k = (nu + 1) * q / 4
        b = nu * u(y) ** 2
        rows = [np.stack([-(a + k), a], -1), np.stack([b, -b], -1)]
        return np.stack(rows, -2) / s[:, None, None]

    drifts = (
        lambda y: (nu + 1.5) * u(y) - 1 / u(y),
        lambda y: (nu + 0.5) * u(y),
    )
    return SwitchingDiffusionModel(2, drifts, rates, float(nu), label)


def spherical_blocks(nu: float, label, y):
    """Drift and potential of the model recomputed from the spherical functions.

    Conjugates ``S^{-1} Omega S`` (shifted by ``(Lambda0)_{ell ell}``) with
    the constant transform ``T`` and returns the model's diagonal block.
    The result should agree with :func:`build_model`; this is the
    cross-check used by the tests and by ``validate``.
    """
    ell, idx = model_block(label)
    params = ModelParams(ell, nu)
    T = diffusion_transform(params)
    drift, pot = conjugated_operator(params, y, shift=True)
    Tis = np.linalg.inv(T.T)
    d = Tis @ drift @ T.T
    p = Tis @ pot @ T.T
    ix = np.ix_(idx, idx)
    return d[..., ix[0], ix[1]], p[..., ix[0], ix[1]]


def eigenvalue(nu: float, label, n: int) -> np.ndarray:
    """Diagonal eigenvalue matrix for index ``n`` (1x1 for the killed model)."""
    label = _label(label)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if label is DiffusionLabel.L1_KILLED:
        return np.array([[-1.0 - n * (n + 2 * nu + 2)]])
    if label is DiffusionLabel.L1_SWITCH2:
        return np.diag([-1.0, 0.0]) - n * (n + 2 * nu + 2) * np.eye(2)
    if label is DiffusionLabel.L2_SWITCH3:
        return np.diag([-4.0, -1.0, 0.0]) - n * (n + 2 * nu + 4) * np.eye(3)
    return np.diag([-1.0, -4.0]) - n * (n + 2 * nu + 4) * np.eye(2)


def model_weight(nu: float, label) -> MatrixWeight:
    """Orthogonality weight of the model's eigenfunctions (diagonal)."""
    label = _label(label)
    if nu <= -0.5:
        raise ValueError("weights need nu > -1/2")
    a = nu - 0.5
    if label in (DiffusionLabel.L1_KILLED, DiffusionLabel.L1_SWITCH2):
        c = 4 ** (nu - 1) * (2 + nu) / (nu + 0.5)
        if label is DiffusionLabel.L1_KILLED:

            def smooth(y):
                return np.full((np.size(y), 1, 1), c * (1 + nu))

            return MatrixWeight(smooth, a, a, 1)

        def smooth(y):
            y = np.atleast_1d(y)
            out = np.zeros((y.size, 2, 2))
            out[:, 0, 0] = c * (1 + nu)
            out[:, 1, 1] = c * nu * (1 - 2 * y) ** 2
            return out

        return MatrixWeight(smooth, a, a, 2)
    c = 4 ** (nu - 2) * (nu + 4) / pochhammer(nu + 0.5, 2)
    if label is DiffusionLabel.L2_SWITCH3:

        def smooth(y):
            y = np.atleast_1d(y)
            out = np.zeros((y.size, 3, 3))
            out[:, 0, 0] = c * pochhammer(nu + 2, 2)
            out[:, 1, 1] = c * 4 * nu * (nu + 2) * (1 - 2 * y) ** 2
            out[:, 2, 2] = c * nu * (nu + 1) * _q(y) ** 2 / 3
            return out

        return MatrixWeight(smooth, a, a, 3)

    def smooth(y):
        y = np.atleast_1d(y)
        out = np.zeros((y.size, 2, 2))
        out[:, 0, 0] = c * (nu + 2) * 4 * nu * (1 - 2 * y) ** 2
        out[:, 1, 1] = c * (nu + 2) * (nu + 3)
        return out

    return MatrixWeight(smooth, a, a, 2)


def phase_jump_probs(nu: float, y) -> tuple:
    """Embedded-chain phase switch probabilities ``(p12, p21)`` of the two-phase model.

    Each switch rate is divided by the total jump rate out of the pair of
    phases, ``(nu(1-2y)**2 + 1 + nu) / (2y(1-y))``, so both share the
    denominator ``nu(1-2y)**2 + 1 + nu``.
    """
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("y must lie in [0, 1]")
    a = nu * (1 - 2 * y) ** 2
    den = a + 1 + nu
    p12, p21 = a / den, (1 + nu) / den
    if y.ndim == 0:
        return float(p12), float(p21)
    return p12, p21


def invariant_psi(nu: float, y, warn: bool = True) -> np.ndarray:
    """Invariant density ``psi(y)`` of the two-phase model, shape ``(..., 2)``.

    It is a probability density for ``nu >= 1/2``; for smaller ``nu`` the
    boundaries are regular and the stationary law charges them, so the
    formula is only a computation (a warning is issued).
    """
    if nu <= -0.5:
        raise ValueError("psi needs nu > -1/2")
    if warn and nu < 0.5:
        warnings.warn("psi is an invariant distribution only for nu >= 1/2", RuntimeWarning, stacklevel=2)
    y = np.asarray(y, dtype=float)
    logc = nu * math.log(4) + gammaln(nu + 2) - 0.5 * math.log(math.pi) - math.log(2 + nu) - gammaln(nu + 1.5)
    base = math.exp(logc) * (y * (1 - y)) ** (nu - 0.5)
    return np.stack([base * (1 + nu), base * nu * (1 - 2 * y) ** 2], axis=-1)
