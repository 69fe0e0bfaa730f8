"""Feller classification of an endpoint of a one-dimensional diffusion.

For ``G f = a f'' + b f'`` on an interval with inner reference point ``c``,
the scale density is ``s = exp(-int_c b/a)`` and the speed density
``m = 1/(a s)``. At the endpoint ``e``

    Sigma = int_e^c s(x) int_x^c m dz dx,    N = int_e^c m(x) int_x^c s dz dx

and the endpoint is Regular (both finite), Exit (only Sigma finite),
Entrance (only N finite) or Natural (neither).

The integrals are computed on a grid uniform in ``log2(distance to e)``,
the inner ones cumulatively and the outer ones octave by octave. Finiteness is read from the per-octave increments:
these behave like ``2**(-p k)`` and ``p`` is fitted over the last octaves.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .models import build_model

__all__ = [
    "BoundaryClass",
    "FellerReport",
    "Undecided",
    "boundary_classify",
    "classify_model_boundary",
    "feller_report",
    "model_boundary_report",
]


class BoundaryClass(str, enum.Enum):
    REGULAR = "Regular"
    ENTRANCE = "Entrance"
    EXIT = "Exit"
    NATURAL = "Natural"


class Undecided(ArithmeticError):
    """The decay rate of the integrals is too close to marginal to decide."""


def _wright_fisher(y):
    return y * (1 - y)


def _decay_exponent(integrand: np.ndarray, svar: np.ndarray, per_octave: int, fit: int) -> float:
    """Fitted ``p`` in ``increment_k ~ 2**(-p k)`` over the last ``fit`` octaves.

    Each octave is integrated on its own so that tiny increments are not
    lost against a large running total.
    """
    octaves = (svar.size - 1) // per_octave
    inc = np.array(
        [
            simpson(integrand[k * per_octave : (k + 1) * per_octave + 1], x=svar[k * per_octave : (k + 1) * per_octave + 1])
            for k in range(octaves - fit, octaves)
        ]
    )
    if np.any(inc <= 0) or not np.all(np.isfinite(inc)):
        raise Undecided("octave increments are not positive and finite")
    k = np.arange(inc.size)
    slope, icpt = np.polyfit(k, np.log2(inc), 1)
    resid = np.log2(inc) - (slope * k + icpt)
    if np.max(np.abs(resid)) > 0.1:
        raise Undecided("octave increments do not follow a power law")
    return -slope


@dataclass(frozen=True)
class FellerReport:
    """Numbers behind a classification.

    ``sigma`` and ``entrance`` are the partial integrals up to the closest
    grid point; ``p_sigma`` and ``p_entrance`` the fitted decay exponents
    (positive means finite). ``verdict`` is ``None`` when undecided.
    """

    sigma: float
    entrance: float
    p_sigma: float
    p_entrance: float
    closest: float
    verdict: BoundaryClass | None

    def to_dict(self) -> dict:
        return {
            "sigma_partial": float(self.sigma),
            "entrance_partial": float(self.entrance),
            "p_sigma": float(self.p_sigma),
            "p_entrance": float(self.p_entrance),
            "closest_distance": float(self.closest),
            "verdict": self.verdict.value if self.verdict else "Undecided",
        }


def feller_report(
    phase_drift: Callable,
    interval: tuple[float, float],
    end: str = "left",
    diffusion_sq: Callable | None = None,
    octaves: int = 30,
    per_octave: int = 64,
    margin: float = 0.05,
) -> FellerReport:
    """Feller integrals at the ``end`` ("left" or "right") of ``interval``.

    The other end of ``interval`` is the reference point; the drift must
    be integrable between them.
    """
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must satisfy a < b")
    if end not in ("left", "right"):
        raise ValueError("end must be 'left' or 'right'")
    a_fn = diffusion_sq or _wright_fisher
    e, c = (lo, hi) if end == "left" else (hi, lo)
    d = abs(c - e)
    sign = 1.0 if end == "left" else -1.0
    svar = np.linspace(0.0, octaves, octaves * per_octave + 1)
    r = d * np.exp2(-svar)
    z = e + sign * r
    dz_ds = -sign * r * math.log(2)  # moving from c towards e
    a = a_fn(z)
    b = phase_drift(z)
    L = cumulative_simpson(b / a * dz_ds, x=svar, initial=0.0)
    jac = np.abs(dz_ds)
    s_dens, m_dens = np.exp(-L), np.exp(L) / a
    S_in = cumulative_simpson(s_dens * jac, x=svar, initial=0.0)
    M_in = cumulative_simpson(m_dens * jac, x=svar, initial=0.0)
    fit = max(4, octaves // 3)
    totals, exps = [], []
    undecided = False
    for integrand in (M_in * s_dens * jac, S_in * m_dens * jac):
        totals.append(float(simpson(integrand, x=svar)))
        try:
            p = _decay_exponent(integrand, svar, per_octave, fit)
        except Undecided:
            p, undecided = math.nan, True
        if abs(p) <= margin:
            undecided = True
        exps.append(p)
    verdict = None
    if not undecided:
        table = {
            (True, True): BoundaryClass.REGULAR,
            (True, False): BoundaryClass.EXIT,
            (False, True): BoundaryClass.ENTRANCE,
            (False, False): BoundaryClass.NATURAL,
        }
        verdict = table[(exps[0] > 0, exps[1] > 0)]
    return FellerReport(totals[0], totals[1], exps[0], exps[1], float(r[-1]), verdict)


def boundary_classify(
    phase_drift: Callable,
    interval: tuple[float, float],
    end: str = "left",
    diffusion_sq: Callable | None = None,
    margin: float = 0.05,
) -> BoundaryClass:
    """Classify the ``end`` of ``interval`` for the given drift.

    Raises :class:`Undecided` when a fitted exponent lies within
    ``margin`` of zero or the increments are not power-like.
    """
    rep = feller_report(phase_drift, interval, end, diffusion_sq, margin=margin)
    if rep.verdict is None:
        raise Undecided(f"decay exponents {rep.p_sigma:.3f}, {rep.p_entrance:.3f} too close to marginal")
    return rep.verdict


def model_boundary_report(nu: float, label, phase: int, point: float, side: str = "left") -> FellerReport:
    """:class:`FellerReport` for ``point`` in {0, 1/2, 1} and one phase (1-based)."""
    model = build_model(nu, label)
    if not 1 <= phase <= model.phases:
        raise ValueError(f"phase must be in 1..{model.phases}")
    drift = model.drifts[phase - 1]
    if point == 0:
        args = ((0.0, 0.25), "left")
    elif point == 1:
        args = ((0.75, 1.0), "right")
    elif point == 0.5:
        args = ((0.25, 0.5), "right") if side == "left" else ((0.5, 0.75), "left")
    else:
        raise ValueError("point must be 0, 1/2 or 1")
    return feller_report(drift, *args, model.diffusion_sq)


def classify_model_boundary(nu: float, label, phase: int, point: float, side: str = "left") -> BoundaryClass:
    """Classify ``point`` in {0, 1/2, 1} for one phase of a model.

    ``side`` says from which side ``1/2`` is approached; it is ignored at
    the outer endpoints. ``phase`` is 1-based.
    """
    rep = model_boundary_report(nu, label, phase, point, side)
    if rep.verdict is None:
        raise Undecided(f"decay exponents {rep.p_sigma:.3f}, {rep.p_entrance:.3f} too close to marginal")
    return rep.verdict
