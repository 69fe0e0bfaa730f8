"""Euler--Maruyama simulation of the switching diffusions.

The generator ``y(1-y) f'' + b f'`` corresponds to the SDE
``dX = b dt + sqrt(2 X (1 - X)) dW``. Phase switches use the rates at the
start of each step, with probability ``1 - exp(-rate dt)``. Killing is
driven by the integrated hazard against a pre-drawn ``Exp(1)`` variate, so
the unkilled motion and the killing time come from one simulation.

Near the threshold ``1/2`` some phases carry a drift of order
``1/|1-2y|``. A fixed step would jump across it. The step is therefore
capped at ``eta / b**2``: the drift then moves a path by at most
``eta / |b|``, a small fraction of its distance to ``1/2``, and the noise
over the same step is a similarly small fraction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import SwitchingDiffusionModel

__all__ = [
    "DiffusionPath",
    "EnsembleResult",
    "em_simulate",
    "em_ensemble",
    "BOUNDARY_EPS",
    "DRIFT_STEP_ETA",
]

BOUNDARY_EPS = 1e-9
DRIFT_STEP_ETA = 2.5e-3


@dataclass(frozen=True)
class DiffusionPath:
    """One simulated path; ``phases`` are 1-based.

    ``crossings[p]`` counts steps taken in phase ``p + 1`` that crossed
    ``y = 1/2``.
    """

    times: np.ndarray
    positions: np.ndarray
    phases: np.ndarray
    killed_at: float | None
    seed: int
    dt: float
    crossings: tuple[int, ...]
    occupation: tuple[float, ...]
    boundary_hits: int = 0

    def csv_rows(self) -> list[tuple[float, float, int, int]]:
        """Rows ``(t, x, phase, alive)``; the last row marks the killing time."""
        rows = [(float(t), float(x), int(p), 1) for t, x, p in zip(self.times, self.positions, self.phases)]
        if self.killed_at is not None:
            t, x, p, _ = rows[-1]
            rows[-1] = (t, x, p, 0)
        return rows


@dataclass(frozen=True)
class EnsembleResult:
    """Aggregated ensemble output.

    ``alive[r]`` is the fraction alive at ``record_times[r]`` (killing by
    threshold), ``hazard_survival[r]`` the mean of ``exp(-H(t_r))`` and
    ``hazard_se[r]`` its standard error. ``crossings`` and ``occupation``
    are per path and phase.
    """

    record_times: np.ndarray
    alive: np.ndarray
    hazard_survival: np.ndarray
    hazard_se: np.ndarray
    crossings: np.ndarray
    occupation: np.ndarray
    boundary_hits: np.ndarray
    final_positions: np.ndarray
    final_phases: np.ndarray
    n_paths: int


def _check_inputs(model: SwitchingDiffusionModel, x0: float, phase0: int, dt: float, t_max: float) -> int:
    if not 0 < x0 < 1:
        raise ValueError("x0 must lie in (0, 1)")
    if dt <= 0 or t_max <= 0:
        raise ValueError("dt and t_max must be positive")
    if not 1 <= phase0 <= model.phases:
        raise ValueError(f"phase0 must be in 1..{model.phases}")
    p = phase0 - 1
    row = model.rates(np.array([x0]))[0, p]
    out = row.sum() - row[p]
    kill = -row.sum()
    for rate in (out, kill):
        if 1 - math.exp(-rate * dt) > 0.5:
            raise ValueError(f"dt={dt} too large: a per-step jump probability exceeds 0.5 at x0={x0}")
    with np.errstate(divide="ignore", invalid="ignore"):
        start_drift = model.drift(np.array([x0]))[0, p]
    if not np.isfinite(start_drift):
        raise ValueError(f"phase {phase0} cannot start at x0={x0}")
    return p


def _engine(
    model: SwitchingDiffusionModel,
    x0: float,
    p0: int,
    dt: float,
    t_max: float,
    n: int,
    rng: np.random.Generator,
    record_times: np.ndarray,
    eta: float,
    keep_path: bool = False,
):
    P = model.phases
    nrec = record_times.size
    stops = np.append(record_times, t_max)
    out = dict(
        rec_alive=np.zeros((nrec, n), dtype=bool),
        rec_surv=np.zeros((nrec, n)),
        occ=np.zeros((n, P)),
        cross=np.zeros((n, P), dtype=np.int64),
        hits=np.zeros(n, dtype=np.int64),
        x=np.full(n, float(x0)),
        ph=np.full(n, p0, dtype=np.int64),
        path=[(0.0, float(x0), p0)] if keep_path else None,
        killed_at=None,
    )
    # Compact state of the paths still running; ``orig`` maps back.
    orig = np.arange(n)
    x = np.full(n, float(x0))
    ph = np.full(n, p0, dtype=np.int64)
    t = np.zeros(n)
    H = np.zeros(n)
    E = rng.exponential(size=n)
    next_rec = np.zeros(n, dtype=np.int64)
    occ = np.zeros((n, P))
    cross = np.zeros((n, P), dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    while orig.size:
        k = orig.size
        ar = np.arange(k)
        b = model.drift(x)[ar, ph]
        with np.errstate(divide="ignore"):
            h = np.minimum(dt, eta / (b * b))
        np.minimum(h, stops[next_rec] - t, out=h)
        R = model.rates(x)[ar, ph]
        kill = -R.sum(axis=-1)
        H += np.maximum(kill, 0.0) * h
        occ[ar, ph] += h
        xn = x + b * h + np.sqrt(2 * model.diffusion_sq(x) * h) * rng.standard_normal(k)
        clamped = (xn <= BOUNDARY_EPS) | (xn >= 1 - BOUNDARY_EPS)
        if clamped.any():
            hits[clamped] += 1
            np.clip(xn, BOUNDARY_EPS, 1 - BOUNDARY_EPS, out=xn)
        crossed = (x - 0.5) * (xn - 0.5) < 0
        if crossed.any():
            cross[ar[crossed], ph[crossed]] += 1
        x = xn
        if P > 1:
            off = R.copy()
            off[ar, ph] = 0.0
            S = off.sum(axis=-1)
            jump = rng.random(k) < -np.expm1(-S * h)
            if jump.any():
                cum = np.cumsum(off[jump], axis=-1)
                u = rng.random(jump.sum()) * S[jump]
                ph[jump] = np.minimum((cum <= u[:, None]).sum(axis=-1), P - 1)
        t += h
        if nrec:
            hit = (t >= stops[next_rec] - 1e-12) & (next_rec < nrec)
            if hit.any():
                r, j = next_rec[hit], orig[hit]
                out["rec_alive"][r, j] = H[hit] < E[hit]
                out["rec_surv"][r, j] = np.exp(-H[hit])
                next_rec[hit] += 1
        if keep_path:
            out["path"].append((float(t[0]), float(x[0]), int(ph[0])))
            if H[0] >= E[0]:
                out["killed_at"] = float(t[0])
                t[0] = t_max
        done = t >= t_max - 1e-12
        if done.any():
            j = orig[done]
            out["occ"][j], out["cross"][j], out["hits"][j] = occ[done], cross[done], hits[done]
            out["x"][j], out["ph"][j] = x[done], ph[done]
            keep = ~done
            orig, x, ph, t, H, E = orig[keep], x[keep], ph[keep], t[keep], H[keep], E[keep]
            next_rec, occ, cross, hits = next_rec[keep], occ[keep], cross[keep], hits[keep]
    return out


def em_simulate(
    model: SwitchingDiffusionModel,
    x0: float,
    phase0: int,
    dt: float,
    t_max: float,
    seed: int,
    eta: float = DRIFT_STEP_ETA,
) -> DiffusionPath:
    """Simulate one path until ``t_max`` or the killing time."""
    p0 = _check_inputs(model, x0, phase0, dt, t_max)
    rng = np.random.default_rng(seed)
    out = _engine(model, x0, p0, dt, t_max, 1, rng, np.empty(0), eta, keep_path=True)
    arr = np.array(out["path"])
    return DiffusionPath(
        times=arr[:, 0],
        positions=arr[:, 1],
        phases=arr[:, 2].astype(int) + 1,
        killed_at=out["killed_at"],
        seed=int(seed),
        dt=float(dt),
        crossings=tuple(int(c) for c in out["cross"][0]),
        occupation=tuple(float(o) for o in out["occ"][0]),
        boundary_hits=int(out["hits"][0]),
    )


def em_ensemble(
    model: SwitchingDiffusionModel,
    x0: float,
    phase0: int,
    dt: float,
    t_max: float,
    n_paths: int,
    seed: int,
    record_times: Sequence[float] = (),
    workers: int = 4,
    eta: float = DRIFT_STEP_ETA,
) -> EnsembleResult:
    """Simulate ``n_paths`` independent paths in vectorised chunks.

    Chunk ``k`` uses the generator seeded with ``[seed, k]``, so results
    depend on ``seed`` and ``workers`` only.
    """
    p0 = _check_inputs(model, x0, phase0, dt, t_max)
    rec = np.sort(np.asarray(record_times, dtype=float))
    if rec.size and (rec[0] <= 0 or rec[-1] > t_max):
        raise ValueError("record times must lie in (0, t_max]")
    workers = max(1, min(workers, n_paths))
    sizes = [n_paths // workers + (k < n_paths % workers) for k in range(workers)]

    def run(k):
        return _engine(model, x0, p0, dt, t_max, sizes[k], np.random.default_rng([seed, k]), rec, eta)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, range(workers)))
    alive = np.concatenate([p["rec_alive"] for p in parts], axis=1)
    surv = np.concatenate([p["rec_surv"] for p in parts], axis=1)
    return EnsembleResult(
        record_times=rec,
        alive=alive.mean(axis=1),
        hazard_survival=surv.mean(axis=1),
        hazard_se=surv.std(axis=1, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.zeros(rec.size),
        crossings=np.concatenate([p["cross"] for p in parts]),
        occupation=np.concatenate([p["occ"] for p in parts]),
        boundary_hits=np.concatenate([p["hits"] for p in parts]),
        final_positions=np.concatenate([p["x"] for p in parts]),
        final_phases=np.concatenate([p["ph"] for p in parts]) + 1,
        n_paths=int(n_paths),
    )
