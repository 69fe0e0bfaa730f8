"""Continuous-time chains for ell = 1.

Two chains come out of the block splitting of the ell = 1 Jacobi matrix:
a two-phase quasi-birth-and-death process (``QBD2``) on N x {1, 2} and a
scalar birth-and-death queue (``BD``) on N. Levels are 0-based here and
phases are 1-based in :class:`ChainState`, matching the CSV output.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .specfun import gauss_jacobi_rule, log_pochhammer, pochhammer
from .spherical import MatrixWeight

__all__ = [
    "ChainModel",
    "Recurrence",
    "BlockGenerator",
    "ChainState",
    "ChainPath",
    "PolynomialFamily",
    "bd_rates",
    "qbd_coefficients",
    "chain_coefficients",
    "build_generator",
    "normalized_polynomials",
    "scalar_weight_w2",
    "matrix_weight_w1",
    "potential_coefficients",
    "invariant_measure",
    "km_matrix",
    "km_transition",
    "classify",
    "gillespie_simulate",
    "gillespie_ensemble",
]


class ChainModel(str, enum.Enum):
    BD = "bd"
    QBD2 = "qbd2"


class Recurrence(str, enum.Enum):
    NULL_RECURRENT = "NullRecurrent"
    TRANSIENT = "Transient"
    INVALID = "Invalid"


def _model(model) -> ChainModel:
    return model if isinstance(model, ChainModel) else ChainModel(str(model).lower())


def bd_rates(nu: float, n: int) -> tuple[float, float]:
    """Birth and death rates ``(lambda_n, mu_n)`` of the scalar queue.

    ``lambda_n = (2nu+n+2) / (4(nu+n+1))`` and ``mu_n = n / (4(nu+n+1))``.
    At ``n = 0`` the removable singularity at ``nu = -1`` is cancelled, so
    ``lambda_0 = 1/2`` and ``mu_0 = 0`` for every ``nu``.
    """
    if n < 0:
        raise ValueError(f"level must be nonnegative, got {n}")
    if n == 0:
        return 0.5, 0.0
    den = 4.0 * (nu + n + 1)
    if den == 0:
        raise ValueError(f"rates undefined at nu={nu}, n={n}")
    lam = (2 * nu + n + 2) / den
    mu = n / den
    if lam <= 0 or mu <= 0:
        raise ValueError(f"nonpositive rate at nu={nu}, n={n} (lambda={lam}, mu={mu}); BD needs nu > -3/2")
    return lam, mu


def qbd_coefficients(nu: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Level-``n`` blocks ``(A_n, B_n, C_n)`` of the two-phase QBD.

    ``B_0[0, 1]`` uses the simplified value ``1/(2(nu+2))``; the general
    entry ``nu/(2(nu+n)(nu+n+2))`` is 0/0 at ``n = nu = 0``.
    """
    if nu < 0:
        raise ValueError(f"the two-phase chain requires ν≥0, got nu={nu}")
    if n < 0:
        raise ValueError(f"level must be nonnegative, got {n}")
    A = np.diag([(2 * nu + n + 2) / (4 * (nu + n + 2)), (n + nu) * (2 * nu + n + 2) / (4 * (nu + n + 1) ** 2)])
    b12 = 1 / (2 * (nu + 2)) if n == 0 else nu / (2 * (nu + n) * (nu + n + 2))
    B = np.array([[-0.5, b12], [(1 + nu) / (2 * (nu + n + 1) ** 2), -0.5]])
    C = np.diag([n / (4 * (nu + n)), n * (nu + n + 2) / (4 * (nu + n + 1) ** 2)]) if n > 0 else np.zeros((2, 2))
    return A, B, C


def chain_coefficients(nu: float, model, n: int):
    """Blocks ``(A_n, B_n, C_n)`` for either model (1x1 matrices for BD)."""
    model = _model(model)
    if model is ChainModel.QBD2:
        return qbd_coefficients(nu, n)
    lam, mu = bd_rates(nu, n)
    return np.array([[lam]]), np.array([[-(lam + mu)]]), np.array([[mu]])


@dataclass(frozen=True)
class BlockGenerator:
    """Truncated block-tridiagonal generator.

    Level ``n`` moves up with ``A_n``, stays with ``B_n`` and moves down with
    ``C_n``. The last level keeps its ``A`` block out of the matrix, so its
    rows leak that mass upward; all other rows are conservative.
    """

    levels: int
    phases: int
    blocks: tuple
    nu: float
    model: ChainModel

    @property
    def size(self) -> int:
        return self.levels * self.phases

    def dense(self) -> np.ndarray:
        d = self.phases
        out = np.zeros((self.size, self.size))
        for n, (A, B, C) in enumerate(self.blocks):
            r = slice(n * d, (n + 1) * d)
            out[r, r] = B
            if n + 1 < self.levels:
                out[r, (n + 1) * d : (n + 2) * d] = A
            if n > 0:
                out[r, (n - 1) * d : n * d] = C
        return out

    def leak(self) -> np.ndarray:
        """Per-state rate of leaving the truncation (nonzero on the last level only)."""
        return -self.dense().sum(axis=1)

    @property
    def conservative_interior(self) -> bool:
        rows = self.dense().sum(axis=1)[: (self.levels - 1) * self.phases]
        return bool(np.all(np.abs(rows) < 1e-12))

    def index(self, level: int, phase: int) -> int:
        return level * self.phases + (phase - 1)

    def state(self, index: int) -> "ChainState":
        return ChainState(level=index // self.phases, phase=index % self.phases + 1)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model.value,
            "nu": self.nu,
            "levels": self.levels,
            "phases": self.phases,
            "matrix": self.dense().tolist(),
        }


def build_generator(nu: float, levels: int, model) -> BlockGenerator:
    """Assemble the generator truncated to ``levels`` levels."""
    model = _model(model)
    if levels < 2:
        raise ValueError(f"need at least 2 levels, got {levels}")
    blocks = tuple(chain_coefficients(nu, model, n) for n in range(levels))
    return BlockGenerator(
        levels=levels,
        phases=2 if model is ChainModel.QBD2 else 1,
        blocks=blocks,
        nu=float(nu),
        model=model,
    )


@dataclass(frozen=True)
class PolynomialFamily:
    """Polynomials from ``-y Q_n = A_n Q_{n+1} + B_n Q_n + C_n Q_{n-1}``, ``Q_0 = I``.

    ``coefficients(n)`` returns ``(A_n, B_n, C_n)``; by default these are the
    chain's own blocks.
    """

    nu: float
    model: ChainModel
    n_max: int
    coefficients: Callable[[int], tuple]

    @property
    def dimension(self) -> int:
        return 2 if self.model is ChainModel.QBD2 else 1

    def __call__(self, y) -> np.ndarray:
        """Values of ``Q_0..Q_{n_max}`` at ``y``, shape ``(n_max+1, m, d, d)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        d = self.dimension
        out = np.zeros((self.n_max + 1, y.size, d, d))
        out[0] = np.eye(d)
        yy = y[:, None, None]
        for n in range(self.n_max):
            A, B, C = self.coefficients(n)
            if abs(np.linalg.det(A)) < 1e-300:
                raise ValueError(f"A_{n} is singular at nu={self.nu}; forward recurrence undefined")
            rhs = -yy * out[n] - B @ out[n]
            if n > 0:
                rhs = rhs - C @ out[n - 1]
            out[n + 1] = np.linalg.solve(A, rhs)
        return out


def normalized_polynomials(nu: float, model, n_max: int, coefficients=None) -> PolynomialFamily:
    """Polynomial family attached to a chain, normalised by ``Q_n(0) e = e``.

    For ``QBD2`` the forward recurrence needs ``A_0`` invertible, i.e.
    ``nu > 0``.
    """
    model = _model(model)
    if model is ChainModel.QBD2 and nu <= 0:
        raise ValueError("the two-phase polynomials need nu > 0 (A_0 is singular at nu = 0)")
    if model is ChainModel.BD and nu <= -1.5:
        raise ValueError("the birth-death polynomials need nu > -3/2")
    if coefficients is None:

        def coefficients(n, _nu=nu, _model=model):
            return chain_coefficients(_nu, _model, n)

    return PolynomialFamily(nu=float(nu), model=model, n_max=int(n_max), coefficients=coefficients)


def scalar_weight_w2(nu: float) -> MatrixWeight:
    """Scalar weight ``4**(nu+1) (nu+1)_2 / (nu+1/2) [y(1-y)]**(nu+1/2)``."""
    if nu <= -1.5:
        raise ValueError(f"w2 requires nu > -3/2, got {nu}")
    c = 4 ** (nu + 1) * pochhammer(nu + 1, 2) / (nu + 0.5)

    def smooth(y):
        return np.full((np.size(y), 1, 1), c)

    return MatrixWeight(smooth=smooth, alpha=nu + 0.5, beta=nu + 0.5, dimension=1)


def matrix_weight_w1(nu: float) -> MatrixWeight:
    """Two-by-two weight of the two-phase chain, ``alpha = beta = nu - 1/2``."""
    if nu <= -0.5:
        raise ValueError(f"W1 requires nu > -1/2, got {nu}")
    c = 4 ** (nu + 0.5) * (nu + 2)

    def smooth(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s = y * (1 - y)
        out = np.empty((y.size, 2, 2))
        out[:, 0, 0] = 1 - 2 * (1 + nu) / (nu + 0.5) * s
        out[:, 0, 1] = out[:, 1, 0] = 1 - 2 * y
        out[:, 1, 1] = 1 - 2 * nu / (nu + 0.5) * s
        return c * out

    return MatrixWeight(smooth=smooth, alpha=nu - 0.5, beta=nu - 0.5, dimension=2)


def _log_pi_bd(nu: float, n: int) -> float:
    if n == 0:
        return 0.0
    lp, sign = log_pochhammer(2 * nu + 3, n - 1)
    if sign <= 0 or nu + n + 1 <= 0:
        raise ValueError(f"potential coefficient not positive at nu={nu}, n={n}")
    return math.log(2 * (nu + n + 1)) + lp - gammaln(n + 1)


def potential_coefficients(nu: float, n: int, model):
    """``pi_n`` (BD, with ``pi_0 = 1``) or the diagonal ``Pi_n`` (QBD2)."""
    model = _model(model)
    if model is ChainModel.BD:
        if nu <= -1.5:
            raise ValueError("BD potential coefficients need nu > -3/2")
        return math.exp(_log_pi_bd(nu, n))
    if nu < 0:
        raise ValueError(f"the two-phase chain requires ν≥0, got nu={nu}")
    base = math.exp(gammaln(nu + 1) - gammaln(nu + 0.5)) / (math.sqrt(math.pi) * (nu + 2))
    if n == 0:
        return base * np.diag([1.0, (nu + 1) / (nu + 2)])
    pre = 2 * (nu + 1) * base * math.exp(log_pochhammer(2 * nu + 3, n - 1)[0] - gammaln(n + 1))
    return pre * np.diag([(nu + 1) / (nu + n + 1), nu * (nu + n + 1) / ((nu + n) * (nu + n + 2))])


def invariant_measure(nu: float, n_max: int) -> np.ndarray:
    """Invariant measure of the two-phase chain, levels ``0..n_max-1``.

    Level ``n`` contributes ``Pi_n e`` with ``e = (1, 1)``; the result is a
    flat vector ordered (level, phase).
    """
    if nu < 0:
        raise ValueError(f"the two-phase chain requires ν≥0, got nu={nu}")
    # A running product keeps the relative error near machine precision;
    # exp of log-gamma sums loses about 1e-13, which the growth of Pi_n
    # turns into visible residuals in pi A.
    base = potential_coefficients(nu, 0, ChainModel.QBD2)[0, 0]
    out = np.empty(2 * n_max)
    c = 2 * (nu + 1) * base
    for n in range(n_max):
        if n == 0:
            out[:2] = base, base * (nu + 1) / (nu + 2)
            continue
        if n > 1:
            c *= (2 * nu + 1 + n) / n
        out[2 * n] = c * (nu + 1) / (nu + n + 1)
        out[2 * n + 1] = c * nu * (nu + n + 1) / ((nu + n) * (nu + n + 2))
    return out


def _km_block(nu: float, model: ChainModel, n_max: int, t: float, order: int, coefficients=None) -> np.ndarray:
    fam = normalized_polynomials(nu, model, n_max, coefficients)
    if model is ChainModel.BD:
        # Constants of w2 cancel against ||q_0||^2, so only the Jacobi
        # factor is needed; this also keeps nu = -1 (where w2 = 0) usable.
        rule = gauss_jacobi_rule(order, nu + 0.5, nu + 0.5)
        mass = rule.weights.sum()
        Q = fam(rule.nodes)[:, :, 0, 0]
        G = np.einsum("k,ik,jk->ij", rule.weights * np.exp(-rule.nodes * t), Q, Q) / mass
        pis = np.array([math.exp(_log_pi_bd(nu, j)) for j in range(n_max + 1)])
        return G * pis[None, :]
    rule = gauss_jacobi_rule(order, nu - 0.5, nu - 0.5)
    W = matrix_weight_w1(nu).smooth(rule.nodes)
    Q = fam(rule.nodes)
    G = np.einsum("k,ikab,kbc,jkdc->iajd", rule.weights * np.exp(-rule.nodes * t), Q, W, Q)
    out = np.empty_like(G)
    for j in range(n_max + 1):
        out[:, :, j, :] = np.einsum("iab,bc->iac", G[:, :, j, :], potential_coefficients(nu, j, model))
    return out.reshape((n_max + 1) * 2, (n_max + 1) * 2)


def km_matrix(
    nu: float, model, n_max: int, t: float, order: int = 200, check: bool = True, coefficients=None
) -> np.ndarray:
    """Karlin-McGregor transition matrix for levels ``0..n_max``.

    Rows and columns are ordered (level, phase). The quadrature is repeated
    with twice the order; a disagreement above ``1e-8`` raises.
    ``coefficients`` replaces the recurrence blocks (see
    :func:`normalized_polynomials`); it exists to test the checks.
    """
    model = _model(model)
    if t < 0:
        raise ValueError("t must be nonnegative")
    P = _km_block(nu, model, n_max, t, order, coefficients)
    if check:
        P2 = _km_block(nu, model, n_max, t, 2 * order, coefficients)
        drift = np.abs(P - P2).max()
        if drift > 1e-8:
            raise ArithmeticError(f"quadrature not converged at order {order} (drift {drift:.2e})")
    return P


def km_transition(nu: float, model, i: int, j: int, t: float, order: int = 200):
    """``P_ij(t)``: a scalar for BD, the 2x2 phase block for QBD2."""
    model = _model(model)
    if i < 0 or j < 0:
        raise ValueError("levels must be nonnegative")
    P = km_matrix(nu, model, max(i, j), t, order=order)
    if model is ChainModel.BD:
        return float(P[i, j])
    return P[2 * i : 2 * i + 2, 2 * j : 2 * j + 2]


def classify(nu: float, model) -> Recurrence:
    """Recurrence class of the chain from the weight's behaviour at 0."""
    model = _model(model)
    if model is ChainModel.BD:
        if nu <= -1.5:
            return Recurrence.INVALID
        return Recurrence.NULL_RECURRENT if nu <= -0.5 else Recurrence.TRANSIENT
    if nu < 0:
        return Recurrence.INVALID
    return Recurrence.NULL_RECURRENT if nu <= 0.5 else Recurrence.TRANSIENT


@dataclass(frozen=True)
class ChainState:
    level: int
    phase: int = 1


@dataclass
class ChainPath:
    """Jump times (starting with 0) and the states entered at those times."""

    jump_times: np.ndarray
    states: list
    seed: int
    t_max: float
    truncated: bool = False
    truncated_at: float | None = None

    def state_at(self, t: float) -> ChainState:
        k = int(np.searchsorted(self.jump_times, t, side="right")) - 1
        return self.states[max(k, 0)]

    def csv_rows(self):
        for t, s in zip(self.jump_times, self.states):
            yield (float(t), s.level, s.phase, self.seed)


def _jump_tables(gen: BlockGenerator):
    G = gen.dense()
    total = -np.diag(G).copy()
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < -1e-15):
        raise ValueError("generator has negative off-diagonal rates")
    with np.errstate(invalid="ignore", divide="ignore"):
        cum = np.cumsum(off, axis=1) / total[:, None]
    cum[total == 0] = 1.0
    return total, cum


def gillespie_simulate(gen: BlockGenerator, start: ChainState, t_max: float, seed: int) -> ChainPath:
    """Exact-jump simulation of one path up to ``t_max``.

    A jump out of the truncation ends the path early with ``truncated``
    set; statistics using such a path after that time are censored.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if not (0 <= start.level < gen.levels and 1 <= start.phase <= gen.phases):
        raise ValueError(f"start state {start} outside the truncation")
    total, cum = _jump_tables(gen)
    rng = np.random.default_rng(seed)
    s = gen.index(start.level, start.phase)
    times, states = [0.0], [gen.state(s)]
    t = 0.0
    while True:
        rate = total[s]
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > t_max:
            break
        u = rng.random()
        nxt = int(np.searchsorted(cum[s], u, side="right"))
        if nxt >= gen.size:
            return ChainPath(np.array(times), states, seed, t_max, truncated=True, truncated_at=t)
        s = nxt
        times.append(t)
        states.append(gen.state(s))
    return ChainPath(np.array(times), states, seed, t_max)


@dataclass
class EnsembleResult:
    """States of many paths at fixed record times (flat state indices)."""

    record_times: np.ndarray
    states: np.ndarray
    truncated: np.ndarray
    returned: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _ensemble_chunk(total, cum, size, s0, t_max, record_times, n, rng):
    state = np.full(n, s0, dtype=np.int64)
    t = np.zeros(n)
    rec = np.empty((n, record_times.size), dtype=np.int64)
    filled = np.zeros(n, dtype=np.int64)
    truncated = np.zeros(n, dtype=bool)
    left = np.zeros(n, dtype=bool)
    returned = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        rate = total[state[idx]]
        with np.errstate(divide="ignore"):
            hold = np.where(rate > 0, rng.exponential(size=idx.size) / np.where(rate > 0, rate, 1.0), np.inf)
        t_new = t[idx] + hold
        # Record the current state at every record time passed by this hold.
        while True:
            k = np.minimum(filled[idx], record_times.size - 1)
            more = (filled[idx] < record_times.size) & (t_new > record_times[k])
            if not np.any(more):
                break
            j = idx[more]
            rec[j, filled[j]] = state[j]
            filled[j] += 1
        done = t_new > t_max
        active[idx[done]] = False
        go = idx[~done]
        if go.size == 0:
            continue
        t[go] = t_new[~done]
        u = rng.random(go.size)
        nxt = np.count_nonzero(cum[state[go]] <= u[:, None], axis=1)
        out = nxt >= size
        if np.any(out):
            bad = go[out]
            truncated[bad] = True
            active[bad] = False
            # Censored: remaining record slots stay at the last in-range state.
            for b in bad:
                rec[b, filled[b] :] = -1
                filled[b] = record_times.size
        ok = go[~out]
        returned[ok] |= left[ok] & (nxt[~out] == s0)
        left[ok] |= nxt[~out] != s0
        state[ok] = nxt[~out]
    return rec, truncated, returned


def gillespie_ensemble(
    gen: BlockGenerator,
    start: ChainState,
    record_times,
    n_paths: int,
    seed: int,
    workers: int = 4,
) -> EnsembleResult:
    """Simulate ``n_paths`` independent paths and record their states.

    Paths are split over ``workers`` chunks, chunk ``k`` drawing from
    ``default_rng([seed, k])``, so the result depends only on the seed and
    the worker count. Censored entries (after leaving the truncation) are
    ``-1`` in ``states``.
    """
    record_times = np.sort(np.atleast_1d(np.asarray(record_times, dtype=float)))
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    total, cum = _jump_tables(gen)
    s0 = gen.index(start.level, start.phase)
    t_max = float(record_times[-1])
    sizes = [n_paths // workers + (1 if k < n_paths % workers else 0) for k in range(workers)]
    parts = []
    for k, n in enumerate(sizes):
        if n == 0:
            continue
        rng = np.random.default_rng([seed, k])
        parts.append(_ensemble_chunk(total, cum, gen.size, s0, t_max, record_times, n, rng))
    rec = np.concatenate([p[0] for p in parts])
    trunc = np.concatenate([p[1] for p in parts])
    ret = np.concatenate([p[2] for p in parts])
    return EnsembleResult(record_times=record_times, states=rec, truncated=trunc, returned=ret)
