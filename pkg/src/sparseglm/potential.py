"""Replica-symmetric potential and its saddle point at finite sparsity.

For sparsity ``rho`` and sample ratio ``alpha = gamma rho |ln rho|`` the
potential is

    i_RS(q, r) = i_p0n(alpha r / rho) / alpha + I_Pout(q, E X^2) - r (E X^2 - q) / 2,

and the mutual information per sample is ``inf_q sup_r i_RS``.  For fixed
``q`` the supremum over ``r`` solves ``g(r) = q`` with the monotone overlap
map :func:`sparseglm.prior.g_rho`.  Stationary points satisfy

    r = -2 dI_Pout/dq (q, E X^2),      q = g(r),

which :func:`fixed_point` iterates with damping.  Here ``E X^2`` is the
second moment of the nonzero entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
from scipy.optimize import brentq

from .channel import Channel, dq_i_pout, gen_error, i_pout
from .errors import ParameterError
from .prior import (SparseDiscretePrior, g_rho, i_p0n, moments, psi,
                    sample_complexity)

#: Largest snr probed by the sup-over-r solver before declaring saturation.
R_CAP = 1e6
#: Width of the final golden-section interval in ``q``.
Q_TOL = 1e-10
GRID_POINTS = 201
DAMPING = 0.5
#: Potential values closer than this are treated as ties.
TIE_TOL = 1e-9
ALGORITHMIC_START = 1e-10

_INV_PHI = (sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RegimeParams:
    """Sparsity and sample-ratio parameters.

    Attributes
    ----------
    rho : float
        Sparsity in (0, 1).
    gamma : float
        Positive sample-complexity multiplier.
    alpha : float
        Derived ``gamma rho |ln rho|``.
    """

    rho: float
    gamma: float
    alpha: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho!r}")
        if not self.gamma > 0 or not np.isfinite(self.gamma):
            raise ParameterError(f"gamma must be positive, got {self.gamma!r}")
        object.__setattr__(self, "alpha", sample_complexity(self.rho, self.gamma))


@dataclass(frozen=True)
class SupResult:
    """Outcome of the inner maximization over ``r`` at fixed ``q``.

    Unpacks as ``(r_star, value)``.  ``saturated`` means that ``g`` never
    reached ``q`` below :data:`R_CAP`; the value then is the ``r -> inf``
    limit ``I_Pout(q) + H(P_{0,n}) / alpha``.
    """

    r_star: float
    value: float
    saturated: bool = False

    def __iter__(self):
        return iter((self.r_star, self.value))


@dataclass(frozen=True)
class InfSupResult:
    """Global minimizer of ``q -> sup_r i_RS(q, r)``.

    Unpacks as ``(q_star, value)``.

    Attributes
    ----------
    q_star, value : float
    r_star : float
        Maximizing snr at ``q_star``.
    local_minima : tuple of (q, value)
        Every refined local minimum, sorted by ``q``.
    swap_value : float or None
        ``inf_r sup_q i_RS`` when the swap check ran.
    """

    q_star: float
    value: float
    r_star: float
    local_minima: tuple = ()
    swap_value: float | None = None

    def __iter__(self):
        return iter((self.q_star, self.value))

    @property
    def swap_gap(self) -> float | None:
        return None if self.swap_value is None else abs(self.swap_value - self.value)


@dataclass(frozen=True)
class FixedPointResult:
    """Outcome of the damped state-evolution iteration.

    Attributes
    ----------
    q_star, r_star : float
        Last iterate; ``r_star = -2 dI_Pout/dq(q_star)``.
    potential_value : float
        ``sup_r i_RS(q_star, r)``, the value used to rank fixed points.
    iterations : int
    converged : bool
    trajectory : tuple of (q_t, r_t)
    """

    q_star: float
    r_star: float
    potential_value: float
    iterations: int
    converged: bool
    trajectory: tuple = ()


@dataclass(frozen=True)
class LinearRegimeSolution:
    """Selected saddle point at finite sparsity.

    Attributes
    ----------
    q_star, mmse, potential_value : float
    branch : str
        ``"inf_sup"``, ``"informed"`` or ``"algorithmic"``.
    ambiguous : bool
        Two distinct candidates had potentials within :data:`TIE_TOL`.
    q_algorithmic : float
        Overlap reached from the uninformed start.
    """

    q_star: float
    mmse: float
    potential_value: float
    branch: str
    ambiguous: bool
    q_algorithmic: float

    @property
    def mmse_algorithmic(self) -> float:
        return self.mmse + self.q_star - self.q_algorithmic


def _second_moment(prior: SparseDiscretePrior) -> float:
    return moments(prior)[1]


def _check(prior: SparseDiscretePrior, regime: RegimeParams) -> None:
    if abs(prior.rho - regime.rho) > 1e-15 * regime.rho:
        raise ParameterError(
            f"prior sparsity {prior.rho!r} differs from regime sparsity {regime.rho!r}")


def _check_q(prior, q: float) -> float:
    m2 = _second_moment(prior)
    q = float(q)
    if not 0.0 <= q <= m2:
        raise ParameterError(f"q must lie in [0, {m2}], got {q!r}")
    return q


def i_rs(prior: SparseDiscretePrior, channel: Channel, regime: RegimeParams,
         q: float, r: float, form: str = "mutual") -> float:
    """Replica-symmetric potential ``i_RS(q, r)``.

    Parameters
    ----------
    form : {"mutual", "free_entropy"}
        ``"mutual"`` assembles ``i_p0n / alpha + I_Pout - r (E X^2 - q) / 2``;
        ``"free_entropy"`` uses the equivalent ``I_Pout + r q / 2 - psi / alpha``.
    """
    _check(prior, regime)
    q = _check_q(prior, q)
    if r < 0:
        raise ParameterError(f"r must be nonnegative, got {r!r}")
    m2 = _second_moment(prior)
    a, rho = regime.alpha, regime.rho
    s = a * r / rho
    if form == "mutual":
        return i_p0n(prior, s) / a + i_pout(channel, q, m2) - 0.5 * r * (m2 - q)
    if form == "free_entropy":
        return i_pout(channel, q, m2) + 0.5 * r * q - psi(prior, s) / a
    raise ParameterError(f"unknown form {form!r}")


def _prior_part(prior, regime, q, r) -> float:
    """``r q / 2 - psi(alpha r / rho) / alpha``, the r-dependent part."""
    return 0.5 * r * q - psi(prior, regime.alpha * r / regime.rho) / regime.alpha


def solve_overlap_map(prior: SparseDiscretePrior, gamma: float, q: float):
    """Root ``r`` of ``g_rho(r) = q`` or ``None`` if ``q`` lies above ``g(R_CAP)``.

    Returns 0 when ``q <= rho E[X]^2``.
    """
    lo_val = moments(prior)[2] * moments(prior)[0]
    if q <= lo_val:
        return 0.0
    hi = 1.0
    while g_rho(prior, gamma, hi) < q:
        hi *= 2.0
        if hi > R_CAP:
            return None
    lo = 0.0
    if hi > 1.0:
        lo = hi / 2.0
    return brentq(lambda r: g_rho(prior, gamma, r) - q, lo, hi,
                  xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def sup_over_r(prior: SparseDiscretePrior, channel: Channel, regime: RegimeParams,
               q: float) -> SupResult:
    """``sup_{r >= 0} i_RS(q, r)`` and its maximizer.

    The maximizer is 0 below ``rho E[X]^2`` and otherwise the unique root of
    ``g_rho(r) = q``.  When ``q`` is too close to ``E X^2`` for a root below
    :data:`R_CAP` the result is marked saturated.
    """
    _check(prior, regime)
    q = _check_q(prior, q)
    m2 = _second_moment(prior)
    info = i_pout(channel, q, m2)
    r = None if q >= m2 else solve_overlap_map(prior, regime.gamma, q)
    if r is None:
        return SupResult(np.inf, info + prior.entropy() / regime.alpha, True)
    return SupResult(r, info + _prior_part(prior, regime, q, r))


def _golden(f, a: float, b: float, tol: float):
    """Golden-section minimization of a unimodal ``f`` on ``[a, b]``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _local_minima(x: np.ndarray, y: np.ndarray):
    idx = []
    n = len(x)
    for i in range(n):
        left = y[i - 1] if i > 0 else np.inf
        right = y[i + 1] if i < n - 1 else np.inf
        if y[i] <= left and y[i] <= right:
            # Keep one index per flat run.
            if idx and idx[-1] == i - 1 and y[i] == y[i - 1]:
                continue
            idx.append(i)
    return idx


def _minimize_on_grid(f, lo: float, hi: float, points: int, tol: float):
    """Grid search plus golden-section refinement around every local minimum."""
    grid = np.linspace(lo, hi, points)
    vals = np.array([f(x) for x in grid])
    minima = []
    for i in _local_minima(grid, vals):
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, points - 1)]
        x, v = _golden(f, a, b, tol)
        # The grid point itself may beat the refined point at an endpoint.
        if vals[i] < v:
            x, v = grid[i], vals[i]
        minima.append((float(x), float(v)))
    return minima


def inf_sup(prior: SparseDiscretePrior, channel: Channel, regime: RegimeParams,
            grid_points: int = GRID_POINTS, check_swap: bool = False) -> InfSupResult:
    """Solve ``inf_{q in [0, E X^2]} sup_{r >= 0} i_RS(q, r)``.

    Parameters
    ----------
    grid_points : int
        Size of the coarse uniform ``q`` grid.
    check_swap : bool
        Also compute ``inf_{r} sup_q i_RS`` (see :func:`inf_over_r`) and
        store it in ``swap_value``.
    """
    _check(prior, regime)
    m2 = _second_moment(prior)
    cache: dict[float, SupResult] = {}

    def F(q):
        q = min(max(float(q), 0.0), m2)
        if q not in cache:
            cache[q] = sup_over_r(prior, channel, regime, q)
        return cache[q].value

    minima = _minimize_on_grid(F, 0.0, m2, grid_points, Q_TOL)
    # Largest q wins ties.
    q_star, value = min(minima, key=lambda t: (t[1], -t[0]))
    swap = inf_over_r(prior, channel, regime, grid_points) if check_swap else None
    return InfSupResult(q_star, value, cache[q_star].r_star,
                        tuple(sorted(minima)), swap)


def _sup_over_q(channel: Channel, m2: float, r: float, q_grid, rate_grid) -> float:
    """Maximizer of the concave map ``q -> I_Pout(q) + r q / 2``."""
    if r <= rate_grid[0]:
        return 0.0
    if r >= rate_grid[-1]:
        return m2
    j = int(np.searchsorted(rate_grid, r))
    lo, hi = q_grid[j - 1], q_grid[j]
    if rate_grid[j] == rate_grid[j - 1]:
        return lo
    return brentq(lambda q: -2.0 * dq_i_pout(channel, q, m2) - r, lo, hi, xtol=1e-12)


def inf_over_r(prior: SparseDiscretePrior, channel: Channel, regime: RegimeParams,
               grid_points: int = GRID_POINTS) -> float:
    """``inf_{r in [0, r_max]} sup_q i_RS(q, r)``.

    For channels with unbounded ``r_max`` (sign) the grid stops where
    ``g_rho`` saturates.  Past that point the objective decreases only like
    ``1 / r`` toward its ``r -> inf`` limit ``H(P_{0,n}) / alpha``, which is
    included as a candidate.
    """
    _check(prior, regime)
    m2 = _second_moment(prior)
    # -2 dI/dq is nondecreasing in q; tabulate it for bracketing.
    q_grid = np.linspace(0.0, m2, grid_points)
    rate = np.array([-2.0 * dq_i_pout(channel, q, m2) for q in q_grid])
    rate = np.maximum.accumulate(rate)
    r_hi = rate[-1]
    if not np.isfinite(r_hi):
        r_hi = 1.0
        while g_rho(prior, regime.gamma, r_hi) < m2 - 1e-9 and r_hi < R_CAP:
            r_hi *= 2.0
        rate[-1] = np.inf

    def G(r):
        q = _sup_over_q(channel, m2, r, q_grid, rate)
        return i_pout(channel, q, m2) + _prior_part(prior, regime, q, r)

    minima = _minimize_on_grid(G, 0.0, r_hi, grid_points, Q_TOL * max(r_hi, 1.0))
    best = min(v for _, v in minima)
    if np.isinf(rate[-1]):
        best = min(best, prior.entropy() / regime.alpha)
    return best


def fixed_point(prior: SparseDiscretePrior, channel: Channel, regime: RegimeParams,
                q0: float, max_iter: int = 2000, tol: float = 1e-9,
                damping: float = DAMPING) -> FixedPointResult:
    """Damped iteration of the stationarity equations.

    ``r_t = -2 dI_Pout/dq(q_t)`` and
    ``q_{t+1} = (1 - damping) q_t + damping g_rho(r_t)``, stopping when
    ``|q_{t+1} - q_t| <= tol``.  Non-convergence is reported, not raised.
    """
    _check(prior, regime)
    if not 0.0 < damping <= 1.0:
        raise ParameterError(f"damping must lie in (0, 1], got {damping!r}")
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol!r}")
    m2 = _second_moment(prior)
    q = _check_q(prior, q0)
    traj = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r = -2.0 * dq_i_pout(channel, q, m2)
        traj.append((q, r))
        q_new = (1.0 - damping) * q + damping * g_rho(prior, regime.gamma, r)
        q_new = min(q_new, m2)
        step = abs(q_new - q)
        q = q_new
        if step <= tol:
            converged = True
            break
    r = -2.0 * dq_i_pout(channel, q, m2)
    traj.append((q, r))
    value = sup_over_r(prior, channel, regime, q).value
    return FixedPointResult(float(q), float(r), float(value), it, converged,
                            tuple(traj))


def solve_linear_regime(prior: SparseDiscretePrior, channel: Channel,
                        regime: RegimeParams, grid_points: int = GRID_POINTS
                        ) -> LinearRegimeSolution:
    """Lowest-potential saddle point among the global minimizer and both
    fixed-point branches."""
    m2 = _second_moment(prior)
    glob = inf_sup(prior, channel, regime, grid_points)
    informed = fixed_point(prior, channel, regime, m2)
    algo = fixed_point(prior, channel, regime, ALGORITHMIC_START)
    cands = [(glob.value, glob.q_star, "inf_sup"),
             (informed.potential_value, informed.q_star, "informed"),
             (algo.potential_value, algo.q_star, "algorithmic")]
    best = min(c[0] for c in cands)
    near = [c for c in cands if c[0] - best <= TIE_TOL]
    value, q_star, branch = max(near, key=lambda c: c[1])
    ambiguous = (max(c[1] for c in near) - min(c[1] for c in near)) > 1e-6
    return LinearRegimeSolution(float(q_star), float(m2 - q_star), float(value),
                                branch, bool(ambiguous), float(algo.q_star))


def mmse_linear_regime(prior: SparseDiscretePrior, channel: Channel,
                       regime: RegimeParams) -> float:
    """Asymptotic MMSE ``E X^2 - q*`` at fixed sparsity."""
    return solve_linear_regime(prior, channel, regime).mmse


def gen_error_linear_regime(prior: SparseDiscretePrior, channel: Channel,
                            regime: RegimeParams) -> float:
    """Optimal generalization error at the selected ``q*`` (conjectured)."""
    sol = solve_linear_regime(prior, channel, regime)
    return gen_error(channel, sol.q_star, _second_moment(prior))
