"""Limits in the regime of vanishing sparsity.

As ``rho -> 0`` with ``alpha = gamma rho |ln rho|`` the mutual information per
sample converges to a minimum over ``K + 1`` candidates,

    min_k  I_Pout(E[X^2 1{|X| >= v_k}], E X^2) + P(|X| >= v_k) / gamma,

with ``v_{K+1} = +inf``.  The minimizing ``k*`` fixes the MMSE plateau
``E[X^2 1{|X| < v_k*}]``: a staircase in ``gamma`` that reduces to an
all-or-nothing step for single-magnitude priors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Channel, gamma_c, gen_error, i_pout, make_channel
from .errors import CriticalGammaError, ParameterError, RegimeError
from .prior import DiscreteP0, SparseDiscretePrior, reference_prior  # noqa: F401

#: Candidate values closer than this are ties.
UNIQUE_TOL = 1e-9

CONJECTURED = "conjectured"


@dataclass(frozen=True)
class SublinearSolution:
    """Minimizer of the limiting variational problem.

    Attributes
    ----------
    k_star : int
        Minimizing index in ``1..K+1``.
    limit_mi : float
        Limiting mutual information per sample, in nats.
    mmse : float or None
        Plateau ``E[X^2 1{|X| < v_k*}]``; ``None`` when the minimizer is not
        unique.
    gen_error : float or None
        Optimal generalization error at ``k_star``; its status is given by
        ``gen_error_status``.
    unique : bool
    margin : float
        Gap between the best and second-best candidate values.
    candidates : tuple of float
        All ``K + 1`` candidate values.
    gen_error_status : str
    """

    k_star: int
    limit_mi: float
    mmse: float | None
    gen_error: float | None
    unique: bool
    margin: float
    candidates: tuple = ()
    gen_error_status: str = CONJECTURED


def _p0(prior) -> DiscreteP0:
    if isinstance(prior, SparseDiscretePrior):
        return prior.p0
    if isinstance(prior, DiscreteP0):
        return prior
    raise ParameterError(f"expected a discrete prior, got {type(prior).__name__}")


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma > 0 or not np.isfinite(gamma):
        raise ParameterError(f"gamma must be positive and finite, got {gamma!r}")
    return gamma


def _info(channel: Channel, q: float, m2: float) -> float:
    """``I_Pout`` allowing noiseless continuous channels (infinite below m2)."""
    if channel.delta == 0.0 and not channel.is_binary:
        return 0.0 if q >= m2 else np.inf
    return i_pout(channel, min(q, m2), m2)


def candidate_values(prior, channel: Channel, gamma: float, tau: float = 0.0) -> np.ndarray:
    """The ``K + 1`` candidate values, index ``k - 1`` for ``k = 1..K+1``."""
    p0 = _p0(prior)
    gamma = _check_gamma(gamma)
    m2 = p0.second_moment
    vals = []
    for k in range(1, p0.K + 2):
        val = _info(channel, p0.tail_second_moment(k), m2) + p0.tail_mass(k) / gamma
        if tau:
            val += 0.5 * tau * p0.head_second_moment(k)
        vals.append(val)
    return np.array(vals)


def _select(vals: np.ndarray):
    order = np.argsort(vals, kind="stable")
    best = int(order[0])
    margin = float(vals[order[1]] - vals[best]) if len(vals) > 1 else np.inf
    if not np.isfinite(margin):
        margin = np.inf
    return best + 1, float(vals[best]), margin > UNIQUE_TOL, margin


def limit_mutual_info(prior, channel: Channel, gamma: float) -> SublinearSolution:
    """Solve the limiting variational problem for ``P_0`` and ``channel``.

    ``prior`` may be a :class:`DiscreteP0` or a :class:`SparseDiscretePrior`
    (whose sparsity is ignored).
    """
    p0 = _p0(prior)
    vals = candidate_values(p0, channel, gamma)
    k, val, unique, margin = _select(vals)
    mmse = ge = None
    if unique:
        mmse = p0.head_second_moment(k)
        ge = gen_error(channel, p0.second_moment - mmse, p0.second_moment)
    return SublinearSolution(k, val, mmse, ge, unique, margin, tuple(vals))


def _tied_plateaus(p0: DiscreteP0, vals: np.ndarray) -> tuple:
    best = np.min(vals)
    ks = np.flatnonzero(vals - best <= UNIQUE_TOL) + 1
    return tuple(p0.head_second_moment(int(k)) for k in ks)


def asymptotic_mmse(prior, channel: Channel, gamma: float) -> float:
    """Limiting MMSE ``E[X^2 1{|X| < v_k*}]``.

    Raises
    ------
    CriticalGammaError
        If several ``k`` attain the minimum; the tied plateaus are attached.
    """
    p0 = _p0(prior)
    sol = limit_mutual_info(p0, channel, gamma)
    if not sol.unique:
        plateaus = _tied_plateaus(p0, np.array(sol.candidates))
        raise CriticalGammaError(
            f"gamma={gamma!r} is critical: minimizer not unique", plateaus)
    return sol.mmse


def aon_threshold_step(channel: Channel, gamma: float) -> int:
    """All-or-nothing MMSE for a single-magnitude prior with ``E X^2 = 1``.

    Returns 1 below the threshold and 0 above it.

    Raises
    ------
    CriticalGammaError
        If ``gamma`` equals the threshold within a relative 1e-12.
    """
    gamma = _check_gamma(gamma)
    gc = gamma_c(channel)
    if abs(gamma - gc) <= 1e-12 * max(gc, 1e-300):
        raise CriticalGammaError(f"gamma={gamma!r} equals gamma_c", (0.0, 1.0))
    return 0 if gamma > gc else 1


def gen_error_sublinear(prior, channel: Channel, gamma: float) -> float:
    """Limiting optimal generalization error (conjectured formula).

    Raises
    ------
    CriticalGammaError
        As :func:`asymptotic_mmse`.
    """
    p0 = _p0(prior)
    mmse = asymptotic_mmse(p0, channel, gamma)
    return gen_error(channel, p0.second_moment - mmse, p0.second_moment)


def side_info_tau_max(prior, gamma: float) -> float:
    """Upper end ``2 / (gamma v_K^2)`` of the admissible side-information snr."""
    p0 = _p0(prior)
    return 2.0 / (_check_gamma(gamma) * p0.support[-1] ** 2)


def limit_mutual_info_side_info(prior, channel: Channel, gamma: float,
                                tau: float) -> float:
    """Limiting mutual information with an extra Gaussian side channel.

    Each candidate gains ``tau E[X^2 1{|X| < v_k}] / 2``.

    Raises
    ------
    RegimeError
        If ``tau`` lies outside ``[0, 2 / (gamma v_K^2))``.
    """
    tau = float(tau)
    tmax = side_info_tau_max(prior, gamma)
    if not 0.0 <= tau < tmax:
        raise RegimeError(f"tau must lie in [0, {tmax}), got {tau!r}")
    return float(np.min(candidate_values(prior, channel, gamma, tau)))


@dataclass(frozen=True)
class Heatmap:
    """Limiting MMSE on a ``(Delta, gamma)`` grid.

    Attributes
    ----------
    deltas, gammas : numpy.ndarray
        Row and column axes.
    values : numpy.ndarray
        ``values[i, j]`` for ``deltas[i]`` and ``gammas[j]``; NaN at critical
        cells.
    critical : numpy.ndarray of bool
        Mask of the NaN cells.
    """

    deltas: np.ndarray
    gammas: np.ndarray
    values: np.ndarray
    critical: np.ndarray


def heatmap(prior, channel_family: str, delta_grid, gamma_grid,
            order: int | None = None) -> Heatmap:
    """Tabulate :func:`asymptotic_mmse` over noise levels and ``gamma``."""
    deltas = np.asarray(delta_grid, dtype=float)
    gammas = np.asarray(gamma_grid, dtype=float)
    if deltas.size == 0 or gammas.size == 0:
        raise ParameterError("heatmap grids must be nonempty")
    p0 = _p0(prior)
    values = np.full((deltas.size, gammas.size), np.nan)
    for i, d in enumerate(deltas):
        ch = make_channel(channel_family, d) if order is None else \
            make_channel(channel_family, d, order)
        m2 = p0.second_moment
        # The information terms do not depend on gamma.
        info = np.array([_info(ch, p0.tail_second_moment(k), m2)
                         for k in range(1, p0.K + 2)])
        mass = np.array([p0.tail_mass(k) for k in range(1, p0.K + 2)])
        for j, g in enumerate(gammas):
            k, _, unique, _ = _select(info + mass / _check_gamma(g))
            if unique:
                values[i, j] = p0.head_second_moment(k)
    return Heatmap(deltas, gammas, values, np.isnan(values))
