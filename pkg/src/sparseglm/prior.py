"""Sparse discrete priors and their scalar Gaussian-channel quantities.

The signal law is ``P_{0,n} = (1 - rho) delta_0 + rho P_0`` where ``P_0`` is a
finite distribution on ``{+-v_1, ..., +-v_K}``.  For the scalar channel
``Y = sqrt(r) X* + Z`` this module computes the free entropy

    psi(r) = E ln sum_x pi(x) exp(r x X* + sqrt(r) x Z - r x^2 / 2),

its derivative, the mutual information ``i_p0n``, the posterior denoiser,
and the rescaled overlap map ``g_rho`` used by the potential solver.

The expectation over ``X*`` is an exact finite sum; only ``Z`` is integrated
by Gauss-Hermite quadrature.  Log-mixtures always go through a max-shifted
log-sum-exp because the signal-to-noise ratios reach ``|ln rho| / rho``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, log, sqrt
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ParameterError, RegimeError
from .quadrature import QuadratureRule, make_rule

#: Default Gauss-Hermite order for prior-side integrals.  ``psi_prime`` at
#: ``rho = 1e-6`` needs 256 nodes to reach ~1e-7 absolute accuracy.
PRIOR_ORDER = 256

MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteP0:
    """Finite symmetric-support law of the nonzero signal entries.

    Attributes
    ----------
    support : numpy.ndarray
        Strictly increasing positive atoms ``v_1 < ... < v_K``.
    mass_pos, mass_neg : numpy.ndarray
        Masses of ``+v_j`` and ``-v_j``.
    """

    support: np.ndarray
    mass_pos: np.ndarray
    mass_neg: np.ndarray

    def __post_init__(self):
        v, pp, pn = _validate(self.support, self.mass_pos, self.mass_neg)
        object.__setattr__(self, "support", v)
        object.__setattr__(self, "mass_pos", pp)
        object.__setattr__(self, "mass_neg", pn)

    @property
    def K(self) -> int:
        return int(self.support.size)

    @property
    def masses(self) -> np.ndarray:
        """Total mass ``p_j = p_j^+ + p_j^-`` of each magnitude."""
        return self.mass_pos + self.mass_neg

    @property
    def mean(self) -> float:
        return float(np.sum((self.mass_pos - self.mass_neg) * self.support))

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.masses * self.support ** 2))

    def entropy(self) -> float:
        """Shannon entropy in nats."""
        p = np.concatenate([self.mass_pos, self.mass_neg])
        p = p[p > 0]
        return float(-np.sum(p * np.log(p)))

    def tail_second_moment(self, k: int, strict: bool = False) -> float:
        """``E[X^2 1{|X| >= v_k}]`` (or ``> v_k`` if ``strict``), ``k`` 1-based.

        ``k = K + 1`` stands for ``v_{K+1} = +inf`` and returns 0.
        """
        j0 = k if strict else k - 1
        return float(np.sum((self.masses * self.support ** 2)[j0:]))

    def tail_mass(self, k: int) -> float:
        """``P(|X| >= v_k)``, zero for ``k = K + 1``."""
        return float(np.sum(self.masses[k - 1:]))

    def head_second_moment(self, k: int) -> float:
        """``E[X^2 1{|X| < v_k}]``, the MMSE plateau attached to ``k``."""
        return float(np.sum((self.masses * self.support ** 2)[:k - 1]))

    def sparse(self, rho: float) -> "SparseDiscretePrior":
        """Mix with a point mass at zero."""
        return SparseDiscretePrior(rho, self.support, self.mass_pos,
                                   self.mass_neg)


def _validate(support, mass_pos, mass_neg):
    v = np.array(support, dtype=float).ravel()
    pp = np.array(mass_pos, dtype=float).ravel()
    pn = np.array(mass_neg, dtype=float).ravel()
    if v.size == 0 or not (v.size == pp.size == pn.size):
        raise ParameterError("support and masses must be nonempty and of equal length")
    if not np.all(np.isfinite(v)) or v[0] <= 0 or np.any(np.diff(v) <= 0):
        raise ParameterError("support must be strictly increasing and positive")
    if np.any(pp < 0) or np.any(pn < 0) or not np.all(np.isfinite(pp + pn)):
        raise ParameterError("masses must be finite and nonnegative")
    if np.any(pp + pn <= 0):
        raise ParameterError("every support point needs positive total mass")
    total = pp.sum() + pn.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise ParameterError(f"masses sum to {total!r}, not 1")
    pp, pn = pp / total, pn / total
    for a in (v, pp, pn):
        a.setflags(write=False)
    return v, pp, pn


@dataclass(frozen=True, eq=False)
class SparseDiscretePrior:
    """The law ``(1 - rho) delta_0 + rho P_0``.

    Attributes
    ----------
    rho : float
        Sparsity level in (0, 1).
    support, mass_pos, mass_neg :
        See :class:`DiscreteP0`.
    """

    rho: float
    support: np.ndarray
    mass_pos: np.ndarray
    mass_neg: np.ndarray

    def __post_init__(self):
        if not 0.0 < float(self.rho) < 1.0:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho!r}")
        object.__setattr__(self, "rho", float(self.rho))
        v, pp, pn = _validate(self.support, self.mass_pos, self.mass_neg)
        object.__setattr__(self, "support", v)
        object.__setattr__(self, "mass_pos", pp)
        object.__setattr__(self, "mass_neg", pn)
        # Nonzero atoms of P_{0,n}, skipping zero-mass signs.
        vals = np.concatenate([v, -v])
        mass = np.concatenate([pp, pn])
        keep = mass > 0
        atoms = np.concatenate([[0.0], vals[keep]])
        probs = np.concatenate([[1.0 - self.rho], self.rho * mass[keep]])
        object.__setattr__(self, "_atoms", atoms)
        object.__setattr__(self, "_log_probs", np.log(probs))
        object.__setattr__(self, "_probs", probs)

    @property
    def p0(self) -> DiscreteP0:
        return DiscreteP0(self.support, self.mass_pos, self.mass_neg)

    @property
    def atoms(self) -> np.ndarray:
        """All atoms of ``P_{0,n}``, zero first."""
        return self._atoms

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    def entropy(self) -> float:
        """Shannon entropy of ``P_{0,n}`` in nats."""
        p = self._probs
        return float(-np.sum(p * np.log(p)))

    @property
    def variance(self) -> float:
        m = moments(self)
        return m[3] - m[2] ** 2


@dataclass(frozen=True)
class ScalarPosterior:
    """Posterior statistics for ``y = sqrt(r) x* + z``.

    Attributes
    ----------
    mean, variance : numpy.ndarray or float
        Posterior mean and variance of ``x``.
    log_partition : numpy.ndarray or float
        ``ln sum_x pi(x) exp(sqrt(r) x y - r x^2 / 2)``.
    """

    mean: np.ndarray
    variance: np.ndarray
    log_partition: np.ndarray


def moments(prior) -> tuple[float, float, float, float]:
    """Return ``(E_P0 X, E_P0 X^2, E_P0n X, E_P0n X^2)``.

    ``prior`` can be a :class:`SparseDiscretePrior` or a :class:`DiscreteP0`
    (then ``P_{0,n}`` moments equal ``P_0`` moments, i.e. ``rho = 1``).
    """
    p0 = prior.p0 if isinstance(prior, SparseDiscretePrior) else prior
    rho = prior.rho if isinstance(prior, SparseDiscretePrior) else 1.0
    m1, m2 = p0.mean, p0.second_moment
    return m1, m2, rho * m1, rho * m2


def _rule(rule: QuadratureRule | None) -> QuadratureRule:
    return make_rule(PRIOR_ORDER) if rule is None else rule


def _log_weights(prior: SparseDiscretePrior, r: float, y: np.ndarray) -> np.ndarray:
    """Unnormalized log posterior weights, shape ``y.shape + (n_atoms,)``."""
    x = prior.atoms
    y = np.asarray(y, dtype=float)[..., None]
    return prior._log_probs + sqrt(r) * x * y - 0.5 * r * x * x


def _check_r(r: float, strict: bool = False) -> float:
    r = float(r)
    if np.isnan(r) or r < 0 or (strict and r == 0):
        raise ParameterError(f"snr must be {'positive' if strict else 'nonnegative'}, got {r!r}")
    return r


def psi(prior: SparseDiscretePrior, r: float,
        rule: QuadratureRule | None = None) -> float:
    """Free entropy ``psi(r)`` of the scalar Gaussian channel.

    Parameters
    ----------
    prior : SparseDiscretePrior
    r : float
        Nonnegative signal-to-noise ratio.
    rule : QuadratureRule, optional
        Defaults to order :data:`PRIOR_ORDER`.
    """
    r = _check_r(r)
    if r == 0.0:
        return 0.0
    if np.isinf(r):
        return np.inf
    rule = _rule(rule)
    x = prior.atoms
    z = rule.nodes
    total = 0.0
    for xs, p in zip(x, prior.probs):
        # y = sqrt(r) xs + z, so sqrt(r) x y - r x^2/2 = r x xs + sqrt(r) x z - r x^2/2
        lw = _log_weights(prior, r, sqrt(r) * xs + z)
        total += p * float(rule.weights @ logsumexp(lw, axis=-1))
    return total


def psi_prime_at_zero(prior: SparseDiscretePrior) -> float:
    """Closed right limit ``rho^2 E[X]^2 / 2`` of ``psi_prime`` at zero."""
    return 0.5 * moments(prior)[2] ** 2


def psi_prime(prior: SparseDiscretePrior, r: float,
              rule: QuadratureRule | None = None) -> float:
    """Derivative ``psi'(r) = E[X* <x>] / 2``.

    The zero atom of ``X*`` does not contribute, which keeps the result
    accurate when ``1 - rho`` dominates.  ``r = 0`` returns the right limit
    :func:`psi_prime_at_zero`; ``r = inf`` returns ``rho E[X^2] / 2``.
    """
    r = _check_r(r)
    if r == 0.0:
        return psi_prime_at_zero(prior)
    if np.isinf(r):
        return 0.5 * moments(prior)[3]
    rule = _rule(rule)
    x = prior.atoms
    z = rule.nodes
    total = 0.0
    for xs, p in zip(x[1:], prior.probs[1:]):
        post = softmax(_log_weights(prior, r, sqrt(r) * xs + z), axis=-1)
        total += p * xs * float(rule.weights @ (post @ x))
    return 0.5 * total


def i_p0n(prior: SparseDiscretePrior, r: float,
          rule: QuadratureRule | None = None) -> float:
    """Mutual information ``r rho E[X^2] / 2 - psi(r)`` of the scalar channel."""
    r = _check_r(r)
    return 0.5 * r * moments(prior)[3] - psi(prior, r, rule)


def scalar_denoise(prior: SparseDiscretePrior, r: float, y) -> ScalarPosterior:
    """Exact posterior of ``x ~ P_{0,n}`` given ``y = sqrt(r) x + z``.

    ``y`` may be a scalar or an array; the statistics are broadcast to its
    shape.
    """
    r = _check_r(r)
    if np.isinf(r):
        raise ParameterError("scalar_denoise needs a finite snr")
    lw = _log_weights(prior, r, y)
    logz = logsumexp(lw, axis=-1)
    post = np.exp(lw - logz[..., None])
    x = prior.atoms
    mean = post @ x
    var = np.maximum(post @ (x * x) - mean * mean, 0.0)
    if np.ndim(y) == 0:
        return ScalarPosterior(float(mean), float(var), float(logz))
    return ScalarPosterior(mean, var, logz)


def scalar_mmse(prior: SparseDiscretePrior, r: float,
                rule: QuadratureRule | None = None) -> float:
    """``E[(X* - E[X*|Y])^2]`` for the scalar channel at snr ``r``."""
    r = _check_r(r)
    rule = _rule(rule)
    total = 0.0
    for xs, p in zip(prior.atoms, prior.probs):
        post = scalar_denoise(prior, r, sqrt(r) * xs + rule.nodes)
        total += p * float(rule.weights @ ((xs - post.mean) ** 2))
    return total


def sample_complexity(rho: float, gamma: float) -> float:
    """``alpha = gamma rho |ln rho|``."""
    return gamma * rho * abs(log(rho))


def g_rho(prior: SparseDiscretePrior, gamma: float, r: float,
          rule: QuadratureRule | None = None) -> float:
    """Overlap map ``g(r) = (2 / rho) psi'(alpha r / rho)``.

    Strictly increasing from ``rho E[X]^2`` (at ``r = 0``) toward ``E[X^2]``
    (reached at ``r = inf``).
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma!r}")
    r = _check_r(r)
    rho = prior.rho
    s = sample_complexity(rho, gamma) * r / rho
    return 2.0 / rho * psi_prime(prior, s, rule)


def bracket_points(prior: SparseDiscretePrior, gamma: float, k: int,
                   rule: QuadratureRule | None = None) -> tuple[float, float]:
    """Bracket ``(a_k, b_k)`` of the overlap around the ``k``-th plateau.

    ``a_k = g(2 (1 - eps) / (gamma v_k^2))`` and ``b_k`` the same with
    ``1 + eps``, where ``eps = |ln rho|^{-1/4}``.

    Raises
    ------
    RegimeError
        If ``rho >= 1/e`` so that ``eps >= 1``.
    """
    rho = prior.rho
    if rho >= np.exp(-1.0):
        raise RegimeError(f"bracket points need rho < 1/e, got {rho!r}")
    K = prior.support.size
    if not 1 <= k <= K:
        raise ParameterError(f"k must lie in 1..{K}, got {k!r}")
    eps = abs(log(rho)) ** -0.25
    base = 2.0 / (gamma * prior.support[k - 1] ** 2)
    return (g_rho(prior, gamma, base * (1.0 - eps), rule),
            g_rho(prior, gamma, base * (1.0 + eps), rule))


# ---------------------------------------------------------------------------
# Named priors


def bernoulli() -> DiscreteP0:
    """Point mass at 1."""
    return DiscreteP0([1.0], [1.0], [0.0])


def bernoulli_rademacher() -> DiscreteP0:
    """Uniform on ``{-1, +1}``."""
    return DiscreteP0([1.0], [0.5], [0.5])


def _check_K(K: int) -> int:
    if isinstance(K, bool) or int(K) != K or K < 1:
        raise ParameterError(f"K must be a positive integer, got {K!r}")
    return int(K)


def unif_prior(K: int) -> DiscreteP0:
    """Uniform on ``{i sqrt(a)}_{i=1..K}`` with unit second moment."""
    K = _check_K(K)
    a = 6.0 / ((K + 1) * (2 * K + 1))
    i = np.arange(1, K + 1)
    return DiscreteP0(i * sqrt(a), np.full(K, 1.0 / K), np.zeros(K))


def linear_prior(K: int) -> DiscreteP0:
    """Masses ``1 / (K i^2 b)`` on ``i sqrt(b)`` so each atom adds ``1/K`` to E X^2."""
    K = _check_K(K)
    i = np.arange(1, K + 1)
    b = float(np.sum(1.0 / (K * i ** 2)))
    return DiscreteP0(i * sqrt(b), 1.0 / (K * i ** 2 * b), np.zeros(K))


def binom_prior(K: int, p: float) -> DiscreteP0:
    """Shifted binomial ``Bin(K - 1, p) + 1`` on ``{i sqrt(c)}``, unit E X^2."""
    K = _check_K(K)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"p must lie in (0, 1), got {p!r}")
    c = 1.0 / ((K - 1) * (K - 2) * p ** 2 + 3 * (K - 1) * p + 1)
    i = np.arange(1, K + 1)
    mass = np.array([comb(K - 1, j - 1) * p ** (j - 1) * (1 - p) ** (K - j)
                     for j in i])
    return DiscreteP0(i * sqrt(c), mass, np.zeros(K))


def reference_prior(name: str, K: int, p: float | None = None) -> DiscreteP0:
    """One of the reference families ``"unif"``, ``"linear"`` or ``"binom"``."""
    if name == "unif":
        return unif_prior(K)
    if name == "linear":
        return linear_prior(K)
    if name == "binom":
        if p is None:
            raise ParameterError("binom prior needs p")
        return binom_prior(K, p)
    raise ParameterError(f"unknown reference prior {name!r}")


def named_prior(spec: str) -> DiscreteP0:
    """Parse ``bernoulli``, ``bernoulli-rademacher``, ``unif-K``, ``linear-K``
    or ``binom-K-p``."""
    parts = spec.strip().lower().split("-")
    try:
        if parts == ["bernoulli"]:
            return bernoulli()
        if parts == ["bernoulli", "rademacher"]:
            return bernoulli_rademacher()
        if parts[0] in ("unif", "linear") and len(parts) == 2:
            return reference_prior(parts[0], int(parts[1]))
        if parts[0] == "binom" and len(parts) == 3:
            return binom_prior(int(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ParameterError(f"cannot parse prior {spec!r}: {exc}") from exc
    raise ParameterError(f"unknown prior {spec!r}")


def prior_from_atoms(atoms: Sequence[Sequence[float]]) -> DiscreteP0:
    """Build ``P_0`` from ``(v_j, p_j^+, p_j^-)`` triples in any order."""
    arr = np.asarray(atoms, dtype=float).reshape(-1, 3)
    arr = arr[np.argsort(arr[:, 0])]
    return DiscreteP0(arr[:, 0], arr[:, 1], arr[:, 2])
