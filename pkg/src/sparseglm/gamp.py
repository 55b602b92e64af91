"""Finite-size simulation with generalized approximate message passing.

Instances follow ``y = phi(Phi x / sqrt(k)) + sqrt(Delta) z`` with
``k = rho n`` and an ``m x n`` standard Gaussian design.  GAMP runs with
scalar (coordinate-averaged) variances: since every entry of ``Phi / sqrt(k)``
has variance ``1 / k``,

    V_p = sum_i vx_i / k,        1 / V_r = sum_mu (-dg_out)_mu / k.

With these conventions the normalized MSE ``||x - xhat||^2 / k`` tracks
``E X^2 - q_t`` of the state-evolution iteration in
:func:`sparseglm.potential.fixed_point`.

Random streams
--------------
All randomness derives from ``numpy.random.SeedSequence(seed)``.  The child
stream ``spawn_key=(j,)`` is used for: ``j = 0`` signal, ``j = 1`` design,
``j = 2`` channel noise, ``j = 3`` test design and ``j = 4`` test noise for
:func:`empirical_gen_error`.  Each stream feeds a PCG64 generator.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import sqrt
from pathlib import Path

import numpy as np

from .channel import Channel, output_moments
from .errors import ParameterError
from .potential import RegimeParams
from .prior import SparseDiscretePrior, scalar_denoise

SIGNAL, DESIGN, NOISE, TEST_DESIGN, TEST_NOISE = range(5)
#: Same damping as the state-evolution iteration; 0.7 leaves runs near the
#: algorithmic threshold oscillating between branches.
DAMPING = 0.5
MAX_ITER = 500

INSTANCE_HEADER = ("n", "m", "rho", "gamma", "delta", "seed")


def stream(seed: int, key: int) -> np.random.Generator:
    """Independent generator for one purpose, see the module notes."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(seed), spawn_key=(key,))))


@dataclass(frozen=True, eq=False)
class GlmInstance:
    """One draw of the sparse generalized linear model.

    Attributes
    ----------
    n, m : int
        Signal dimension and number of samples.
    rho, gamma, delta : float
    seed : int
    x_true : numpy.ndarray
        Signal of length ``n``.
    phi : numpy.ndarray
        ``m x n`` design, regenerable from ``seed``.
    y : numpy.ndarray
        Observations of length ``m``.
    """

    n: int
    m: int
    rho: float
    gamma: float
    delta: float
    seed: int
    x_true: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    @property
    def k(self) -> float:
        """Expected number of nonzero entries ``rho n``."""
        return self.rho * self.n


@dataclass(frozen=True, eq=False)
class GampState:
    """Last GAMP iterate.

    Attributes
    ----------
    xhat, vx : numpy.ndarray
        Posterior means and variances of the signal entries.
    onsager : numpy.ndarray
        Output messages ``g_out`` of the last iteration (memory term).
    iteration : int
    mse_trace : tuple of float
        ``||x_true - xhat||^2 / k`` at every iteration, starting with the
        zero initialization.
    converged, diverged : bool
    """

    xhat: np.ndarray = field(repr=False)
    vx: np.ndarray = field(repr=False)
    onsager: np.ndarray = field(repr=False)
    iteration: int
    mse_trace: tuple
    converged: bool = False
    diverged: bool = False

    @property
    def final_mse(self) -> float:
        return self.mse_trace[-1]


def sublinear_sparsity(n: int, exponent: float) -> float:
    """Experimental preset ``rho_n = n^(-exponent)`` for ``0 < exponent < 1``.

    The all-or-nothing step only emerges for astronomically large ``n`` along
    this path, so finite-size runs remain in the fixed-sparsity picture.
    """
    exponent = float(exponent)
    if not 0.0 < exponent < 1.0:
        raise ParameterError(f"exponent must lie in (0, 1), got {exponent!r}")
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n!r}")
    return float(n) ** -exponent


def _draw_signal(prior: SparseDiscretePrior, n: int, rng) -> np.ndarray:
    return rng.choice(prior.atoms, size=n, p=prior.probs)


def _design(n: int, m: int, seed: int, key: int = DESIGN) -> np.ndarray:
    return stream(seed, key).standard_normal((m, n))


def generate_instance(prior: SparseDiscretePrior, channel: Channel, n: int,
                      regime: RegimeParams, seed: int) -> GlmInstance:
    """Draw ``x ~ P_{0,n}``, the design and the observations.

    ``m = round(alpha n)``.  The instance is a deterministic function of the
    arguments.
    """
    if n < 10:
        raise ParameterError(f"n must be at least 10, got {n!r}")
    if abs(prior.rho - regime.rho) > 1e-15 * regime.rho:
        raise ParameterError("prior and regime sparsities differ")
    m = int(round(regime.alpha * n))
    if m < 1:
        raise ParameterError(f"alpha * n rounds to {m}; need at least one sample")
    x = _draw_signal(prior, n, stream(seed, SIGNAL))
    phi = _design(n, m, seed)
    y = _observe(channel, phi, x, regime.rho * n, stream(seed, NOISE))
    return GlmInstance(n, m, regime.rho, regime.gamma, channel.delta, int(seed),
                       x, phi, y)


def _observe(channel: Channel, phi, x, k, rng) -> np.ndarray:
    pre = phi @ x / sqrt(k)
    noise = rng.standard_normal(pre.shape)
    return channel.phi(pre) + sqrt(channel.delta) * noise


def gamp_run(instance: GlmInstance, prior: SparseDiscretePrior, channel: Channel,
             max_iter: int = MAX_ITER, tol: float = 1e-8,
             damping: float = DAMPING) -> GampState:
    """Run GAMP from the uninformed start ``xhat = 0``.

    Parameters
    ----------
    max_iter : int
    tol : float
        Stop when successive MSE-trace entries differ by at most ``tol``.
    damping : float
        Weight of the new message in ``(0, 1]``.  It applies to the output
        messages and their precision as well as to the signal estimates and
        variances.
    """
    if not 0.0 < damping <= 1.0:
        raise ParameterError(f"damping must lie in (0, 1], got {damping!r}")
    n, k = instance.n, instance.k
    A = instance.phi / sqrt(k)
    y = instance.y
    x_true = instance.x_true
    xhat = np.zeros(n)
    vx = np.full(n, prior.variance)
    s = np.zeros(instance.m)
    prec = None
    trace = [float(np.sum((x_true - xhat) ** 2) / k)]
    state = GampState(xhat, vx, s, 0, tuple(trace))
    for it in range(1, max_iter + 1):
        vp = float(np.sum(vx) / k)
        p = A @ xhat - vp * s
        _, g, dg = channel.output_posterior(y, p, vp)
        s_new = damping * g + (1.0 - damping) * s
        prec_new = float(np.sum(-dg) / k)
        if not prec_new > 0 or not np.all(np.isfinite(s_new)):
            return _diverged(state)
        prec = prec_new if prec is None else damping * prec_new + (1.0 - damping) * prec
        vr = 1.0 / prec
        r = xhat + vr * (A.T @ s_new)
        post = scalar_denoise(prior, prec, r * sqrt(prec))
        xhat_new = damping * post.mean + (1.0 - damping) * xhat
        vx_new = damping * post.variance + (1.0 - damping) * vx
        if not (np.all(np.isfinite(xhat_new)) and np.all(np.isfinite(vx_new))):
            return _diverged(state)
        xhat, vx, s = xhat_new, vx_new, s_new
        trace.append(float(np.sum((x_true - xhat) ** 2) / k))
        converged = abs(trace[-1] - trace[-2]) <= tol
        state = GampState(xhat, vx, s, it, tuple(trace), converged)
        if converged:
            break
    return state


def _diverged(state: GampState) -> GampState:
    return GampState(state.xhat, state.vx, state.onsager, state.iteration,
                     state.mse_trace, False, True)


def empirical_gen_error(instance: GlmInstance, state: GampState, channel: Channel,
                        n_test: int, seed: int | None = None) -> float:
    """Test error of the plug-in label predictor on fresh samples.

    The predictor is ``E_W[phi(omega + sqrt(v) W)]`` where
    ``omega = Phi_new xhat / sqrt(k)`` and ``v = sum_i vx_i / k`` is the
    residual variance, which estimates ``E X^2 - ||xhat||^2 / k``.
    """
    if n_test < 1:
        raise ParameterError(f"n_test must be positive, got {n_test!r}")
    seed = instance.seed if seed is None else seed
    k = instance.k
    phi_new = _design(instance.n, n_test, seed, TEST_DESIGN)
    y_new = _observe(channel, phi_new, instance.x_true, k, stream(seed, TEST_NOISE))
    omega = phi_new @ state.xhat / sqrt(k)
    resid_var = float(np.sum(state.vx) / k)
    pred, _ = output_moments(channel, omega, resid_var)
    return float(np.mean((y_new - pred) ** 2))


def write_instance_csv(instance: GlmInstance, path) -> None:
    """Write the header row, its values, then ``x_true`` and ``y`` rows.

    The design is not stored; :func:`read_instance_csv` regenerates it from
    the seed.
    """
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INSTANCE_HEADER)
        w.writerow([instance.n, instance.m, repr(float(instance.rho)),
                    repr(float(instance.gamma)), repr(float(instance.delta)), instance.seed])
        w.writerow(["x_true"] + [repr(float(v)) for v in instance.x_true])
        w.writerow(["y"] + [repr(float(v)) for v in instance.y])


def read_instance_csv(path) -> GlmInstance:
    """Inverse of :func:`write_instance_csv`."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != INSTANCE_HEADER or rows[2][0] != "x_true" or rows[3][0] != "y":
        raise ParameterError(f"{path} is not an instance file")
    n, m = int(rows[1][0]), int(rows[1][1])
    rho, gamma, delta = (float(v) for v in rows[1][2:5])
    seed = int(rows[1][5])
    x = np.array(rows[2][1:], dtype=float)
    y = np.array(rows[3][1:], dtype=float)
    return GlmInstance(n, m, rho, gamma, delta, seed, x, _design(n, m, seed), y)


def simulate(prior: SparseDiscretePrior, channel: Channel, n: int,
             regime: RegimeParams, seeds, max_iter: int = MAX_ITER,
             damping: float = DAMPING) -> list[GampState]:
    """Run GAMP on one fresh instance per seed."""
    return [gamp_run(generate_instance(prior, channel, n, regime, s), prior,
                     channel, max_iter=max_iter, damping=damping)
            for s in seeds]

