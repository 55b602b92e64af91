"""Output channels ``P_out(y | x) = N(y; phi(x), Delta)`` and their
information quantities.

For a channel and ``0 <= q <= rho_cap`` the conditional mutual information is

    I_Pout(q, rho_cap) = E ln P_out(Y | S) - E ln Z_out(Y, sqrt(q) V, rho_cap - q),

where ``S = sqrt(q) V + sqrt(rho_cap - q) W*`` and
``Z_out(y, omega, v) = E_w P_out(y | omega + sqrt(v) w)``.  For a
deterministic activation the first term is the Gaussian noise entropy
``-ln(2 pi e Delta) / 2``.  The derivative in ``q`` is
``-E[g_out^2] / 2`` with ``g_out = d/d omega ln Z_out``.

Linear, sign and ReLU channels have closed-form ``Z_out``: the sign and ReLU
likelihoods are constant or Gaussian on each half-line, so the posterior of
the pre-activation is a mixture of two truncated normals.  Custom
activations fall back on Gauss-Hermite integration over the pre-activation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import log, pi, sqrt
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, logsumexp, ndtr

from .errors import InfiniteThresholdError, ParameterError, UnsupportedChannelError
from .quadrature import DEFAULT_ORDER, QuadratureRule, make_rule

LOG_SQRT_2PI = 0.5 * log(2.0 * pi)


@dataclass(frozen=True, eq=False)
class Activation:
    """Deterministic activation with the sup-norms used in Lipschitz bounds.

    Attributes
    ----------
    name : str
    phi, dphi, d2phi : callable
        Vectorized activation and its first two derivatives.
    sup_phi, sup_dphi, sup_d2phi : float
        Sup-norms; ``inf`` for unbounded built-ins.
    """

    name: str
    phi: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dphi: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    d2phi: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_phi: float = np.inf
    sup_dphi: float = np.inf
    sup_d2phi: float = np.inf


def _sign(x):
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


LINEAR = Activation("linear", lambda x: np.asarray(x, dtype=float),
                    lambda x: np.ones_like(np.asarray(x, dtype=float)), _zeros,
                    np.inf, 1.0, 0.0)
SIGN = Activation("sign", _sign, _zeros, _zeros, 1.0, 0.0, 0.0)
RELU = Activation("relu", lambda x: np.maximum(np.asarray(x, dtype=float), 0.0),
                  lambda x: (np.asarray(x) > 0).astype(float), _zeros,
                  np.inf, 1.0, 0.0)

_REGISTRY: dict[str, Activation] = {a.name: a for a in (LINEAR, SIGN, RELU)}
_BUILTIN = frozenset(_REGISTRY)


def register_activation(act: Activation) -> None:
    """Make a custom activation available by name to :func:`make_channel`.

    Custom activations must declare finite sup-norms for ``phi``, ``phi'``
    and ``phi''``.
    """
    if act.name in _BUILTIN:
        raise ParameterError(f"cannot override built-in activation {act.name!r}")
    if not all(np.isfinite([act.sup_phi, act.sup_dphi, act.sup_d2phi])):
        raise ParameterError("custom activations need finite sup-norms")
    _REGISTRY[act.name] = act


def get_activation(name: str) -> Activation:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnsupportedChannelError(f"unknown activation {name!r}") from None


@dataclass(frozen=True)
class ChannelScore:
    """``u = ln P_out(y | x)`` and ``u_prime = d u / d x``."""

    u: float
    u_prime: float


@dataclass(frozen=True, eq=False)
class Channel:
    """Output channel with deterministic activation and Gaussian noise.

    Attributes
    ----------
    activation : Activation
    delta : float
        Noise variance.  Zero is accepted only for the sign activation, which
        then becomes a binary channel with outputs in ``{-1, +1}``.
    order : int
        Gauss-Hermite order for channel integrals.
    """

    activation: Activation
    delta: float
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        d = float(self.delta)
        if not np.isfinite(d) or d < 0:
            raise ParameterError(f"delta must be finite and nonnegative, got {self.delta!r}")
        object.__setattr__(self, "delta", d)
        make_rule(self.order)

    @property
    def name(self) -> str:
        return self.activation.name

    @property
    def is_binary(self) -> bool:
        """Noiseless sign channel."""
        return self.name == "sign" and self.delta == 0.0

    @property
    def rule(self) -> QuadratureRule:
        return make_rule(self.order)

    def require_noise(self) -> None:
        if self.delta == 0.0 and not self.is_binary:
            raise UnsupportedChannelError(
                f"{self.name} channel needs delta > 0 for this quantity")

    def phi(self, x):
        return self.activation.phi(x)

    # -- posterior of the pre-activation z ~ N(omega, v) given y -----------

    def output_posterior(self, y, omega, v):
        """Statistics of ``z ~ N(omega, v)`` reweighted by ``P_out(y | z)``.

        Parameters
        ----------
        y, omega : array_like
            Broadcast against each other.
        v : float
            Positive prior variance of ``z``.

        Returns
        -------
        log_z : numpy.ndarray
            ``ln E_z P_out(y | z)``.
        g_out : numpy.ndarray
            ``d log_z / d omega``, equal to ``(E[z|y] - omega) / v``.
        dg_out : numpy.ndarray
            ``d g_out / d omega``, equal to ``(Var[z|y] - v) / v^2``.
        """
        self.require_noise()
        if not v > 0:
            raise ParameterError(f"pre-activation variance must be positive, got {v!r}")
        y, omega = np.broadcast_arrays(np.asarray(y, float), np.asarray(omega, float))
        name = self.name
        if name == "linear":
            s2 = v + self.delta
            log_z = -0.5 * (y - omega) ** 2 / s2 - 0.5 * np.log(s2) - LOG_SQRT_2PI
            return log_z, (y - omega) / s2, np.full_like(y, -1.0 / s2)
        if name == "sign":
            pieces = self._sign_pieces(y, omega, v)
        elif name == "relu":
            pieces = [_flat_piece(_log_normal(y, 0.0, self.delta), omega, v, -1.0),
                      _gauss_piece(y, omega, v, self.delta)]
        else:
            return self._custom_posterior(y, omega, v)
        return _combine(pieces)

    def _sign_pieces(self, y, omega, v):
        if self.is_binary:
            # Only the half-line matching the observed sign carries mass.
            sgn = np.where(y >= 0, 1.0, -1.0)
            return [_flat_piece(np.zeros_like(y), omega, v, sgn)]
        return [_flat_piece(_log_normal(y, 1.0, self.delta), omega, v, 1.0),
                _flat_piece(_log_normal(y, -1.0, self.delta), omega, v, -1.0)]

    @property
    def custom_rule(self) -> QuadratureRule:
        """Rule for custom activations, capped at :data:`CUSTOM_ORDER` nodes."""
        return make_rule(min(self.order, CUSTOM_ORDER))

    def _custom_posterior(self, y, omega, v):
        rule = self.custom_rule
        act = self.activation
        z = omega[..., None] + sqrt(v) * rule.nodes
        f, df, d2f = act.phi(z), act.dphi(z), act.d2phi(z)
        resid = y[..., None] - f
        lw = np.log(rule.weights) - 0.5 * resid ** 2 / self.delta
        log_z = logsumexp(lw, axis=-1)
        post = np.exp(lw - log_z[..., None])
        u1 = resid * df / self.delta
        u2 = (resid * d2f - df ** 2) / self.delta
        g = np.sum(post * u1, axis=-1)
        dg = np.sum(post * (u2 + u1 ** 2), axis=-1) - g ** 2
        log_z = log_z - 0.5 * np.log(self.delta) - LOG_SQRT_2PI
        return log_z, g, dg

    # -- expectation over the law of y given omega --------------------------

    def _expect_y(self, omega: np.ndarray, v: float, fn, rule: QuadratureRule):
        """``E[fn(y, omega)]`` where ``y = phi(omega + sqrt(v) w) + sqrt(Delta) Z``.

        ``omega`` is one-dimensional; returns an array of the same shape.
        """
        z, w = rule.nodes, rule.weights
        om = omega[:, None]
        name = self.name
        delta = self.delta
        if name == "linear":
            y = om + sqrt(v + delta) * z
            return fn(y, om) @ w
        if name == "sign":
            a = om / sqrt(v)
            if self.is_binary:
                pos = ndtr(a) * fn(np.ones_like(om), om)
                neg = ndtr(-a) * fn(-np.ones_like(om), om)
                return (pos + neg)[:, 0]
            pos = fn(1.0 + sqrt(delta) * z, om) @ w
            neg = fn(-1.0 + sqrt(delta) * z, om) @ w
            return ndtr(a[:, 0]) * pos + ndtr(-a[:, 0]) * neg
        if name == "relu":
            # y = 0 + noise when the pre-activation is negative.
            zero = ndtr(-omega / sqrt(v)) * (fn(sqrt(delta) * z + 0 * om, om) @ w)
            # Positive part: y ~ N(omega, v + Delta) weighted by P(z > 0 | y).
            t = om + sqrt(v + delta) * z
            mu = (om * delta + t * v) / (v + delta)
            s = sqrt(v * delta / (v + delta))
            return zero + (ndtr(mu / s) * fn(t, om)) @ w
        # Custom: integrate the pre-activation and the noise, one omega at a time.
        out = np.empty(omega.shape[0])
        for i, o in enumerate(omega):
            y = self.phi(o + sqrt(v) * z)[:, None] + sqrt(delta) * z[None, :]
            out[i] = w @ fn(y, np.full_like(y, o)) @ w
        return out

    def _outer(self, q: float, rho_cap: float, fn, rule: QuadratureRule) -> float:
        v = rho_cap - q
        if self.name not in _BUILTIN:
            rule = self.custom_rule
        if q == 0.0:
            # omega = 0 at every node; one evaluation suffices.
            return float(self._expect_y(np.zeros(1), v, fn, rule)[0])
        width = sqrt(v / q)
        if self.name in ("sign", "relu") and width < GRADED_WIDTH:
            nodes, weights = graded_gaussian_rule(width)
        else:
            nodes, weights = rule.nodes, rule.weights
        return float(weights @ self._expect_y(sqrt(q) * nodes, v, fn, rule))

    def noise_entropy_term(self) -> float:
        """``E ln P_out(Y | S)`` for a deterministic activation."""
        if self.is_binary:
            return 0.0
        return -0.5 * log(2.0 * pi * np.e * self.delta)


#: Node count per dimension for custom activations, whose channel
#: integrals are three-dimensional tensor rules.
CUSTOM_ORDER = 64

#: Below this width of the kink in V the outer integral switches to a graded
#: composite rule.
GRADED_WIDTH = 0.5
_GL_ORDER = 24
_V_RANGE = 10.0


@lru_cache(maxsize=256)
def _graded_rule_cached(width: float):
    x, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = [0.0]
    h = width / 8.0
    while h < _V_RANGE:
        edges.append(h)
        h *= 2.0
    edges.append(_V_RANGE)
    edges = np.array(edges)
    edges = np.concatenate([-edges[:0:-1], edges])
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel() * np.exp(-0.5 * nodes ** 2 - LOG_SQRT_2PI)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def graded_gaussian_rule(width: float):
    """Composite Gauss-Legendre rule for ``E f(V)``, ``V ~ N(0, 1)``.

    Panels double in length away from zero starting at ``width / 8``, so
    integrands with a transition of the given width at the origin are
    resolved.  Mass beyond ``|V| = 10`` (about 1e-23) is ignored.
    """
    # Round the width down to a power of two so that the cache stays small.
    w = 2.0 ** np.floor(np.log2(max(width, 1e-12)))
    return _graded_rule_cached(float(w))


def _log_normal(y, mean, var):
    return -0.5 * (y - mean) ** 2 / var - 0.5 * log(var) - LOG_SQRT_2PI


def _log_mills(t):
    """``ln(pdf(t) / cdf(t))`` for the standard normal."""
    return -0.5 * t * t - LOG_SQRT_2PI - log_ndtr(t)


def _flat_piece(log_lik, omega, v, sgn):
    """Likelihood constant on the half-line ``sgn * z > 0``."""
    sv = sqrt(v)
    t = sgn * omega / sv
    lam = np.exp(_log_mills(t))
    log_mass = log_lik + log_ndtr(t)
    g = sgn * lam / sv
    dg = -lam * (t + lam) / v
    return log_mass, g, dg


def _gauss_piece(y, omega, v, delta):
    """Likelihood ``N(y; z, delta)`` restricted to ``z > 0``."""
    s2 = v + delta
    s = sqrt(v * delta / s2)
    mu = (omega * delta + y * v) / s2
    c = sqrt(delta / (v * s2))
    t = mu / s
    lam = np.exp(_log_mills(t))
    log_mass = _log_normal(y, omega, s2) + log_ndtr(t)
    g = (y - omega) / s2 + lam * c
    dg = -1.0 / s2 - lam * (t + lam) * c * c
    return log_mass, g, dg


def _combine(pieces):
    log_masses = np.stack(np.broadcast_arrays(*[p[0] for p in pieces]))
    log_z = logsumexp(log_masses, axis=0)
    wts = np.exp(log_masses - log_z)
    g_i = np.stack(np.broadcast_arrays(*[p[1] for p in pieces]))
    dg_i = np.stack(np.broadcast_arrays(*[p[2] for p in pieces]))
    g = np.sum(wts * g_i, axis=0)
    dg = np.sum(wts * (dg_i + g_i ** 2), axis=0) - g ** 2
    return log_z, g, dg


# ---------------------------------------------------------------------------
# Public operations


def make_channel(activation: str | Activation, delta: float,
                 order: int = DEFAULT_ORDER) -> Channel:
    """Build a channel from an activation name (or object) and noise level."""
    act = activation if isinstance(activation, Activation) else get_activation(activation)
    ch = Channel(act, delta, order)
    if ch.delta == 0.0 and ch.name not in ("sign", "linear", "relu"):
        raise UnsupportedChannelError(f"{ch.name} channel needs delta > 0")
    return ch


def pout_density(channel: Channel, y, x):
    """Transition density ``N(y; phi(x), Delta)``.

    For the noiseless sign channel this is the probability mass
    ``1{y = sign(x)}``.
    """
    if channel.is_binary:
        return (np.asarray(y, float) == _sign(x)).astype(float)
    channel.require_noise()
    return np.exp(_log_normal(np.asarray(y, float), channel.phi(x), channel.delta))


def score(channel: Channel, y: float, x: float) -> ChannelScore:
    """Log-likelihood ``u_y(x)`` and ``u'_y(x) = (y - phi(x)) phi'(x) / Delta``."""
    channel.require_noise()
    if channel.is_binary:
        raise UnsupportedChannelError("score needs delta > 0")
    act = channel.activation
    u = float(_log_normal(y, act.phi(x), channel.delta))
    up = float((y - act.phi(x)) * act.dphi(x) / channel.delta)
    return ChannelScore(u, up)


def _check_q(q: float, rho_cap: float, strict: bool = False) -> tuple[float, float]:
    q, rho_cap = float(q), float(rho_cap)
    if not rho_cap > 0:
        raise ParameterError(f"rho_cap must be positive, got {rho_cap!r}")
    if q < 0 or q > rho_cap or not np.isfinite(q):
        raise ParameterError(f"q must lie in [0, {rho_cap}], got {q!r}")
    return q, rho_cap


def i_pout(channel: Channel, q: float, rho_cap: float,
           rule: QuadratureRule | None = None, closed_form: bool = True) -> float:
    """Conditional mutual information ``I_Pout(q, rho_cap)`` in nats.

    Parameters
    ----------
    channel : Channel
    q : float
        Overlap in ``[0, rho_cap]``.
    rho_cap : float
        Second moment of the pre-activation.
    rule : QuadratureRule, optional
        Overrides ``channel.order``.
    closed_form : bool
        If false, the linear channel is integrated by quadrature like the
        others instead of using ``ln(1 + (rho_cap - q) / Delta) / 2``.
    """
    q, rho_cap = _check_q(q, rho_cap)
    channel.require_noise()
    if q == rho_cap:
        return 0.0
    v = rho_cap - q
    if channel.name == "linear" and closed_form:
        return 0.5 * np.log1p(v / channel.delta)
    rule = channel.rule if rule is None else rule
    if channel.is_binary:
        nodes, weights = rule.nodes, rule.weights
        if q > 0 and sqrt(v / q) < GRADED_WIDTH:
            # The entropy term lives within sqrt(v / q) of V = 0.
            nodes, weights = graded_gaussian_rule(sqrt(v / q))
        a = sqrt(q / v) * nodes
        lp, lm = log_ndtr(a), log_ndtr(-a)
        hb = -(np.exp(lp) * lp + np.exp(lm) * lm)
        return float(weights @ hb)
    cond = channel._outer(q, rho_cap,
                          lambda y, om: channel.output_posterior(y, om, v)[0], rule)
    return channel.noise_entropy_term() - cond


def dq_i_pout(channel: Channel, q: float, rho_cap: float,
              rule: QuadratureRule | None = None, closed_form: bool = True) -> float:
    """Derivative of :func:`i_pout` in ``q``, equal to ``-E[g_out^2] / 2``.

    At ``q = rho_cap`` the left derivative ``-E[phi'(S)^2] / (2 Delta)`` is
    returned; it is ``-inf`` for the sign channel, whose output is not
    differentiable.
    """
    q, rho_cap = _check_q(q, rho_cap)
    channel.require_noise()
    v = rho_cap - q
    if channel.name == "linear" and closed_form:
        return -0.5 / (channel.delta + v)
    rule = channel.rule if rule is None else rule
    if v == 0.0:
        if channel.name == "sign":
            return -np.inf
        d = channel.activation.dphi(sqrt(rho_cap) * rule.nodes)
        return -0.5 * float(rule.weights @ d ** 2) / channel.delta
    return -0.5 * channel._outer(
        q, rho_cap, lambda y, om: channel.output_posterior(y, om, v)[1] ** 2, rule)


def r_max(channel: Channel, rho_cap: float) -> float:
    """``-2 dq_i_pout(rho_cap, rho_cap)``, the largest useful snr."""
    return -2.0 * dq_i_pout(channel, rho_cap, rho_cap)


def _expect_quad(f, log_scale=None) -> float:
    """``E[f(Z) exp(log_scale(Z))]`` by adaptive integration.

    ``log_scale`` is folded into the Gaussian density before exponentiating
    so that fast-growing factors do not overflow.
    """
    if log_scale is None:
        log_scale = lambda z: 0.0
    g = lambda z: np.exp(log_scale(z) - 0.5 * z * z - LOG_SQRT_2PI) * f(z)
    val, _ = integrate.quad(g, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def gamma_c_closed_form(channel: Channel) -> float:
    """Threshold ``1 / I_Pout(0, 1)`` from the known closed forms.

    Only the linear, sign and ReLU activations have one.
    """
    d = channel.delta
    name = channel.name
    if name == "linear":
        return 0.0 if d == 0 else 2.0 / np.log1p(1.0 / d)
    if name == "sign":
        if d == 0:
            return 1.0 / log(2.0)
        e = _expect_quad(lambda z: np.logaddexp(0.0, -2.0 * (1.0 + sqrt(d) * z) / d))
        return 1.0 / (log(2.0) - e)
    if name == "relu":
        if d == 0:
            return 0.0
        c = sqrt(d / (1.0 + d))

        def logh(z):
            return np.logaddexp(log(0.5), log(c) + z * z / (2 * (1 + d))
                                + log_ndtr(z / sqrt(1 + d)))

        return 4 * d / (1 - 4 * d * _expect_quad(logh, logh))
    raise UnsupportedChannelError(f"no closed-form threshold for {name!r}")


def gamma_c_numeric(channel: Channel, second_moment: float = 1.0) -> float:
    """``1 / i_pout(0, E X^2)`` by quadrature."""
    if channel.delta == 0.0 and channel.name in ("linear", "relu"):
        return 0.0
    info = i_pout(channel, 0.0, second_moment, closed_form=False)
    if not info > 0:
        raise InfiniteThresholdError(f"{channel.name} channel carries no information")
    return 1.0 / info


def gamma_c(channel: Channel, second_moment: float = 1.0) -> float:
    """All-or-nothing threshold ``gamma_c = 1 / I_Pout(0, E X^2)``.

    Uses the closed form for built-in activations when ``E X^2 = 1`` and the
    numeric value otherwise.  Zero for noiseless linear and ReLU channels.

    Raises
    ------
    InfiniteThresholdError
        If the channel carries no information.
    """
    if channel.name in _BUILTIN and second_moment == 1.0:
        return gamma_c_closed_form(channel)
    return gamma_c_numeric(channel, second_moment)


def output_moments(channel: Channel, omega, var: float,
                   rule: QuadratureRule | None = None):
    """Mean and variance of ``phi(omega + sqrt(var) W)`` over ``W ~ N(0, 1)``.

    Closed forms for the built-in activations, quadrature otherwise.
    """
    a = np.asarray(omega, dtype=float)
    var = max(float(var), 0.0)
    b = sqrt(var)
    name = channel.name
    if b == 0.0:
        return channel.phi(a), np.zeros_like(a)
    if name == "linear":
        return a, np.full_like(a, var)
    if name == "sign":
        mean = 2.0 * ndtr(a / b) - 1.0
        return mean, 1.0 - mean ** 2
    if name == "relu":
        t = a / b
        pdf = np.exp(-0.5 * t * t - LOG_SQRT_2PI)
        mean = a * ndtr(t) + b * pdf
        second = (a * a + var) * ndtr(t) + a * b * pdf
        return mean, np.maximum(second - mean ** 2, 0.0)
    rule = channel.rule if rule is None else rule
    f = channel.phi(a[..., None] + b * rule.nodes)
    mean = f @ rule.weights
    return mean, np.maximum((f * f) @ rule.weights - mean ** 2, 0.0)


def gen_error(channel: Channel, q: float, second_moment: float = 1.0,
              rule: QuadratureRule | None = None) -> float:
    """Bayes generalization error at overlap ``q``.

    Returns ``Delta + E_V Var_W[phi(sqrt(q) V + sqrt(E X^2 - q) W)]``, the
    squared error of the posterior-mean label predictor when the
    pre-activation splits into a part ``sqrt(q) V`` known to the statistician
    and an independent unknown part.
    """
    q, m2 = _check_q(q, second_moment)
    rule = channel.rule if rule is None else rule
    _, var = output_moments(channel, sqrt(q) * rule.nodes, m2 - q, rule)
    return channel.delta + float(rule.weights @ np.maximum(var, 0.0))
