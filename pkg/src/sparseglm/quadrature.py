"""Gauss-Hermite expectations against standard normal variables.

Every analytical integral in the package is an expectation over one or more
independent N(0, 1) variables.  A :class:`QuadratureRule` stores nodes and
weights normalized to the Gaussian measure, so that ``E[f(Z)]`` is simply
``weights @ f(nodes)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import EvaluationError, ParameterError

MIN_ORDER = 2
MAX_ORDER = 512
DEFAULT_ORDER = 128


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule for the standard normal measure.

    Attributes
    ----------
    order : int
        Requested number of nodes.
    nodes : numpy.ndarray
        Abscissas, symmetric about zero.
    weights : numpy.ndarray
        Strictly positive weights summing to one.

    Notes
    -----
    At very high orders the outermost Gaussian weights underflow to zero in
    double precision.  Those nodes contribute nothing to any sum, so they are
    dropped in symmetric pairs and ``len(nodes)`` can be smaller than
    ``order``.
    """

    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.nodes.size)


@lru_cache(maxsize=None)
def _cached_rule(order: int) -> QuadratureRule:
    x, w = roots_hermitenorm(order)
    w = w / np.sqrt(2.0 * np.pi)
    # Enforce exact symmetry and unit mass.
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    keep = w > 0.0
    x, w = x[keep], w[keep]
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order=order, nodes=x, weights=w)


def make_rule(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Build the Gauss-Hermite rule of the given order.

    Parameters
    ----------
    order : int
        Number of nodes, between 2 and 512.

    Returns
    -------
    QuadratureRule
        Deterministic, cached and immutable.
    """
    if isinstance(order, bool) or int(order) != order:
        raise ParameterError(f"order must be an integer, got {order!r}")
    order = int(order)
    if not MIN_ORDER <= order <= MAX_ORDER:
        raise ParameterError(
            f"order must lie in [{MIN_ORDER}, {MAX_ORDER}], got {order}")
    return _cached_rule(order)


def _check_finite(values: np.ndarray, nodes) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), values.shape)
        node = tuple(float(n[idx]) for n in nodes)
        node = node[0] if len(node) == 1 else node
        raise EvaluationError(f"integrand is not finite at node {node}", node)
    return values


def expect_1d(rule: QuadratureRule, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Return ``E[f(Z)]`` for ``Z ~ N(0, 1)``.

    ``f`` is called once with the full node array and must be vectorized.

    Raises
    ------
    EvaluationError
        If ``f`` is not finite at some node.
    """
    x = rule.nodes
    values = np.broadcast_to(f(x), x.shape)
    values = _check_finite(values, (x,))
    return float(rule.weights @ values)


def expect_nd(rule: QuadratureRule, dim: int,
              f: Callable[..., np.ndarray]) -> float:
    """Tensor-product expectation over ``dim`` independent standard normals.

    Parameters
    ----------
    rule : QuadratureRule
        One-dimensional rule, reused along every axis.
    dim : int
        Either 2 or 3.
    f : callable
        Vectorized function of ``dim`` arrays broadcast against each other.
    """
    if dim not in (2, 3):
        raise ParameterError(f"dim must be 2 or 3, got {dim}")
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij", sparse=True)
    values = np.broadcast_to(f(*grids), (rule.size,) * dim)
    values = _check_finite(values, np.broadcast_arrays(*grids))
    w = rule.weights
    if dim == 2:
        return float(np.einsum("i,j,ij->", w, w, values))
    return float(np.einsum("i,j,k,ijk->", w, w, w, values))


def log_sum_exp(terms: Iterable[Sequence[float]]) -> float:
    """Stable ``log(sum(exp(log_weight + exponent)))``.

    Parameters
    ----------
    terms : iterable of (log_weight, exponent) pairs
        Terms with ``log_weight = -inf`` are allowed and ignored.
    """
    arr = np.asarray(list(terms), dtype=float)
    if arr.size == 0:
        raise ParameterError("log_sum_exp needs at least one term")
    arr = arr.reshape(-1, 2)
    s = arr[:, 0] + arr[:, 1]
    top = np.max(s)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(s - top))))
