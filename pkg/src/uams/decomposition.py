"""Nested mean/fluctuation decomposition of a multiscale field.

Starting from the finest phase, each level averages the previous mean over
one phase::

    mean_{n+1} = f
    mean_k(theta_1..theta_{k-1}, x) = int_0^1 mean_{k+1}(theta_1..theta_{k-1}, s, x) ds
    fluct_k = mean_{k+1} - mean_k

so that ``f = mean_1 + sum_k fluct_k``.  The antiderivatives
``g_k(theta_1..theta_k, x) = int_0^{theta_k} fluct_k(..., s, x) ds`` and their
x-Jacobians drive the composition maps.

Phase arguments are arrays of shape ``(..., k)`` and states ``(..., d)``; all
functions here broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DecompositionValidationError, FieldEvaluationError
from .scales import MultiscaleField, SolverConfig

__all__ = [
    "AnalyticForms",
    "FieldDecomposition",
    "RationalCollapse",
    "IRRATIONAL",
    "cascade_mean",
    "cascade_fluct",
    "decompose",
    "antiderivative_g",
    "jacobian_g",
    "collapsed_scale_mean",
    "collapse_rational",
    "quadrature_tolerance",
]


def uniform_nodes(q: int) -> np.ndarray:
    return np.arange(q) / q


@lru_cache(maxsize=None)
def _gauss_legendre(q: int):
    xi, w = np.polynomial.legendre.leggauss(q)
    # mapped to [0, 1]
    return (xi + 1.0) / 2.0, w / 2.0


def quadrature_tolerance(quad_nodes: int) -> float:
    """Nominal accuracy of the decomposition quadratures for smooth fields.

    Used as the acceptance scale for the zero-mean and periodicity checks of
    the numeric provider; it loosens quickly below ~8 nodes.
    """
    return max(1e-13, 10.0 ** (-0.75 * quad_nodes))


def _checked(values, theta, x):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.all(np.isfinite(np.atleast_1d(values)), axis=-1))
        idx = tuple(bad[0]) if len(bad) else ()
        th = np.broadcast_to(theta, values.shape[:-1] + np.shape(theta)[-1:])
        xs = np.broadcast_to(x, values.shape)
        point = {"theta": np.asarray(th[idx]).tolist(), "x": np.asarray(xs[idx]).tolist()}
        raise FieldEvaluationError(f"non-finite field value at {point}", point)
    return values


def cascade_mean(upper: Callable, k: int, quad_nodes: int) -> Callable:
    """Average ``upper(theta_1..theta_k, x)`` over ``theta_k``.

    Returns a function of ``(theta_1..theta_{k-1}, x)``.  Uses the uniform
    rectangle rule, which is spectrally accurate for smooth periodic
    integrands.
    """
    if k < 1:
        raise ConfigurationError("scale index must be >= 1")
    nodes = uniform_nodes(quad_nodes)

    def mean(theta, x):
        theta = np.asarray(theta, float)
        x = np.asarray(x, float)
        lead = np.broadcast_shapes(theta.shape[:-1], x.shape[:-1])
        th = np.broadcast_to(theta, lead + (k - 1,))
        th = np.broadcast_to(th[..., None, :], lead + (quad_nodes, k - 1))
        col = np.broadcast_to(nodes[:, None], lead + (quad_nodes, 1))
        vals = upper(np.concatenate([th, col], axis=-1), x[..., None, :])
        vals = _checked(vals, np.concatenate([th, col], axis=-1), x[..., None, :])
        return vals.mean(axis=-2)

    return mean


def cascade_fluct(upper: Callable, own_mean: Callable) -> Callable:
    """``fluct_k(theta_1..theta_k, x) = upper(theta_1..theta_k, x) - own_mean(theta_1..theta_{k-1}, x)``."""

    def fluct(theta, x):
        theta = np.asarray(theta, float)
        return np.asarray(upper(theta, x), float) - own_mean(theta[..., :-1], x)

    return fluct


def _numeric_antiderivative(fluct: Callable, k: int, quad_nodes: int) -> Callable:
    # two Gauss-Legendre panels on [0, t_k]: a single panel over a whole
    # period of e.g. exp(sin 2 pi s) is only accurate to ~1e-4 at 8 nodes
    s1, w1 = _gauss_legendre(quad_nodes)
    s = np.concatenate([s1 / 2.0, 0.5 + s1 / 2.0])
    w = np.concatenate([w1, w1]) / 2.0

    def anti(theta, x):
        theta = np.asarray(theta, float)
        x = np.asarray(x, float)
        tk = theta[..., -1:]
        th = np.broadcast_to(theta[..., None, :-1], theta.shape[:-1] + (len(s), k - 1))
        col = (tk[..., None, :] * s[:, None])
        vals = np.asarray(fluct(np.concatenate([th, col], axis=-1), x[..., None, :]), float)
        return tk * np.einsum("q,...qd->...d", w, vals)

    return anti


def _numeric_jacobian(anti: Callable, d: int, dx: float) -> Callable:
    shifts = np.concatenate([np.eye(d), -np.eye(d)]) * dx  # (2d, d)

    def jac(theta, x):
        theta = np.asarray(theta, float)
        x = np.asarray(x, float)
        vals = np.asarray(anti(theta[..., None, :], x[..., None, :] + shifts), float)
        plus, minus = vals[..., :d, :], vals[..., d:, :]
        # rows of (plus - minus) are indexed by the perturbed coordinate
        return np.swapaxes(plus - minus, -1, -2) / (2.0 * dx)

    return jac


@dataclass(frozen=True)
class AnalyticForms:
    """User supplied closed forms, all with 1-based level lists of length n.

    ``fluct[k-1](theta (…, k), x)``, ``anti[k-1](theta, x)`` and
    ``anti_jac[k-1](theta, x) -> (…, d, d)``; ``mean(x)``.
    """

    mean: Callable
    fluct: Sequence[Callable]
    anti: Sequence[Callable]
    anti_jac: Sequence[Callable]


class FieldDecomposition:
    """Mean, fluctuations, antiderivatives and their Jacobians of a field.

    Levels are addressed with 1-based ``k`` (k = 1 is the coarsest phase).
    Instances are immutable once built and safe to share.
    """

    def __init__(self, field: MultiscaleField, mean, fluct, anti, anti_jac, provider: str,
                 quad_nodes: int, fd_dx: float):
        self.field = field
        self._mean = mean
        self._fluct = tuple(fluct)
        self._anti = tuple(anti)
        self._anti_jac = tuple(anti_jac)
        self.provider = provider
        self.quad_nodes = quad_nodes
        self.fd_dx = fd_dx

    @property
    def n(self) -> int:
        return self.field.n

    @property
    def d(self) -> int:
        return self.field.d

    def mean(self, x) -> np.ndarray:
        return np.asarray(self._mean(x), float)

    def fluct(self, k: int, theta, x) -> np.ndarray:
        return np.asarray(self._fluct[k - 1](theta, x), float)

    def anti(self, k: int, theta, x) -> np.ndarray:
        theta = np.asarray(theta, float)
        if theta.ndim == 1:
            if theta[k - 1] == 0.0:
                return np.zeros(np.shape(x)[-1])
            return np.asarray(self._anti[k - 1](theta, x), float)
        vals = np.asarray(self._anti[k - 1](theta, x), float)
        return np.where(theta[..., k - 1:k] == 0.0, 0.0, vals)

    def anti_jac(self, k: int, theta, x) -> np.ndarray:
        return np.asarray(self._anti_jac[k - 1](theta, x), float)

    def __repr__(self):
        return f"FieldDecomposition({self.field.name!r}, n={self.n}, d={self.d}, provider={self.provider!r})"


def antiderivative_g(decomp: FieldDecomposition, k: int, theta, x) -> np.ndarray:
    """``g_k(theta_1..theta_k, x)``; ``theta_k`` must already lie in [0, 1]."""
    theta = np.asarray(theta, float)[..., :k]
    return decomp.anti(k, theta, x)


def jacobian_g(decomp: FieldDecomposition, k: int, theta, x) -> np.ndarray:
    """x-Jacobian of ``g_k``, shape ``(…, d, d)``."""
    theta = np.asarray(theta, float)[..., :k]
    return decomp.anti_jac(k, theta, x)


def _numeric_levels(field: MultiscaleField, quad_nodes: int):
    n = field.n
    means = [None] * (n + 2)
    flucts = [None] * (n + 1)
    means[n + 1] = field.rhs
    for k in range(n, 0, -1):
        means[k] = cascade_mean(means[k + 1], k, quad_nodes)
        flucts[k] = cascade_fluct(means[k + 1], means[k])
    top = means[1]

    def mean1(x):
        x = np.asarray(x, float)
        return top(np.zeros(x.shape[:-1] + (0,)), x)

    return mean1, flucts[1:]


def decompose(field: MultiscaleField, config: Optional[SolverConfig] = None,
              analytic: Optional[AnalyticForms] = None, seed: int = 0,
              validate_points: int = 20) -> FieldDecomposition:
    """Build the decomposition of ``field``.

    Without ``analytic`` every level is computed by quadrature
    (``config.quad_nodes`` nodes) and Jacobians by central differences with
    step ``config.fd_dx``.  With ``analytic`` the closed forms are checked at
    ``validate_points`` random points and rejected if the reconstruction or
    zero-mean identities fail.
    """
    config = config or SolverConfig()
    q, dx = int(config.quad_nodes), float(config.fd_dx)
    if analytic is None:
        mean1, flucts = _numeric_levels(field, q)
        antis = [_numeric_antiderivative(fl, k, q) for k, fl in enumerate(flucts, start=1)]
        jacs = [_numeric_jacobian(a, field.d, dx) for a in antis]
        return FieldDecomposition(field, mean1, flucts, antis, jacs, "numeric", q, dx)

    for name in ("fluct", "anti", "anti_jac"):
        if len(getattr(analytic, name)) != field.n:
            raise ConfigurationError(f"analytic {name} needs {field.n} levels")
    dec = FieldDecomposition(field, analytic.mean, analytic.fluct, analytic.anti,
                             analytic.anti_jac, "analytic", q, dx)
    _validate_analytic(dec, seed, validate_points)
    return dec


def _validate_analytic(dec: FieldDecomposition, seed: int, npts: int, tol: float = 1e-10):
    rng = np.random.default_rng(seed)
    n, d = dec.n, dec.d
    nodes = uniform_nodes(64)
    worst_rec = worst_mean = worst_zero = 0.0
    for _ in range(npts):
        theta = rng.random(n)
        x = rng.uniform(-1.0, 1.0, d)
        f = dec.field.point(theta, x)
        recon = dec.mean(x) + sum(dec.fluct(k, theta[:k], x) for k in range(1, n + 1))
        scale = 1.0 + np.max(np.abs(f))
        worst_rec = max(worst_rec, np.max(np.abs(f - recon)) / scale)
        for k in range(1, n + 1):
            avg = np.mean([dec.fluct(k, np.r_[theta[:k - 1], s], x) for s in nodes], axis=0)
            worst_mean = max(worst_mean, np.max(np.abs(avg)) / scale)
            g0 = dec._anti[k - 1](np.r_[theta[:k - 1], 0.0], x)
            worst_zero = max(worst_zero, np.max(np.abs(g0)))
    if worst_rec > tol:
        raise DecompositionValidationError(
            f"analytic decomposition does not reconstruct the field (worst residual {worst_rec:.3e})",
            worst_rec)
    if worst_mean > tol:
        raise DecompositionValidationError(
            f"analytic fluctuation has nonzero mean (worst residual {worst_mean:.3e})", worst_mean)
    if worst_zero > tol:
        raise DecompositionValidationError(
            f"analytic antiderivative is not zero at theta_k = 0 ({worst_zero:.3e})", worst_zero)


# -- collapsed scales -------------------------------------------------------


@dataclass(frozen=True)
class RationalCollapse:
    """Finest scale equals ``m1/m2`` times the next one (coprime integers)."""

    m1: int
    m2: int

    def __post_init__(self):
        if int(self.m1) <= 0 or int(self.m2) <= 0:
            raise ConfigurationError(f"rational collapse needs positive integers, got {self.m1}/{self.m2}")


IRRATIONAL = "irrational"


def collapsed_scale_mean(field: MultiscaleField, collapse, quad_nodes: int = 8) -> Callable:
    """Mean over the two finest phases when they are not separated.

    For ``RationalCollapse(m1, m2)`` this is
    ``1/m1 * int_0^m1 f(..., s, m2/m1*s, x) ds``; for ``IRRATIONAL`` the
    average over the 2-torus.  The result is a function of
    ``(theta_1..theta_{n-2}, x)``.
    """
    n = field.n
    if n < 2:
        raise ConfigurationError("collapse needs at least two phases")
    if isinstance(collapse, RationalCollapse):
        m1, m2 = int(collapse.m1), int(collapse.m2)
        q = quad_nodes * max(m1, m2)
        u = uniform_nodes(q)
        # s = m1*u sweeps [0, m1) as u sweeps [0, 1)
        pair = np.stack([np.mod(m1 * u, 1.0), np.mod(m2 * u, 1.0)], axis=-1)
    elif collapse == IRRATIONAL:
        u = uniform_nodes(quad_nodes)
        a, b = np.meshgrid(u, u, indexing="ij")
        pair = np.stack([a.ravel(), b.ravel()], axis=-1)
    else:
        raise ConfigurationError(f"unknown collapse {collapse!r}")
    m = len(pair)

    def mean(theta, x):
        theta = np.asarray(theta, float)
        x = np.asarray(x, float)
        lead = np.broadcast_shapes(theta.shape[:-1], x.shape[:-1])
        th = np.broadcast_to(theta, lead + (n - 2,))
        th = np.broadcast_to(th[..., None, :], lead + (m, n - 2))
        pr = np.broadcast_to(pair, lead + (m, 2))
        full = np.concatenate([th, pr], axis=-1)
        vals = _checked(field.rhs(full, x[..., None, :]), full, x[..., None, :])
        return vals.mean(axis=-2)

    return mean


def collapse_rational(field: MultiscaleField, scales, m1: int, m2: int):
    """Merge the two finest phases of a rationally collapsed pair.

    With ``eps_n = (m1/m2) eps_{n-1}`` both phases are multiples of
    ``u = t/(m1 eps_{n-1})``: ``theta_{n-1} = m1 u`` and ``theta_n = m2 u``.
    Returns ``(field', scales')`` with ``n - 1`` phases, whose standard
    decomposition reproduces :func:`collapsed_scale_mean` at the finest level.
    """
    from .scales import ScaleVector

    RationalCollapse(m1, m2)
    n = field.n
    if scales.n != n or n < 2:
        raise ConfigurationError("collapse needs a field and scale vector with >= 2 matching phases")
    ratio = scales.eps[-1] / scales.eps[-2]
    if not np.isclose(ratio, m1 / m2, rtol=1e-9):
        raise ConfigurationError(f"eps_n/eps_(n-1) = {ratio} is not {m1}/{m2}")
    coarse = m1 * scales.eps[-2]
    if not coarse < 1.0:
        raise ConfigurationError("merged scale m1*eps_(n-1) must stay below 1")

    def rhs(theta, x):
        theta = np.asarray(theta, float)
        u = theta[..., -1:]
        full = np.concatenate([theta[..., :-1], m1 * u, m2 * u], axis=-1)
        return field.rhs(full, x)

    eps = tuple(scales.eps[:-2]) + (coarse,)
    eps = tuple(sorted(eps, reverse=True))
    if eps != tuple(scales.eps[:-2]) + (coarse,):
        raise ConfigurationError("merged scale breaks the scale ordering")
    merged = MultiscaleField(field.d, n - 1, rhs, name=f"{field.name}-collapsed")
    return merged, ScaleVector(eps, scales.period)
