"""Scale vectors, multiscale fields and solver configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ScaleVector:
    """Ordered multiscale parameters ``eps[0] >= eps[1] >= ... > 0``.

    ``period`` is the length of one oscillation in units of ``eps``: a field
    written with ``cos(t/eps)`` has ``period=2*pi``, one written with
    ``sin(2*pi*t/eps)`` has ``period=1``.  Internally every field is 1-periodic
    in its phases ``theta_k = t / (period*eps_k)``, so the map amplitudes are
    the :attr:`effective` scales ``period*eps_k``.
    """

    eps: tuple
    period: float = 1.0

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        object.__setattr__(self, "eps", eps)
        if len(eps) < 1:
            raise ConfigurationError("a scale vector needs at least one scale")
        for e in eps:
            if not (0.0 < e < 1.0):
                raise ConfigurationError(f"scale parameters must lie in (0, 1), got {e!r}")
        for a, b in zip(eps, eps[1:]):
            if b > a:
                raise ConfigurationError(f"scales must be nonincreasing, got {eps}")
        if not self.period > 0:
            raise ConfigurationError("period must be positive")

    @property
    def n(self) -> int:
        return len(self.eps)

    @property
    def effective(self) -> np.ndarray:
        return self.period * np.asarray(self.eps)

    @property
    def ratios(self) -> np.ndarray:
        """``eps[k]/eps[k-1]`` for k = 1..n-1 (empty for a single scale)."""
        e = np.asarray(self.eps)
        return e[1:] / e[:-1]

    @property
    def finest_period(self) -> float:
        return self.period * self.eps[-1]

    def phases(self, t: float) -> np.ndarray:
        """Fast phases reduced to [0, 1).

        ``t`` is reduced modulo each period before dividing so that small
        ``eps`` does not cost phase digits.
        """
        out = np.empty(self.n)
        for k, e in enumerate(self.effective):
            out[k] = math.fmod(t, e) / e
        return out


@dataclass(frozen=True)
class MultiscaleField:
    """A field ``f(theta_1..theta_n, x)`` that is 1-periodic in every phase.

    ``rhs(theta, x)`` must broadcast: ``theta`` has shape ``(..., n)``, ``x``
    has shape ``(..., d)`` and the result has the broadcast leading shape plus
    ``(d,)``.  ``point_rhs`` is an optional fast path for a single point
    (``theta`` of shape ``(n,)``, ``x`` of shape ``(d,)``) used by the time
    steppers.  ``kernel(theta, x, out)`` is an optional scalar-code version
    (plain ``math`` calls, writes into ``out``) that the reference solver
    compiles with numba when it is installed.
    """

    d: int
    n: int
    rhs: Callable
    point_rhs: Optional[Callable] = None
    name: str = "field"
    kernel: Optional[Callable] = None

    def __call__(self, theta, x):
        return self.rhs(theta, x)

    def point(self, theta, x) -> np.ndarray:
        if self.point_rhs is not None:
            return self.point_rhs(theta, x)
        return np.asarray(self.rhs(np.asarray(theta, float), np.asarray(x, float)), float)

    def at(self, t: float, x, scales: ScaleVector) -> np.ndarray:
        """Evaluate ``f^eps(t, x)``."""
        return self.point(scales.phases(t), x)


@dataclass
class SolverConfig:
    """Step sizes, tolerances and quadrature settings.

    ``cross_scale`` keeps the derivatives of each map with respect to the
    coarser phases in the slow field.  The default drops them, which keeps
    ``F`` non-stiff at the price of an ``O(eps_k/eps_{k-1})`` modelling error;
    keeping them makes the transformation exact but reintroduces
    ``O(1/eps)`` time variation when the scales are not separated.
    """

    dt: float = 0.1
    T_final: float = 1.0
    fp_tol: float = 1e-14
    fp_max_iter: int = 100
    quad_nodes: int = 8
    fd_dx: float = 1e-3
    midpoint_tol: float = 1e-12
    midpoint_max_iter: int = 100
    cross_scale: bool = False
    extra: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("fp_tol", "fd_dx", "midpoint_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("fp_max_iter", "quad_nodes", "midpoint_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.T_final < self.dt:
            raise ConfigurationError("T_final must be at least dt")

    def replace(self, **changes) -> "SolverConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return SolverConfig(**data)


def as_scale_vector(eps: Sequence[float] | ScaleVector, period: float = 1.0) -> ScaleVector:
    if isinstance(eps, ScaleVector):
        return eps
    return ScaleVector(tuple(eps), period)
