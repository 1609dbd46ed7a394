"""Implicit-midpoint composition maps and the transformed slow vector field.

Each level map is defined implicitly by

    Phi_k(x) = x + eps_k * g_k(theta_1..theta_k, (x + Phi_k(x)) / 2)

and the slow field ``F`` is obtained by peeling the levels off ``f^eps`` from
the finest one inward, applying ``(d_x Phi_k)^{-1}`` and subtracting the
scaled phase derivative ``T_k = (1/eps_k) d_{theta_k} Phi_k`` at each level.
All implicit relations are solved by fixed-point iteration; the lift and the
slow field use one simultaneous sweep over all levels per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .decomposition import FieldDecomposition
from .errors import ConfigurationError, NonConvergenceError
from .scales import ScaleVector, SolverConfig

__all__ = [
    "MapStackState",
    "phi_apply",
    "phi_dt",
    "phi_jac_inv_apply",
    "lift",
    "lift_phases",
    "slow_rhs",
    "slow_rhs_phases",
    "MapDiagnostics",
    "map_diagnostics",
]


def _maxabs(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


@dataclass
class MapStackState:
    """Converged quantities of one lift / slow-field evaluation.

    ``P[k]`` is the cumulative composition of the first k maps applied to
    ``y`` (``P[0] = y``); ``R[k-1]`` is the midpoint used by level k and
    ``T[k-1]`` its scaled phase derivative.  ``D[0]`` is the slow field.
    """

    P: np.ndarray
    R: np.ndarray
    T: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    D: Optional[np.ndarray] = None
    iters_P: int = 0
    iters_D: int = 0
    residuals: dict = dc_field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.P[-1]


def _check_level(decomp, k):
    if not 1 <= k <= decomp.n:
        raise ConfigurationError(f"level {k} outside 1..{decomp.n}")


def _eps_k(scales, k):
    if isinstance(scales, ScaleVector):
        return float(scales.effective[k - 1])
    return float(np.asarray(scales)[k - 1])


def phi_apply(decomp: FieldDecomposition, k: int, theta, x, scales, cfg: SolverConfig) -> np.ndarray:
    """Apply the level-k midpoint map to ``x``.

    ``theta`` holds the reduced phases (at least k of them).  Returns ``x``
    itself, without iterating, when ``theta_k == 0``.
    """
    _check_level(decomp, k)
    theta = np.asarray(theta, float)[:k]
    x = np.asarray(x, float)
    if theta[k - 1] == 0.0:
        return x
    eps = _eps_k(scales, k)
    phi = x.copy()
    history = []
    for _ in range(int(cfg.fp_max_iter)):
        new = x + eps * decomp.anti(k, theta, 0.5 * (x + phi))
        diff = _maxabs(new - phi)
        history.append(diff)
        phi = new
        if diff <= cfg.fp_tol:
            return phi
    raise NonConvergenceError(
        f"map level {k} did not converge in {cfg.fp_max_iter} iterations; "
        f"eps_k = {eps:g} may be too large for a contraction", history)


def phi_dt(decomp: FieldDecomposition, k: int, theta, x, phi_x, scales, cfg: SolverConfig) -> np.ndarray:
    """Scaled phase derivative ``T_k = (1/eps_k) d_{theta_k} Phi_k(x)``.

    Iterates ``T = f_k(mid) + (eps_k/2) d_x g_k(mid) T`` directly so that no
    small quantity is divided by ``eps_k``.  Multiply by ``eps_k`` for the
    unscaled derivative.
    """
    _check_level(decomp, k)
    theta = np.asarray(theta, float)[:k]
    mid = 0.5 * (np.asarray(x, float) + np.asarray(phi_x, float))
    a = decomp.fluct(k, theta, mid)
    jac = 0.5 * _eps_k(scales, k) * decomp.anti_jac(k, theta, mid)
    return _linear_fixed_point(lambda t: a + jac @ t, np.zeros_like(a), cfg, f"phase derivative, level {k}")


def phi_jac_inv_apply(decomp: FieldDecomposition, k: int, theta, x, phi_x, K, scales,
                      cfg: SolverConfig) -> np.ndarray:
    """``V = (d_x Phi_k(x))^{-1} K`` without forming the inverse.

    Solves ``V = K - (eps_k/2) d_x g_k(mid) (K + V)``; this contracts only while
    ``||eps_k d_x g_k|| < 1``.
    """
    _check_level(decomp, k)
    theta = np.asarray(theta, float)[:k]
    mid = 0.5 * (np.asarray(x, float) + np.asarray(phi_x, float))
    K = np.asarray(K, float)
    jac = 0.5 * _eps_k(scales, k) * decomp.anti_jac(k, theta, mid)
    try:
        return _linear_fixed_point(lambda v: K - jac @ (K + v), np.zeros_like(K), cfg,
                                   f"inverse Jacobian, level {k}")
    except NonConvergenceError as exc:
        raise NonConvergenceError(
            f"{exc}; d_x Phi_{k} is not invertible by Neumann series (eps_k too large)",
            exc.history) from None


def _linear_fixed_point(update, start, cfg, what):
    v = start
    history = []
    for _ in range(int(cfg.fp_max_iter)):
        new = update(v)
        diff = _maxabs(new - v)
        history.append(diff)
        v = new
        if diff <= cfg.fp_tol:
            return v
    raise NonConvergenceError(f"{what} did not converge in {cfg.fp_max_iter} iterations", history)


# -- Algorithm: lift and slow field ------------------------------------------


def _p_sweep(decomp, eps, theta, y, cfg, warm):
    n = decomp.n
    P = np.empty((n + 1, y.shape[0]))
    P[0] = y
    if warm is not None and warm.P.shape == P.shape:
        P[1:] = warm.P[1:]
    else:
        P[1:] = y
    active = [theta[k - 1] != 0.0 for k in range(1, n + 1)]
    history = []
    R = np.empty((n, y.shape[0]))
    for it in range(1, int(cfg.fp_max_iter) + 1):
        new = np.empty_like(P)
        new[0] = y
        for k in range(1, n + 1):
            R[k - 1] = 0.5 * (P[k - 1] + P[k])
            if active[k - 1]:
                new[k] = P[k - 1] + eps[k - 1] * decomp.anti(k, theta[:k], R[k - 1])
            else:
                new[k] = P[k - 1]
        diff = _maxabs(new[1:] - P[1:])
        history.append(diff)
        P = new
        if diff <= cfg.fp_tol:
            for k in range(1, n + 1):
                R[k - 1] = 0.5 * (P[k - 1] + P[k])
            return P, R, it, history
    raise NonConvergenceError(
        f"composition sweep did not converge in {cfg.fp_max_iter} iterations "
        f"(last change {history[-1]:.3e})", history)


def lift_phases(decomp: FieldDecomposition, eps, theta, y, cfg: SolverConfig,
                warm: Optional[MapStackState] = None):
    """Cumulative composition at explicit phases ``theta``; see :func:`lift`."""
    y = np.asarray(y, float)
    eps = np.asarray(eps, float)
    theta = np.asarray(theta, float)
    P, R, its, hist = _p_sweep(decomp, eps, theta, y, cfg, warm)
    state = MapStackState(P=P, R=R, iters_P=its, residuals={"P": hist[-1]})
    return P[-1].copy(), state


def lift(decomp: FieldDecomposition, scales: ScaleVector, t: float, y, cfg: SolverConfig,
         warm: Optional[MapStackState] = None):
    """Map a slow state to the oscillatory one at time ``t``.

    Returns ``(x, stack)`` with ``x = Phi_n(...Phi_1(y))`` evaluated at the
    reduced phases of ``t``.  ``warm`` seeds the sweep with an earlier stack.
    """
    return lift_phases(decomp, scales.effective, scales.phases(t), y, cfg, warm)


_PHASE_STEP = 1e-5


def _cross_sources(decomp, eps, theta, R):
    """``sum_{i<k} (eps_k/eps_i) d_{theta_i} g_k(R_k)`` for every level k."""
    n = decomp.n
    out = np.zeros_like(R)
    h = _PHASE_STEP
    for k in range(2, n + 1):
        if theta[k - 1] == 0.0:
            continue
        for i in range(1, k):
            up, dn = theta[:k].copy(), theta[:k].copy()
            up[i - 1] += h
            dn[i - 1] -= h
            dg = (decomp.anti(k, up, R[k - 1]) - decomp.anti(k, dn, R[k - 1])) / (2 * h)
            out[k - 1] += (eps[k - 1] / eps[i - 1]) * dg
    return out


def slow_rhs_phases(decomp: FieldDecomposition, eps, theta, y, cfg: SolverConfig,
                    warm: Optional[MapStackState] = None):
    """Slow field at explicit phases ``theta``; see :func:`slow_rhs`."""
    y = np.asarray(y, float)
    eps = np.asarray(eps, float)
    theta = np.asarray(theta, float)
    n, d = decomp.n, y.shape[0]
    P, R, its_p, hist_p = _p_sweep(decomp, eps, theta, y, cfg, warm)

    # R is frozen after the sweep, so the level data can be evaluated once
    fk = np.empty((n, d))
    half_jac = np.empty((n, d, d))
    for k in range(1, n + 1):
        fk[k - 1] = decomp.fluct(k, theta[:k], R[k - 1])
        half_jac[k - 1] = 0.5 * eps[k - 1] * decomp.anti_jac(k, theta[:k], R[k - 1])
    if cfg.cross_scale:
        fk += _cross_sources(decomp, eps, theta, R)
    top = decomp.field.point(theta, P[n])

    T = np.zeros((n, d))
    D = np.zeros((n + 1, d))
    B = np.zeros((n, d))
    history = []
    for it in range(1, int(cfg.fp_max_iter) + 1):
        D_new = np.empty_like(D)
        T_new = np.empty_like(T)
        D_new[n] = top
        for k in range(n, 0, -1):
            T_new[k - 1] = fk[k - 1] + half_jac[k - 1] @ T[k - 1]
            B[k - 1] = D[k] - T_new[k - 1] if k < n else top - T_new[k - 1]
            D_new[k - 1] = B[k - 1] - half_jac[k - 1] @ (B[k - 1] + D[k - 1])
        diff = max(_maxabs(D_new - D), _maxabs(T_new - T))
        history.append(diff)
        D, T = D_new, T_new
        if diff <= cfg.fp_tol:
            state = MapStackState(P=P, R=R, T=T, B=B, D=D, iters_P=its_p, iters_D=it,
                                  residuals={"P": hist_p[-1], "D": diff})
            return D[0].copy(), state
    raise NonConvergenceError(
        f"slow-field sweep did not converge in {cfg.fp_max_iter} iterations "
        f"(last change {history[-1]:.3e})", history)


def slow_rhs(decomp: FieldDecomposition, scales: ScaleVector, t: float, y, cfg: SolverConfig,
             warm: Optional[MapStackState] = None):
    """Right-hand side ``F(t, y)`` of the transformed slow equation.

    Returns ``(F, stack)``.  Both the composition sweep and the
    derivative/inverse sweep are iterated until successive iterates differ by
    at most ``cfg.fp_tol`` in max-norm.
    """
    return slow_rhs_phases(decomp, scales.effective, scales.phases(t), y, cfg, warm)


# -- diagnostics ----------------------------------------------------------------


@dataclass
class MapDiagnostics:
    """Gridded map quantities over the two finest phases.

    Arrays have shape ``(res, res, d)`` indexed ``[i, j]`` with
    ``theta_{n-1} = grid[i]`` and ``theta_n = grid[j]``; ``T[k]`` holds level
    k + 1.
    """

    grid: np.ndarray
    f_minus_D1: np.ndarray
    P_minus_y: np.ndarray
    T: list
    iters_P: np.ndarray
    iters_D: np.ndarray


def map_diagnostics(decomp: FieldDecomposition, scales, y, resolution: int, cfg: SolverConfig,
                    fixed_phases=None) -> MapDiagnostics:
    """Evaluate ``f - D_1``, ``P_n - y`` and every ``T_k`` on a phase grid.

    The grid spans the two finest phases; coarser phases (if any) are held at
    ``fixed_phases`` (default zero).
    """
    n = decomp.n
    if n < 2:
        raise ConfigurationError("diagnostics need at least two phases")
    eps = scales.effective if isinstance(scales, ScaleVector) else np.asarray(scales, float)
    y = np.asarray(y, float)
    d = y.shape[0]
    base = np.zeros(n) if fixed_phases is None else np.asarray(fixed_phases, float).copy()
    grid = np.arange(resolution) / resolution
    fmd = np.empty((resolution, resolution, d))
    pmy = np.empty_like(fmd)
    T = [np.empty_like(fmd) for _ in range(n)]
    itp = np.empty((resolution, resolution), int)
    itd = np.empty_like(itp)
    for i, a in enumerate(grid):
        warm = None
        for j, b in enumerate(grid):
            theta = base.copy()
            theta[n - 2], theta[n - 1] = a, b
            F, st = slow_rhs_phases(decomp, eps, theta, y, cfg, warm)
            warm = st
            fmd[i, j] = decomp.field.point(theta, y) - F
            pmy[i, j] = st.P[-1] - y
            for k in range(n):
                T[k][i, j] = st.T[k]
            itp[i, j], itd[i, j] = st.iters_P, st.iters_D
    return MapDiagnostics(grid, fmd, pmy, T, itp, itd)
