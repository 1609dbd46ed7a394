"""Coarse-step integration of the slow equation and recovery of the solution."""

from __future__ import annotations

import csv
import time as _time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .decomposition import FieldDecomposition, _gauss_legendre
from .errors import StepConvergenceError, WindowRangeError
from .maps import MapStackState, lift, slow_rhs
from .scales import ScaleVector, SolverConfig

__all__ = [
    "Trajectory",
    "time_grid",
    "step_time_integral",
    "integrate",
    "recover_window",
    "write_trajectory_csv",
]


@dataclass
class Trajectory:
    """Solution on the coarse grid.

    ``y`` holds slow states and ``x`` recovered states, one row per entry of
    ``times``.  Baselines without a slow variable set ``x = y``.
    """

    times: np.ndarray
    y: np.ndarray
    x: np.ndarray
    invariant: Optional[np.ndarray] = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.y = np.asarray(self.y, float)
        self.x = np.asarray(self.x, float)
        if not (len(self.times) == len(self.y) == len(self.x)):
            raise ValueError("times, y and x must have the same length")

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def x_at(self, t: float) -> np.ndarray:
        """Linear interpolation of ``x`` (exact at grid nodes)."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise WindowRangeError(f"t = {t} outside [{self.times[0]}, {self.times[-1]}]")
        return np.array([np.interp(t, self.times, self.x[:, i]) for i in range(self.x.shape[1])])


def time_grid(T_final: float, dt: float) -> np.ndarray:
    """Uniform grid ``m*dt``; the last step is shortened to land on ``T_final``."""
    m = int(np.floor(T_final / dt + 1e-9))
    grid = dt * np.arange(m + 1)
    if T_final - grid[-1] > 1e-9 * dt:
        grid = np.append(grid, T_final)
    else:
        grid[-1] = T_final
    return grid


class _SlowField:
    """Slow field with per-node warm starts and call accounting."""

    def __init__(self, decomp, scales, cfg):
        self.decomp, self.scales, self.cfg = decomp, scales, cfg
        self.stacks: dict = {}
        self.calls = 0
        self.iters_P = 0
        self.iters_D = 0
        self.max_iters = 0

    def __call__(self, t, y, slot=None):
        F, st = slow_rhs(self.decomp, self.scales, t, y, self.cfg, self.stacks.get(slot))
        if slot is not None:
            self.stacks[slot] = st
        self.calls += 1
        self.iters_P += st.iters_P
        self.iters_D += st.iters_D
        self.max_iters = max(self.max_iters, st.iters_P, st.iters_D)
        return F


def step_time_integral(decomp: FieldDecomposition, scales: ScaleVector, t0: float, t1: float,
                       y_mid, cfg: SolverConfig, rhs: Optional[Callable] = None) -> np.ndarray:
    """``int_{t0}^{t1} F(s, y_mid) ds`` by ``cfg.quad_nodes``-point Gauss-Legendre."""
    s, w = _gauss_legendre(int(cfg.quad_nodes))
    h = t1 - t0
    total = np.zeros(np.shape(y_mid))
    for j, (sj, wj) in enumerate(zip(s, w)):
        if rhs is None:
            F, _ = slow_rhs(decomp, scales, t0 + h * sj, y_mid, cfg)
        else:
            F = rhs(t0 + h * sj, y_mid, j)
        total = total + wj * F
    return h * total


def _midpoint_step(y0, increment, cfg, step):
    """Fixed-point solve of ``y1 = y0 + increment((y0 + y1)/2)``."""
    y1 = y0.copy()
    history = []
    for _ in range(int(cfg.midpoint_max_iter)):
        new = y0 + increment(0.5 * (y0 + y1))
        diff = float(np.max(np.abs(new - y1)))
        history.append(diff)
        y1 = new
        if not np.all(np.isfinite(y1)):
            break
        if diff <= cfg.midpoint_tol:
            return y1, len(history)
    raise StepConvergenceError(f"midpoint solve failed at step {step}", step, history)


def integrate(decomp: FieldDecomposition, scales: ScaleVector, cfg: SolverConfig, x0,
              invariant: Optional[Callable] = None, recover: bool = True) -> Trajectory:
    """Integrate the slow equation with the implicit integral midpoint scheme.

    ``y[0] = x0`` because every map is the identity at t = 0.  When
    ``recover`` is true the oscillatory state ``x`` is recovered at each node
    through the composition maps.  ``invariant(x, t)`` is tracked if given.
    """
    start = _time.perf_counter()
    x0 = np.asarray(x0, float)
    times = time_grid(cfg.T_final, cfg.dt)
    field = _SlowField(decomp, scales, cfg)
    ys = np.empty((len(times), x0.shape[0]))
    xs = np.empty_like(ys)
    ys[0] = xs[0] = x0
    lift_stack: Optional[MapStackState] = None
    midpoint_iters = 0
    for m in range(len(times) - 1):
        t0, t1 = times[m], times[m + 1]
        try:
            ys[m + 1], its = _midpoint_step(
                ys[m], lambda ym: step_time_integral(decomp, scales, t0, t1, ym, cfg, field), cfg, m)
        except StepConvergenceError as exc:
            exc.partial = Trajectory(times[:m + 1], ys[:m + 1], xs[:m + 1])
            raise
        midpoint_iters += its
        if recover:
            xs[m + 1], lift_stack = lift(decomp, scales, t1, ys[m + 1], cfg, lift_stack)
        else:
            xs[m + 1] = ys[m + 1]
    inv = None
    if invariant is not None:
        inv = np.array([invariant(x, t) for x, t in zip(xs, times)])
    meta = {
        "method": "ua",
        "dt": cfg.dt,
        "eps": scales.eps,
        "wall_clock": _time.perf_counter() - start,
        "rhs_evals": field.calls,
        "fp_iterations": field.iters_P + field.iters_D,
        "max_fp_iterations": field.max_iters,
        "midpoint_iterations": midpoint_iters,
    }
    return Trajectory(times, ys, xs, inv, meta)


def recover_window(decomp: FieldDecomposition, scales: ScaleVector, traj: Trajectory,
                   t_a: float, t_b: float, samples: int, cfg: SolverConfig):
    """Recover the oscillatory solution on a fine window ``[t_a, t_b]``.

    The slow state is interpolated linearly between the two coarse nodes
    that bracket the window, then mapped through the composition maps.
    Returns ``(s, x)`` with ``samples`` uniformly spaced times (a single point
    for a zero-width window).
    """
    times = traj.times
    if t_b < t_a:
        raise WindowRangeError("window end precedes its start")
    if t_a < times[0] - 1e-12 or t_b > times[-1] + 1e-12:
        raise WindowRangeError(f"window [{t_a}, {t_b}] not covered by [{times[0]}, {times[-1]}]")
    if samples < 2 and t_b > t_a:
        raise WindowRangeError("a window needs at least two samples")
    i = int(np.searchsorted(times, t_a, side="right")) - 1
    i = min(max(i, 0), len(times) - 2)
    if t_b > times[i + 1] + 1e-12:
        raise WindowRangeError("window must lie within one coarse step")
    s = np.array([t_a]) if t_b == t_a else np.linspace(t_a, t_b, samples)
    ta, tb = times[i], times[i + 1]
    out = np.empty((len(s), traj.y.shape[1]))
    warm = None
    for j, sj in enumerate(s):
        lam = (sj - ta) / (tb - ta)
        y = (1.0 - lam) * traj.y[i] + lam * traj.y[i + 1]
        out[j], warm = lift(decomp, scales, sj, y, cfg, warm)
    return s, out


def write_trajectory_csv(path, traj: Trajectory):
    """CSV with columns ``t, y_1..y_d, x_1..x_d[, invariant]``."""
    d = traj.y.shape[1]
    header = ["t"] + [f"y_{i + 1}" for i in range(d)] + [f"x_{i + 1}" for i in range(d)]
    if traj.invariant is not None:
        header.append("invariant")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for m, t in enumerate(traj.times):
            row = [repr(float(t))] + [repr(float(v)) for v in traj.y[m]] + [repr(float(v)) for v in traj.x[m]]
            if traj.invariant is not None:
                row.append(repr(float(traj.invariant[m])))
            wr.writerow(row)
