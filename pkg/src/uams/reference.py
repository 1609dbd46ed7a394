"""Baseline solvers and error measures."""

from __future__ import annotations

import csv
import time as _time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import _accel
from .decomposition import FieldDecomposition, _gauss_legendre
from .errors import ConfigurationError, StepConvergenceError, WindowRangeError
from .integrator import Trajectory, _midpoint_step, time_grid
from .scales import MultiscaleField, ScaleVector, SolverConfig

__all__ = [
    "ErrorReport",
    "direct_im2nd",
    "rk45_reference",
    "averaged_method",
    "error_at_final",
    "hamiltonian_errors",
    "write_error_reports",
]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])


@dataclass
class ErrorReport:
    """Error of one method run against a reference."""

    problem: str
    eps: tuple
    method: str
    dt: float
    error_l2_final: float
    wall_clock: float = float("nan")
    hamiltonian_error_series: Optional[np.ndarray] = None
    extra: dict = dc_field(default_factory=dict)

    def row(self) -> dict:
        out = {"problem": self.problem, "method": self.method}
        for i, e in enumerate(self.eps, start=1):
            out[f"eps{i}"] = e
        out.update(dt=self.dt, error_l2_final=self.error_l2_final, wall_clock_s=self.wall_clock)
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str, bool)):
                out[k] = v
        return out


def write_error_reports(path, reports):
    """ErrorReport CSV: problem, method, eps..., dt, error_l2_final, wall_clock_s."""
    rows = [r.row() for r in reports]
    keys: list = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow(r)


def _finish(times, xs, invariant, meta):
    inv = None
    if invariant is not None:
        inv = np.array([invariant(x, t) for x, t in zip(xs, times)])
    return Trajectory(times, xs, xs.copy(), inv, meta)


def direct_im2nd(field: MultiscaleField, scales: ScaleVector, cfg: SolverConfig, x0,
                 invariant: Optional[Callable] = None,
                 time_nodes: Optional[int] = None) -> Trajectory:
    """Implicit integral midpoint scheme applied directly to ``x' = f^eps(t, x)``.

    ``x_{m+1} = x_m + int f(s, (x_m + x_{m+1})/2) ds`` with the time integral
    taken by ``time_nodes`` Gauss-Legendre points (default
    ``cfg.quad_nodes``, the same rule the slow equation uses; one point is
    the classical implicit midpoint rule).  With steps that do not resolve
    the fastest period the result is expected to be wrong.  A step whose fixed-point solve diverges raises
    :class:`StepConvergenceError` carrying the partial trajectory.
    """
    start = _time.perf_counter()
    x0 = np.asarray(x0, float)
    times = time_grid(cfg.T_final, cfg.dt)
    if time_nodes is None:
        time_nodes = cfg.quad_nodes
    s, w = _gauss_legendre(int(time_nodes))
    phases = scales.phases
    point = field.point
    xs = np.empty((len(times), x0.shape[0]))
    xs[0] = x0
    iters = 0
    for m in range(len(times) - 1):
        t0, h = times[m], times[m + 1] - times[m]
        thetas = [phases(t0 + h * sj) for sj in s]

        def increment(xm):
            total = w[0] * point(thetas[0], xm)
            for j in range(1, len(w)):
                total = total + w[j] * point(thetas[j], xm)
            return h * total

        try:
            xs[m + 1], its = _midpoint_step(xs[m], increment, cfg, m)
        except StepConvergenceError as exc:
            exc.partial = Trajectory(times[:m + 1], xs[:m + 1], xs[:m + 1])
            raise
        iters += its
    meta = {"method": "direct", "dt": cfg.dt, "eps": scales.eps, "time_nodes": time_nodes,
            "wall_clock": _time.perf_counter() - start, "midpoint_iterations": iters}
    return _finish(times, xs, invariant, meta)


def _check_resolution(scales: ScaleVector, step: float, min_samples: int):
    period = scales.finest_period
    if step > period / min_samples * (1 + 1e-12):
        raise ConfigurationError(
            f"reference step {step:g} resolves the finest period {period:.4g} by only "
            f"{period / step:.1f} samples (need {min_samples})")


def rk45_reference(field: MultiscaleField, scales: ScaleVector, x0, T: float,
                   step: Optional[float] = None, rtol: Optional[float] = None,
                   min_samples: int = 20, invariant: Optional[Callable] = None,
                   rhs: Optional[Callable] = None, t_start: float = 0.0,
                   accelerate: Optional[bool] = None) -> Trajectory:
    """Dormand-Prince 5(4) reference solution on ``[t_start, T]``.

    With ``step`` the 5th-order solution is propagated with a fixed step (the
    last step is shortened to hit ``T``); with ``rtol`` an adaptive run is
    made whose maximum step still resolves the finest period.  ``rhs(t, x)``
    overrides ``field.at`` (e.g. to integrate an equivalent system).

    The fixed-step loop runs compiled when the field carries a ``kernel`` and
    numba is importable (``accelerate=None`` picks this automatically); the
    arithmetic matches the pure Python loop up to rounding.
    """
    start = _time.perf_counter()
    x0 = np.asarray(x0, float)
    custom_rhs = rhs is not None
    if rhs is None:
        phases, point = scales.phases, field.point

        def rhs(t, x):
            return point(phases(t), x)

    if (step is None) == (rtol is None):
        raise ConfigurationError("give exactly one of step or rtol")
    if not T > t_start:
        raise ConfigurationError("reference horizon must be positive")
    if step is not None:
        _check_resolution(scales, step, min_samples)
        times = t_start + time_grid(T - t_start, step)
        times[-1] = T
        fast = field.kernel is not None and not custom_rhs and _accel.available()
        if accelerate and not fast:
            raise ConfigurationError("compiled reference needs numba and a field kernel")
        if fast and accelerate is not False:
            xs = _accel.dp5_fixed(field.kernel, scales.effective, x0, times)
            engine = "numba"
        else:
            xs = _dp5_python(rhs, x0, times)
            engine = "python"
        meta = {"method": "rk45", "dt": step, "eps": scales.eps, "engine": engine}
    else:
        max_step = scales.finest_period / min_samples
        sol = solve_ivp(rhs, (t_start, T), x0, method="RK45", rtol=rtol, atol=rtol * 1e-3,
                        max_step=max_step)
        if not sol.success:
            raise ConfigurationError(f"adaptive reference failed: {sol.message}")
        times, xs = sol.t, sol.y.T
        meta = {"method": "rk45-adaptive", "dt": float("nan"), "rtol": rtol, "eps": scales.eps}
    meta["wall_clock"] = _time.perf_counter() - start
    return _finish(np.asarray(times), np.asarray(xs), invariant, meta)


def _dp5_python(rhs, x0, times):
    xs = np.empty((len(times), x0.shape[0]))
    xs[0] = x0
    x = x0
    for m in range(len(times) - 1):
        t, h = times[m], times[m + 1] - times[m]
        k = [rhs(t, x)]
        for i in range(1, 6):
            acc = x.copy()
            for a, kj in zip(_A[i], k):
                if a:
                    acc += (h * a) * kj
            k.append(rhs(t + _C[i] * h, acc))
        x = x + h * (_B5[0] * k[0] + _B5[2] * k[2] + _B5[3] * k[3] + _B5[4] * k[4] + _B5[5] * k[5])
        xs[m + 1] = x
    return xs


def averaged_method(decomp: FieldDecomposition, cfg: SolverConfig, x0,
                    invariant: Optional[Callable] = None, scales: Optional[ScaleVector] = None) -> Trajectory:
    """Implicit midpoint on the averaged equation ``y' = mean_1(y)``; ``x = y``.

    The result does not depend on the scale vector (``scales`` is only
    recorded in the metadata).
    """
    start = _time.perf_counter()
    x0 = np.asarray(x0, float)
    times = time_grid(cfg.T_final, cfg.dt)
    ys = np.empty((len(times), x0.shape[0]))
    ys[0] = x0
    for m in range(len(times) - 1):
        h = times[m + 1] - times[m]
        ys[m + 1], _ = _midpoint_step(ys[m], lambda ym: h * decomp.mean(ym), cfg, m)
    meta = {"method": "averaged", "dt": cfg.dt, "eps": None if scales is None else scales.eps,
            "wall_clock": _time.perf_counter() - start}
    return _finish(times, ys, invariant, meta)


def error_at_final(a: Trajectory, b: Trajectory) -> float:
    """``||x_a(T) - x_b(T)||_2`` at the final time of ``a``; ``b`` is interpolated."""
    T = a.final_time
    if T < b.times[0] - 1e-12 or T > b.times[-1] + 1e-9 * max(1.0, abs(T)):
        raise WindowRangeError(f"reference covers [{b.times[0]}, {b.times[-1]}], needs T = {T}")
    return float(np.linalg.norm(a.x[-1] - b.x_at(min(T, b.final_time))))


def hamiltonian_errors(traj: Trajectory):
    """``(t, |H - H0|, |H - H0|/|H0|)`` from a trajectory's tracked invariant."""
    if traj.invariant is None:
        raise ConfigurationError("trajectory has no tracked invariant")
    H = traj.invariant
    abs_err = np.abs(H - H[0])
    return traj.times, abs_err, abs_err / abs(H[0])
