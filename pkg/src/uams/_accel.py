"""Optional numba path for the fixed-step reference integrator.

Only the reference solver uses it: the methods being compared (UA, direct
midpoint) stay in plain Python so their wall-clock ratios are like for like.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

try:  # pragma: no cover - availability depends on the environment
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None


def available() -> bool:
    return _nb is not None


@lru_cache(maxsize=None)
def kernel_from_source(source: str, name: str = "kernel"):
    """Compile ``def kernel(th, x, out)`` source into a Python function."""
    ns = {"math": math}
    exec(compile(source, f"<{name}>", "exec"), ns)
    return ns["kernel"]


@lru_cache(maxsize=None)
def _stepper(kernel):
    jk = _nb.njit(cache=False)(kernel)

    c2, c3, c4, c5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
    a21 = 1 / 5
    a31, a32 = 3 / 40, 9 / 40
    a41, a42, a43 = 44 / 45, -56 / 15, 32 / 9
    a51, a52, a53, a54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
    a61, a62, a63, a64, a65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
    b1, b3, b4, b5, b6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84

    @_nb.njit(cache=False)
    def phases(t, eff, th):
        for k in range(eff.shape[0]):
            th[k] = np.fmod(t, eff[k]) / eff[k]

    @_nb.njit(cache=False)
    def run(x0, times, eff, xs):
        d = x0.shape[0]
        th = np.empty(eff.shape[0])
        k1 = np.empty(d); k2 = np.empty(d); k3 = np.empty(d)
        k4 = np.empty(d); k5 = np.empty(d); k6 = np.empty(d)
        z = np.empty(d)
        x = x0.copy()
        xs[0] = x
        for m in range(times.shape[0] - 1):
            t = times[m]
            h = times[m + 1] - t
            phases(t, eff, th); jk(th, x, k1)
            for i in range(d):
                z[i] = x[i] + h * a21 * k1[i]
            phases(t + c2 * h, eff, th); jk(th, z, k2)
            for i in range(d):
                z[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i])
            phases(t + c3 * h, eff, th); jk(th, z, k3)
            for i in range(d):
                z[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i])
            phases(t + c4 * h, eff, th); jk(th, z, k4)
            for i in range(d):
                z[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i])
            phases(t + c5 * h, eff, th); jk(th, z, k5)
            for i in range(d):
                z[i] = x[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i])
            phases(t + h, eff, th); jk(th, z, k6)
            for i in range(d):
                x[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i])
            xs[m + 1] = x
        return xs

    return run


def dp5_fixed(kernel, eff, x0, times) -> np.ndarray:
    """Fixed-step Dormand-Prince 5th-order propagation on ``times``."""
    x0 = np.ascontiguousarray(x0, dtype=float)
    times = np.ascontiguousarray(times, dtype=float)
    xs = np.empty((times.shape[0], x0.shape[0]))
    return _stepper(kernel)(x0, times, np.asarray(eff, float), xs)
