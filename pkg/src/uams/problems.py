"""Benchmark problems: rotating-frame Hamiltonian systems and a scalar ODE.

The Hamiltonian problems have the form

    H(p, q) = sum_i (p_i^2 + q_i^2) / (2 s_i) + V(q)

where ``s_i`` is one of the scale parameters (or 1 for the slow pair) and
``V`` is a cubic potential.  For a stiff pair rotating with phase
``phi = t/s_i`` the change of variables

    w_a = cos(phi) q - sin(phi) p,   w_b = sin(phi) q + cos(phi) p

removes the stiff linear part, leaving ``w_a' = -sin(phi) G_i``,
``w_b' = cos(phi) G_i`` with ``G_i = -dV/dq_i``.  Fields are expressed with
1-periodic phases ``theta = phi / (2 pi)``, i.e. with a scale vector of period
``2 pi``.

Since the rotating-frame fields are trigonometric polynomials in the phases,
their decompositions are computed in closed form: the field is expanded in
Fourier modes ``exp(2 pi i m.theta)`` with polynomial coefficients in ``w``,
means keep the zero modes and antiderivatives integrate each mode exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

from ._accel import kernel_from_source
from .decomposition import AnalyticForms, FieldDecomposition, decompose
from .errors import ConfigurationError
from .scales import MultiscaleField, ScaleVector, SolverConfig

__all__ = [
    "Problem",
    "HamiltonianProblem",
    "henon_heiles_3scale",
    "hamiltonian_4scale",
    "exp_sin_scalar",
    "linear_decay",
    "hamiltonian_value",
    "PRESETS",
    "get_problem",
    "list_problems",
]

TWO_PI = 2.0 * math.pi


# -- problem containers -----------------------------------------------------------


@dataclass
class Problem:
    """A field with its scale vector, preset initial value and decomposition."""

    name: str
    field: MultiscaleField
    scales: ScaleVector
    x0: np.ndarray
    T_final: float = 1.0
    _analytic: Optional[Callable] = dc_field(default=None, repr=False)

    @property
    def is_hamiltonian(self) -> bool:
        return False

    def decomposition(self, cfg: Optional[SolverConfig] = None) -> FieldDecomposition:
        """Analytic decomposition when closed forms exist, numeric otherwise."""
        cfg = cfg or SolverConfig()
        if self._analytic is not None:
            return self._analytic(cfg)
        return decompose(self.field, cfg)

    def numeric_decomposition(self, cfg: Optional[SolverConfig] = None) -> FieldDecomposition:
        return decompose(self.field, cfg or SolverConfig())


@dataclass
class HamiltonianProblem(Problem):
    """Rotating-frame Hamiltonian system.

    ``pair_phase[i]`` is the 1-based phase index of pair i, or ``None`` for a
    non-stiff pair; ``w`` stores pair i as entries ``(2i, 2i+1)``.
    """

    pair_phase: tuple = ()
    potential: Callable = None
    potential_grad: Callable = None

    @property
    def is_hamiltonian(self) -> bool:
        return True

    @property
    def dof(self) -> int:
        return len(self.pair_phase)

    def _angles(self, t):
        th = self.scales.phases(t)
        out = []
        for k in self.pair_phase:
            if k is None:
                out.append(None)
            else:
                out.append(TWO_PI * th[k - 1])
        return out

    def to_w(self, p, q, t: float) -> np.ndarray:
        w = np.empty(2 * self.dof)
        for i, phi in enumerate(self._angles(t)):
            if phi is None:
                w[2 * i], w[2 * i + 1] = q[i], p[i]
            else:
                c, s = math.cos(phi), math.sin(phi)
                w[2 * i] = c * q[i] - s * p[i]
                w[2 * i + 1] = s * q[i] + c * p[i]
        return w

    def from_w(self, w, t: float):
        p = np.empty(self.dof)
        q = np.empty(self.dof)
        for i, phi in enumerate(self._angles(t)):
            a, b = w[2 * i], w[2 * i + 1]
            if phi is None:
                q[i], p[i] = a, b
            else:
                c, s = math.cos(phi), math.sin(phi)
                q[i] = c * a + s * b
                p[i] = -s * a + c * b
        return p, q

    def H(self, p, q) -> float:
        total = 0.0
        for i, k in enumerate(self.pair_phase):
            stiff = 1.0 if k is None else self.scales.eps[k - 1]
            total += (p[i] ** 2 + q[i] ** 2) / (2.0 * stiff)
        return total + float(self.potential(q))

    def invariant(self, w, t: float) -> float:
        """Hamiltonian at rotating-frame state ``w`` and time ``t``."""
        return hamiltonian_value(self, w, t)

    def pq_rhs(self, t, z):
        """Right-hand side of the original stiff system in ``z = (p, q)``."""
        dof = self.dof
        p, q = z[:dof], z[dof:]
        grad = self._grad_potential(q)
        dp = np.empty(dof)
        dq = np.empty(dof)
        for i, k in enumerate(self.pair_phase):
            stiff = 1.0 if k is None else self.scales.eps[k - 1]
            dq[i] = p[i] / stiff
            dp[i] = -q[i] / stiff - grad[i]
        return np.concatenate([dp, dq])

    def _grad_potential(self, q):
        return np.asarray(self.potential_grad(q), float)


def hamiltonian_value(problem: HamiltonianProblem, w, t: float) -> float:
    """``H(from_w(w, t))``."""
    p, q = problem.from_w(np.asarray(w, float), t)
    return problem.H(p, q)


# -- closed-form decomposition of trigonometric-polynomial fields -----------------


def _laurent_modes(expr, u_syms):
    """Split an expanded Laurent polynomial in ``u_syms`` into {mode: coeff}."""
    modes: dict = {}
    for term in sp.Add.make_args(sp.expand(expr)):
        powers = term.as_powers_dict()
        m = tuple(int(powers.get(u, 0)) for u in u_syms)
        coeff = term / sp.Mul(*[u ** mk for u, mk in zip(u_syms, m)])
        modes[m] = modes.get(m, 0) + coeff
    return {m: c for m, c in modes.items() if sp.expand(c) != 0}


def _realify(modes, theta_syms):
    """Real trigonometric form of ``sum_m c_m exp(2 pi i m.theta)``."""
    out = sp.Integer(0)
    done = set()
    for m, c in modes.items():
        if m in done:
            continue
        neg = tuple(-v for v in m)
        done.add(m)
        done.add(neg)
        if all(v == 0 for v in m):
            re, im = sp.expand(c).as_real_imag()
            out += re
            continue
        c_neg = modes.get(neg, 0)
        phase = 2 * sp.pi * sum(v * th for v, th in zip(m, theta_syms))
        # c_m e^{i phi} + c_{-m} e^{-i phi}
        re_p, im_p = sp.expand(c).as_real_imag()
        re_n, im_n = sp.expand(c_neg).as_real_imag()
        out += (re_p + re_n) * sp.cos(phase) + (im_n - im_p) * sp.sin(phase)
    return sp.expand(out)


@dataclass
class _SymbolicField:
    exprs: list
    theta: tuple
    w: tuple


def _trig_decomposition(sf: _SymbolicField):
    """Closed-form mean, fluctuations, antiderivatives and Jacobians."""
    n = len(sf.theta)
    u = sp.symbols(f"u1:{n + 1}")
    subs = {}
    for k in range(n):
        subs[sp.cos(2 * sp.pi * sf.theta[k])] = (u[k] + 1 / u[k]) / 2
        subs[sp.sin(2 * sp.pi * sf.theta[k])] = (u[k] - 1 / u[k]) / (2 * sp.I)
    comp_modes = [_laurent_modes(e.xreplace(subs), u) for e in sf.exprs]

    mean = []
    fluct = [[] for _ in range(n)]
    anti = [[] for _ in range(n)]
    for modes in comp_modes:
        mean.append(_realify({m: c for m, c in modes.items() if not any(m)}, sf.theta))
        for k in range(1, n + 1):
            sel = {m: c for m, c in modes.items() if m[k - 1] != 0 and not any(m[k:])}
            fluct[k - 1].append(_realify(sel, sf.theta))
            g: dict = {}
            for m, c in sel.items():
                coef = c / (2 * sp.pi * sp.I * m[k - 1])
                base = m[:k - 1] + (0,) * (n - k + 1)
                g[m] = g.get(m, 0) + coef
                g[base] = g.get(base, 0) - coef
            anti[k - 1].append(_realify(g, sf.theta))
    jac = [sp.Matrix(anti[k]).jacobian(sp.Matrix(sf.w)) for k in range(n)]
    return mean, fluct, anti, jac


def _compile(exprs, args, shape=None):
    """Scalar-evaluation closure for a list (or matrix) of expressions."""
    flat = list(exprs) if shape is None else list(sp.Matrix(exprs))
    fn = sp.lambdify(args, flat, modules="math", cse=True)
    if shape is None:
        return lambda *a: np.array(fn(*a), dtype=float)
    return lambda *a: np.array(fn(*a), dtype=float).reshape(shape)


def _analytic_forms(sf: _SymbolicField) -> AnalyticForms:
    n, d = len(sf.theta), len(sf.w)
    mean, fluct, anti, jac = _trig_decomposition(sf)
    mean_fn = _compile(mean, sf.w)
    levels = []
    for k in range(1, n + 1):
        args = list(sf.theta[:k]) + list(sf.w)
        levels.append((_compile(fluct[k - 1], args), _compile(anti[k - 1], args),
                       _compile(jac[k - 1], args, (d, d))))

    def point(fn, k):
        def call(theta, x):
            theta = np.asarray(theta, float)[..., :k]
            x = np.asarray(x, float)
            if theta.ndim == 1 and x.ndim == 1:
                return fn(*theta.tolist(), *x.tolist())
            # batched input: loop over the broadcast leading axes
            lead = np.broadcast_shapes(theta.shape[:-1], x.shape[:-1])
            th = np.broadcast_to(theta, lead + (k,)).reshape(-1, k)
            xs = np.broadcast_to(x, lead + (d,)).reshape(-1, d)
            out = np.array([fn(*a.tolist(), *b.tolist()) for a, b in zip(th, xs)])
            return out.reshape(lead + out.shape[1:])
        return call

    def mean_call(x):
        x = np.asarray(x, float)
        if x.ndim == 1:
            return mean_fn(*x.tolist())
        out = np.array([mean_fn(*b.tolist()) for b in x.reshape(-1, d)])
        return out.reshape(x.shape)

    return AnalyticForms(
        mean=mean_call,
        fluct=[point(lv[0], k) for k, lv in enumerate(levels, start=1)],
        anti=[point(lv[1], k) for k, lv in enumerate(levels, start=1)],
        anti_jac=[point(lv[2], k) for k, lv in enumerate(levels, start=1)],
    )


def _compile_field(sf: _SymbolicField, name: str) -> MultiscaleField:
    n, d = len(sf.theta), len(sf.w)
    args = list(sf.theta) + list(sf.w)
    vec = sp.lambdify(args, list(sf.exprs), modules="numpy", cse=True)
    scal = sp.lambdify(args, list(sf.exprs), modules="math", cse=True)

    def rhs(theta, x):
        theta = np.asarray(theta, float)
        x = np.asarray(x, float)
        vals = vec(*np.moveaxis(theta, -1, 0), *np.moveaxis(x, -1, 0))
        vals = np.broadcast_arrays(*[np.asarray(v, float) for v in vals],
                                   theta[..., 0], x[..., 0])[:d]
        return np.stack(vals, axis=-1)

    def point_rhs(theta, x):
        return np.array(scal(*theta.tolist(), *x.tolist()), dtype=float)

    kernel = kernel_from_source(_kernel_source(sf), name)
    return MultiscaleField(d=d, n=n, rhs=rhs, point_rhs=point_rhs, name=name, kernel=kernel)


def _kernel_source(sf: _SymbolicField) -> str:
    """Straight-line ``kernel(th, x, out)`` source for the field expressions."""
    from sympy.printing.pycode import pycode

    repl, reduced = sp.cse(list(sf.exprs), symbols=sp.numbered_symbols("c_"))
    lines = ["def kernel(th, x, out):"]
    lines += [f"    {s} = th[{i}]" for i, s in enumerate(sf.theta)]
    lines += [f"    {s} = x[{i}]" for i, s in enumerate(sf.w)]
    lines += [f"    {s} = {pycode(e)}" for s, e in repl]
    lines += [f"    out[{i}] = {pycode(e)}" for i, e in enumerate(reduced)]
    return "\n".join(lines) + "\n"


def _rotating_system(potential_sym, pair_phase, n):
    """Symbolic rotating-frame field for the given pair/phase assignment."""
    dof = len(pair_phase)
    theta = sp.symbols(f"theta1:{n + 1}", real=True)
    w = sp.symbols(f"w1:{2 * dof + 1}", real=True)
    qs = sp.symbols(f"q1:{dof + 1}", real=True)
    V = potential_sym(qs)
    q_of_w = {}
    for i, k in enumerate(pair_phase):
        a, b = w[2 * i], w[2 * i + 1]
        if k is None:
            q_of_w[qs[i]] = a
        else:
            c, s = sp.cos(2 * sp.pi * theta[k - 1]), sp.sin(2 * sp.pi * theta[k - 1])
            q_of_w[qs[i]] = c * a + s * b
    exprs = []
    for i, k in enumerate(pair_phase):
        G = (-sp.diff(V, qs[i])).xreplace(q_of_w)
        a, b = w[2 * i], w[2 * i + 1]
        if k is None:
            exprs += [b, sp.expand(-a + G)]
        else:
            c, s = sp.cos(2 * sp.pi * theta[k - 1]), sp.sin(2 * sp.pi * theta[k - 1])
            exprs += [sp.expand(-s * G), sp.expand(c * G)]
    return _SymbolicField(exprs, theta, w)


def _hh3_potential(q):
    q1, q2, q3 = q
    return q1 ** 2 * q2 - q2 ** 3 / 3 + q2 ** 2 * q3 - q3 ** 3 / 3


def _hh4_potential(q):
    q1, q2, q3, q4 = q
    return (q1 ** 2 * q2 + q2 ** 2 * q3 + q3 ** 2 * q4
            - q2 ** 3 / 3 - q3 ** 3 / 3 - q4 ** 3 / 3)


# pair i rotates with the phase of its stiffness: the first pair is the fastest
_HH3_PAIRS = (2, 1, None)
_HH4_PAIRS = (3, 2, 1, None)


@lru_cache(maxsize=None)
def _hh_symbolic(kind: str):
    if kind == "hh3":
        sf = _rotating_system(_hh3_potential, _HH3_PAIRS, 2)
    else:
        sf = _rotating_system(_hh4_potential, _HH4_PAIRS, 3)
    return sf, _compile_field(sf, kind), _analytic_forms(sf)


@lru_cache(maxsize=None)
def _cached_analytic(kind: str, quad_nodes: int, fd_dx: float):
    sf, field, forms = _hh_symbolic(kind)
    cfg = SolverConfig(quad_nodes=quad_nodes, fd_dx=fd_dx)
    return decompose(field, cfg, analytic=forms)


@lru_cache(maxsize=None)
def _potential_fns(kind: str):
    fn, dof = (_hh3_potential, 3) if kind == "hh3" else (_hh4_potential, 4)
    qs = sp.symbols(f"q1:{dof + 1}", real=True)
    V = fn(qs)
    val = sp.lambdify(qs, V, modules="math")
    grad = sp.lambdify(qs, [sp.diff(V, q) for q in qs], modules="math")
    return (lambda q: val(*np.asarray(q, float).tolist()),
            lambda q: np.array(grad(*np.asarray(q, float).tolist())))


def _check_order(eps):
    for a, b in zip(eps, eps[1:]):
        if not 0 < b <= a:
            raise ConfigurationError(f"scale parameters must satisfy 0 < ... <= eps1, got {eps}")


def henon_heiles_3scale(eps1: float = 0.1, eps2: Optional[float] = None,
                        x0=None) -> HamiltonianProblem:
    """Three-degree-of-freedom Henon-Heiles system with two stiff pairs.

    ``(q1, p1)`` oscillates with period ``2 pi eps2`` and ``(q2, p2)`` with
    ``2 pi eps1``.  Default ``eps2 = eps1**2`` and ``w(0) = 0.12``.
    """
    eps2 = eps1 ** 2 if eps2 is None else eps2
    _check_order((eps1, eps2))
    sf, field, _ = _hh_symbolic("hh3")
    scales = ScaleVector((eps1, eps2), period=TWO_PI)
    x0 = np.full(6, 0.12) if x0 is None else np.asarray(x0, float)
    return HamiltonianProblem(
        name="hh3", field=field, scales=scales, x0=x0, T_final=1.0,
        _analytic=lambda cfg: _cached_analytic("hh3", int(cfg.quad_nodes), float(cfg.fd_dx)),
        pair_phase=_HH3_PAIRS, potential=_potential_fns("hh3")[0],
        potential_grad=_potential_fns("hh3")[1])


def hamiltonian_4scale(eps1: float = 1e-3, eps2: float = 11e-5, eps3: float = 3e-6,
                       x0=None) -> HamiltonianProblem:
    """Four-degree-of-freedom cubic Hamiltonian with three stiff pairs.

    ``(q1, p1)``, ``(q2, p2)`` and ``(q3, p3)`` rotate with ``eps3``, ``eps2``
    and ``eps1`` respectively; ``(q4, p4)`` is slow.  Default ``w(0) = 0.44``.
    """
    _check_order((eps1, eps2, eps3))
    sf, field, _ = _hh_symbolic("hh4")
    scales = ScaleVector((eps1, eps2, eps3), period=TWO_PI)
    x0 = np.full(8, 0.44) if x0 is None else np.asarray(x0, float)
    return HamiltonianProblem(
        name="hh4", field=field, scales=scales, x0=x0, T_final=1.0,
        _analytic=lambda cfg: _cached_analytic("hh4", int(cfg.quad_nodes), float(cfg.fd_dx)),
        pair_phase=_HH4_PAIRS, potential=_potential_fns("hh4")[0],
        potential_grad=_potential_fns("hh4")[1])


def _exp_sin_rhs(theta, x):
    theta = np.asarray(theta, float)
    a = 1.5 - np.exp(np.sin(TWO_PI * theta[..., 0]) + np.sin(TWO_PI * theta[..., 1]))
    return a[..., None] * np.asarray(x, float)


def _exp_sin_point(theta, x):
    a = 1.5 - math.exp(math.sin(TWO_PI * theta[0]) + math.sin(TWO_PI * theta[1]))
    return np.array([a * float(x[0])])


def _exp_sin_kernel(th, x, out):
    out[0] = (1.5 - math.exp(math.sin(2.0 * math.pi * th[0]) + math.sin(2.0 * math.pi * th[1]))) * x[0]


def _decay_kernel(th, x, out):
    out[0] = -x[0]


def exp_sin_scalar(eps1: float = 7e-2, eps2: float = 11e-5, x0=None) -> Problem:
    """``x' = (1.5 - exp(sin(2 pi t/eps1) + sin(2 pi t/eps2))) x``.

    No closed forms: the decomposition is computed by quadrature.
    """
    _check_order((eps1, eps2))
    field = MultiscaleField(d=1, n=2, rhs=_exp_sin_rhs, point_rhs=_exp_sin_point, name="expsin",
                           kernel=_exp_sin_kernel)
    x0 = np.array([0.48]) if x0 is None else np.asarray(x0, float)
    return Problem(name="expsin", field=field, scales=ScaleVector((eps1, eps2), 1.0), x0=x0,
                   T_final=3.0)


def _decay_rhs(theta, x):
    theta = np.asarray(theta, float)
    x = np.asarray(x, float)
    return -x + 0.0 * theta[..., :1]


def linear_decay(eps1: float = 0.1, x0=None) -> Problem:
    """``x' = -x`` written as a one-phase field without fluctuations."""
    field = MultiscaleField(d=1, n=1, rhs=_decay_rhs, point_rhs=lambda th, x: -np.asarray(x, float),
                            name="decay", kernel=_decay_kernel)
    zero = lambda theta, x: np.zeros(1)
    forms = AnalyticForms(mean=lambda x: -np.asarray(x, float), fluct=[zero], anti=[zero],
                          anti_jac=[lambda theta, x: np.zeros((1, 1))])
    x0 = np.array([1.0]) if x0 is None else np.asarray(x0, float)
    return Problem(name="decay", field=field, scales=ScaleVector((eps1,), 1.0), x0=x0, T_final=1.0,
                   _analytic=lambda cfg: decompose(field, cfg, analytic=forms))


PRESETS = {
    "hh3-default": lambda: henon_heiles_3scale(0.1, 0.01),
    "hh3-diagnostics": lambda: henon_heiles_3scale(1e-4, 1e-8, x0=np.full(6, 0.20)),
    "hh4-default": lambda: hamiltonian_4scale(1e-3, 11e-5, 3e-6),
    "hh4-nosep": lambda: hamiltonian_4scale(0.5, 11e-6, 3e-6),
    "expsin-default": lambda: exp_sin_scalar(7e-2, 11e-5),
    "decay": lambda: linear_decay(),
}

_FACTORIES = {
    "hh3": henon_heiles_3scale,
    "hh4": hamiltonian_4scale,
    "expsin": exp_sin_scalar,
    "decay": linear_decay,
}


def get_problem(name: str, eps: Optional[Sequence[float]] = None, x0=None) -> Problem:
    """Look up a preset (``"hh4-default"``) or a family (``"hh3"``) by name."""
    if eps is None and x0 is None and name in PRESETS:
        return PRESETS[name]()
    family = name.split("-")[0]
    if family not in _FACTORIES:
        raise ConfigurationError(f"unknown problem {name!r}; known: {', '.join(list_problems())}")
    if eps is None:
        base = PRESETS.get(name) or PRESETS[f"{family}-default" if family != "decay" else "decay"]
        eps = base().scales.eps
    return _FACTORIES[family](*eps, x0=x0)


def list_problems():
    return sorted(set(PRESETS) | set(_FACTORIES))
