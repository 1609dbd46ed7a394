"""Experiment runners behind the CLI.

Every runner takes an :class:`ExperimentSpec`, writes its CSV files under
``spec.out`` (when set) and returns a :class:`SummaryReport` whose verdicts
are computed only from the numbers it emits.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigurationError, StepConvergenceError
from ..integrator import integrate, recover_window, write_trajectory_csv
from ..maps import map_diagnostics
from ..problems import HamiltonianProblem, Problem, get_problem
from ..reference import (ErrorReport, averaged_method, direct_im2nd, hamiltonian_errors,
                         rk45_reference, write_error_reports)
from .config import ExperimentSpec, spec_from_dict

__all__ = [
    "SummaryReport",
    "fit_slope",
    "run",
    "run_convergence",
    "run_drift",
    "run_compare_averaged",
    "run_recover_window",
    "run_timing",
    "run_diagnostics",
    "run_solve",
]

# desk-scale cap on fixed-step reference runs
MAX_REFERENCE_STEPS = 10_000_000


@dataclass
class SummaryReport:
    kind: str
    name: str
    problem: str
    reports: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    spread: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    runtime: float = 0.0
    notes: list = field(default_factory=list)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "problem": self.problem,
            "passed": self.passed,
            "verdicts": self.verdicts,
            "slopes": self.slopes,
            "spread": self.spread,
            "metrics": self.metrics,
            "runtime_s": self.runtime,
            "notes": self.notes,
            "files": self.files,
            "reports": [r.row() for r in self.reports],
        }

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / f"{self.name or self.kind}_summary.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))
        self.files.append(str(path))
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def fit_slope(dts, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``; needs 3 points."""
    dts = np.asarray(dts, float)
    errors = np.asarray(errors, float)
    if len(dts) < 3:
        raise ValueError("a slope needs at least three step sizes")
    if np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


def _key(x) -> str:
    return f"{x:g}"


def _eps_key(eps) -> str:
    return ",".join(f"{e:g}" for e in eps)


def _problem(spec: ExperimentSpec, eps=None) -> Problem:
    return get_problem(spec.problem, eps=eps)


def _out_dir(spec: ExperimentSpec) -> Optional[Path]:
    if spec.out is None:
        return None
    path = Path(spec.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _map(fn, items, workers: int):
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _reference_step(problem: Problem, spec: ExperimentSpec):
    ref = spec.reference
    samples = int(ref.get("samples", 20))
    step = float(ref["step"]) if "step" in ref else problem.scales.finest_period / samples
    return step, samples


def _reference_cost(problem, spec, T):
    step, _ = _reference_step(problem, spec)
    # one run plus a half-step rerun at twice the steps
    return int(math.ceil(T / step)) * 3


def _reference_pair(problem: Problem, spec: ExperimentSpec, T: float, x0=None, t_start=0.0,
                    invariant=None):
    """Reference run plus its half-step rerun; returns ``(ref, bar)``."""
    step, samples = _reference_step(problem, spec)
    x0 = problem.x0 if x0 is None else x0
    ref = rk45_reference(problem.field, problem.scales, x0, T, step=step, min_samples=samples,
                         t_start=t_start, invariant=invariant)
    half = rk45_reference(problem.field, problem.scales, x0, T, step=step / 2,
                          min_samples=samples, t_start=t_start)
    return ref, float(np.linalg.norm(ref.x[-1] - half.x[-1]))


def _gate(verdicts, name, ok):
    verdicts[name] = bool(ok)


# -- convergence ------------------------------------------------------------------


def _ua_cell(args):
    spec_dict, eps, dt, T = args
    spec = spec_from_dict(spec_dict)
    problem = _problem(spec, eps)
    decomp = problem.decomposition(spec.solver_config(dt, T))
    traj = integrate(decomp, problem.scales, spec.solver_config(dt, T), problem.x0)
    return traj.y[-1], traj.x[-1], traj.meta["wall_clock"], traj.meta["rhs_evals"]


def run_convergence(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Error against ``dt`` for each scale tuple, with slope and spread.

    ``reference.method`` is ``"rk45"`` (fixed-step reference plus half-step
    rerun) or ``"self"`` (``|y_dt(T) - y_{dt/2}(T)|``).  A reference that
    would need more than ``options.max_reference_steps`` steps is replaced by
    self-convergence when ``reference.fallback == "self"`` and rejected
    before any work otherwise.
    """
    start = time.perf_counter()
    T = spec.T_final
    dts = sorted((float(h) for h in spec.dt), reverse=True)
    summary = SummaryReport("convergence", spec.name, spec.problem)
    cap = int(spec.options.get("max_reference_steps", MAX_REFERENCE_STEPS))

    modes = {}
    for eps in spec.eps_grid():
        problem = _problem(spec, eps)
        mode = spec.reference.get("method", "rk45")
        if mode == "rk45":
            cost = _reference_cost(problem, spec, T)
            if cost > cap:
                if spec.reference.get("fallback") != "self":
                    raise ConfigurationError(
                        f"reference for eps={_eps_key(problem.scales.eps)} needs about {cost:.3g} "
                        f"steps (cap {cap:.3g}); use a self-convergence reference")
                mode = "self"
                summary.notes.append(
                    f"eps={_eps_key(problem.scales.eps)}: reference needs {cost:.3g} steps, "
                    "switched to self-convergence")
        elif mode == "none":
            raise ConfigurationError("a convergence study needs a reference")
        modes[problem.scales.eps] = (problem, mode)

    cells = []
    for eps_t, (problem, mode) in modes.items():
        grid = set(dts)
        if mode == "self":
            grid |= {h / 2 for h in dts}
        for h in sorted(grid, reverse=True):
            cells.append((eps_t, h))
    spec_dict = spec.to_dict()
    results = _map(_ua_cell, [(spec_dict, list(e), h, T) for e, h in cells], workers)
    runs = {cell: res for cell, res in zip(cells, results)}

    errors = {}
    for eps_t, (problem, mode) in modes.items():
        ek = _eps_key(eps_t)
        if mode == "rk45":
            ref, bar = _reference_pair(problem, spec, T)
            summary.metrics[f"reference_bar[{ek}]"] = bar
            target = ref.x[-1]
        errs = []
        for h in dts:
            y, x, wall, evals = runs[(eps_t, h)]
            if mode == "rk45":
                err = float(np.linalg.norm(x - target))
            else:
                err = float(np.linalg.norm(y - runs[(eps_t, h / 2)][0]))
            errs.append(err)
            summary.reports.append(ErrorReport(
                problem.name, eps_t, "ua", h, err, wall,
                extra={"mode": mode, "rhs_evals": evals}))
        errors[eps_t] = errs
        if len(dts) >= 3:
            summary.slopes[ek] = fit_slope(dts, errs)

    for i, h in enumerate(dts):
        vals = [errors[e][i] for e in errors]
        summary.spread[_key(h)] = max(vals) / min(vals) if min(vals) > 0 else float("inf")

    g = spec.gates
    v = summary.verdicts
    if "slope_min" in g or "slope_max" in g:
        for ek, s in summary.slopes.items():
            _gate(v, f"slope[{ek}]", g.get("slope_min", -np.inf) <= s <= g.get("slope_max", np.inf))
    if "error_max_at_coarsest" in g:
        for eps_t, errs in errors.items():
            _gate(v, f"error@{_key(dts[0])}[{_eps_key(eps_t)}]", errs[0] <= g["error_max_at_coarsest"])
    if "spread_max" in g:
        for h, s in summary.spread.items():
            _gate(v, f"spread@{h}", s <= g["spread_max"])

    out = _out_dir(spec)
    if out is not None:
        path = out / f"{spec.name or 'convergence'}_errors.csv"
        write_error_reports(path, summary.reports)
        summary.files.append(str(path))
    summary.runtime = time.perf_counter() - start
    if "runtime_max" in g:
        _gate(v, "runtime", summary.runtime <= g["runtime_max"])
    return summary


# -- Hamiltonian drift ------------------------------------------------------------

_DEFAULT_DRIFT_METHODS = [
    {"label": "ua", "method": "ua", "dt": 0.1},
    {"label": "direct-coarse", "method": "direct", "dt": 0.1},
]


def _run_method(problem: Problem, spec: ExperimentSpec, entry: dict, T: float, decomp=None,
                invariant=None):
    cfg = spec.solver_config(entry.get("dt", spec.dt[0]), T)
    method = entry["method"]
    if method == "ua":
        decomp = decomp or problem.decomposition(cfg)
        return integrate(decomp, problem.scales, cfg, problem.x0, invariant=invariant)
    if method == "direct":
        nodes = entry.get("time_nodes")
        return direct_im2nd(problem.field, problem.scales, cfg, problem.x0, invariant=invariant,
                            time_nodes=None if nodes is None else int(nodes))
    if method == "averaged":
        decomp = decomp or problem.decomposition(cfg)
        return averaged_method(decomp, cfg, problem.x0, invariant=invariant, scales=problem.scales)
    raise ConfigurationError(f"unknown method {method!r}")


def _ratio(a, b):
    if b == 0:
        return float("inf") if a > 0 else 1.0
    return a / b


def _ratio_gates(summary, gates, values):
    """``ratio_min`` / ``ratio_max`` / ``ratio_within`` gates over ``"a/b"`` keys."""
    for kind in ("ratio_min", "ratio_max", "ratio_within"):
        for pair, bound in gates.get(kind, {}).items():
            a, b = pair.split("/")
            if a not in values or b not in values:
                summary.verdicts[f"{kind}[{pair}]"] = False
                summary.notes.append(f"{pair}: missing data")
                continue
            r = _ratio(values[a], values[b])
            summary.metrics[f"ratio[{pair}]"] = r
            if kind == "ratio_min":
                ok = r >= bound
            elif kind == "ratio_max":
                ok = r <= bound
            else:
                ok = max(r, 1.0 / r if r > 0 else float("inf")) <= bound
            _gate(summary.verdicts, f"{kind}[{pair}]", ok)


def run_drift(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Absolute and relative Hamiltonian error series for several methods.

    All methods are compared on the nodes of the first method's grid
    (finer grids are interpolated there).  Gates: ``rel_max`` per label and
    ratio gates on maximum absolute error, e.g. ``{"ratio_min":
    {"direct-coarse/ua": 100}, "ratio_within": {"ua/direct-fine": 5}}``.
    """
    start = time.perf_counter()
    summary = SummaryReport("drift", spec.name, spec.problem)
    methods = spec.options.get("methods", _DEFAULT_DRIFT_METHODS)
    out = _out_dir(spec)
    rows = []
    for eps in spec.eps_grid():
        problem = _problem(spec, eps)
        if not isinstance(problem, HamiltonianProblem):
            raise ConfigurationError(f"{spec.problem} is not a Hamiltonian problem")
        ek = _eps_key(problem.scales.eps)
        decomp = problem.decomposition(spec.solver_config(spec.dt[0]))
        series = {}
        nodes = None
        for entry in methods:
            label = entry.get("label", entry["method"])
            try:
                traj = _run_method(problem, spec, entry, spec.T_final, decomp, problem.invariant)
            except StepConvergenceError as exc:
                summary.notes.append(f"{label} [{ek}]: {exc}")
                continue
            t, abs_err, rel_err = hamiltonian_errors(traj)
            if nodes is None:
                nodes = t
            a = np.interp(nodes, t, abs_err)
            r = np.interp(nodes, t, rel_err)
            series[label] = (a, r)
            summary.metrics[f"max_abs[{label}][{ek}]"] = float(a.max())
            summary.metrics[f"max_rel[{label}][{ek}]"] = float(r.max())
            summary.metrics[f"wall_clock[{label}][{ek}]"] = traj.meta.get("wall_clock")
            for tm, am, rm in zip(nodes, a, r):
                rows.append([ek, label, repr(float(tm)), repr(float(am)), repr(float(rm))])
        for label, bound in spec.gates.get("rel_max", {}).items():
            ok = label in series and float(series[label][1].max()) <= bound
            _gate(summary.verdicts, f"rel_max[{label}][{ek}]", ok)
        values = {label: float(s[0].max()) for label, s in series.items()}
        sub = SummaryReport("drift", spec.name, spec.problem)
        _ratio_gates(sub, spec.gates, values)
        for k, val in sub.verdicts.items():
            summary.verdicts[f"{k}[{ek}]"] = val
        for k, val in sub.metrics.items():
            summary.metrics[f"{k}[{ek}]"] = val
        summary.notes += sub.notes
    if out is not None:
        path = out / f"{spec.name or 'drift'}_hamiltonian.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eps", "method", "t", "abs_error", "rel_error"])
            wr.writerows(rows)
        summary.files.append(str(path))
    summary.runtime = time.perf_counter() - start
    return summary


# -- averaged method comparison ---------------------------------------------------


def run_compare_averaged(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Component-wise deviation of UA, averaged and coarse direct from a reference.

    Deviations are L-infinity over the coarse nodes.  Gates compare the
    averaged method to UA per component (1-based keys ``"w5"``):
    ``{"ratio_min": {"w5": 10}, "ratio_max": {"w1": 3}}`` bound
    ``dev_averaged / dev_ua``.
    """
    start = time.perf_counter()
    summary = SummaryReport("compare-averaged", spec.name, spec.problem)
    eps = spec.eps_grid()[0]
    problem = _problem(spec, eps)
    dt = float(spec.dt[0])
    T = spec.T_final
    decomp = problem.decomposition(spec.solver_config(dt))
    trajs = {}
    for label, method in (("ua", "ua"), ("averaged", "averaged"), ("direct-coarse", "direct")):
        try:
            trajs[label] = _run_method(problem, spec, {"method": method, "dt": dt}, T, decomp)
        except StepConvergenceError as exc:
            summary.notes.append(f"{label}: {exc}")
    ref, bar = _reference_pair(problem, spec, T)
    summary.metrics["reference_bar"] = bar
    nodes = trajs["ua"].times
    ref_nodes = np.array([ref.x_at(t) for t in nodes])
    d = problem.field.d
    dev = {}
    for label, traj in trajs.items():
        dev[label] = np.abs(traj.x - ref_nodes).max(axis=0)
        for i in range(d):
            summary.metrics[f"dev[{label}][w{i + 1}]"] = float(dev[label][i])
    for kind in ("ratio_min", "ratio_max"):
        for comp, bound in spec.gates.get(kind, {}).items():
            i = int(comp.lstrip("w")) - 1
            r = _ratio(dev["averaged"][i], dev["ua"][i])
            summary.metrics[f"averaged/ua[{comp}]"] = r
            _gate(summary.verdicts, f"{kind}[{comp}]", r >= bound if kind == "ratio_min" else r <= bound)
    out = _out_dir(spec)
    if out is not None:
        path = out / f"{spec.name or 'compare'}_components.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["method", "t"] + [f"w{i + 1}" for i in range(d)])
            for m, t in enumerate(nodes):
                wr.writerow(["reference", repr(float(t))] + [repr(float(v)) for v in ref_nodes[m]])
            for label, traj in trajs.items():
                for m, t in enumerate(traj.times):
                    wr.writerow([label, repr(float(t))] + [repr(float(v)) for v in traj.x[m]])
        summary.files.append(str(path))
    summary.runtime = time.perf_counter() - start
    return summary


# -- fine-window recovery ---------------------------------------------------------


def run_recover_window(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Recovered fine series on a window against a restarted reference.

    The reference runs from 0 to ``t_a``; a second reference restarted from
    that state resolves the window on the sample times.  The final state at
    ``T_final`` is compared as well (relative error).  Options: ``window``
    (``[t_a, t_b]``), ``samples``.
    """
    start = time.perf_counter()
    summary = SummaryReport("recover-window", spec.name, spec.problem)
    problem = _problem(spec, spec.eps_grid()[0])
    dt = float(spec.dt[0])
    T = spec.T_final
    t_a, t_b = (float(v) for v in spec.options.get("window", [0.5, 0.501]))
    samples = int(spec.options.get("samples", 200))
    cfg = spec.solver_config(dt, T)
    decomp = problem.decomposition(cfg)
    traj = integrate(decomp, problem.scales, cfg, problem.x0)
    s, x_rec = recover_window(decomp, problem.scales, traj, t_a, t_b, samples, cfg)

    step, min_samples = _reference_step(problem, spec)
    if t_a > 0:
        head, head_bar = _reference_pair(problem, spec, t_a)
        x_a = head.x[-1]
    else:
        head_bar, x_a = 0.0, problem.x0
    tail, tail_bar = _reference_pair(problem, spec, T, x0=x_a, t_start=t_a)
    summary.metrics["reference_bar"] = max(head_bar, tail_bar)
    final_rel = float(np.linalg.norm(traj.x[-1] - tail.x[-1]) / np.linalg.norm(tail.x[-1]))
    summary.metrics["final_rel_error"] = final_rel

    if t_b > t_a:
        # restart on a grid that contains every sample time
        sub = max(1, int(math.ceil(((t_b - t_a) / (samples - 1)) / step)))
        fine_step = (t_b - t_a) / ((samples - 1) * sub)
        win = rk45_reference(problem.field, problem.scales, x_a, t_b, step=fine_step,
                             min_samples=min_samples, t_start=t_a)
        x_ref = win.x[::sub]
    else:
        x_ref = x_a[None, :]
    gap = float(np.abs(x_rec - x_ref).max() / np.abs(x_ref).max())
    summary.metrics["window_rel_gap"] = gap
    g = spec.gates
    if "final_rel_max" in g:
        _gate(summary.verdicts, "final_rel", final_rel <= g["final_rel_max"])
    if "window_rel_max" in g:
        _gate(summary.verdicts, "window_rel", gap <= g["window_rel_max"])
    out = _out_dir(spec)
    if out is not None:
        path = out / f"{spec.name or 'recover'}_window.csv"
        d = problem.field.d
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"x_{i + 1}" for i in range(d)] + [f"ref_{i + 1}" for i in range(d)])
            for j, t in enumerate(s):
                wr.writerow([repr(float(t))] + [repr(float(v)) for v in x_rec[j]]
                            + [repr(float(v)) for v in x_ref[j]])
        summary.files.append(str(path))
        tpath = out / f"{spec.name or 'recover'}_trajectory.csv"
        write_trajectory_csv(tpath, traj)
        summary.files.append(str(tpath))
    summary.runtime = time.perf_counter() - start
    return summary


# -- timing -----------------------------------------------------------------------

_DEFAULT_TIMING_METHODS = [
    {"label": "ua", "method": "ua", "dt": 0.1},
    {"label": "direct-fine", "method": "direct", "dt": 5e-6},
]


def run_timing(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Wall-clock per method; ``speedup_min`` bounds ``time(slow)/time(fast)``.

    ``options.speedup`` names the pair as ``"direct-fine/ua"``.  The UA time
    excludes building the decomposition, which is reported separately as
    ``setup``.
    """
    start = time.perf_counter()
    summary = SummaryReport("timing", spec.name, spec.problem)
    problem = _problem(spec, spec.eps_grid()[0])
    t0 = time.perf_counter()
    decomp = problem.decomposition(spec.solver_config(spec.dt[0]))
    summary.metrics["setup[ua]"] = time.perf_counter() - t0
    # one untimed warm-up step so lazy initialisation is not billed to a method
    _run_method(problem, spec, {"method": "ua", "dt": spec.dt[0]}, spec.dt[0], decomp)
    times = {}
    for entry in spec.options.get("methods", _DEFAULT_TIMING_METHODS):
        label = entry.get("label", entry["method"])
        traj = _run_method(problem, spec, entry, spec.T_final, decomp)
        times[label] = float(traj.meta["wall_clock"])
        summary.metrics[f"wall_clock[{label}]"] = times[label]
        summary.reports.append(ErrorReport(problem.name, problem.scales.eps, label,
                                           float(entry.get("dt", spec.dt[0])), float("nan"),
                                           times[label]))
    pair = spec.options.get("speedup", "direct-fine/ua")
    slow, fast = pair.split("/")
    ratio = _ratio(times[slow], times[fast])
    summary.metrics[f"speedup[{pair}]"] = ratio
    g = spec.gates
    if "speedup_min" in g:
        _gate(summary.verdicts, f"speedup[{pair}]", ratio >= g["speedup_min"])
    if "speedup_max" in g:
        _gate(summary.verdicts, f"speedup_max[{pair}]", ratio <= g["speedup_max"])
    out = _out_dir(spec)
    if out is not None:
        path = out / f"{spec.name or 'timing'}_timing.csv"
        write_error_reports(path, summary.reports)
        summary.files.append(str(path))
    summary.runtime = time.perf_counter() - start
    return summary


# -- map diagnostics --------------------------------------------------------------


def run_diagnostics(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Gridded ``f - D_1``, ``P_n - y`` and ``T_k`` over the two finest phases.

    Options: ``resolution`` (default 32) and ``y`` (scalar or vector slow
    state, default 0.2).  Gates: ``t1_variation_max`` bounds the change of
    ``T_1`` along the finest phase; ``t2_slow_variation_max`` does the same
    for the components of ``T_2`` listed in ``options.slow_components``
    (1-based, default 5 and 6); ``iterations_max`` bounds both sweeps.
    """
    start = time.perf_counter()
    summary = SummaryReport("diagnostics", spec.name, spec.problem)
    problem = _problem(spec, spec.eps_grid()[0])
    cfg = spec.solver_config(spec.dt[0])
    decomp = problem.decomposition(cfg)
    res = int(spec.options.get("resolution", 32))
    y = np.broadcast_to(np.asarray(spec.options.get("y", 0.2), float), (problem.field.d,)).copy()
    diag = map_diagnostics(decomp, problem.scales, y, res, cfg)
    n = decomp.n
    t1_var = float(np.abs(diag.T[n - 2] - diag.T[n - 2][:, :1, :]).max())
    comps = [c - 1 for c in spec.options.get("slow_components", [5, 6]) if c <= problem.field.d]
    t2 = diag.T[n - 1][..., comps]
    t2_var = float(np.abs(t2 - t2[:, :1, :]).max()) if comps else 0.0
    summary.metrics.update({
        "T_coarse_variation_along_fine": t1_var,
        "T_fine_slow_components_variation": t2_var,
        "max_iters_P": int(diag.iters_P.max()),
        "max_iters_D": int(diag.iters_D.max()),
        "max_abs_f_minus_D1": float(np.abs(diag.f_minus_D1).max()),
        "max_abs_P_minus_y": float(np.abs(diag.P_minus_y).max()),
    })
    g = spec.gates
    if "t1_variation_max" in g:
        _gate(summary.verdicts, "T1_independent_of_fine_phase", t1_var <= g["t1_variation_max"])
    if "t2_slow_variation_max" in g:
        _gate(summary.verdicts, "T2_slow_components", t2_var <= g["t2_slow_variation_max"])
    if "iterations_max" in g:
        _gate(summary.verdicts, "iterations",
              max(diag.iters_P.max(), diag.iters_D.max()) <= g["iterations_max"])
    out = _out_dir(spec)
    if out is not None:
        path = out / f"{spec.name or 'diagnostics'}_grid.csv"
        d = problem.field.d
        names = (["f_minus_D1", "P_minus_y"] + [f"T{k + 1}" for k in range(n)])
        arrays = [diag.f_minus_D1, diag.P_minus_y] + list(diag.T)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"theta{n - 1}", f"theta{n}"]
                        + [f"{nm}_{i + 1}" for nm in names for i in range(d)] + ["iters_P", "iters_D"])
            for i, a in enumerate(diag.grid):
                for j, b in enumerate(diag.grid):
                    row = [repr(float(a)), repr(float(b))]
                    for arr in arrays:
                        row += [repr(float(v)) for v in arr[i, j]]
                    wr.writerow(row + [int(diag.iters_P[i, j]), int(diag.iters_D[i, j])])
        summary.files.append(str(path))
    summary.runtime = time.perf_counter() - start
    return summary


# -- single solve -----------------------------------------------------------------


def run_solve(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """One run of ``options.method`` (default ``"ua"``) per step size."""
    start = time.perf_counter()
    summary = SummaryReport("solve", spec.name, spec.problem)
    problem = _problem(spec, spec.eps_grid()[0])
    method = spec.options.get("method", "ua")
    inv = problem.invariant if isinstance(problem, HamiltonianProblem) else None
    out = _out_dir(spec)
    for h in spec.dt:
        traj = _run_method(problem, spec, {"method": method, "dt": h}, spec.T_final, invariant=inv)
        summary.metrics[f"final[{_key(h)}]"] = traj.x[-1].tolist()
        summary.metrics[f"wall_clock[{_key(h)}]"] = traj.meta.get("wall_clock")
        if out is not None:
            path = out / f"{spec.name or 'solve'}_{method}_dt{_key(h)}.csv"
            write_trajectory_csv(path, traj)
            summary.files.append(str(path))
    summary.runtime = time.perf_counter() - start
    return summary


RUNNERS = {
    "convergence": run_convergence,
    "drift": run_drift,
    "compare-averaged": run_compare_averaged,
    "recover-window": run_recover_window,
    "timing": run_timing,
    "diagnostics": run_diagnostics,
    "solve": run_solve,
}


def run(spec: ExperimentSpec, workers: int = 1) -> SummaryReport:
    """Dispatch on ``spec.kind`` and write the summary next to the CSV files."""
    summary = RUNNERS[spec.kind](spec, workers=workers)
    out = _out_dir(spec)
    if out is not None:
        summary.write(out)
    return summary
