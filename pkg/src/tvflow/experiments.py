"""Named experiment presets and the artifacts they write.

Every preset accepts overrides (``h``, ``dt``, ``tau``, ``sigma``,
``c_stop_v``, ``c_stop_r``, ``bc``, ``store_every``, ``warm_start``, ``T``,
``levels``, ...).  Mesh size ``h`` always means the grid spacing; the default
time step is ``dt = sqrt(2) h / 10`` and ``tau`` defaults to ``dt`` capped
by the stability bound of :meth:`SolverParams.stable`.
"""
from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import io
from .errors import ErrorReport, RefinedQuadrature, eoc_table, error_Linf_L2
from .exact import ExactSolution, annulus, single_ball, three_balls
from .flow import FlowConfig, FlowTrace, annulus_diagnostics, detect_extinction, run_flow
from .mesh import Mesh, ScalarField, build_uniform_mesh, l2_norm, lagrange_interpolate
from .primal_dual import BoundaryCondition, SolverParams
from .tv import DualField

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240601


class ConfigError(ValueError):
    """Unknown preset or invalid override."""


@dataclass(frozen=True)
class FlowPreset:
    name: str
    domain: tuple
    exact: Optional[ExactSolution]
    bc: str
    T: float
    h: float                      # default grid spacing
    coarsest_h: float             # first level of a convergence study
    cell_kind: str = "quad"
    initial: Optional[Callable] = None


def _box_indicator(x):
    return (np.abs(np.asarray(x)[:, 0]) <= 1.0).astype(float)


FLOW_PRESETS: Dict[str, FlowPreset] = {
    "ball": FlowPreset("ball", ((-3.0, 3.0), (-3.0, 3.0)), single_ball(), "dirichlet",
                       T=0.6, h=6 * 2.0 ** -5, coarsest_h=6 * 2.0 ** -2),
    "three_balls": FlowPreset("three_balls", ((-1.0, 1.0), (-1.0, 1.0)), three_balls(),
                              "dirichlet", T=0.15, h=2.0 ** -5, coarsest_h=2.0 ** -3),
    "annulus": FlowPreset("annulus", ((-1.0, 1.0), (-1.0, 1.0)), annulus(), "dirichlet",
                          T=0.9, h=2.0 ** -5, coarsest_h=2.0 ** -3),
    "inner_iters": FlowPreset("inner_iters", ((-2.0, 2.0),), None, "neumann", T=0.6,
                              h=2.0 ** -6, coarsest_h=2.0 ** -4, cell_kind="interval",
                              initial=_box_indicator),
}

ALL_PRESETS = tuple(FLOW_PRESETS) + ("compare_reg", "rof_demo")
KNOWN_OVERRIDES = {"h", "dt", "tau", "sigma", "c_stop_v", "c_stop_r", "bc", "store_every",
                   "warm_start", "T", "levels", "cell_kind", "alpha", "seed",
                   "max_inner_iters", "ext_threshold"}


def _check_overrides(overrides: dict) -> dict:
    unknown = set(overrides) - KNOWN_OVERRIDES
    if unknown:
        raise ConfigError(f"unknown override(s): {', '.join(sorted(unknown))}")
    return {k: v for k, v in overrides.items() if v is not None}


def mesh_for_spacing(domain, h: float, cell_kind: str) -> Mesh:
    """Uniform mesh whose spacing is ``h`` on every axis."""
    if not h > 0:
        raise ConfigError("h must be positive")
    ns = []
    for lo, hi in domain:
        n = (hi - lo) / h
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ConfigError(f"h = {h} does not divide the domain side {hi - lo}")
        ns.append(int(round(n)))
    return build_uniform_mesh(domain, ns, cell_kind)


def solver_params(mesh: Mesh, ov: dict, dt_default: Optional[float] = None,
                  sigma_default: float = 0.1) -> SolverParams:
    h = mesh.spacing[0]
    dt = float(ov.get("dt", dt_default if dt_default is not None else math.sqrt(2.0) * h / 10))
    sigma = float(ov.get("sigma", sigma_default))
    extra = {k: ov[k] for k in ("c_stop_v", "c_stop_r") if k in ov}
    if "max_inner_iters" in ov:
        extra["max_inner_iters"] = int(ov["max_inner_iters"])
    try:
        if "tau" in ov:
            return SolverParams(dt=dt, tau=float(ov["tau"]), sigma=sigma, **extra)
        return SolverParams.stable(mesh, dt, sigma=sigma, **extra)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _bc(kind: str) -> BoundaryCondition:
    if kind not in ("neumann", "dirichlet"):
        raise ConfigError(f"unknown boundary condition {kind!r}")
    return BoundaryCondition(kind)


@dataclass
class FlowRun:
    preset: FlowPreset
    mesh: Mesh
    params: SolverParams
    config: FlowConfig
    trace: FlowTrace
    error: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)


def flow_setup(name: str, overrides: Optional[dict] = None):
    """Mesh, initial field, flow configuration and parameters of a flow preset."""
    if name not in FLOW_PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    preset = FLOW_PRESETS[name]
    ov = _check_overrides(dict(overrides or {}))
    mesh = mesh_for_spacing(preset.domain, float(ov.get("h", preset.h)),
                            ov.get("cell_kind", preset.cell_kind))
    init = preset.initial or preset.exact.initial()
    u0 = lagrange_interpolate(init, mesh)
    if name == "inner_iters":
        h = mesh.spacing[0]
        ov.setdefault("dt", h / 10)
        ov.setdefault("tau", ov["dt"])
        params = solver_params(mesh, ov, sigma_default=1.0)
    else:
        params = solver_params(mesh, ov)
    try:
        config = FlowConfig(T_final=float(ov.get("T", preset.T)), bc=_bc(ov.get("bc", preset.bc)),
                            warm_start=_as_bool(ov.get("warm_start", True)),
                            store_every=int(ov.get("store_every", 1)),
                            ext_threshold=ov.get("ext_threshold"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return preset, mesh, u0, config, params


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "on", "yes"):
        return True
    if s in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"cannot read {v!r} as on/off")


def run_flow_preset(name: str, overrides: Optional[dict] = None) -> FlowRun:
    preset, mesh, u0, config, params = flow_setup(name, overrides)
    trace = run_flow(u0, config, params)
    run = FlowRun(preset, mesh, trace.params, config, trace)
    if preset.exact is not None and config.store_every == 1:
        run.error = error_Linf_L2(trace, preset.exact)
    if name == "annulus":
        p = preset.exact.params
        d = annulus_diagnostics(trace, p["r"], p["R"], p["M"])
        run.diagnostics.update(annulus_applicable=d.applicable, T1=d.T1, m=d.m)
    if preset.bc == "neumann":
        run.diagnostics["flat_time"] = detect_extinction(trace, trace.ext_threshold, "oscillation")
    return run


def convergence_study(name: str, overrides: Optional[dict] = None) -> ErrorReport:
    """``L^inf(L^2)`` errors over ``levels`` successive halvings of ``h``."""
    if name not in FLOW_PRESETS or FLOW_PRESETS[name].exact is None:
        raise ConfigError(f"no exact solution for preset {name!r}")
    ov = _check_overrides(dict(overrides or {}))
    levels = int(ov.pop("levels", 3))
    if levels < 2:
        raise ConfigError("a convergence study needs at least two levels")
    h0 = float(ov.pop("h", FLOW_PRESETS[name].coarsest_h))
    ov.pop("dt", None)   # dt follows h on every level
    ov.pop("tau", None)
    errors, hs, ext, runtimes = [], [], [], []
    for i in range(levels):
        run = run_flow_preset(name, dict(ov, h=h0 / 2 ** i, store_every=1))
        errors.append(run.error)
        hs.append(run.mesh.spacing[0])
        ext.append(run.trace.extinction_time)
        runtimes.append(run.trace.runtime)
    return eoc_table(errors, hs, extinction=ext, runtimes=runtimes)


# -- inner loop initialization ---------------------------------------------

def subdifferential_dual(mesh: Mesh) -> DualField:
    """Piecewise linear flux in the subdifferential of ``chi_[-1,1]`` on ``(-2, 2)``.

    ``z = x + 2`` on ``(-2, -1)``, ``-x`` on ``(-1, 1)`` and ``x - 2`` on
    ``(1, 2)``, sampled at the vertices of every cell.
    """
    x = mesh.vertices[mesh.cells][:, :, 0]
    z = np.where(x < -1.0, x + 2.0, np.where(x < 1.0, -x, x - 2.0))
    return DualField(mesh, z[:, :, None])


def iteration_spikes(iters: np.ndarray, factor: float = 10.0,
                     fraction: float = 0.1) -> List[int]:
    """Steps whose inner iteration count stands out from the run.

    A spike needs at least ``factor`` times the median count and at least
    ``fraction`` of the largest count after the initial transient.  The
    transient (the run of steps above ``factor`` times the median starting
    at step 1) is skipped since it reflects the initialization, not the
    dynamics.  The second threshold drops the smaller bumps that mark
    plateaus merging in 1D.
    """
    counts = np.asarray(iters[1:])
    level = factor * max(np.median(counts), 1.0)
    high = counts >= level
    k = 0
    while k < len(high) and high[k]:
        k += 1
    rest = counts[k:]
    if rest.size == 0:
        return []
    threshold = max(level, fraction * rest.max())
    return [int(i + k + 1) for i in np.flatnonzero(rest >= threshold)]


@dataclass
class InnerItersReport:
    first_step_zero: int
    first_step_subdiff: int
    converged_zero: bool
    converged_subdiff: bool
    flat_step: Optional[int]
    spikes_zero: List[int]
    spikes_subdiff: List[int]
    traces: Dict[str, FlowTrace] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.first_step_zero / max(self.first_step_subdiff, 1)

    def spike_near_flat(self, window: int = 3) -> bool:
        if self.flat_step is None:
            return False
        return any(abs(s - self.flat_step) <= window for s in self.spikes_subdiff)


def inner_iters_experiment(overrides: Optional[dict] = None) -> InnerItersReport:
    """First-step iteration counts for the zero and the subdifferential initial dual.

    Later steps are warm started.  The solution becomes flat (Neumann
    analogue of extinction) when the oscillation ``max u - min u`` falls below
    the extinction threshold; the iteration count spikes there.
    """
    ov = dict(overrides or {})
    ov.setdefault("store_every", 10 ** 9)
    traces = {}
    for label in ("zero", "subdiff"):
        preset, mesh, u0, config, params = flow_setup("inner_iters", ov)
        if label == "subdiff":
            config = replace(config, initial_dual=subdifferential_dual(mesh))
        traces[label] = run_flow(u0, config, params)
    tz, ts = traces["zero"], traces["subdiff"]
    flat = detect_extinction(ts, ts.ext_threshold, "oscillation")
    flat_step = int(round(flat / ts.params.dt)) if flat is not None else None
    return InnerItersReport(
        first_step_zero=int(tz.inner_iters[1]), first_step_subdiff=int(ts.inner_iters[1]),
        converged_zero=bool(tz.converged[1]), converged_subdiff=bool(ts.converged[1]),
        flat_step=flat_step, spikes_zero=iteration_spikes(tz.inner_iters),
        spikes_subdiff=iteration_spikes(ts.inner_iters), traces=traces)


# -- artifacts ---------------------------------------------------------------

def _checksums(paths) -> dict:
    return {Path(p).name: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths}


def _params_dict(params: SolverParams) -> dict:
    return {k: getattr(params, k) for k in ("dt", "tau", "sigma", "c_stop_v", "c_stop_r",
                                             "max_inner_iters", "linear_solver_tol")}


@dataclass
class ExperimentResult:
    name: str
    out_dir: Path
    summary: dict
    converged: bool
    files: List[Path]


def run_experiment(name: str, overrides: Optional[dict] = None,
                   out_dir=".") -> ExperimentResult:
    """Run a preset and write CSV, VTK, gnuplot and a JSON manifest to ``out_dir``.

    ``name`` is one of :data:`ALL_PRESETS` or ``convergence:<preset>``.
    """
    overrides = _check_overrides(dict(overrides or {}))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(overrides.get("seed", DEFAULT_SEED))
    t0 = time.perf_counter()
    files: List[Path] = []
    summary: dict = {}
    converged = True
    manifest = {"experiment": name, "overrides": overrides, "seed": seed}

    if name.startswith("convergence:"):
        target = name.split(":", 1)[1]
        if target == "rof":
            from .rof import rof_convergence_study
            alpha = float(overrides.get("alpha", 20.0))
            levels = int(overrides.get("levels", 4))
            ns = [16 * 2 ** i for i in range(levels)]
            report = rof_convergence_study(lambda x: (x[:, 0] >= 0.5).astype(float), alpha,
                                           ns, 4 * ns[-1])
        else:
            report = convergence_study(target, overrides)
        files.append(io.write_table_csv(report, out / "table.csv"))
        files.append(io.write_gnuplot(out / "table.gp", "table.csv", "table"))
        summary = {"h": report.hs, "errors": report.errors, "orders": report.orders,
                   "mean_order": report.mean_order, "extinction": report.extinction,
                   "runtimes": report.runtimes}
    elif name == "inner_iters":
        rep = inner_iters_experiment(overrides)
        for label, tr in rep.traces.items():
            files.append(io.write_trace_csv(tr, out / f"trace_{label}.csv"))
            files.append(io.write_gnuplot(out / f"trace_{label}.gp", f"trace_{label}.csv"))
            converged &= bool(tr.converged.all())
        summary = {"first_step_zero": rep.first_step_zero,
                   "first_step_subdiff": rep.first_step_subdiff, "ratio": rep.ratio,
                   "flat_step": rep.flat_step, "spikes_zero": rep.spikes_zero,
                   "spikes_subdiff": rep.spikes_subdiff,
                   "spike_near_flat": rep.spike_near_flat()}
        manifest["params"] = _params_dict(rep.traces["zero"].params)
    elif name in FLOW_PRESETS:
        run = run_flow_preset(name, overrides)
        tr = run.trace
        files.append(io.write_trace_csv(tr, out / "trace.csv"))
        files.append(io.write_gnuplot(out / "trace.gp", "trace.csv"))
        files.append(io.write_vtk(ScalarField(run.mesh, tr.fields[0]), out / "u_initial.vtk"))
        files.append(io.write_vtk(ScalarField(run.mesh, tr.fields[-1]), out / "u_final.vtk"))
        converged = bool(tr.converged.all())
        summary = {"extinction_time": tr.extinction_time, "steps": tr.n_steps,
                   "error_Linf_L2": run.error, "total_inner_iters": int(tr.inner_iters.sum()),
                   "energy_monotone": bool(np.all(np.diff(tr.energies) <= 1e-8 * max(1.0, tr.energies[0]))),
                   **run.diagnostics}
        manifest["params"] = _params_dict(run.params)
        manifest["mesh"] = {"domain": run.preset.domain, "n_per_axis": run.mesh.n_per_axis,
                            "cell_kind": run.mesh.cell_kind}
    elif name == "compare_reg":
        from .regularized import monotone_comparison_experiment
        kw = {}
        if "h" in overrides:
            kw["n"] = int(round(1.0 / float(overrides["h"])))
        if "dt" in overrides:
            kw["dt"] = float(overrides["dt"])
        if "T" in overrides:
            kw["T"] = float(overrides["T"])
        rep = monotone_comparison_experiment(**kw)
        converged = rep.inner_converged
        summary = {"unregularized": rep.unregularized_deviation,
                   "bound": rep.stationarity_bound, **{f"eps={k}": v for k, v in
                                                       rep.regularized_deviation.items()}}
        path = out / "deviation.csv"
        with path.open("w") as fh:
            fh.write("solver,deviation\n")
            fh.write(f"unregularized,{rep.unregularized_deviation!r}\n")
            for k, v in rep.regularized_deviation.items():
                fh.write(f"eps={k},{v!r}\n")
        files.append(path)
    elif name == "rof_demo":
        summary, converged, rof_files = _rof_demo(overrides, out, seed)
        files.extend(rof_files)
    else:
        raise ConfigError(f"unknown preset {name!r}")

    summary["runtime"] = time.perf_counter() - t0
    manifest["summary"] = summary
    manifest["checksums"] = _checksums(files)
    files.append(io.write_manifest(out / "manifest.json", manifest))
    return ExperimentResult(name, out, summary, converged, files)


def _rof_demo(ov: dict, out: Path, seed: int):
    from .rof import RofProblem, rof_optimality_test, rof_params, rof_solve_full
    h = float(ov.get("h", 2.0 ** -3))
    mesh = mesh_for_spacing(((0.0, 1.0),), h, "interval")
    alpha = float(ov.get("alpha", 20.0))
    g = lagrange_interpolate(lambda x: (x[:, 0] >= 0.5).astype(float), mesh)
    prob = RofProblem(g, alpha)
    extra = {k: ov[k] for k in ("c_stop_v", "c_stop_r", "sigma") if k in ov}
    params = rof_params(prob, **extra)
    res = rof_solve_full(prob, params, _bc(ov.get("bc", "neumann")))
    rep = rof_optimality_test(res.v, prob, n_trials=20, seed=seed)
    files = [io.write_vtk(res.v, out / "xi.vtk"), io.write_vtk(g, out / "g.vtk")]
    summary = {"iters": res.iters, "worst_margin": rep.worst_margin,
               "optimality_passed": rep.passed, "xi": res.v.coeffs.tolist()}
    return summary, res.converged, files
