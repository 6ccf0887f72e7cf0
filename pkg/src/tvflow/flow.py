"""Implicit Euler time stepping for the total variation flow.

Each step solves ``min_v 1/(2 dt) ||v - u^k||^2 + Psi_h(v)`` with the inner
primal-dual loop and records energy, sup norm and inner iteration counts.
"""
from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mesh import ScalarField, l2_norm
from .primal_dual import NEUMANN, BoundaryCondition, InnerResult, SolverParams, inner_solve
from .tv import DualField, discrete_tv_energy

log = logging.getLogger(__name__)


class IncompatibleDataError(ValueError):
    """Initial data does not match the prescribed boundary values."""


@dataclass
class FlowConfig:
    T_final: float
    bc: BoundaryCondition = NEUMANN
    ext_threshold: Optional[float] = None   # None: 1e-3 * ||u0||_inf
    warm_start: bool = True
    store_every: int = 1
    initial_dual: Optional[DualField] = None

    def __post_init__(self):
        if not self.T_final > 0:
            raise ValueError("T_final must be positive")
        if self.ext_threshold is not None and self.ext_threshold < 0:
            raise ValueError("ext_threshold must be nonnegative")
        if self.store_every < 1:
            raise ValueError("store_every must be at least 1")


@dataclass
class FlowTrace:
    """Time series of a flow run; every array has one entry per time level ``t^k``.

    Step quantities (inner iterations, stopping values) at ``k = 0`` are
    placeholders (0 / nan) since no solve produced the initial datum.
    """

    mesh: object
    params: SolverParams
    times: np.ndarray
    energies: np.ndarray
    sup_norms: np.ndarray
    oscillations: np.ndarray
    inner_iters: np.ndarray
    stop_v: np.ndarray
    stop_r: np.ndarray
    converged: np.ndarray
    stored_steps: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    extinction_time: Optional[float] = None
    ext_threshold: float = 0.0
    final_dual: Optional[DualField] = None
    runtime: float = 0.0

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def field_at(self, k: int) -> ScalarField:
        return ScalarField(self.mesh, self.fields[self.stored_steps.index(k)])


def _check_compatible(u0: ScalarField, bc: BoundaryCondition) -> None:
    if bc.kind != "dirichlet":
        return
    mask = bc.constrained(u0.mesh)
    expected = bc.boundary_values(u0.mesh)
    gap = np.max(np.abs(u0.coeffs[mask] - expected), initial=0.0)
    if gap > 1e-12 * max(1.0, np.max(np.abs(expected), initial=0.0)):
        raise IncompatibleDataError(
            f"initial data differs from the Dirichlet values by {gap:.3g} on the boundary")


def run_flow(u0: ScalarField, config: FlowConfig, params: SolverParams,
             callback=None) -> FlowTrace:
    """Run ``K = ceil(T / dt)`` implicit steps starting from ``u0``.

    Stopping constants left unset in ``params`` are fixed from ``||u0||_L2``
    for the whole run.  ``callback(k, u, inner_result)`` is called after every
    step if given.
    """
    _check_compatible(u0, config.bc)
    mesh = u0.mesh
    params = params.resolved(l2_norm(u0))
    K = max(1, math.ceil(config.T_final / params.dt - 1e-9))
    sup0 = float(np.max(np.abs(u0.coeffs)))
    threshold = config.ext_threshold if config.ext_threshold is not None else 1e-3 * sup0

    times = params.dt * np.arange(K + 1)
    energies = np.empty(K + 1)
    sups = np.empty(K + 1)
    osc = np.empty(K + 1)
    iters = np.zeros(K + 1, dtype=int)
    stop_v = np.full(K + 1, np.nan)
    stop_r = np.full(K + 1, np.nan)
    conv = np.ones(K + 1, dtype=bool)
    stored, fields = [], []

    def record(k, u):
        energies[k] = discrete_tv_energy(u)
        sups[k] = np.max(np.abs(u.coeffs))
        osc[k] = np.ptp(u.coeffs)
        if k % config.store_every == 0 or k == K:
            stored.append(k)
            fields.append(u.coeffs.copy())

    t_start = _time.perf_counter()
    u = u0
    lam0 = config.initial_dual if config.initial_dual is not None else DualField.zeros(mesh)
    lam = lam0
    record(0, u)
    for k in range(1, K + 1):
        res: InnerResult = inner_solve(u, u, lam, params, config.bc)
        u = res.v
        lam = res.lam if config.warm_start else DualField.zeros(mesh)
        iters[k] = res.iters
        stop_v[k] = res.stop_v_value
        stop_r[k] = res.stop_r_value
        conv[k] = res.converged
        if not res.converged:
            log.warning("step %d accepted without meeting the stopping criterion", k)
        record(k, u)
        if callback is not None:
            callback(k, u, res)

    trace = FlowTrace(mesh=mesh, params=params, times=times, energies=energies,
                      sup_norms=sups, oscillations=osc, inner_iters=iters,
                      stop_v=stop_v, stop_r=stop_r, converged=conv,
                      stored_steps=stored, fields=fields, ext_threshold=threshold,
                      final_dual=res.lam, runtime=_time.perf_counter() - t_start)
    trace.extinction_time = detect_extinction(trace, threshold)
    return trace


def detect_extinction(trace: FlowTrace, threshold: float, quantity: str = "sup_norm"):
    """First recorded time at which ``quantity`` drops to ``threshold`` or below.

    ``quantity="oscillation"`` (max - min) detects the time a Neumann solution
    becomes flat, which is the analogue of extinction without boundary data.
    """
    values = trace.sup_norms if quantity == "sup_norm" else trace.oscillations
    hit = np.flatnonzero(values <= threshold)
    return float(trace.times[hit[0]]) if hit.size else None


@dataclass
class AnnulusDiagnostics:
    applicable: bool
    T1: Optional[float] = None
    m: Optional[float] = None


def annulus_diagnostics(trace: FlowTrace, r: float, R: float, height: float,
                        center=(0.0, 0.0), rel_tol: float = 1e-2) -> AnnulusDiagnostics:
    """Time at which the inner disk plateau catches up with the ring plateau.

    ``T1`` is the first stored time where ``max u`` over the open disk
    ``|x| < r`` is within ``rel_tol * |height|`` of ``max u`` over the open
    ring ``r < |x| < R``; ``m`` is the ring maximum there.  Traces where the
    two plateaus already agree at ``t = 0``, or never meet, are reported as
    not applicable.
    """
    x = trace.mesh.vertices - np.asarray(center)[None, :]
    rad = np.sqrt((x ** 2).sum(1))
    inner = rad < r - 1e-12
    ring = (rad > r + 1e-12) & (rad < R - 1e-12)
    if not inner.any() or not ring.any():
        return AnnulusDiagnostics(False)
    tol = rel_tol * abs(height)
    for n, (k, u) in enumerate(zip(trace.stored_steps, trace.fields)):
        gap = abs(u[ring].max() - u[inner].max())
        if gap <= tol:
            if n == 0:
                return AnnulusDiagnostics(False)
            return AnnulusDiagnostics(True, float(trace.times[k]), float(u[ring].max()))
    return AnnulusDiagnostics(False)
