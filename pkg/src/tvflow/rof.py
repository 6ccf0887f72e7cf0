"""TV-regularized least squares (ROF) on the finite element space.

The discrete problem

    minimize  Xi_h(w) = Psi_h(w) + alpha/2 ||w - g||^2_L2

is one implicit Euler step of the flow with ``dt = 1/alpha`` and data ``g``,
so it is solved by the same primal-dual inner loop.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ErrorReport, eoc_table
from .mesh import ScalarField, build_uniform_mesh, l2_norm, lagrange_interpolate, prolongate
from .primal_dual import NEUMANN, BoundaryCondition, InnerResult, SolverParams, inner_solve
from .tv import DualField, discrete_tv_energy


@dataclass(frozen=True)
class RofProblem:
    g: ScalarField
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not np.all(np.isfinite(self.g.coeffs)):
            raise ValueError("datum must be finite")


def rof_energy(w: ScalarField, problem: RofProblem) -> float:
    """``Psi_h(w) + alpha/2 ||w - g||^2``."""
    return discrete_tv_energy(w) + 0.5 * problem.alpha * l2_norm(w - problem.g) ** 2


def rof_params(problem: RofProblem, **overrides) -> SolverParams:
    """Inner-loop parameters with ``dt = 1/alpha`` and the stable step ``tau``."""
    return SolverParams.stable(problem.g.mesh, 1.0 / problem.alpha, **overrides)


def rof_solve_full(problem: RofProblem, params: Optional[SolverParams] = None,
                   bc: BoundaryCondition = NEUMANN,
                   lambda0: Optional[DualField] = None) -> InnerResult:
    """Solve the ROF problem and return the complete inner-loop result."""
    g = problem.g
    if params is None:
        params = rof_params(problem)
    elif not math.isclose(params.dt, 1.0 / problem.alpha, rel_tol=1e-12):
        raise ValueError("params.dt must equal 1/alpha")
    lam0 = lambda0 if lambda0 is not None else DualField.zeros(g.mesh)
    return inner_solve(g, g, lam0, params, bc)


def rof_solve(problem: RofProblem, params: Optional[SolverParams] = None,
              bc: BoundaryCondition = NEUMANN) -> ScalarField:
    """Approximate discrete minimizer ``xi_h``; see :func:`rof_solve_full`."""
    return rof_solve_full(problem, params, bc).v


@dataclass
class OptimalityReport:
    worst_margin: float
    n_trials: int
    seed: int
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tolerance


def rof_optimality_test(xi: ScalarField, problem: RofProblem, n_trials: int = 20,
                        seed: int = 0, steps=(1e-3, -1e-3, 1e-2, -1e-2),
                        bc: BoundaryCondition = NEUMANN) -> OptimalityReport:
    """Probe ``Xi_h(xi + t phi) - Xi_h(xi)`` along random unit directions.

    Directions vanish on Dirichlet vertices so the perturbed fields stay
    admissible.  The smallest difference found is reported.
    """
    rng = np.random.default_rng(seed)
    mesh = xi.mesh
    free = ~bc.constrained(mesh)
    base = rof_energy(xi, problem)
    worst = math.inf
    for _ in range(n_trials):
        c = np.zeros(mesh.n_vertices)
        c[free] = rng.standard_normal(int(free.sum()))
        phi = ScalarField(mesh, c)
        phi = phi * (1.0 / l2_norm(phi))
        for t in steps:
            worst = min(worst, rof_energy(xi + phi * t, problem) - base)
    return OptimalityReport(worst, n_trials, seed)


def rof_convergence_study(g_func: Callable, alpha: float, ns: Sequence[int], n_ref: int,
                          domain=((0.0, 1.0),), cell_kind: str = "interval",
                          param_overrides: Optional[dict] = None,
                          bc: BoundaryCondition = NEUMANN) -> ErrorReport:
    """Self-convergence of ``xi_h`` against a fine-mesh reference solve.

    ``ns`` are cells per axis of the trial meshes; ``n_ref`` must be a
    multiple of each of them (nested meshes) and at least four times the
    finest.  Errors are exact L2 distances on the reference mesh.
    """
    param_overrides = param_overrides or {}
    if any(n_ref % n for n in ns) or n_ref < 4 * max(ns):
        raise ValueError("reference mesh must nest every level and be 4x finer than the finest")
    def solve(n):
        mesh = build_uniform_mesh(domain, n, cell_kind)
        prob = RofProblem(lagrange_interpolate(g_func, mesh), alpha)
        t0 = time.perf_counter()
        res = rof_solve_full(prob, rof_params(prob, **param_overrides), bc)
        return res.v, time.perf_counter() - t0

    ref, _ = solve(n_ref)
    errors, hs, runtimes = [], [], []
    for n in ns:
        xi, rt = solve(n)
        errors.append(l2_norm(prolongate(xi, ref.mesh) - ref))
        hs.append(xi.mesh.spacing[0])
        runtimes.append(rt)
    return eoc_table(errors, hs, runtimes=runtimes)
