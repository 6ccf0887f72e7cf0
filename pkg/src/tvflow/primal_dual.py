"""Primal-dual inner iteration for one implicit TV step.

One implicit Euler step of the TV flow, and equally one ROF problem, is the
minimization of

    J(v) = 1/(2 dt) ||v - g||^2 + Psi_h(v)

over the finite element space.  The inner loop alternates an explicit
projected update of the dual variable ``lam`` (nodal unit ball) with a mass
matrix solve for ``v``::

    lam <- P(lam + (tau / sigma) * grad v*),        v* = 2 v^l - v^(l-1)
    (1/tau + 1/dt) M v = (1/tau) M v^l + (1/dt) M g - G^T W lam

and is stopped as soon as

    ||dv / tau||_L2 <= c_v * sqrt(dt)   and   ||r||_L1 <= c_r * dt,
    r = -(sigma / tau) dlam - grad(v^L - 2 v^(L-1) + v^(L-2)).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from ._kernels import projected_dual_step, residual_and_l1
from .mesh import Mesh, MeshMismatchError, ScalarField, _local_mass, l2_norm
from .tv import DualField, dual_l1_norm, project_values

log = logging.getLogger(__name__)

DIRECT_SOLVE_MAX_VERTICES = 100_000
STABILITY_MARGIN = 0.9


class LinearSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryCondition:
    """Either natural (``neumann``) or fixed nodal values on the boundary.

    For ``dirichlet`` the ``values`` callable is evaluated at the boundary
    vertices; ``None`` means homogeneous data.
    """

    kind: str = "neumann"
    values: Optional[object] = None

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")

    def constrained(self, mesh: Mesh) -> np.ndarray:
        if self.kind == "neumann":
            return np.zeros(mesh.n_vertices, dtype=bool)
        return np.asarray(mesh.boundary_vertex_flags)

    def boundary_values(self, mesh: Mesh) -> np.ndarray:
        """Prescribed values on the constrained vertices (empty for Neumann)."""
        mask = self.constrained(mesh)
        if self.values is None:
            return np.zeros(int(mask.sum()))
        if callable(self.values):
            vals = self.values(mesh.vertices[mask])
        else:
            vals = self.values
        return np.broadcast_to(np.asarray(vals, dtype=float), (int(mask.sum()),)).copy()


NEUMANN = BoundaryCondition("neumann")
DIRICHLET_ZERO = BoundaryCondition("dirichlet")


@dataclass(frozen=True)
class SolverParams:
    """Step sizes and stopping constants of the inner loop.

    ``c_stop_v`` / ``c_stop_r`` left as ``None`` are resolved by the caller to
    ``0.1 * max(1, ||data||_L2)``.
    """

    dt: float
    tau: float
    sigma: float = 0.1
    c_stop_v: Optional[float] = None
    c_stop_r: Optional[float] = None
    max_inner_iters: int = 100_000
    linear_solver_tol: float = 1e-10

    def __post_init__(self):
        for name in ("dt", "tau", "sigma", "linear_solver_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_stop_v", "c_stop_r"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be at least 1")

    @classmethod
    def defaults_for_spacing(cls, h: float, **overrides) -> "SolverParams":
        """``dt = tau = sqrt(2) h / 10`` and ``sigma = 0.1`` for grid spacing ``h``."""
        dt = math.sqrt(2.0) * h / 10.0
        kw = dict(dt=dt, tau=dt, sigma=0.1)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def stable(cls, mesh: Mesh, dt: float, sigma: float = 0.1, **overrides) -> "SolverParams":
        """``tau = dt`` capped so that ``tau^2 / sigma * ||grad||^2 <= STABILITY_MARGIN``.

        ``||grad||^2`` is the largest generalized eigenvalue of the discrete
        gradient against the mass matrix (see :func:`gradient_norm_bound`).
        """
        tau_max = math.sqrt(STABILITY_MARGIN * sigma / gradient_norm_bound(mesh))
        kw = dict(dt=dt, tau=min(dt, tau_max), sigma=sigma)
        kw.update(overrides)
        return cls(**kw)

    def resolved(self, data_norm: float) -> "SolverParams":
        c = 0.1 * max(1.0, float(data_norm))
        return replace(self,
                       c_stop_v=self.c_stop_v if self.c_stop_v is not None else c,
                       c_stop_r=self.c_stop_r if self.c_stop_r is not None else c)


def gradient_norm_bound(mesh: Mesh) -> float:
    """Upper bound for ``max w^T G^T W G w / w^T M w`` over nonzero ``w``.

    Computed cell by cell from the local stiffness and mass matrices; the
    bound is attained on uniform interval and quad meshes.
    """
    B = mesh.local_gradients
    K = np.einsum("cbak,cb,cbdk->cad", B, mesh.nodal_weights, B)
    Mloc = _local_mass(mesh)
    Linv = np.linalg.inv(np.linalg.cholesky(Mloc))
    A = Linv @ K @ np.swapaxes(Linv, 1, 2)
    return float(np.linalg.eigvalsh(A)[:, -1].max())


@dataclass
class StepConstraint:
    ratio: float
    warning: bool
    pd_product: float


def check_step_constraint(params: SolverParams, mesh: Mesh) -> StepConstraint:
    """Compare ``tau`` with ``sigma * h`` (inverse-inequality constant taken as 1).

    Purely informational.  ``pd_product`` is ``tau^2 / sigma * ||grad||^2``;
    values above 1 leave the inner iteration without a convergence guarantee.
    """
    ratio = params.tau / (params.sigma * mesh.h)
    product = params.tau ** 2 / params.sigma * gradient_norm_bound(mesh)
    warn = ratio > 1.0
    if warn:
        log.info("tau / (sigma h) = %.3g exceeds 1", ratio)
    if product > 1.0:
        log.warning("tau^2/sigma * ||grad||^2 = %.3g > 1: the inner loop may not converge", product)
    return StepConstraint(ratio, warn, product)


@dataclass
class InnerResult:
    v: ScalarField
    lam: DualField
    iters: int
    residual_r: DualField
    stop_v_value: float
    stop_r_value: float
    converged: bool
    dv_norms: list = field(default_factory=list)
    dlam_norms: list = field(default_factory=list)
    v_iterates: list = field(default_factory=list)


class MassSolver:
    """Solves ``c * M[free, free] x = b`` for the free (unconstrained) vertices.

    The mass matrix block never changes, so it is factorized once and reused
    for every scaling ``c``.  Tensor-product meshes (intervals, quads) whose
    constrained set is empty or the whole boundary use the Kronecker
    structure ``M = M_y (x) M_x`` and two small dense solves; other meshes use
    a sparse LU factorization, or conjugate gradients above
    ``DIRECT_SOLVE_MAX_VERTICES`` unknowns.
    """

    def __init__(self, mesh: Mesh, constrained: np.ndarray, tol: float = 1e-10):
        self.mesh = mesh
        self.constrained = np.asarray(constrained, dtype=bool)
        self.free = np.flatnonzero(~self.constrained)
        self.fixed = np.flatnonzero(self.constrained)
        M = mesh.mass_matrix
        self.M_ff = M[self.free][:, self.free].tocsc()
        self.M_fb = M[self.free][:, self.fixed].tocsr()
        self.tol = tol
        self._lu = None
        self._kron = self._kronecker_factors()
        if self._kron is None and len(self.free) <= DIRECT_SOLVE_MAX_VERTICES:
            self._lu = spla.splu(self.M_ff, permc_spec="MMD_AT_PLUS_A")

    def _kronecker_factors(self):
        mesh = self.mesh
        if mesh.cell_kind == "triangle":
            return None
        if len(self.fixed) == 0:
            trim = 0
        elif np.array_equal(self.constrained, mesh.boundary_vertex_flags):
            trim = 1
        else:
            return None
        inverses = []
        for axis in range(mesh.dim):
            n = mesh.n_per_axis[axis]
            hx = mesh.spacing[axis]
            m1 = np.diag(np.full(n + 1, 4.0)) + np.diag(np.ones(n), 1) + np.diag(np.ones(n), -1)
            m1[0, 0] = m1[-1, -1] = 2.0
            m1 *= hx / 6.0
            if trim:
                m1 = m1[1:-1, 1:-1]
            if m1.size == 0:
                return None
            inverses.append(np.linalg.inv(m1))
        return inverses

    def solve(self, b_free: np.ndarray, scale: float = 1.0, x0=None) -> np.ndarray:
        if self._kron is not None:
            if self.mesh.dim == 1:
                return (self._kron[0] @ b_free) / scale
            inv_x, inv_y = self._kron
            B = b_free.reshape(inv_y.shape[0], inv_x.shape[0])
            return (inv_y @ B @ inv_x).reshape(-1) / scale
        if self._lu is not None:
            return self._lu.solve(b_free) / scale
        x, info = spla.cg(self.M_ff, b_free / scale, x0=x0, rtol=self.tol,
                          maxiter=10 * len(self.free))
        if info != 0:
            raise LinearSolverError(f"conjugate gradients did not converge (info={info})")
        return x


_solver_cache: dict = {}


def mass_solver(mesh: Mesh, constrained: np.ndarray, tol: float = 1e-10) -> MassSolver:
    key = (id(mesh), np.asarray(constrained).tobytes(), tol)
    cached = _solver_cache.get(key)
    if cached is None or cached.mesh is not mesh:
        cached = MassSolver(mesh, constrained, tol)
        _solver_cache.clear()  # one live mesh at a time keeps memory bounded
        _solver_cache[key] = cached
    return cached


def lambda_update(lambda_prev: DualField, v_star: ScalarField, params: SolverParams) -> DualField:
    grad = (v_star.mesh.gradient_operator @ v_star.coeffs).reshape(lambda_prev.values.shape)
    return DualField(lambda_prev.mesh,
                     project_values(lambda_prev.values + (params.tau / params.sigma) * grad))


def v_update(v_prev: ScalarField, lam: DualField, g: ScalarField, params: SolverParams,
             bc: BoundaryCondition = NEUMANN) -> ScalarField:
    mesh = v_prev.mesh
    solver = mass_solver(mesh, bc.constrained(mesh), params.linear_solver_tol)
    M = mesh.mass_matrix
    scale = 1.0 / params.tau + 1.0 / params.dt
    w = lam.values * mesh.nodal_weights[:, :, None]
    rhs = (M @ (v_prev.coeffs / params.tau + g.coeffs / params.dt)
           - mesh.gradient_operator.T @ w.reshape(-1))
    v = np.empty(mesh.n_vertices)
    v[solver.fixed] = bc.boundary_values(mesh)
    b = rhs[solver.free] - scale * (solver.M_fb @ v[solver.fixed])
    v[solver.free] = solver.solve(b, scale)
    return ScalarField(mesh, v)


def residual_r(lambda_trace, v_trace, params: SolverParams) -> DualField:
    """Residual ``-(sigma/tau) (lam^L - lam^(L-1)) - grad(v^L - 2 v^(L-1) + v^(L-2))``.

    ``lambda_trace`` holds the last two dual iterates and ``v_trace`` the last
    three primal iterates, oldest first.
    """
    lam_prev, lam = lambda_trace[-2], lambda_trace[-1]
    v2, v1, v0 = v_trace[-3], v_trace[-2], v_trace[-1]
    mesh = lam.mesh
    d2v = v0.coeffs - 2.0 * v1.coeffs + v2.coeffs
    grad = (mesh.gradient_operator @ d2v).reshape(lam.values.shape)
    return DualField(mesh, -(params.sigma / params.tau) * (lam.values - lam_prev.values) - grad)


def stopping_values(delta_v: ScalarField, r: DualField, params: SolverParams):
    return l2_norm(delta_v) / params.tau, dual_l1_norm(r)


def stopping_check(delta_v: ScalarField, r: DualField, params: SolverParams) -> bool:
    sv, sr = stopping_values(delta_v, r, params)
    return sv <= params.c_stop_v * math.sqrt(params.dt) and sr <= params.c_stop_r * params.dt


def inner_solve(g: ScalarField, v0: ScalarField, lambda0: DualField, params: SolverParams,
                bc: BoundaryCondition = NEUMANN, record: bool = False,
                keep_iterates: bool = False) -> InnerResult:
    """Run the inner loop from ``(v0, lambda0)`` for the data ``g``.

    Stopping is tested from the second iteration on.  If ``max_inner_iters``
    is reached the last iterate is returned with ``converged=False``.
    With ``record`` the L2 norm of every primal increment and the discrete
    norm of every dual increment are kept; ``keep_iterates`` additionally
    stores every primal coefficient vector ``v^l``, ``l >= 1``.
    """
    mesh = g.mesh
    if v0.mesh is not mesh or lambda0.mesh is not mesh:
        raise MeshMismatchError("fields live on different meshes")
    if params.c_stop_v is None or params.c_stop_r is None:
        params = params.resolved(l2_norm(g))
    if not lambda0.feasible:
        raise ValueError("initial dual variable must lie in the unit ball")

    dim = mesh.dim
    G = mesh.gradient_operator
    GT = mesh.gradient_operator_T
    M = mesh.mass_matrix
    node_w = mesh.nodal_weights.reshape(-1)
    wts = np.repeat(node_w, dim)
    solver = mass_solver(mesh, bc.constrained(mesh), params.linear_solver_tol)
    free, fixed = solver.free, solver.fixed
    tau, dt, sigma = params.tau, params.dt, params.sigma
    scale = 1.0 / tau + 1.0 / dt
    step = tau / sigma
    coef = sigma / tau
    tol_v = params.c_stop_v * math.sqrt(dt)
    tol_r = params.c_stop_r * dt

    fixed_vals = bc.boundary_values(mesh)
    bdry_rhs = scale * (solver.M_fb @ fixed_vals)
    Mg_dt = (M @ g.coeffs) / dt

    v = v0.coeffs.copy()
    if len(fixed):
        v[fixed] = fixed_vals
    Mv = M @ v
    grad_v = G @ v
    grad_v_old = grad_v_old2 = grad_v
    lam = lambda0.values.reshape(-1).copy()
    lam_new = np.empty_like(lam)
    q = np.empty_like(lam)
    r = np.zeros_like(lam)
    dv = np.zeros_like(v)

    dv_norms, dlam_norms, v_iterates = [], [], []
    sv = sr = math.inf
    converged = False
    L = 0
    for L in range(1, params.max_inner_iters + 1):
        projected_dual_step(lam, grad_v, grad_v_old, L > 1, step, dim, lam_new)
        np.multiply(wts, lam_new, out=q)
        rhs = Mv / tau + Mg_dt - GT @ q
        v_new = np.empty_like(v)
        v_new[fixed] = fixed_vals
        v_new[free] = solver.solve(rhs[free] - bdry_rhs, scale)
        grad_new = G @ v_new
        Mv_new = M @ v_new

        dv = v_new - v
        dv_l2 = math.sqrt(max(dv @ (Mv_new - Mv), 0.0))
        if record:
            dl = lam_new - lam
            dv_norms.append(dv_l2)
            dlam_norms.append(math.sqrt(dl @ (wts * dl)))
        if keep_iterates:
            v_iterates.append(v_new)
        if L >= 2:
            sv = dv_l2 / tau
            if sv <= tol_v:
                sr = residual_and_l1(lam_new, lam, grad_new, grad_v, grad_v_old,
                                     coef, node_w, dim, r)
                converged = sr <= tol_r
            else:
                sr = math.inf
        v, Mv = v_new, Mv_new
        grad_v_old2, grad_v_old, grad_v = grad_v_old, grad_v, grad_new
        lam, lam_new = lam_new, lam
        if converged:
            break

    if not converged:
        sv = dv_l2 / tau
        # lam_new now holds lam^(L-1) after the swap
        sr = residual_and_l1(lam, lam_new, grad_v, grad_v_old, grad_v_old2,
                             coef, node_w, dim, r)
        log.warning("inner loop stopped at the iteration cap %d without meeting the criterion",
                    params.max_inner_iters)
    shape = lambda0.values.shape
    return InnerResult(
        v=ScalarField(mesh, v),
        lam=DualField(mesh, lam.reshape(shape)),
        iters=L,
        residual_r=DualField(mesh, r.reshape(shape)),
        stop_v_value=sv,
        stop_r_value=sr,
        converged=converged,
        dv_norms=dv_norms,
        dlam_norms=dlam_norms,
        v_iterates=v_iterates,
    )
