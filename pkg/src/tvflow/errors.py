"""Error norms against exact solutions and experimental orders of convergence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .mesh import Mesh, ScalarField

SUBDIVISIONS = 4
GAUSS_POINTS = 4


def _composite_1d(subdiv: int = SUBDIVISIONS, npts: int = GAUSS_POINTS):
    """Composite Gauss rule on [0, 1]; weights sum to 1."""
    g, w = np.polynomial.legendre.leggauss(npts)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    pts = (np.arange(subdiv)[:, None] + g[None, :]).ravel() / subdiv
    wts = np.tile(w, subdiv) / subdiv
    return pts, wts


def reference_rule(cell_kind: str, subdiv: int = SUBDIVISIONS, npts: int = GAUSS_POINTS):
    """Quadrature points in reference coordinates and weights normalized to sum 1.

    Intervals and quads use a tensor composite Gauss rule over a uniform
    ``subdiv``-fold split.  Triangles use the same rule on the unit square
    collapsed onto the triangle (``(s, t) -> (s (1 - t), t)`` style Duffy map).
    """
    p1, w1 = _composite_1d(subdiv, npts)
    if cell_kind == "interval":
        return p1[:, None], w1
    X, Y = np.meshgrid(p1, p1, indexing="xy")
    WX, WY = np.meshgrid(w1, w1, indexing="xy")
    if cell_kind == "quad":
        return np.stack([X.ravel(), Y.ravel()], axis=1), (WX * WY).ravel()
    s, t = X.ravel(), Y.ravel()
    pts = np.stack([s * (1.0 - t), t], axis=1)
    wts = (WX * WY).ravel() * (1.0 - t)
    return pts, wts / wts.sum()


def _reference_basis(cell_kind: str, xi: np.ndarray) -> np.ndarray:
    if cell_kind == "interval":
        return np.stack([1.0 - xi[:, 0], xi[:, 0]], axis=1)
    if cell_kind == "quad":
        x, y = xi[:, 0], xi[:, 1]
        return np.stack([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y], axis=1)
    return np.stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]], axis=1)


class RefinedQuadrature:
    """Composite quadrature over every cell of a mesh.

    Physical points have shape ``(n_cells, n_q, dim)`` and weights
    ``(n_cells, n_q)`` (they already include the cell measure).
    """

    def __init__(self, mesh: Mesh, subdiv: int = SUBDIVISIONS, npts: int = GAUSS_POINTS):
        self.mesh = mesh
        xi, w = reference_rule(mesh.cell_kind, subdiv, npts)
        self.basis = _reference_basis(mesh.cell_kind, xi)       # (n_q, n_local)
        pts = mesh.vertices[mesh.cells]
        if mesh.cell_kind == "triangle":
            J = np.stack([pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]], axis=2)
            self.points = pts[:, 0][:, None, :] + np.einsum("cij,qj->cqi", J, xi)
        else:
            lo = pts[:, 0]
            span = pts[:, -1] - pts[:, 0]
            self.points = lo[:, None, :] + xi[None, :, :] * span[:, None, :]
        self.weights = mesh.cell_measures[:, None] * w[None, :]
        self._flat_points = self.points.reshape(-1, mesh.dim)

    def field_values(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs[self.mesh.cells] @ self.basis.T

    def function_values(self, f: Callable) -> np.ndarray:
        return np.asarray(f(self._flat_points), dtype=float).reshape(self.weights.shape)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def l2_distance(self, coeffs: np.ndarray, f: Callable) -> float:
        diff = self.field_values(coeffs) - self.function_values(f)
        return math.sqrt(self.integrate(diff * diff))


def l2_error(u: ScalarField, f: Callable, quad: Optional[RefinedQuadrature] = None) -> float:
    quad = quad or RefinedQuadrature(u.mesh)
    return quad.l2_distance(u.coeffs, f)


def error_Linf_L2(trace, sol, quad: Optional[RefinedQuadrature] = None) -> float:
    """Maximum over the stored time levels of ``||u_h^k - u(., t^k)||_L2``."""
    if sol.dim != trace.mesh.dim:
        raise ValueError("exact solution and mesh have different dimensions")
    quad = quad or RefinedQuadrature(trace.mesh)
    worst = 0.0
    for k, coeffs in zip(trace.stored_steps, trace.fields):
        t = float(trace.times[k])
        worst = max(worst, quad.l2_distance(coeffs, lambda x: sol(x, t)))
    return worst


@dataclass
class ErrorReport:
    hs: List[float]
    errors: List[float]
    orders: List[float] = field(default_factory=list)
    extinction: List[Optional[float]] = field(default_factory=list)
    runtimes: List[float] = field(default_factory=list)

    @property
    def mean_order(self) -> float:
        finite = [o for o in self.orders if np.isfinite(o)]
        return float(np.mean(finite)) if finite else math.nan

    def rows(self):
        """``(h, error, order)`` rows; the coarsest level has no order."""
        out = [(self.hs[0], self.errors[0], math.nan)]
        out += [(h, e, o) for h, e, o in zip(self.hs[1:], self.errors[1:], self.orders)]
        return out


def eoc_table(errors: Sequence[float], hs: Sequence[float], **extra) -> ErrorReport:
    """Experimental orders ``log2(e_i / e_(i+1))`` between consecutive halvings.

    Pairs whose mesh sizes are not in ratio 2 get ``nan``.  Two zero errors
    give order 0.
    """
    if len(errors) != len(hs):
        raise ValueError("errors and hs must have the same length")
    orders = []
    for i in range(len(errors) - 1):
        if not math.isclose(hs[i] / hs[i + 1], 2.0, rel_tol=1e-9):
            orders.append(math.nan)
        elif errors[i] == errors[i + 1]:
            orders.append(0.0)
        elif errors[i + 1] == 0.0 or errors[i] == 0.0:
            orders.append(math.nan)
        else:
            orders.append(math.log2(errors[i] / errors[i + 1]))
    return ErrorReport(list(hs), list(errors), orders, **extra)
