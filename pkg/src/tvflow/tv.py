"""Discrete total variation and the discontinuous dual space.

Dual fields store one d-vector per (cell, local vertex) pair.  All integrals
over dual fields use the vertex quadrature ``sum_T |T| sum_j w_j f(z_jT)``
that also defines the discrete TV energy, so the pairing between a dual
field ``q`` and a scalar field ``w`` is ``(G w)^T W q`` with ``G`` the
cell-vertex gradient operator and ``W`` the diagonal of quadrature weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (Mesh, MeshMismatchError, ScalarField, _same_mesh,
                   vertex_quadrature_weights)

FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DualField:
    """Cellwise vector field sampled at cell vertices, shape ``(n_cells, n_local, dim)``."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        m = self.mesh
        v = np.asarray(self.values, dtype=float)
        shape = (m.n_cells, m.n_local, m.dim)
        if v.size != np.prod(shape):
            raise ValueError(f"dual values must have shape {shape}")
        object.__setattr__(self, "values", v.reshape(shape))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "DualField":
        return cls(mesh, np.zeros((mesh.n_cells, mesh.n_local, mesh.dim)))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def feasible(self) -> bool:
        return bool(dual_sup_norm(self) <= 1.0 + FEASIBILITY_TOL)

    def _other(self, other):
        if isinstance(other, DualField):
            _same_mesh(self, other)
            return other.values
        return other

    def __add__(self, other):
        return DualField(self.mesh, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return DualField(self.mesh, self.values - self._other(other))

    def __mul__(self, c):
        return DualField(self.mesh, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return DualField(self.mesh, -self.values)


@dataclass(frozen=True)
class QuadratureRule:
    cell_kind: str
    weights: np.ndarray


def quadrature_weights(cell_kind: str) -> QuadratureRule:
    return QuadratureRule(cell_kind, vertex_quadrature_weights(cell_kind))


def nodal_magnitudes(values: np.ndarray) -> np.ndarray:
    """Euclidean length of each nodal vector; last axis is the vector axis."""
    return np.sqrt(np.sum(values * values, axis=-1))


def gradient_values(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    """Cell-vertex gradients of a coefficient vector, shape ``(n_cells, n_local, dim)``."""
    return (mesh.gradient_operator @ coeffs).reshape(mesh.n_cells, mesh.n_local, mesh.dim)


def grad_to_dual(w: ScalarField) -> DualField:
    return DualField(w.mesh, gradient_values(w.mesh, w.coeffs))


def discrete_tv_energy(w: ScalarField) -> float:
    """Vertex-quadrature total variation ``sum_T |T| sum_j w_j |grad w|(z_jT)``."""
    mesh = w.mesh
    mags = nodal_magnitudes(gradient_values(mesh, w.coeffs))
    return float(np.sum(mesh.nodal_weights * mags))


def inner_h(p: DualField, q: DualField) -> float:
    _same_mesh(p, q)
    dots = np.sum(p.values * q.values, axis=-1)
    return float(np.sum(p.mesh.nodal_weights * dots))


def norm_h(q: DualField) -> float:
    return float(np.sqrt(inner_h(q, q)))


def apply_div_transpose(q: DualField) -> np.ndarray:
    """Load vector ``b`` with ``b[i]`` equal to the pairing of ``q`` with basis function ``i``."""
    mesh = q.mesh
    weighted = q.values * mesh.nodal_weights[:, :, None]
    return mesh.gradient_operator.T @ weighted.reshape(-1)


def dual_pairing(q: DualField, w: ScalarField) -> float:
    if q.mesh is not w.mesh:
        raise MeshMismatchError("fields live on different meshes")
    return inner_h(q, grad_to_dual(w))


def project_values(values: np.ndarray) -> np.ndarray:
    """Nodal projection ``v / max(1, |v|)`` onto the closed unit ball."""
    mags = nodal_magnitudes(values)
    return values / np.maximum(1.0, mags)[..., None]


def project_unit_ball(q: DualField) -> DualField:
    return DualField(q.mesh, project_values(q.values))


def dual_sup_norm(q: DualField) -> float:
    if q.values.size == 0:
        return 0.0
    return float(nodal_magnitudes(q.values).max())


def dual_l1_norm(q: DualField) -> float:
    return float(np.sum(q.mesh.nodal_weights * nodal_magnitudes(q.values)))
