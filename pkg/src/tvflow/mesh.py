"""Structured meshes and the continuous P1/Q1 finite element space.

Meshes are uniform partitions of an axis-aligned box into intervals (1D),
squares (Q1) or triangles (P1).  Vertices are numbered lexicographically with
the x index running fastest.  Local vertex order inside a quad cell is
(0,0), (1,0), (0,1), (1,1); triangles split each grid square along the
lower-left to upper-right diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

CELL_KINDS = ("interval", "quad", "triangle")


class MeshMismatchError(ValueError):
    """Raised when fields living on different meshes are combined."""


class Mesh:
    """Uniform conforming mesh of a box.

    Instances are treated as immutable; assembled operators are cached on
    first use and shared by everything built on the mesh.
    """

    def __init__(self, lower, upper, n_per_axis, cell_kind):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        n = np.atleast_1d(np.asarray(n_per_axis, dtype=int))
        dim = lower.size
        if dim not in (1, 2) or upper.size != dim:
            raise ValueError("only 1D and 2D boxes are supported")
        if n.size == 1 and dim == 2:
            n = np.repeat(n, 2)
        if n.size != dim or np.any(n < 1):
            raise ValueError("n_per_axis must hold one positive integer per axis")
        if np.any(upper <= lower):
            raise ValueError("domain bounds must be strictly ordered on every axis")
        if cell_kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {cell_kind!r}")
        if dim == 1 and cell_kind != "interval":
            raise ValueError(f"cell kind {cell_kind!r} is not available in 1D")
        if dim == 2 and cell_kind == "interval":
            raise ValueError("interval cells require a 1D domain")

        self.dim = int(dim)
        self.lower = tuple(lower.tolist())
        self.upper = tuple(upper.tolist())
        self.n_per_axis = tuple(int(k) for k in n)
        self.cell_kind = cell_kind
        self.spacing = tuple(((upper - lower) / n).tolist())

        axes = [np.linspace(lower[i], upper[i], n[i] + 1) for i in range(dim)]
        if dim == 1:
            self.vertices = axes[0][:, None]
            idx = np.arange(n[0])
            self.cells = np.stack([idx, idx + 1], axis=1)
        else:
            xx, yy = np.meshgrid(axes[0], axes[1], indexing="xy")
            self.vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)
            nx1 = n[0] + 1
            j, i = np.meshgrid(np.arange(n[1]), np.arange(n[0]), indexing="ij")
            v00 = (i + nx1 * j).ravel()
            v10, v01, v11 = v00 + 1, v00 + nx1, v00 + nx1 + 1
            if cell_kind == "quad":
                self.cells = np.stack([v00, v10, v01, v11], axis=1)
            else:
                lower_tri = np.stack([v00, v10, v11], axis=1)
                upper_tri = np.stack([v00, v11, v01], axis=1)
                self.cells = np.stack([lower_tri, upper_tri], axis=1).reshape(-1, 3)
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)

        tol = 1e-12 * np.max(upper - lower)
        on_bdry = np.zeros(len(self.vertices), dtype=bool)
        for i in range(dim):
            x = self.vertices[:, i]
            on_bdry |= (np.abs(x - lower[i]) <= tol) | (np.abs(x - upper[i]) <= tol)
        self.boundary_vertex_flags = on_bdry
        self.boundary_vertex_flags.setflags(write=False)

    def __repr__(self):
        return (f"Mesh(lower={self.lower}, upper={self.upper}, "
                f"n_per_axis={self.n_per_axis}, cell_kind={self.cell_kind!r})")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_local(self) -> int:
        return self.cells.shape[1]

    @property
    def domain_measure(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @cached_property
    def cell_measures(self) -> np.ndarray:
        pts = self.vertices[self.cells]
        if self.cell_kind == "interval":
            meas = np.abs(pts[:, 1, 0] - pts[:, 0, 0])
        elif self.cell_kind == "quad":
            d = pts[:, 3] - pts[:, 0]
            meas = np.abs(d[:, 0] * d[:, 1])
        else:
            e1 = pts[:, 1] - pts[:, 0]
            e2 = pts[:, 2] - pts[:, 0]
            meas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        meas.setflags(write=False)
        return meas

    @cached_property
    def h(self) -> float:
        """Maximum cell diameter, recomputed from the vertex coordinates."""
        pts = self.vertices[self.cells]
        diffs = pts[:, :, None, :] - pts[:, None, :, :]
        return float(np.sqrt((diffs ** 2).sum(-1)).max())

    @cached_property
    def local_gradients(self) -> np.ndarray:
        """Array ``B[c, b, a, :]`` = gradient of basis ``a`` of cell ``c`` at its vertex ``b``."""
        pts = self.vertices[self.cells]
        nc, nloc = self.cells.shape
        if self.cell_kind == "interval":
            hx = pts[:, 1, 0] - pts[:, 0, 0]
            g = np.array([-1.0, 1.0])[None, :] / hx[:, None]
            B = np.broadcast_to(g[:, None, :, None], (nc, 2, 2, 1)).copy()
        elif self.cell_kind == "quad":
            hx = pts[:, 1, 0] - pts[:, 0, 0]
            hy = pts[:, 2, 1] - pts[:, 0, 1]
            corner = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
            B = np.zeros((nc, 4, 4, 2))
            for b, (bx, by) in enumerate(corner):
                for a, (ax, ay) in enumerate(corner):
                    # bilinear basis: derivative in x is (2ax-1)/hx times the y factor at z_b
                    B[:, b, a, 0] = (2 * ax - 1) * float(ay == by) / hx
                    B[:, b, a, 1] = (2 * ay - 1) * float(ax == bx) / hy
        else:
            e1 = pts[:, 1] - pts[:, 0]
            e2 = pts[:, 2] - pts[:, 0]
            J = np.stack([e1, e2], axis=2)  # columns are edge vectors
            Jinv = np.linalg.inv(J)
            g12 = Jinv  # rows: gradients of barycentric coords 1 and 2
            g0 = -(g12[:, 0] + g12[:, 1])
            g = np.stack([g0, g12[:, 0], g12[:, 1]], axis=1)
            B = np.broadcast_to(g[:, None, :, :], (nc, 3, 3, 2)).copy()
        B.setflags(write=False)
        return B

    @cached_property
    def gradient_operator(self) -> sp.csr_matrix:
        """Sparse map from nodal coefficients to per-(cell, vertex) gradients.

        Row ``(c * n_local + b) * dim + k`` holds the k-th gradient component
        at local vertex ``b`` of cell ``c`` (cell-major layout).
        """
        nc, nloc = self.cells.shape
        d = self.dim
        B = self.local_gradients
        rows = (np.arange(nc)[:, None, None, None] * nloc
                + np.arange(nloc)[None, :, None, None]) * d \
            + np.arange(d)[None, None, None, :]
        rows = np.broadcast_to(rows, B.shape)
        cols = np.broadcast_to(self.cells[:, None, :, None], B.shape)
        G = sp.coo_matrix((B.ravel(), (rows.ravel(), cols.ravel())),
                          shape=(nc * nloc * d, self.n_vertices)).tocsr()
        G.eliminate_zeros()
        return G

    @cached_property
    def gradient_operator_T(self) -> sp.csr_matrix:
        return self.gradient_operator.T.tocsr()

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return assemble_mass_matrix(self)

    @cached_property
    def nodal_weights(self) -> np.ndarray:
        """``|T| * omega_j`` for every (cell, local vertex), shape ``(n_cells, n_local)``."""
        w = self.cell_measures[:, None] * vertex_quadrature_weights(self.cell_kind)[None, :]
        w.setflags(write=False)
        return w

    def check_invariants(self, rtol: float = 1e-12) -> None:
        """Raise ``AssertionError`` if a structural invariant is violated."""
        cells = self.cells
        assert cells.min() >= 0 and cells.max() < self.n_vertices
        srt = np.sort(cells, axis=1)
        assert np.all(srt[:, 1:] != srt[:, :-1]), "repeated vertex in a cell"
        total = self.cell_measures.sum()
        assert abs(total - self.domain_measure) <= rtol * self.domain_measure
        pts = self.vertices[cells]
        diam = np.sqrt(((pts[:, :, None] - pts[:, None]) ** 2).sum(-1)).max()
        assert self.h == diam


def vertex_quadrature_weights(cell_kind: str) -> np.ndarray:
    """Weights ``|T|^-1 * integral of the vertex basis function`` over a cell."""
    n_local = {"interval": 2, "triangle": 3, "quad": 4}[cell_kind]
    # every P1/Q1 vertex basis function integrates to |T| / n_local on these cells
    return np.full(n_local, 1.0 / n_local)


def build_uniform_mesh(domain: Sequence, n_per_axis, cell_kind: str) -> Mesh:
    """Build a uniform mesh of a box.

    ``domain`` is ``(lower, upper)`` in 1D, or a sequence of per-axis
    ``(lower, upper)`` pairs, e.g. ``[(-3, 3), (-3, 3)]``.
    """
    dom = np.asarray(domain, dtype=float)
    if dom.ndim == 1:
        dom = dom[None, :]
    if dom.shape[-1] != 2:
        raise ValueError("domain must list (lower, upper) pairs")
    return Mesh(dom[:, 0], dom[:, 1], n_per_axis, cell_kind)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Element of the continuous P1/Q1 space: one coefficient per vertex."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same_mesh(self, other)
            return other.coeffs
        return other

    def __add__(self, other):
        return ScalarField(self.mesh, self.coeffs + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.mesh, self.coeffs - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.mesh, self._other(other) - self.coeffs)

    def __mul__(self, c):
        return ScalarField(self.mesh, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.mesh, -self.coeffs)


def _same_mesh(a, b) -> None:
    if a.mesh is not b.mesh:
        raise MeshMismatchError("fields live on different meshes")


def lagrange_interpolate(f: Callable[[np.ndarray], np.ndarray], mesh: Mesh) -> ScalarField:
    """Nodal interpolant of ``f``.

    ``f`` receives the ``(n_vertices, dim)`` coordinate array and returns one
    value per row.  Scalars are broadcast, so ``lambda x: 1.0`` works.
    """
    vals = np.broadcast_to(np.asarray(f(mesh.vertices), dtype=float), (mesh.n_vertices,))
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolated function is not finite at every vertex")
    return ScalarField(mesh, vals.copy())


def _local_mass(mesh: Mesh) -> np.ndarray:
    meas = mesh.cell_measures
    if mesh.cell_kind == "interval":
        ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    elif mesh.cell_kind == "quad":
        m1 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        ref = np.kron(m1, m1)  # x index fastest in the local ordering
    else:
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return meas[:, None, None] * ref[None]


def assemble_mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Exact L2 mass matrix of the P1/Q1 basis in CSR format."""
    loc = _local_mass(mesh)
    nloc = mesh.n_local
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    M = sp.coo_matrix((loc.ravel(), (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    M.sum_duplicates()
    return M


def cell_vertex_gradients(field: ScalarField, cell: int) -> np.ndarray:
    """Gradient of ``field`` at each vertex of ``cell``, shape ``(n_local, dim)``."""
    mesh = field.mesh
    B = mesh.local_gradients[cell]
    return np.einsum("bak,a->bk", B, field.coeffs[mesh.cells[cell]])


def l2_inner(a: ScalarField, b: ScalarField) -> float:
    _same_mesh(a, b)
    return float(a.coeffs @ (a.mesh.mass_matrix @ b.coeffs))


def l2_norm(a: ScalarField) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def evaluate_at(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Point values of the finite element function at ``points`` (shape ``(n, dim)``).

    Points are located with the structured grid index; points outside the
    box are clamped to the nearest cell.
    """
    mesh = field.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.dim == 1 and pts.shape[1] != 1:
        pts = pts.reshape(-1, 1)
    lo = np.asarray(mesh.lower)
    sp_ = np.asarray(mesh.spacing)
    n = np.asarray(mesh.n_per_axis)
    s = (pts - lo) / sp_
    idx = np.clip(np.floor(s).astype(int), 0, n - 1)
    xi = s - idx
    c = field.coeffs
    if mesh.dim == 1:
        i = idx[:, 0]
        return (1 - xi[:, 0]) * c[i] + xi[:, 0] * c[i + 1]
    nx1 = n[0] + 1
    v00 = idx[:, 0] + nx1 * idx[:, 1]
    c00, c10, c01, c11 = c[v00], c[v00 + 1], c[v00 + nx1], c[v00 + nx1 + 1]
    x, y = xi[:, 0], xi[:, 1]
    if mesh.cell_kind == "quad":
        return (1 - x) * (1 - y) * c00 + x * (1 - y) * c10 + (1 - x) * y * c01 + x * y * c11
    below = x >= y   # triangle (v00, v10, v11)
    return np.where(below,
                    c00 + x * (c10 - c00) + y * (c11 - c10),
                    c00 + x * (c11 - c01) + y * (c01 - c00))


def prolongate(field: ScalarField, fine: Mesh) -> ScalarField:
    """Transfer ``field`` to a nested refinement ``fine`` (exact for nested meshes)."""
    return ScalarField(fine, evaluate_at(field, fine.vertices))
