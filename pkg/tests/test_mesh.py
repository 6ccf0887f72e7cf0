import math

import numpy as np
import pytest
import scipy.linalg as sla

from tvflow import (MeshMismatchError, ScalarField, assemble_mass_matrix, build_uniform_mesh,
                    cell_vertex_gradients, l2_inner, l2_norm, lagrange_interpolate)
from tvflow.mesh import evaluate_at, prolongate


def test_interval_mesh_two_cells():
    mesh = build_uniform_mesh([(0.0, 1.0)], 2, "interval")
    np.testing.assert_allclose(mesh.vertices[:, 0], [0.0, 0.5, 1.0])
    assert mesh.n_cells == 2
    assert mesh.h == pytest.approx(0.5)


def test_quad_mesh_on_large_box():
    mesh = build_uniform_mesh([(-3.0, 3.0), (-3.0, 3.0)], (2, 2), "quad")
    assert mesh.n_vertices == 9
    assert mesh.n_cells == 4
    assert mesh.h == pytest.approx(3.0 * math.sqrt(2.0))


def test_single_square_split_into_two_triangles():
    mesh = build_uniform_mesh([(0.0, 1.0), (0.0, 1.0)], (1, 1), "triangle")
    assert mesh.n_vertices == 4
    assert mesh.n_cells == 2
    # both triangles contain the lower-left to upper-right diagonal
    for cell in mesh.cells:
        assert {0, 3} <= set(cell.tolist())


@pytest.mark.parametrize("kind,domain,n", [
    ("interval", [(0.0, 2.0)], 7),
    ("quad", [(-1.0, 2.0), (0.0, 1.0)], (5, 3)),
    ("triangle", [(-1.0, 2.0), (0.0, 1.0)], (5, 3)),
])
def test_mesh_invariants(kind, domain, n):
    mesh = build_uniform_mesh(domain, n, kind)
    mesh.check_invariants()
    assert mesh.cell_measures.sum() == pytest.approx(mesh.domain_measure, rel=1e-12)
    pts = mesh.vertices[mesh.cells]
    diam = max(np.linalg.norm(p[:, None] - p[None], axis=-1).max() for p in pts)
    assert mesh.h == pytest.approx(diam)
    for cell in mesh.cells:
        assert len(set(cell.tolist())) == len(cell)


def test_vertices_are_lexicographic():
    mesh = build_uniform_mesh([(0.0, 1.0), (0.0, 2.0)], (2, 2), "quad")
    # x runs fastest, then y
    np.testing.assert_allclose(mesh.vertices[:3, 0], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(mesh.vertices[::3, 1], [0.0, 1.0, 2.0])


@pytest.mark.parametrize("kwargs", [
    dict(domain=[(0.0, 1.0)], n_per_axis=2, cell_kind="triangle"),
    dict(domain=[(1.0, 0.0)], n_per_axis=2, cell_kind="interval"),
    dict(domain=[(0.0, 1.0)], n_per_axis=0, cell_kind="interval"),
    dict(domain=[(0.0, 1.0), (0.0, 1.0)], n_per_axis=2, cell_kind="interval"),
])
def test_invalid_meshes_rejected(kwargs):
    with pytest.raises(ValueError):
        build_uniform_mesh(**kwargs)


def test_interpolate_constant_and_linear(unit_interval_2):
    np.testing.assert_array_equal(lagrange_interpolate(lambda x: 1.0, unit_interval_2).coeffs, 1.0)
    u = lagrange_interpolate(lambda x: x[:, 0], unit_interval_2)
    np.testing.assert_allclose(u.coeffs, [0.0, 0.5, 1.0])


def test_interpolate_characteristic_uses_closed_set():
    mesh = build_uniform_mesh([(-3.0, 3.0), (-3.0, 3.0)], (6, 6), "quad")
    u = lagrange_interpolate(
        lambda x: (np.linalg.norm(x, axis=1) <= 1.0).astype(float), mesh)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(u.coeffs[r < 1 - 1e-12] == 1.0)
    assert np.all(u.coeffs[r > 1 + 1e-12] == 0.0)
    on_circle = np.isclose(r, 1.0)
    assert on_circle.any() and np.all(u.coeffs[on_circle] == 1.0)


def test_interpolate_rejects_non_finite(unit_interval_2):
    with pytest.raises(ValueError):
        with np.errstate(divide="ignore"):
            lagrange_interpolate(lambda x: 1.0 / x[:, 0], unit_interval_2)


def test_mass_matrix_single_interval():
    mesh = build_uniform_mesh([(0.0, 1.0)], 1, "interval")
    M = assemble_mass_matrix(mesh).toarray()
    np.testing.assert_allclose(M, np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0, atol=1e-15)


def test_mass_matrix_single_quad(unit_quad):
    M = assemble_mass_matrix(unit_quad).toarray()
    np.testing.assert_allclose(np.diag(M), 1.0 / 9.0)
    # local order (0,0),(1,0),(0,1),(1,1): 0-1 share an edge, 0-3 are diagonal
    assert M[0, 1] == pytest.approx(1.0 / 18.0)
    assert M[0, 2] == pytest.approx(1.0 / 18.0)
    assert M[0, 3] == pytest.approx(1.0 / 36.0)
    assert M[1, 2] == pytest.approx(1.0 / 36.0)


@pytest.mark.parametrize("kind,domain,n", [
    ("interval", [(0.0, 3.0)], 5),
    ("quad", [(-3.0, 3.0), (-1.0, 1.0)], (4, 3)),
    ("triangle", [(-3.0, 3.0), (-1.0, 1.0)], (4, 3)),
])
def test_mass_matrix_structure(kind, domain, n):
    mesh = build_uniform_mesh(domain, n, kind)
    M = assemble_mass_matrix(mesh)
    assert M.format == "csr"
    assert M.sum() == pytest.approx(mesh.domain_measure, rel=1e-13)
    dense = M.toarray()
    np.testing.assert_allclose(dense, dense.T, atol=0)
    assert sla.eigvalsh(dense).min() > 0
    # row sums are the integrals of the basis functions
    ones = lagrange_interpolate(lambda x: 1.0, mesh)
    np.testing.assert_allclose(M.sum(axis=1).A1, M @ ones.coeffs)


def test_mass_matrix_bit_reproducible():
    mesh = build_uniform_mesh([(0.0, 1.0), (0.0, 1.0)], (7, 5), "triangle")
    a = assemble_mass_matrix(mesh)
    b = assemble_mass_matrix(mesh)
    assert np.array_equal(a.data, b.data) and np.array_equal(a.indices, b.indices)


def test_gradients_on_interval_cell():
    mesh = build_uniform_mesh([(0.0, 1.0)], 2, "interval")
    g = cell_vertex_gradients(ScalarField(mesh, np.array([0.0, 1.0, 1.0])), 0)
    np.testing.assert_allclose(g, [[2.0], [2.0]])


def test_gradients_of_bilinear_xy(unit_quad):
    g = cell_vertex_gradients(ScalarField(unit_quad, np.array([0.0, 0.0, 0.0, 1.0])), 0)
    # grad(xy) = (y, x) at the corners (0,0), (1,0), (0,1), (1,1)
    np.testing.assert_allclose(g, [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], atol=1e-15)


def test_gradients_of_constant_vanish(unit_quad):
    g = cell_vertex_gradients(ScalarField(unit_quad, np.full(4, 3.5)), 0)
    np.testing.assert_array_equal(g, 0.0)


@pytest.mark.parametrize("kind", ["quad", "triangle"])
def test_gradients_exact_for_linear_fields(kind):
    mesh = build_uniform_mesh([(-1.0, 2.0), (0.0, 1.5)], (4, 3), kind)
    a = np.array([0.7, -1.3])
    u = lagrange_interpolate(lambda x: x @ a + 0.2, mesh)
    for c in range(mesh.n_cells):
        np.testing.assert_allclose(cell_vertex_gradients(u, c), np.tile(a, (mesh.n_local, 1)),
                                   atol=1e-13)


def test_l2_inner_examples(unit_interval_2):
    one = lagrange_interpolate(lambda x: 1.0, unit_interval_2)
    x = lagrange_interpolate(lambda x: x[:, 0], unit_interval_2)
    assert l2_inner(one, one) == pytest.approx(1.0)
    assert l2_inner(one, x) == pytest.approx(0.5)
    assert abs(l2_inner(one, x - 0.5 * one)) < 1e-14
    assert l2_norm(x) >= 0


def test_l2_inner_rejects_other_mesh(unit_interval_2):
    other = build_uniform_mesh([(0.0, 1.0)], 2, "interval")
    with pytest.raises(MeshMismatchError):
        l2_inner(lagrange_interpolate(lambda x: 1.0, unit_interval_2),
                 lagrange_interpolate(lambda x: 1.0, other))


def test_l2_norm_of_interpolant_converges():
    errs = []
    for n in (8, 16, 32):
        mesh = build_uniform_mesh([(0.0, 1.0)], n, "interval")
        u = lagrange_interpolate(lambda x: np.sin(np.pi * x[:, 0]), mesh)
        errs.append(abs(l2_norm(u) - math.sqrt(0.5)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_scalar_field_rejects_wrong_length(unit_interval_2):
    with pytest.raises(ValueError):
        ScalarField(unit_interval_2, np.zeros(5))
    with pytest.raises(ValueError):
        ScalarField(unit_interval_2, np.array([0.0, np.nan, 1.0]))


@pytest.mark.parametrize("kind", ["quad", "triangle"])
def test_prolongation_is_exact_on_nested_meshes(kind, rng):
    coarse = build_uniform_mesh([(0.0, 1.0), (0.0, 2.0)], (3, 2), kind)
    fine = build_uniform_mesh([(0.0, 1.0), (0.0, 2.0)], (6, 4), kind)
    u = ScalarField(coarse, rng.standard_normal(coarse.n_vertices))
    uf = prolongate(u, fine)
    pts = rng.uniform([0.0, 0.0], [1.0, 2.0], size=(50, 2))
    np.testing.assert_allclose(evaluate_at(uf, pts), evaluate_at(u, pts), atol=1e-13)
    np.testing.assert_allclose(evaluate_at(u, coarse.vertices), u.coeffs, atol=1e-14)
