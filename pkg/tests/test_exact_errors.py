import math

import numpy as np
import pytest

from tvflow import ScalarField, build_uniform_mesh, lagrange_interpolate
from tvflow.errors import (RefinedQuadrature, eoc_table, error_Linf_L2, l2_error,
                           reference_rule)
from tvflow.exact import (ExactSolution, annulus, annulus_merge, ball_rate, exact_eval,
                          monotone_ramp, single_ball, three_balls)


class SampledTrace:
    def __init__(self, mesh, times, fields):
        self.mesh = mesh
        self.times = np.asarray(times, dtype=float)
        self.stored_steps = list(range(len(times)))
        self.fields = list(fields)


def test_unknown_kind():
    with pytest.raises(ValueError):
        ExactSolution("square")


def test_single_ball_examples():
    sol = single_ball()
    x = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    np.testing.assert_array_equal(exact_eval(sol, x, 0.0), [1, 1, 1, 0, 0])
    np.testing.assert_allclose(sol(x[:2], 0.25), 0.5)
    np.testing.assert_array_equal(sol(x, 0.5), 0.0)
    np.testing.assert_array_equal(sol(x, 3.0), 0.0)
    assert sol.extinction_time == 0.5
    assert sol.discontinuous and sol.dim == 2


def test_negative_height_ball():
    sol = single_ball(radius=0.5, height=-2.0)
    assert sol(np.array([[0.0, 0.0]]), 0.1)[0] == pytest.approx(-1.6)
    assert sol.extinction_time == pytest.approx(0.5)


def test_rates():
    assert ball_rate(1.0) == 2.0
    assert ball_rate(0.2) == pytest.approx(10.0)
    assert ball_rate(0.5, dim=1) == 2.0


def test_three_balls_geometry():
    sol = three_balls()
    c = np.array(sol.params["centers"])
    d = np.linalg.norm(c[:, None] - c[None, :], axis=2)
    np.testing.assert_allclose(d[np.triu_indices(3, 1)], 1.0)
    np.testing.assert_allclose(c.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_array_equal(sol(c, 0.0), 1.0)
    np.testing.assert_allclose(sol(c, 0.05), 0.5)
    assert sol.extinction_time == pytest.approx(0.1)
    assert sol(np.array([[0.0, 0.0]]), 0.0)[0] == 0.0


def test_annulus_examples():
    T1, m = annulus_merge(4.0, 0.5, 0.25)
    assert T1 == pytest.approx(0.25) and m == pytest.approx(2.0)
    sol = annulus()
    x = np.array([[0.0, 0.0], [0.1, 0.0], [0.3, 0.0], [0.0, 0.49], [0.7, 0.0]])
    np.testing.assert_array_equal(sol(x, 0.0), [0, 0, 4, 4, 0])
    np.testing.assert_allclose(sol(x, 0.125), [1, 1, 3, 3, 0])
    np.testing.assert_allclose(sol(x, 0.25), [2, 2, 2, 2, 0])
    np.testing.assert_allclose(sol(x, 0.5), [1, 1, 1, 1, 0])
    np.testing.assert_array_equal(sol(x, 0.75), 0.0)
    assert sol.extinction_time == pytest.approx(0.75)


def test_monotone_ramp_is_stationary():
    sol = monotone_ramp()
    x = np.linspace(0.0, 1.0, 11)
    assert not sol.discontinuous and sol.dim == 1
    np.testing.assert_allclose(sol(x, 0.0), np.maximum(x - 0.5, 0.0))
    np.testing.assert_array_equal(sol(x, 4.0), sol(x, 0.0))
    assert sol.extinction_time == math.inf


@pytest.mark.parametrize("kind", ["interval", "quad", "triangle"])
def test_reference_rule_exact_for_polynomials(kind):
    pts, w = reference_rule(kind)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    if kind == "interval":
        assert np.sum(w * pts[:, 0] ** 7) == pytest.approx(1 / 8, rel=1e-13)
    elif kind == "quad":
        assert np.sum(w * pts[:, 0] ** 3 * pts[:, 1] ** 5) == pytest.approx(1 / 24, rel=1e-13)
    else:
        assert np.all(pts.sum(axis=1) <= 1 + 1e-15)
        # int_T x^2 y over the unit triangle, normalized by |T| = 1/2
        assert np.sum(w * pts[:, 0] ** 2 * pts[:, 1]) == pytest.approx(2 / 60, rel=1e-13)


@pytest.mark.parametrize("kind", ["quad", "triangle"])
def test_refined_quadrature_integrates_fields(kind):
    mesh = build_uniform_mesh([(-1.0, 2.0), (0.0, 1.0)], (6, 4), kind)
    q = RefinedQuadrature(mesh)
    assert q.integrate(np.ones_like(q.weights)) == pytest.approx(3.0, rel=1e-14)
    u = lagrange_interpolate(lambda x: 2 * x[:, 0] - x[:, 1] + 1, mesh)
    # linear fields are reproduced exactly, so the distance vanishes
    assert q.l2_distance(u.coeffs, lambda x: 2 * x[:, 0] - x[:, 1] + 1) <= 1e-13


def test_zero_field_against_ball():
    errs = []
    for n in (16, 32, 64):
        mesh = build_uniform_mesh([(-3.0, 3.0), (-3.0, 3.0)], n, "quad")
        zero = ScalarField(mesh, np.zeros(mesh.n_vertices))
        errs.append(l2_error(zero, lambda x: single_ball()(x, 0.0)))
    dev = np.abs(np.array(errs) - math.sqrt(math.pi))
    assert dev[-1] <= 6.0 / 64
    assert dev[-1] < dev[0]


def test_identical_sampling_zero_error():
    mesh = build_uniform_mesh([(0.0, 1.0)], 16, "interval")
    sol = monotone_ramp()
    times = np.linspace(0.0, 1.0, 5)
    fields = [lagrange_interpolate(lambda x: sol(x, t), mesh).coeffs for t in times]
    assert error_Linf_L2(SampledTrace(mesh, times, fields), sol) <= 1e-15


def test_sampled_exact_error_decreases():
    errs = []
    sol = single_ball()
    for n in (8, 16, 32):
        mesh = build_uniform_mesh([(-3.0, 3.0), (-3.0, 3.0)], n, "quad")
        times = [0.0, 0.1, 0.2]
        fields = [sol(mesh.vertices, t) for t in times]
        errs.append(error_Linf_L2(SampledTrace(mesh, times, fields), sol))
    assert errs[0] > errs[1] > errs[2] > 0


def test_error_takes_max_over_stored_steps():
    mesh = build_uniform_mesh([(0.0, 1.0)], 4, "interval")
    sol = monotone_ramp()
    good = lagrange_interpolate(lambda x: sol(x, 0), mesh).coeffs
    tr = SampledTrace(mesh, [0.0, 0.5], [good, good + 0.25])
    assert error_Linf_L2(tr, sol) == pytest.approx(0.25, rel=1e-13)


def test_error_dimension_mismatch():
    mesh = build_uniform_mesh([(0.0, 1.0)], 4, "interval")
    tr = SampledTrace(mesh, [0.0], [np.zeros(5)])
    with pytest.raises(ValueError):
        error_Linf_L2(tr, single_ball())


def test_eoc_examples():
    r = eoc_table([0.1, 0.0707], [0.5, 0.25])
    assert r.orders[0] == pytest.approx(0.50, abs=5e-3)
    assert eoc_table([0.3, 0.3], [0.5, 0.25]).orders == [0.0]
    assert math.isnan(eoc_table([0.3, 0.1], [0.5, 0.3]).orders[0])
    assert eoc_table([0.0, 0.0], [0.5, 0.25]).orders == [0.0]
    rep = eoc_table([0.4, 0.2, 0.1], [1.0, 0.5, 0.25], runtimes=[1.0, 2.0, 3.0])
    assert rep.mean_order == pytest.approx(1.0)
    rows = rep.rows()
    assert len(rows) == 3 and math.isnan(rows[0][2]) and rows[2] == (0.25, 0.1, 1.0)
    with pytest.raises(ValueError):
        eoc_table([0.1], [0.5, 0.25])
