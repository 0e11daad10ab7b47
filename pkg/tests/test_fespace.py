import math

import numpy as np
import pytest

from fricfem.fespace import (LagrangeSpace, edge_rule, face_projection_residual,
                             face_projection_values, shape_values,
                             triangle_rule)
from fricfem.mesh import build_rectangle_mesh


def labeler(mid):
    return "D" if mid[1] > 1.0 - 1e-12 else "C"


@pytest.fixture
def mesh():
    return build_rectangle_mesh((0.0, 1.0), (0.0, 1.0), 3, 3, labeler)


def test_triangle_rule_exactness():
    # weights are normalized to the reference area; monomial integrals over
    # the unit right triangle are a!b!/(a+b+2)!
    for deg in (1, 2, 3, 4):
        bary, w = triangle_rule(deg)
        assert np.all(w > 0)
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        pts = bary @ verts
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = (math.factorial(a) * math.factorial(b)
                         / math.factorial(a + b + 2))
                got = 0.5 * np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)
                assert got == pytest.approx(exact, rel=1e-13)


def test_edge_rule_exactness():
    s, w = edge_rule(6)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    for k in range(11):
        assert np.sum(w * s ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_shape_values_partition_of_unity():
    bary, _ = triangle_rule(3)
    for deg in (1, 2):
        N = shape_values(deg, bary)
        assert np.allclose(N.sum(axis=1), 1.0, atol=1e-14)


def test_interpolate_reproduces_linear(mesh):
    space = LagrangeSpace(mesh, degree=1)
    u = space.interpolate(lambda x: (2.0 * x[0] - x[1], 0.5 * x[1] + 1.0))
    elems = np.arange(mesh.num_triangles)
    bary, _ = triangle_rule(2)
    vals = space.eval_function(u, elems, bary)
    pts = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])
    assert np.allclose(vals[..., 0], 2.0 * pts[..., 0] - pts[..., 1], atol=1e-13)
    assert np.allclose(vals[..., 1], 0.5 * pts[..., 1] + 1.0, atol=1e-13)


def test_p2_interpolates_quadratics(mesh):
    space = LagrangeSpace(mesh, degree=2)
    u = space.interpolate(lambda x: (x[0] ** 2, x[0] * x[1]))
    elems = np.arange(mesh.num_triangles)
    bary, _ = triangle_rule(2)
    vals = space.eval_function(u, elems, bary)
    pts = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])
    assert np.allclose(vals[..., 0], pts[..., 0] ** 2, atol=1e-13)
    assert np.allclose(vals[..., 1], pts[..., 0] * pts[..., 1], atol=1e-13)


def test_gradient_of_linear_is_constant(mesh):
    space = LagrangeSpace(mesh, degree=1)
    u = space.interpolate(lambda x: (3.0 * x[0] + x[1], -x[0]))
    elems = np.arange(mesh.num_triangles)
    bary, _ = triangle_rule(1)
    g = space.eval_gradient(u, elems, bary)
    assert np.allclose(g[..., 0, 0], 3.0, atol=1e-12)
    assert np.allclose(g[..., 0, 1], 1.0, atol=1e-12)
    assert np.allclose(g[..., 1, 0], -1.0, atol=1e-12)
    assert np.allclose(g[..., 1, 1], 0.0, atol=1e-12)


def test_locate_round_trip(mesh):
    space = LagrangeSpace(mesh, degree=1)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.02, 0.98, size=(50, 2))
    elems, bary = space.locate(pts)
    assert np.all(elems >= 0)
    rec = np.einsum("qi,qid->qd", bary, mesh.vertices[mesh.triangles[elems]])
    assert np.allclose(rec, pts, atol=1e-9)


def test_dirichlet_dofs_cover_both_components(mesh):
    space = LagrangeSpace(mesh, degree=1)
    dofs = space.dirichlet_dofs()
    assert len(dofs) > 0
    assert len(dofs) % 2 == 0
    coords = space.node_coords()
    for d in dofs:
        assert coords[d // 2][1] == pytest.approx(1.0, abs=1e-12)


def test_face_projection_residual_vanishes_on_linears():
    s, w = edge_rule(6)
    vals = 3.0 - 2.0 * s
    assert face_projection_residual(vals, w, 0.7, 1) == pytest.approx(0.0, abs=1e-14)


def test_face_projection_residual_quadratic():
    # projecting s^2 onto degree 1 on a unit face leaves an L2 misfit of
    # sqrt(1/180); a face of length L scales values of s^2 by 1 and the
    # norm by sqrt(L)
    s, w = edge_rule(6)
    got = face_projection_residual(s ** 2, w, 1.0, 1)
    assert got == pytest.approx(math.sqrt(1.0 / 180.0), rel=1e-12)


def test_face_projection_values_idempotent():
    s, w = edge_rule(6)
    vals = 1.0 + 0.5 * s
    proj = face_projection_values(vals, w, 1)
    assert np.allclose(proj, vals, atol=1e-13)
