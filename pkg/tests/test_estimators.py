import numpy as np
import pytest

from fricfem.assembly import ContactFaces
from fricfem.campaigns import builtin_config, initial_mesh, problem_factory
from fricfem.estimators import (EstimateTable, Estimators, error_norms,
                                surrogate_bounds, trace_constant)
from fricfem.newton import NewtonConfig, newton_solve
from fricfem.verification import rewrite_identities


@pytest.fixture(scope="module", params=["tresca-rect", "square-lit"])
def solved(request):
    cfg = builtin_config(request.param)
    p = problem_factory(cfg)(initial_mesh(cfg), degree=1)
    faces = ContactFaces(p.space, p.material, p.nitsche)
    res = newton_solve(p, NewtonConfig(stopping="residual", rtol=1e-10))
    return p, faces, res.u, res.u_prev


def test_rewrite_identities(solved):
    p, faces, u, u_prev = solved
    for check in rewrite_identities(p, faces, u, u_prev, tol=1e-9):
        assert check.passed, str(check)


def test_table_combination_rules():
    rng = np.random.default_rng(5)
    cols = {name: rng.uniform(0.0, 1.0, 20)
            for name in EstimateTable.COLUMNS}

    class FakeMesh:
        num_triangles = 20

    t = EstimateTable(FakeMesh(), **cols)
    lin = t.eta_lin
    assert np.allclose(lin, cols["lin1"] + np.hypot(cols["lin2n"],
                                                    cols["lin2t"]))
    tot = np.sqrt((cols["osc"] + cols["str_"] + cols["lin1"] + cols["neu"]) ** 2
                  + (cols["cnt"] + cols["frc"] + cols["lin2n"]
                     + cols["lin2t"]) ** 2)
    assert np.allclose(t.eta_tot, tot)
    assert t.global_value(lin) == pytest.approx(np.sqrt(np.sum(lin ** 2)))
    g = t.globals()
    assert g["str"] == pytest.approx(np.sqrt(np.sum(cols["str_"] ** 2)))
    assert g["lin"] == pytest.approx(t.eta_lin_global())


def test_estimate_nonnegative(solved):
    p, faces, u, u_prev = solved
    t = Estimators(p, faces).estimate(u, u_prev)
    for name in t.COLUMNS:
        assert np.all(getattr(t, name) >= 0.0)
    assert np.all(t.eta_tot >= 0.0)


def test_error_norms_vanish_for_same_function(solved):
    p, faces, u, _ = solved
    h1, en = error_norms(p.space, u, p.space, u, p.material)
    scale = max(np.abs(u).max(), 1e-300)
    assert h1 <= 1e-12 * scale
    assert en <= 1e-12 * scale


def test_trace_constant_positive_and_scales():
    cfg = builtin_config("tresca-rect")
    mesh = initial_mesh(cfg)
    e = int(mesh.boundary_edges[0])
    t = int(mesh.edge_tris[e][0])
    c1 = trace_constant(mesh, t, e)
    c2 = trace_constant(mesh, t, e, safety=2.0)
    assert c1 > 0
    assert c2 == pytest.approx(2.0 * c1, rel=1e-12)


def test_surrogate_bounds_order(solved):
    p, faces, u, u_prev = solved
    t = Estimators(p, faces).estimate(u, u_prev)
    # a crude reference: one uniform refinement, degree 2
    cfg_name = "tresca-rect" if p.material.E == 1.0 else "square-lit"
    cfg = builtin_config(cfg_name)
    make = problem_factory(cfg)
    ref = make(p.mesh.refine(uniform=True), degree=2)
    res = newton_solve(ref, NewtonConfig(stopping="residual", rtol=1e-9))
    L, U, i_low, i_up = surrogate_bounds(p, faces, u, ref.space, res.u,
                                         t.globals()["tot"])
    assert 0.0 <= L <= U
    assert i_low > 0 and i_up > 0
