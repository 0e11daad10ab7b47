import numpy as np
import pytest

from fricfem.adaptive import (AdaptiveConfig, adaptive_solve, contact_interval,
                              fitted_rate, mark_elements, transfer_solution)
from fricfem.campaigns import (adaptive_config, builtin_config, initial_mesh,
                               newton_config, problem_factory)
from fricfem.fespace import LagrangeSpace


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptiveConfig(theta_mark=0.0)
    with pytest.raises(ValueError):
        AdaptiveConfig(mode="nope")
    with pytest.raises(ValueError):
        AdaptiveConfig(rho_even=0.5)


def test_mark_elements_counts_and_order():
    eta = np.array([0.1, 0.9, 0.3, 0.9, 0.05])
    marked = mark_elements(eta, 0.4)
    # ceil(0.4 * 5) = 2 elements, ties by ascending id
    assert list(marked) == [1, 3]
    assert list(mark_elements(eta, 1.0)) == [0, 1, 2, 3, 4]


def test_mark_elements_tie_breaking():
    eta = np.ones(6)
    assert list(mark_elements(eta, 0.5)) == [0, 1, 2]


def test_contact_interval():
    cfg = builtin_config("tresca-rect")
    p = problem_factory(cfg)(initial_mesh(cfg), degree=1)
    u = np.zeros(p.space.ndof)
    assert contact_interval(p, u) == (-1.0, 1.0)
    # lift the left half clear of the foundation: positive gap is u.n < 0,
    # and the bottom outward normal is (0,-1)
    u = p.space.interpolate(lambda x: (0.0, 0.01 if x[0] < -0.1 else 0.0))
    left, right = contact_interval(p, u)
    assert left == pytest.approx(-0.1, abs=0.21)
    assert right == 1.0


def test_transfer_solution_exact_on_refinement():
    cfg = builtin_config("tresca-rect")
    mesh = initial_mesh(cfg)
    space = LagrangeSpace(mesh, degree=1)
    u = space.interpolate(lambda x: (x[0] - 2.0 * x[1], 0.5 * x[0]))
    fine = LagrangeSpace(mesh.refine(uniform=True), degree=1)
    v = transfer_solution(space, u, fine)
    w = fine.interpolate(lambda x: (x[0] - 2.0 * x[1], 0.5 * x[0]))
    assert np.allclose(v, w, atol=1e-12)


def test_fitted_rate_recovers_power_law():
    dofs = np.array([100, 200, 400, 800, 1600], dtype=float)
    errors = 3.0 * dofs ** -0.42
    assert fitted_rate(dofs, errors) == pytest.approx(0.42, abs=1e-12)
    assert fitted_rate(dofs, errors, points=3) == pytest.approx(0.42, abs=1e-12)


@pytest.fixture(scope="module")
def small_run():
    cfg = builtin_config("tresca-rect")
    acfg = AdaptiveConfig(theta_mark=0.062, max_levels=4)
    return adaptive_solve(problem_factory(cfg), initial_mesh(cfg), acfg,
                          newton_config(cfg))


def test_adaptive_levels_grow(small_run):
    rep = small_run
    assert len(rep.levels) == 4
    elems = [r["elements"] for r in rep.levels]
    assert all(b > a for a, b in zip(elems, elems[1:]))
    assert rep.levels[-1]["eta_tot"] < rep.levels[0]["eta_tot"]
    for row in rep.levels:
        assert row["newton_iterations"] >= 1
        assert np.isfinite(row["contact_left"])


def test_uniform_mode_quadruples():
    cfg = builtin_config("tresca-rect")
    acfg = AdaptiveConfig(max_levels=2, mode="uniform")
    rep = adaptive_solve(problem_factory(cfg), initial_mesh(cfg), acfg,
                         newton_config(cfg))
    assert rep.levels[1]["elements"] == 4 * rep.levels[0]["elements"]


def test_evenness_stop():
    cfg = builtin_config("tresca-rect")
    acfg = AdaptiveConfig(max_levels=5, rho_even=1e6)
    rep = adaptive_solve(problem_factory(cfg), initial_mesh(cfg), acfg,
                         newton_config(cfg))
    assert len(rep.levels) == 1
