import numpy as np
import pytest

from fricfem.assembly import (ContactFaces, assemble_load, assemble_residual,
                              assemble_stiffness)
from fricfem.campaigns import builtin_config, initial_mesh, problem_factory
from fricfem.estimators import Estimators
from fricfem.newton import NewtonConfig, newton_solve


@pytest.fixture(scope="module")
def problem():
    cfg = builtin_config("tresca-rect")
    return problem_factory(cfg)(initial_mesh(cfg), degree=1)


def test_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(stopping="nope")


def test_residual_stopping_converges(problem):
    res = newton_solve(problem, NewtonConfig(stopping="residual", rtol=1e-10))
    assert res.converged
    K = assemble_stiffness(problem.space, problem.material)
    L = assemble_load(problem)
    faces = ContactFaces(problem.space, problem.material, problem.nitsche)
    r = assemble_residual(problem, K, L, faces, res.u)
    r[problem.space.dirichlet_dofs()] = 0.0
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(L)
    assert len(res.trace) == res.iterations
    assert res.trace[-1]["residual"] <= 1e-10


def test_estimator_stopping_converges(problem):
    faces = ContactFaces(problem.space, problem.material, problem.nitsche)
    est = Estimators(problem, faces)
    res = newton_solve(problem, NewtonConfig(stopping="estimator"),
                       estimator=est)
    assert res.converged
    assert res.estimates is not None
    # the exit inequality holds at the final iterate
    last = res.trace[-1]
    rest = last["osc"] + last["str"] + last["neu"] + last["cnt"] + last["frc"]
    assert last["lin"] <= 0.01 * rest


def test_local_estimator_stopping(problem):
    faces = ContactFaces(problem.space, problem.material, problem.nitsche)
    est = Estimators(problem, faces)
    res = newton_solve(problem, NewtonConfig(stopping="estimator-local"),
                       estimator=est)
    assert res.converged
    t = res.estimates
    assert np.all(t.eta_lin_local() <= 0.01 * t.eta_rest_local() + 1e-300)


def test_stopping_modes_agree(problem):
    faces = ContactFaces(problem.space, problem.material, problem.nitsche)
    res_r = newton_solve(problem, NewtonConfig(stopping="residual", rtol=1e-10))
    res_e = newton_solve(problem, NewtonConfig(stopping="estimator"),
                         estimator=Estimators(problem, faces))
    scale = np.abs(res_r.u).max()
    assert np.abs(res_e.u - res_r.u).max() <= 1e-3 * scale


def test_warm_start_from_solution(problem):
    res = newton_solve(problem, NewtonConfig(stopping="residual", rtol=1e-10))
    res2 = newton_solve(problem, NewtonConfig(stopping="residual", rtol=1e-9),
                        u0=res.u)
    assert res2.converged
    assert res2.iterations == 1


def test_max_iters_respected(problem):
    res = newton_solve(problem, NewtonConfig(stopping="residual", rtol=1e-10,
                                             max_iters=1))
    assert not res.converged
    assert res.iterations == 1
