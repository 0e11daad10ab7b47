"""Generalized Newton iteration with estimator-steered stopping."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (ContactFaces, assemble_load, assemble_newton_system,
                       assemble_residual, assemble_stiffness,
                       dirichlet_mask_matrix)


@dataclass
class NewtonConfig:
    """Stopping control for the generalized Newton loop.

    ``stopping`` is one of ``estimator`` (global balance of the
    linearization estimator against the remaining terms), ``estimator-local``
    (the same balance enforced element by element) or ``residual`` (relative
    algebraic residual).
    """
    stopping: str = "estimator"
    gamma_lin: float = 0.01
    rtol: float = 1e-10
    max_iters: int = 30

    def __post_init__(self):
        if self.stopping not in ("estimator", "estimator-local", "residual"):
            raise ValueError(f"unknown stopping mode {self.stopping!r}")


@dataclass
class NewtonResult:
    u: np.ndarray
    u_prev: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    estimates: object = None


def newton_solve(problem, config=None, u0=None, estimator=None, operators=None):
    """Solve the Nitsche contact problem by the generalized Newton method.

    ``estimator``, if given, must provide ``estimate(u_k, u_prev) ->
    EstimateTable`` and is required for the estimator stopping modes.
    ``operators`` may carry precomputed ``(K, L, faces, dir_dofs)``.
    """
    config = config or NewtonConfig()
    space = problem.space
    if operators is None:
        K = assemble_stiffness(space, problem.material)
        L = assemble_load(problem)
        faces = ContactFaces(space, problem.material, problem.nitsche)
        dir_dofs = space.dirichlet_dofs()
    else:
        K, L, faces, dir_dofs = operators
    u_prev = np.zeros(space.ndof) if u0 is None else np.asarray(u0, dtype=float).copy()
    u_prev[dir_dofs] = 0.0
    Lfix = L.copy()
    Lfix[dir_dofs] = 0.0
    scale = max(float(np.linalg.norm(Lfix)), 1e-300)

    def res_norm(u):
        r = assemble_residual(problem, K, L, faces, u)
        r[dir_dofs] = 0.0
        return float(np.linalg.norm(r))

    trace = []
    result = NewtonResult(u=u_prev, u_prev=u_prev, iterations=0, converged=False, trace=trace)
    rnorm_prev = res_norm(u_prev)
    for k in range(1, config.max_iters + 1):
        A, b = assemble_newton_system(problem, K, L, faces, u_prev)
        A = dirichlet_mask_matrix(A, dir_dofs, space.ndof)
        b[dir_dofs] = 0.0
        step = spla.spsolve(A.tocsc(), b) - u_prev
        # backtracking keeps the residual norm monotone; without it the
        # branch switches near marginal stick/slip points can cycle
        t = 1.0
        best = (np.inf, None)
        while t >= 1.0 / 64.0:
            u_t = u_prev + t * step
            rn = res_norm(u_t)
            if rn <= (1.0 - 1e-4 * t) * rnorm_prev:
                break
            if rn < best[0]:
                best = (rn, u_t)
            t *= 0.5
        else:
            rn, u_t = best
        u_k, rnorm_k = u_t, rn
        entry = {"iteration": k}
        if config.stopping == "residual":
            rel = rnorm_k / scale
            entry["residual"] = rel
            done = rel <= config.rtol
        else:
            est = estimator.estimate(u_k, u_prev)
            entry.update(est.globals())
            result.estimates = est
            if config.stopping == "estimator":
                done = est.eta_lin_global() <= config.gamma_lin * est.eta_rest_global()
            else:
                done = bool(np.all(
                    est.eta_lin_local() <= config.gamma_lin * est.eta_rest_local()
                ))
        trace.append(entry)
        result.u = u_k
        result.u_prev = u_prev
        result.iterations = k
        if done:
            result.converged = True
            break
        u_prev = u_k
        rnorm_prev = rnorm_k
    return result
