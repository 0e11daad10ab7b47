"""Adaptive refinement loop: marking, refinement and per-level reporting."""

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import ContactFaces, Problem
from .estimators import Estimators, error_norms, surrogate_bounds
from .newton import NewtonConfig, newton_solve


@dataclass
class AdaptiveConfig:
    """Controls of the outer refinement loop."""
    theta_mark: float = 0.062
    max_levels: int = 11
    max_dofs: int = 200000
    rho_even: float = 0.0  # max/mean evenness stop; 0 disables
    mode: str = "adaptive"
    warm_start: bool = True

    def __post_init__(self):
        if not 0.0 < self.theta_mark <= 1.0:
            raise ValueError("theta_mark must be in (0, 1]")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rho_even and self.rho_even <= 1.0:
            raise ValueError("rho_even must be > 1")


@dataclass
class AdaptiveReport:
    """Per-level records of one refinement campaign."""
    mode: str
    levels: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    traces: list = field(default_factory=list)


def mark_elements(eta_tot, theta):
    """Ids of the ceil(theta * n) elements with the largest estimator.

    Ties are broken by ascending element id.
    """
    eta_tot = np.asarray(eta_tot)
    n = len(eta_tot)
    k = math.ceil(theta * n)
    order = np.lexsort((np.arange(n), -eta_tot))
    return np.sort(order[:k])


def contact_interval(problem, u, tol_gap=None):
    """Extent (min, max) of the contact zone along the contact boundary.

    A contact-boundary vertex counts as touching when its outward normal
    displacement stays above ``-tol_gap``.  The coordinates returned are
    the positions along the boundary (x for a horizontal boundary, y for
    a vertical one).  Returns None when nothing touches.
    """
    mesh = problem.mesh
    if tol_gap is None:
        tol_gap = 1e-6 * float(mesh.diameters().max())
    touching = []
    for e in mesh.edges_with_label("C"):
        n = mesh.edge_normal(e)
        along = 0 if abs(n[0]) < abs(n[1]) else 1
        for v in mesh.edges[e]:
            un = u[2 * v] * n[0] + u[2 * v + 1] * n[1]
            if un >= -tol_gap:
                touching.append(float(mesh.vertices[v][along]))
    if not touching:
        return None
    return (min(touching), max(touching))


def transfer_solution(old_space, u_old, new_space):
    """Interpolate a displacement field onto the nodes of another space."""
    pts = new_space.node_coords()
    elems, bary = old_space.locate(pts)
    from .fespace import shape_values

    N = shape_values(old_space.degree, bary)  # (n, nen)
    dofs = old_space.element_dofs()[elems]  # (n, 2*nen)
    ue = u_old[dofs].reshape(len(elems), old_space.nen, 2)
    vals = np.einsum("qn,qnd->qd", N, ue)
    u_new = np.empty(new_space.ndof)
    u_new[0::2] = vals[:, 0]
    u_new[1::2] = vals[:, 1]
    return u_new


def solve_reference(make_problem, mesh, material):
    """P2 reference solution on the given fine mesh."""
    problem = make_problem(mesh, degree=2)
    res = newton_solve(problem, NewtonConfig(stopping="residual", rtol=1e-10))
    if not res.converged:
        raise RuntimeError("reference solve did not converge")
    return problem.space, res.u


def adaptive_solve(make_problem, mesh0, config=None, newton_config=None,
                   reference=None, tol_gap=None, mode_rec="exact",
                   progress=None):
    """Run the refinement loop and collect a per-level report.

    ``make_problem(mesh, degree=1)`` builds the discrete problem on a mesh;
    ``reference``, if given, is a ``(ref_space, u_ref)`` pair used for error
    norms and the surrogate bound bracket.
    """
    config = config or AdaptiveConfig()
    newton_config = newton_config or NewtonConfig()
    report = AdaptiveReport(mode=config.mode)
    mesh = mesh0
    carried = None  # (space, u) of the previous level for warm starts

    for level in range(config.max_levels):
        problem = make_problem(mesh, degree=1)
        faces = ContactFaces(problem.space, problem.material, problem.nitsche)
        estimator = None
        if newton_config.stopping != "residual":
            estimator = Estimators(problem, faces, mode=mode_rec)
        u0 = None
        if config.warm_start and carried is not None:
            u0 = transfer_solution(carried[0], carried[1], problem.space)
        res = newton_solve(problem, newton_config, u0=u0, estimator=estimator)
        if not res.converged:
            raise RuntimeError(f"Newton did not converge at level {level}")
        if res.estimates is not None:
            table = res.estimates
        else:
            table = Estimators(problem, faces, mode=mode_rec).estimate(
                res.u, res.u_prev)
        eta = table.eta_tot
        g = table.globals()

        row = {
            "level": level,
            "elements": mesh.num_triangles,
            "dofs": problem.space.ndof,
            "newton_iterations": res.iterations,
            "eta_max": float(eta.max()),
            "eta_mean": float(eta.mean()),
            "eta_min": float(eta.min()),
            "eta_q1": float(np.percentile(eta, 25)),
            "eta_median": float(np.percentile(eta, 50)),
            "eta_q3": float(np.percentile(eta, 75)),
        }
        for name, value in g.items():
            row[f"eta_{name}"] = value
        interval = contact_interval(problem, res.u, tol_gap=tol_gap)
        row["contact_left"] = interval[0] if interval else float("nan")
        row["contact_right"] = interval[1] if interval else float("nan")

        if reference is not None:
            ref_space, u_ref = reference
            h1, en = error_norms(problem.space, res.u, ref_space, u_ref,
                                 problem.material)
            L, U, i_low, i_up = surrogate_bounds(
                problem, faces, res.u, ref_space, u_ref, g["tot"])
            row.update(h1_error=h1, energy_error=en, lower_bound=L,
                       upper_bound=U, i_eff_low=i_low, i_eff_up=i_up)

        report.levels.append(row)
        report.meshes.append(mesh)
        report.solutions.append(res.u)
        report.tables.append(table)
        report.traces.append(res.trace)
        carried = (problem.space, res.u)
        if progress is not None:
            progress(row)

        if config.rho_even and eta.max() <= config.rho_even * eta.mean():
            break
        if level == config.max_levels - 1:
            break
        if config.mode == "uniform":
            mesh = mesh.refine(uniform=True)
        else:
            mesh = mesh.refine(marked=mark_elements(eta, config.theta_mark))
        if 2 * mesh.num_vertices > config.max_dofs:
            break
    return report


def fitted_rate(dofs, errors, points=4):
    """Least-squares slope of log(error) against log(dofs), sign flipped.

    Uses the last ``points`` levels (or all of them if fewer).
    """
    dofs = np.asarray(dofs, dtype=float)[-points:]
    errors = np.asarray(errors, dtype=float)[-points:]
    keep = errors > 0
    slope = np.polyfit(np.log(dofs[keep]), np.log(errors[keep]), 1)[0]
    return float(-slope)
