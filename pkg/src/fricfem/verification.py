"""Property checks of the stress reconstruction and the Newton tangent.

Each check reports a relative residual against a stated tolerance, so the
same suite backs both the ``verify`` subcommand and the test harness.
"""

from dataclasses import dataclass

import numpy as np

from . import contact as ct
from .assembly import (ContactFaces, assemble_load, assemble_newton_system,
                       assemble_stiffness, _sample)
from .equilibration import Equilibrator
from .estimators import Estimators, trace_constant
from .fespace import edge_rule, face_projection_residual, triangle_rule
from .mesh import LABEL_NEUMANN_0, LABEL_NEUMANN_1


@dataclass
class PropertyCheck:
    name: str
    residual: float
    tol: float

    @property
    def passed(self):
        return bool(self.residual <= self.tol)

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.residual:.3e} (tol {self.tol:.1e})"


def _edge_quad(mesh, e, npts=6):
    va, vb = mesh.edges[e]
    s, w = edge_rule(npts)
    pts = (np.outer(1 - s, mesh.vertices[va])
           + np.outer(s, mesh.vertices[vb]))
    return s, w, pts


def _face_moments(vals, s, w, length):
    """Moments of sampled face values against the basis {1, s}."""
    out = [length * np.einsum("q,q...->...", w, vals),
           length * np.einsum("q,q...->...", w * s, vals)]
    return np.stack(out)


def lemma_properties(problem, faces, u_k, u_prev, mode="exact", tol=1e-9,
                     fault=None):
    """Residuals of the defining properties of the reconstructed stress.

    Checks, on each edge or element and against the basis {1, s} per face:
    continuity of the normal traces, elementwise equilibrium with the
    mean load, the Neumann moments of the total field and the contact
    moments of both parts.  ``fault`` (``"equilibrium"``) perturbs the
    reconstruction to demonstrate that the suite catches defects.
    """
    mesh = problem.mesh
    eq = Equilibrator(problem, faces, mode=mode)
    sdis, slin, _ = eq.reconstruct(u_k, u_prev)
    if fault == "equilibrium":
        sdis.coeffs[0, 0, 0, 1] += 1.0
    elif fault is not None:
        raise ValueError(f"unknown fault {fault!r}")
    stot = sdis + slin
    lengths = mesh.edge_lengths()
    scale = max(float(np.abs(sdis.coeffs).max()), 1e-300)

    checks = []

    # H(div) conformity: jump of the two normal-trace moments vanishes
    worst = 0.0
    ref = scale
    for e in range(len(mesh.edges)):
        t0, t1 = mesh.edge_tris[e]
        if t1 < 0:
            continue
        s, w, pts = _edge_quad(mesh, e)
        n = mesh.edge_normal(e)
        L = float(lengths[e])
        for fld in (sdis, slin):
            tr0 = fld.eval(np.array([t0]), pts[None]) [0] @ n
            tr1 = fld.eval(np.array([t1]), pts[None]) [0] @ n
            m = _face_moments(tr0 - tr1, s, w, L)
            worst = max(worst, float(np.abs(m).max()))
            ref = max(ref, float(np.abs(_face_moments(tr0, s, w, L)).max()))
    checks.append(PropertyCheck("normal trace continuity", worst / ref, tol))

    # equilibrium against the elementwise mean load
    bary, wv = triangle_rule(4)
    elems = np.arange(mesh.num_triangles)
    pts = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])
    fq = _sample(problem.body_force_fun, pts.reshape(-1, 2)).reshape(pts.shape)
    fbar = np.einsum("q,tqd->td", wv, fq)
    div = stot.divergence()
    num = float(np.abs(div + fbar).max())
    den = max(float(np.abs(fbar).max()), scale)
    checks.append(PropertyCheck("elementwise equilibrium", num / den, tol))

    # Neumann moments of the total field match the load moments
    worst = 0.0
    ref = scale
    for label in (LABEL_NEUMANN_0, LABEL_NEUMANN_1):
        fun = problem.neumann_funs.get(label)
        for e in mesh.edges_with_label(label):
            t = int(mesh.edge_tris[e][0])
            s, w, pts = _edge_quad(mesh, e)
            n = mesh.edge_normal(e)
            L = float(lengths[e])
            tr = stot.eval(np.array([t]), pts[None])[0] @ n
            g = np.zeros_like(tr) if fun is None else _sample(fun, pts)
            m = _face_moments(tr - g, s, w, L)
            worst = max(worst, float(np.abs(m).max()))
            ref = max(ref, float(np.abs(_face_moments(g, s, w, L)).max()))
    checks.append(PropertyCheck("neumann trace moments", worst / ref, tol))

    # contact moments of both parts match the branch functions
    sq, wq = edge_rule(faces.nq)
    pn_k, pt_k, _, _ = faces.traces(u_k)
    pn_prev, pt_prev, _, _ = faces.traces(u_prev)
    radius_k = ct.s_h(problem.friction, pn_k)
    radius_prev = ct.s_h(problem.friction, pn_prev)
    lin_n = ct.p_lin_n(pn_k, pn_prev) - ct.proj_neg(pn_k)
    lin_t = ct.p_lin_t(pt_k, pt_prev, radius_prev) - ct.proj_ball(pt_k, radius_k)
    worst_d = worst_l = 0.0
    ref = scale
    for i, e in enumerate(faces.edges):
        t = int(mesh.edge_tris[e][0])
        n = mesh.edge_normal(e)
        tau = np.array([-n[1], n[0]])
        va, vb = mesh.edges[e]
        pts = (np.outer(1 - sq, mesh.vertices[va])
               + np.outer(sq, mesh.vertices[vb]))
        L = float(lengths[e])
        trd = sdis.eval(np.array([t]), pts[None])[0] @ n
        trl = slin.eval(np.array([t]), pts[None])[0] @ n
        md = _face_moments(
            np.column_stack([trd @ n - ct.proj_neg(pn_k[i]),
                             trd @ tau - ct.proj_ball(pt_k[i], radius_k[i])]),
            sq, wq, L)
        ml = _face_moments(
            np.column_stack([trl @ n - lin_n[i], trl @ tau - lin_t[i]]),
            sq, wq, L)
        worst_d = max(worst_d, float(np.abs(md).max()))
        worst_l = max(worst_l, float(np.abs(ml).max()))
        gm = _face_moments(np.column_stack([pn_k[i], pt_k[i]]), sq, wq, L)
        ref = max(ref, float(np.abs(gm).max()))
    checks.append(PropertyCheck("contact trace moments", worst_d / ref, tol))
    checks.append(PropertyCheck("contact linearization moments",
                                worst_l / ref, tol))
    return checks


def rewrite_identities(problem, faces, u_k, u_prev, mode="exact", tol=1e-9,
                       trace_safety=1.0):
    """Agreement of the estimator terms with their data-only rewrites.

    Oscillation reduces to the mean-free part of the load, the Neumann
    term to the projection residual of the traction datum, and the contact
    and friction terms to the projection residuals of the branch values.
    """
    mesh = problem.mesh
    est = Estimators(problem, faces, mode=mode, trace_safety=trace_safety)
    table = est.estimate(u_k, u_prev)
    lengths = mesh.edge_lengths()
    h = mesh.diameters()
    checks = []

    bary, wv = triangle_rule(4)
    pts = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])
    fq = _sample(problem.body_force_fun, pts.reshape(-1, 2)).reshape(pts.shape)
    fbar = np.einsum("q,tqd->td", wv, fq)
    wA = wv[None, :] * mesh.areas[:, None]
    osc2 = (h / np.pi) * np.sqrt(
        np.einsum("tq,tqd->t", wA, (fq - fbar[:, None, :]) ** 2))
    # relative to the data magnitude, so that an identically zero
    # oscillation term does not divide rounding noise by itself
    scale = (h / np.pi) * np.sqrt(np.einsum("tq,tqd->t", wA, fq ** 2))
    data_scale = max(float(scale.max()), 1e-300)
    den = max(float(np.abs(table.osc).max()), data_scale)
    checks.append(PropertyCheck("oscillation rewrite",
                                float(np.abs(table.osc - osc2).max()) / den,
                                tol))

    sq, wq = edge_rule(faces.nq)
    nt = mesh.num_triangles
    neu2 = np.zeros(nt)
    neu_scale = 1e-300
    for label in (LABEL_NEUMANN_0, LABEL_NEUMANN_1):
        fun = problem.neumann_funs.get(label)
        for e in mesh.edges_with_label(label):
            t = int(mesh.edge_tris[e][0])
            va, vb = mesh.edges[e]
            xq = (np.outer(1 - sq, mesh.vertices[va])
                  + np.outer(sq, mesh.vertices[vb]))
            g = np.zeros((len(sq), 2)) if fun is None else _sample(fun, xq)
            L = float(lengths[e])
            C = trace_constant(mesh, t, int(e), safety=trace_safety)
            neu2[t] += C * np.sqrt(L) * face_projection_residual(g, wq, L, 1)
            gnorm = np.sqrt(L * float(np.einsum("q,qd->", wq, g ** 2)))
            neu_scale = max(neu_scale, C * np.sqrt(L) * gnorm)
    den = max(float(np.abs(table.neu).max()), neu_scale, data_scale)
    checks.append(PropertyCheck("neumann rewrite",
                                float(np.abs(table.neu - neu2).max()) / den,
                                tol))

    pn_k, pt_k, _, _ = faces.traces(u_k)
    radius_k = ct.s_h(problem.friction, pn_k)
    cnt2 = np.zeros(nt)
    frc2 = np.zeros(nt)
    for i, e in enumerate(faces.edges):
        t = int(mesh.edge_tris[e][0])
        L = float(lengths[e])
        cnt2[t] += np.sqrt(L) * face_projection_residual(
            ct.proj_neg(pn_k[i]), wq, L, 1)
        frc2[t] += np.sqrt(L) * face_projection_residual(
            ct.proj_ball(pt_k[i], radius_k[i]), wq, L, 1)
    ct_scale = 1e-300
    for i, e in enumerate(faces.edges):
        L = float(lengths[e])
        pnorm = np.sqrt(L * float(wq @ (pn_k[i] ** 2 + pt_k[i] ** 2)))
        ct_scale = max(ct_scale, np.sqrt(L) * pnorm)
    den = max(float(np.abs(table.cnt).max()),
              float(np.abs(table.frc).max()), ct_scale)
    checks.append(PropertyCheck("contact rewrite",
                                float(np.abs(table.cnt - cnt2).max()) / den,
                                tol))
    checks.append(PropertyCheck("friction rewrite",
                                float(np.abs(table.frc - frc2).max()) / den,
                                tol))
    return checks


def tangent_check(problem, tol=1e-5, seed=0, kink_margin=1e-3, tries=20):
    """Relative mismatch between the assembled tangent and finite differences.

    Draws random states until all contact traces are safely away from the
    projection kinks, then compares the directional derivative of the
    residual against the tangent applied to the direction.
    """
    rng = np.random.default_rng(seed)
    space = problem.space
    K = assemble_stiffness(space, problem.material)
    L = assemble_load(problem)
    faces = ContactFaces(space, problem.material, problem.nitsche)
    scale = max(float(np.abs(L).max()) / problem.material.E, 1e-6)

    for _ in range(tries):
        u = scale * rng.standard_normal(space.ndof)
        pn, pt, _, _ = faces.traces(u)
        radius = ct.s_h(problem.friction, pn)
        margin = kink_margin * max(float(np.abs(pn).max()), 1e-300)
        if np.abs(pn).min() < margin:
            continue
        if np.abs(np.abs(pt) - radius).min() < margin:
            continue
        break
    else:
        raise RuntimeError("could not sample a state away from the kinks")

    v = rng.standard_normal(space.ndof)
    v /= np.linalg.norm(v)
    A, b = assemble_newton_system(problem, K, L, faces, u)

    # the matrix differentiates the residual with the friction threshold
    # frozen at the base point, and A w - b = -residual(w) there
    radius0 = ct.s_h(problem.friction, pn)

    def frozen_residual(w):
        r = L - K @ w
        pn_w, pt_w, _, _ = faces.traces(w)
        for i in range(len(faces)):
            wq = faces.w * faces.lengths[i]
            d = faces.dofs[i]
            r[d] += np.einsum("q,qa->a", wq * ct.proj_neg(pn_w[i]), faces.Bn[i])
            r[d] += np.einsum("q,qa->a",
                              wq * ct.proj_ball(pt_w[i], radius0[i]),
                              faces.Bt[i])
        return r

    eps = 1e-6 * scale
    fd = (frozen_residual(u + eps * v) - frozen_residual(u - eps * v)) / (2 * eps)
    Jv = -(A @ v)
    rel = float(np.linalg.norm(fd - Jv) / max(np.linalg.norm(Jv), 1e-300))
    return PropertyCheck("tangent vs finite differences", rel, tol)
