"""Local and global a posteriori error estimators.

The table of local estimators is driven by the equilibrated stress
reconstruction: oscillation and Neumann terms use the total field, the
stress term compares the discretization part against the Cauchy stress of
the iterate, and the linearization terms measure the size of the
linearization part in the volume and on the contact faces.  The module
also provides the residual-based neighborhood diagnostic, error norms
against a reference solution and the surrogate lower/upper bounds with
their effectivity indices.
"""

import numpy as np
import scipy.linalg as sla

from . import contact as ct
from .equilibration import Equilibrator
from .fespace import edge_rule, face_projection_values, triangle_rule
from .mesh import LABEL_NEUMANN_0, LABEL_NEUMANN_1


def trace_constant(mesh, element, edge, degree=3, safety=1.0):
    """Numerical constant of the trace inequality for one element face.

    Estimates the sharp constant in ``||v - mean_F v||_F <= C h_F^(1/2)
    ||grad v||_T`` by a generalized eigenvalue problem over polynomials of
    the given degree on the element (the mean-free constraint removes the
    constant mode).
    """
    verts = mesh.vertices[mesh.triangles[element]]
    c = verts.mean(axis=0)
    h = mesh.diameters()[element]
    exps = [(i, j) for k in range(1, degree + 1) for i in range(k + 1)
            for j in [k - i]]
    nb = len(exps)

    bary, wv = triangle_rule(2 * degree)
    pts = bary @ verts  # (nq, 2)
    area = mesh.areas[element]
    loc = (pts - c) / h
    gx = np.zeros((len(wv), nb))
    gy = np.zeros((len(wv), nb))
    for m, (i, j) in enumerate(exps):
        if i > 0:
            gx[:, m] = i * loc[:, 0] ** (i - 1) * loc[:, 1] ** j / h
        if j > 0:
            gy[:, m] = j * loc[:, 0] ** i * loc[:, 1] ** (j - 1) / h
    B = area * (np.einsum("q,qi,qj->ij", wv, gx, gx)
                + np.einsum("q,qi,qj->ij", wv, gy, gy))

    va, vb = mesh.edges[edge]
    pa, pb = mesh.vertices[va], mesh.vertices[vb]
    hf = float(np.hypot(*(pb - pa)))
    s, ws = edge_rule(6)
    xq = np.outer(1 - s, pa) + np.outer(s, pb)
    locf = (xq - c) / h
    V = np.column_stack([locf[:, 0] ** i * locf[:, 1] ** j for i, j in exps])
    mean = ws @ V
    V0 = V - mean[None, :]
    A = hf * np.einsum("q,qi,qj->ij", ws, V0, V0)

    w = sla.eigh(A, hf * B, eigvals_only=True)
    return safety * float(np.sqrt(max(w.max(), 0.0)))


class EstimateTable:
    """Per-element estimator values with global root-sum-square aggregates.

    Components are stored as arrays of length ``num_triangles``:
    oscillation ``osc``, stress ``str_``, linearization volume ``lin1`` and
    face parts ``lin2n``/``lin2t``, Neumann ``neu``, contact ``cnt`` and
    friction ``frc``.
    """

    COLUMNS = ("osc", "str_", "lin1", "lin2n", "lin2t", "neu", "cnt", "frc")

    def __init__(self, mesh, **cols):
        self.mesh = mesh
        for name in self.COLUMNS:
            setattr(self, name, cols[name])

    @property
    def eta_lin(self):
        return self.lin1 + np.hypot(self.lin2n, self.lin2t)

    @property
    def eta_tot(self):
        return np.hypot(self.osc + self.str_ + self.lin1 + self.neu,
                        self.cnt + self.frc + self.lin2n + self.lin2t)

    def global_value(self, values):
        return float(np.sqrt(np.sum(np.asarray(values) ** 2)))

    def eta_lin_global(self):
        return self.global_value(self.eta_lin)

    def eta_rest_global(self):
        return sum(self.global_value(getattr(self, name))
                   for name in ("osc", "str_", "neu", "cnt", "frc"))

    def eta_lin_local(self):
        return self.eta_lin

    def eta_rest_local(self):
        return self.osc + self.str_ + self.neu + self.cnt + self.frc

    def globals(self):
        out = {name.rstrip("_"): self.global_value(getattr(self, name))
               for name in self.COLUMNS}
        out["lin"] = self.eta_lin_global()
        out["tot"] = self.global_value(self.eta_tot)
        return out


class Estimators:
    """Computes estimator tables for the iterates of one discrete problem."""

    def __init__(self, problem, faces, mode="exact", trace_safety=1.0):
        self.problem = problem
        self.faces = faces
        self.mesh = problem.mesh
        self.space = problem.space
        self.equilibrator = Equilibrator(problem, faces, mode=mode)
        self._precompute(trace_safety)

    def _precompute(self, trace_safety):
        mesh = self.mesh
        eq = self.equilibrator
        self.vbary, self.vw = eq.vbary, eq.vw
        self.vpts = eq.vpts
        self.fq = eq.fq
        self.sq_face, self.wq_face = edge_rule(self.faces.nq)
        lengths = mesh.edge_lengths()

        # Neumann faces: geometry, data samples and trace constants
        self.neumann_faces = []
        for label in (LABEL_NEUMANN_0, LABEL_NEUMANN_1):
            for e in mesh.edges_with_label(label):
                t = int(mesh.edge_tris[e][0])
                n = mesh.edge_normal(e)
                va, vb = mesh.edges[e]
                pts = (np.outer(1 - self.sq_face, mesh.vertices[va])
                       + np.outer(self.sq_face, mesh.vertices[vb]))
                gvals = eq.neumann_data[int(e)]
                C = trace_constant(mesh, t, int(e), safety=trace_safety)
                self.neumann_faces.append(
                    (int(e), t, float(lengths[e]), n, pts, gvals, C))

        # contact faces: quadrature points reused from the face structure
        self.contact_pts = []
        for i, e in enumerate(self.faces.edges):
            t = int(mesh.edge_tris[e][0])
            va, vb = mesh.edges[e]
            pts = (np.outer(1 - self.sq_face, mesh.vertices[va])
                   + np.outer(self.sq_face, mesh.vertices[vb]))
            self.contact_pts.append((int(e), t, float(lengths[e]),
                                     mesh.edge_normal(e), pts))

    def estimate(self, u_k, u_prev):
        mesh = self.mesh
        mat = self.problem.material
        faces = self.faces
        sdis, slin, _ = self.equilibrator.reconstruct(u_k, u_prev)
        stot = sdis + slin

        elems = np.arange(mesh.num_triangles)
        wA = self.vw[None, :] * mesh.areas[:, None]
        h = mesh.diameters()

        # oscillation: element residual of the total field against f
        div = stot.divergence()  # (nt, 2), constant rows
        resid = self.fq + div[:, None, :]
        osc = (h / np.pi) * np.sqrt(np.einsum("tq,tqd->t", wA, resid ** 2))

        # stress: volume misfit of the discretization part
        sig_u = self.space.stress(u_k, elems, self.vbary, mat.lam, mat.mu)
        sd_q = sdis.eval(elems, self.vpts)
        str_ = np.sqrt(np.einsum("tq,tqrd->t", wA, (sd_q - sig_u) ** 2))

        # linearization, volume part
        sl_q = slin.eval(elems, self.vpts)
        lin1 = np.sqrt(np.einsum("tq,tqrd->t", wA, sl_q ** 2))

        nt = mesh.num_triangles
        lin2n = np.zeros(nt)
        lin2t = np.zeros(nt)
        neu = np.zeros(nt)
        cnt = np.zeros(nt)
        frc = np.zeros(nt)

        for (e, t, L, n, pts, gvals, C) in self.neumann_faces:
            tr = stot.eval(np.array([t]), pts[None, :, :])[0] @ n
            val = L * np.einsum("q,qd->", self.wq_face, (tr - gvals) ** 2)
            neu[t] += C * np.sqrt(L) * np.sqrt(val)

        pn_k, pt_k, _, _ = faces.traces(u_k)
        pn_prev, pt_prev, _, _ = faces.traces(u_prev)
        radius_k = ct.s_h(self.problem.friction, pn_k)
        g_dis_n = ct.proj_neg(pn_k)
        g_dis_t = ct.proj_ball(pt_k, radius_k)

        for i, (e, t, L, n, pts) in enumerate(self.contact_pts):
            tau = np.array([-n[1], n[0]])
            trd = sdis.eval(np.array([t]), pts[None, :, :])[0] @ n
            trl = slin.eval(np.array([t]), pts[None, :, :])[0] @ n
            wl = L * self.wq_face
            cnt[t] += np.sqrt(L) * np.sqrt(np.sum(wl * (trd @ n - g_dis_n[i]) ** 2))
            frc[t] += np.sqrt(L) * np.sqrt(np.sum(wl * (trd @ tau - g_dis_t[i]) ** 2))
            lin2n[t] += np.sqrt(L) * np.sqrt(np.sum(wl * (trl @ n) ** 2))
            lin2t[t] += np.sqrt(L) * np.sqrt(np.sum(wl * (trl @ tau) ** 2))

        return EstimateTable(mesh, osc=osc, str_=str_, lin1=lin1,
                             lin2n=lin2n, lin2t=lin2t, neu=neu, cnt=cnt,
                             frc=frc)


def eta_sharp(problem, faces, u_k):
    """Residual-based neighborhood diagnostic, one value per element.

    Five square-rooted sums over the patch of elements sharing a vertex
    with each element: volume residual, interior stress jumps, Neumann
    mismatch and the normal/tangential contact mismatches, each measured
    against a projected datum of one degree higher on the faces.
    """
    mesh = problem.mesh
    space = problem.space
    mat = problem.material
    h = mesh.diameters()
    lengths = mesh.edge_lengths()
    bary, wv = triangle_rule(4)
    elems = np.arange(mesh.num_triangles)
    pts = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])
    from .assembly import _sample
    fq = _sample(problem.body_force_fun, pts.reshape(-1, 2)).reshape(pts.shape)
    wA = wv[None, :] * mesh.areas[:, None]

    # volume residual per element (stress of a P1 field is divergence free)
    sig = space.stress(u_k, elems, bary[:1], mat.lam, mat.mu)[:, 0]  # (nt,2,2)
    vol = h ** 2 * np.einsum("tq,tqd->t", wA, fq ** 2)

    # face terms, attributed to adjacent elements afterwards
    sq, wq = edge_rule(faces.nq)
    jump2 = {}
    for e in range(len(mesh.edges)):
        t0, t1 = mesh.edge_tris[e]
        if t1 < 0:
            continue
        n = mesh.edge_normal(e)
        d = (sig[t0] - sig[t1]) @ n
        jump2[e] = float(lengths[e] ** 2 * (d @ d))

    neu2 = {}
    for label in (LABEL_NEUMANN_0, LABEL_NEUMANN_1):
        fun = problem.neumann_funs.get(label)
        for e in mesh.edges_with_label(label):
            t = int(mesh.edge_tris[e][0])
            n = mesh.edge_normal(e)
            va, vb = mesh.edges[e]
            xq = (np.outer(1 - sq, mesh.vertices[va])
                  + np.outer(sq, mesh.vertices[vb]))
            g = np.zeros((len(sq), 2)) if fun is None else _sample(fun, xq)
            gp = face_projection_values(g, wq, 2)
            r = sig[t] @ n - gp
            neu2[e] = float(lengths[e] ** 2 * np.einsum("q,qd->", wq, r ** 2))

    pn_k, pt_k, _, _ = faces.traces(u_k)
    radius_k = ct.s_h(problem.friction, pn_k)
    sn_face = {}
    st_face = {}
    for i, e in enumerate(faces.edges):
        t = int(mesh.edge_tris[e][0])
        n = mesh.edge_normal(e)
        tau = np.array([-n[1], n[0]])
        L = float(lengths[e])
        sn = float(n @ sig[t] @ n)
        st = float(tau @ sig[t] @ n)
        gn = face_projection_values(ct.proj_neg(pn_k[i]), wq, 2)
        gt = face_projection_values(ct.proj_ball(pt_k[i], radius_k[i]), wq, 2)
        sn_face[e] = float(L ** 2 * np.sum(wq * (sn - gn) ** 2))
        st_face[e] = float(L ** 2 * np.sum(wq * (st - gt) ** 2))

    out = np.zeros(mesh.num_triangles)
    nbh = mesh.element_neighborhoods()
    tri_edge_sets = [set(int(e) for e in mesh.tri_edges[t])
                     for t in range(mesh.num_triangles)]
    for t in range(mesh.num_triangles):
        patch = nbh[t]
        edges = set()
        for tp in patch:
            edges |= tri_edge_sets[tp]
        s1 = sum(vol[tp] for tp in patch)
        s2 = sum(jump2.get(e, 0.0) for e in edges)
        s3 = sum(neu2.get(e, 0.0) for e in edges)
        s4 = sum(sn_face.get(e, 0.0) for e in edges)
        s5 = sum(st_face.get(e, 0.0) for e in edges)
        out[t] = np.sqrt(s1) + np.sqrt(s2) + np.sqrt(s3) + np.sqrt(s4) + np.sqrt(s5)
    return out


def eval_at_points(space, u, elems, bary):
    """Values of ``u`` at located points, one (element, bary) pair each."""
    from .fespace import shape_values
    N = shape_values(space.degree, bary)  # (np, nen)
    dofs = space.element_dofs()[elems]
    ue = u[dofs].reshape(len(elems), space.nen, 2)
    return np.einsum("qn,qnd->qd", N, ue)


def grad_at_points(space, u, elems, bary):
    """Gradients du_d/dx_j of ``u`` at located points, shape (np, 2, 2)."""
    from .fespace import shape_bary_grads
    dldx = space.bary_gradients()[elems]  # (np, 3, 2)
    dNdl = shape_bary_grads(space.degree, bary)  # (np, nen, 3)
    G = np.einsum("qni,qid->qnd", dNdl, dldx)
    dofs = space.element_dofs()[elems]
    ue = u[dofs].reshape(len(elems), space.nen, 2)
    return np.einsum("qnj,qnd->qdj", G, ue)


def error_norms(space, u, ref_space, u_ref, material):
    """H1 and energy norms of the difference, integrated on the fine mesh.

    The coarse function is evaluated at the fine quadrature points by
    point location, so the two meshes only need to cover the same domain.
    """
    mesh_f = ref_space.mesh
    mat_bary, wv = triangle_rule(4)
    elems = np.arange(mesh_f.num_triangles)
    pts = np.einsum("qi,tid->tqd", mat_bary, mesh_f.vertices[mesh_f.triangles])
    flat = pts.reshape(-1, 2)
    loc_elems, loc_bary = space.locate(flat)

    vals_c = eval_at_points(space, u, loc_elems, loc_bary).reshape(pts.shape)
    grads_c = grad_at_points(space, u, loc_elems, loc_bary).reshape(pts.shape + (2,))
    vals_f = ref_space.eval_function(u_ref, elems, mat_bary)
    grads_f = ref_space.eval_gradient(u_ref, elems, mat_bary)

    dv = vals_f - vals_c
    dg = grads_f - grads_c
    wA = wv[None, :] * mesh_f.areas[:, None]
    l2 = np.einsum("tq,tqd->", wA, dv ** 2)
    semi = np.einsum("tq,tqdj->", wA, dg ** 2)
    h1 = float(np.sqrt(l2 + semi))

    eps = 0.5 * (dg + np.swapaxes(dg, -1, -2))
    trace = eps[..., 0, 0] + eps[..., 1, 1]
    energy2 = np.einsum("tq,tq->", wA, material.lam * trace ** 2
                        + 2.0 * material.mu * np.einsum("tqdj,tqdj->tq", eps, eps))
    return h1, float(np.sqrt(energy2))


def surrogate_bounds(problem, faces, u_h, ref_space, u_ref, eta_tot):
    """Lower/upper comparison quantities for the total estimator.

    Returns ``(L, U, I_eff_low, I_eff_up)`` where L is the scaled energy
    norm of the difference from the reference and U adds to the scaled
    energy norm the contact-face mismatch between the reference tractions
    and the projected Nitsche tractions of the iterate.
    """
    mat = problem.material
    _, en = error_norms(problem.space, u_h, ref_space, u_ref, mat)
    L = np.sqrt(mat.mu) * en
    U = np.sqrt(2.0 * mat.lam + 4.0 * mat.mu) * en

    mesh = problem.mesh
    lengths = mesh.edge_lengths()
    sq, wq = edge_rule(faces.nq)
    pn_k, pt_k, _, _ = faces.traces(u_h)
    radius_k = ct.s_h(problem.friction, pn_k)
    g_n = ct.proj_neg(pn_k)
    g_t = ct.proj_ball(pt_k, radius_k)

    sum_n = 0.0
    sum_t = 0.0
    for i, e in enumerate(faces.edges):
        n = mesh.edge_normal(e)
        tau = np.array([-n[1], n[0]])
        va, vb = mesh.edges[e]
        xq = (np.outer(1 - sq, mesh.vertices[va])
              + np.outer(sq, mesh.vertices[vb]))
        le, lb = ref_space.locate(xq)
        g = grad_at_points(ref_space, u_ref, le, lb)
        eps = 0.5 * (g + np.swapaxes(g, -1, -2))
        tr = eps[..., 0, 0] + eps[..., 1, 1]
        sig = 2.0 * mat.mu * eps
        sig[..., 0, 0] += mat.lam * tr
        sig[..., 1, 1] += mat.lam * tr
        snn = np.einsum("d,qdj,j->q", n, sig, n)
        stt = np.einsum("d,qdj,j->q", tau, sig, n)
        L_f = float(lengths[e])
        sum_n += L_f ** 2 * np.sum(wq * (snn - g_n[i]) ** 2)
        sum_t += L_f ** 2 * np.sum(wq * (stt - g_t[i]) ** 2)
    U += np.sqrt(sum_n) + np.sqrt(sum_t)

    if L == 0.0:
        return L, U, np.inf, np.inf
    return float(L), float(U), float(eta_tot / L), float(eta_tot / U)
