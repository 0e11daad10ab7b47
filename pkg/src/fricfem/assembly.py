"""Assembly of the elasticity system and the Nitsche contact terms."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import contact as ct
from .fespace import LagrangeSpace, edge_rule, triangle_rule
from .mesh import LABEL_CONTACT, LABEL_NEUMANN_0, LABEL_NEUMANN_1

#: quadrature points per contact face; the integrands carry projection kinks
FACE_QUAD_POINTS = 6


def _as_vector_fun(f):
    if callable(f):
        return f
    arr = np.asarray(f, dtype=float)
    return lambda x: arr


@dataclass
class Problem:
    """A frictional contact problem on a labeled mesh."""
    mesh: object
    material: ct.MaterialParams
    friction: ct.FrictionModel
    nitsche: ct.NitscheParams
    body_force: object  # (2,) array or callable x -> (2,)
    neumann: dict = field(default_factory=dict)  # label -> array or callable
    degree: int = 1

    def __post_init__(self):
        self.space = LagrangeSpace(self.mesh, self.degree)
        self.body_force_fun = _as_vector_fun(self.body_force)
        self.neumann_funs = {k: _as_vector_fun(v) for k, v in self.neumann.items()}


def assemble_stiffness(space, material):
    """Sparse symmetric stiffness matrix of a(u, v)."""
    mesh = space.mesh
    lam, mu = material.lam, material.mu
    bary, w = triangle_rule(max(2 * (space.degree - 1), 1))
    elems = np.arange(mesh.num_triangles)
    G = space.physical_shape_grads(elems, bary)  # (nt, nq, nen, 2)
    wa = w[None, :] * mesh.areas[:, None]  # (nt, nq)
    gg = np.einsum("tqid,tqjd->tqij", G, G)
    nen = space.nen
    K = np.zeros((mesh.num_triangles, 2 * nen, 2 * nen))
    for d in range(2):
        for c in range(2):
            blk = (
                lam * np.einsum("tq,tqi,tqj->tij", wa, G[..., d], G[..., c])
                + mu * np.einsum("tq,tqi,tqj->tij", wa, G[..., c], G[..., d])
            )
            if d == c:
                blk += mu * np.einsum("tq,tqij->tij", wa, gg)
            K[:, d::2, c::2] = blk
    dofs = space.element_dofs()
    rows = np.repeat(dofs, 2 * nen, axis=1).ravel()
    cols = np.tile(dofs, (1, 2 * nen)).ravel()
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    return A.tocsr()


def assemble_load(problem):
    """Load vector: body force plus Neumann boundary tractions."""
    space = problem.space
    mesh = space.mesh
    b = np.zeros(space.ndof)
    bary, w = triangle_rule(2 * space.degree)
    from .fespace import shape_values
    N = shape_values(space.degree, bary)
    pts = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])
    fvals = _sample(problem.body_force_fun, pts.reshape(-1, 2)).reshape(pts.shape)
    wa = w[None, :] * mesh.areas[:, None]
    contrib = np.einsum("tq,qn,tqd->tnd", wa, N, fvals)
    dofs = space.element_dofs()
    np.add.at(b, dofs.ravel(), contrib.reshape(len(dofs), -1).ravel())

    s, ws = edge_rule(FACE_QUAD_POINTS)
    for label in (LABEL_NEUMANN_0, LABEL_NEUMANN_1):
        fun = problem.neumann_funs.get(label)
        if fun is None:
            continue
        for e in mesh.edges_with_label(label):
            t, le = space.edge_element(e)
            eb = space.edge_bary(t, le, s)
            Nf = shape_values(space.degree, eb)  # (nq, nen)
            a, bb = mesh.edges[e]
            xq = np.outer(1 - s, mesh.vertices[a]) + np.outer(s, mesh.vertices[bb])
            length = np.hypot(*(mesh.vertices[bb] - mesh.vertices[a]))
            g = _sample(fun, xq)  # (nq, 2)
            loc = np.einsum("q,qn,qd->nd", ws * length, Nf, g).ravel()
            np.add.at(b, space.element_dofs()[t], loc)
    return b


def _sample(fun, pts):
    out = fun(np.asarray(pts[0]))
    out = np.asarray(out, dtype=float)
    if out.shape == (2,):
        vals = np.empty((len(pts), 2))
        for i, p in enumerate(pts):
            vals[i] = fun(p)
        return vals
    raise ValueError("vector functions must return shape (2,)")


class ContactFaces:
    """Precomputed trace operators on the contact boundary.

    For every contact face this stores, at the shared Gauss points, the
    matrices mapping element-local dof values to u_n, u_t, sigma_nn and
    sigma_nt, along with the face-wise Nitsche weight gamma0 / h_T.
    """

    def __init__(self, space, material, nitsche, nq=FACE_QUAD_POINTS):
        mesh = space.mesh
        self.space = space
        self.edges = mesh.edges_with_label(LABEL_CONTACT)
        self.s, self.w = edge_rule(nq)
        self.nq = nq
        h = mesh.diameters()
        from .fespace import shape_values
        lam, mu = material.lam, material.mu
        self.elements = []
        self.lengths = []
        self.gammas = []
        self.normals = []
        self.tangents = []
        self.points = []
        self.Bn = []
        self.Bt = []
        self.Sn = []
        self.St = []
        for e in self.edges:
            t, le = int(mesh.edge_tris[e, 0]), int(mesh.edge_local[e, 0])
            self.elements.append(t)
            a, b = mesh.edges[e]
            dvec = mesh.vertices[b] - mesh.vertices[a]
            length = float(np.hypot(*dvec))
            self.lengths.append(length)
            n = mesh.edge_normal(e)
            tau = np.array([-n[1], n[0]])
            self.normals.append(n)
            self.tangents.append(tau)
            self.gammas.append(nitsche.gamma0 / h[t])
            eb = space.edge_bary(t, le, self.s)
            xq = np.outer(1 - self.s, mesh.vertices[a]) + np.outer(self.s, mesh.vertices[b])
            self.points.append(xq)
            N = shape_values(space.degree, eb)  # (nq, nen)
            G = space.physical_shape_grads(np.array([t]), eb)[0]  # (nq, nen, 2)
            nen = space.nen
            Bn = np.zeros((nq, 2 * nen))
            Bt = np.zeros((nq, 2 * nen))
            Sn = np.zeros((nq, 2 * nen))
            St = np.zeros((nq, 2 * nen))
            gn = G @ n
            gt = G @ tau
            for d in range(2):
                Bn[:, d::2] = N * n[d]
                Bt[:, d::2] = N * tau[d]
                Sn[:, d::2] = lam * G[:, :, d] + 2.0 * mu * n[d] * gn
                St[:, d::2] = mu * (tau[d] * gn + n[d] * gt)
            self.Bn.append(Bn)
            self.Bt.append(Bt)
            self.Sn.append(Sn)
            self.St.append(St)
        self.elements = np.array(self.elements, dtype=np.int64)
        self.lengths = np.array(self.lengths)
        self.gammas = np.array(self.gammas)
        self.dofs = space.element_dofs()[self.elements] if len(self.elements) else np.zeros((0, 2 * space.nen), dtype=np.int64)

    def __len__(self):
        return len(self.edges)

    def traces(self, u):
        """P_n, P_t, u_n, u_t at all face quadrature points, (nf, nq) each."""
        nf = len(self)
        pn = np.zeros((nf, self.nq))
        pt = np.zeros((nf, self.nq))
        un = np.zeros((nf, self.nq))
        ut = np.zeros((nf, self.nq))
        for i in range(nf):
            ul = u[self.dofs[i]]
            un[i] = self.Bn[i] @ ul
            ut[i] = self.Bt[i] @ ul
            pn[i] = self.Sn[i] @ ul - self.gammas[i] * un[i]
            pt[i] = self.St[i] @ ul - self.gammas[i] * ut[i]
        return pn, pt, un, ut


def assemble_newton_system(problem, K, L, faces, u_prev):
    """One generalized Newton step: matrix and right-hand side.

    The normal term keeps its linear branch where the previous iterate is in
    contact; the tangential term keeps the identity branch at stick points
    and contributes a constant traction at slip points (frozen threshold).
    """
    A = K.copy()
    b = L.copy()
    pn_prev, pt_prev, _, _ = faces.traces(u_prev)
    radius = ct.s_h(problem.friction, pn_prev)
    rows = []
    cols = []
    vals = []
    for i in range(len(faces)):
        wq = faces.w * faces.lengths[i]
        Pn_op = faces.Sn[i] - faces.gammas[i] * faces.Bn[i]  # (nq, nd)
        Pt_op = faces.St[i] - faces.gammas[i] * faces.Bt[i]
        active = pn_prev[i] < 0.0
        stick = np.abs(pt_prev[i]) <= radius[i]
        # matrix: -(P_lin_n(w), v_n) - (identity branch of P_lin_t(w), v_t)
        blk = -np.einsum("q,qa,qb->ab", wq * active, faces.Bn[i], Pn_op)
        blk -= np.einsum("q,qa,qb->ab", wq * stick, faces.Bt[i], Pt_op)
        d = faces.dofs[i]
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(blk.ravel())
        # rhs: slip points contribute the frozen traction radius*sign(P_t)
        c_slip = np.where(stick, 0.0, np.sign(pt_prev[i]) * radius[i])
        b[d] += np.einsum("q,qa->a", wq * c_slip, faces.Bt[i])
    if rows:
        C = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=K.shape,
        )
        A = (A + C.tocsr()).tocsr()
    return A, b


def assemble_residual(problem, K, L, faces, u):
    """Residual of the nonlinear Nitsche formulation at ``u``."""
    r = L - K @ u
    pn, pt, _, _ = faces.traces(u)
    radius = ct.s_h(problem.friction, pn)
    for i in range(len(faces)):
        wq = faces.w * faces.lengths[i]
        fn = ct.proj_neg(pn[i])
        ft = ct.proj_ball(pt[i], radius[i])
        d = faces.dofs[i]
        r[d] += np.einsum("q,qa->a", wq * fn, faces.Bn[i])
        r[d] += np.einsum("q,qa->a", wq * ft, faces.Bt[i])
    return r


def apply_dirichlet(A, b, dofs):
    """Eliminate homogeneous Dirichlet dofs in place (returns new matrix)."""
    A = A.tolil()
    A[dofs, :] = 0.0
    A[:, dofs] = 0.0
    for d in dofs:
        A[d, d] = 1.0
    b = b.copy()
    b[dofs] = 0.0
    return A.tocsr(), b


def dirichlet_mask_matrix(A, dofs, ndof):
    """Projection-style elimination without LIL round trips (fast path)."""
    keep = np.ones(ndof, dtype=bool)
    keep[dofs] = False
    D = sp.diags(keep.astype(float))
    Afix = D @ A @ D + sp.diags((~keep).astype(float))
    return Afix.tocsr()
