"""Equilibrated stress reconstruction by vertex-patch problems.

The reconstruction lives in the lowest-order Arnold-Falk-Winther triple:
row-wise Brezzi-Douglas-Marini stress of degree 1, piecewise-constant
displacement multiplier and piecewise-constant skew multiplier.  For each
mesh vertex two local saddle problems are solved on its element patch (a
"discretization" and a "linearization" load split); the zero-extended patch
stresses sum to the global fields.

Stress degrees of freedom are shared normal-trace moments on edges, two per
edge and row, taken against the linear hat functions of the edge endpoints
ordered by vertex id.  This makes the summed field H(div)-conforming by
construction.

Two kernel-handling modes are available for patches that do not touch the
Dirichlet boundary:

``paper``
    The displacement multiplier is constrained orthogonal to all rigid-body
    modes (three Lagrange multiplier rows).  The divergence then matches the
    load only up to a rotation-mode defect, because hat-times-rotation test
    fields are quadratic and lie outside a degree-1 displacement space.

``exact``
    Only the two translation modes are constrained; in exchange one global
    skew mode per patch is released from the weak-symmetry constraint.  The
    divergence of the summed stress then equals the projected load exactly,
    so elementwise equilibrium holds to solver precision.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import contact as ct
from .fespace import edge_rule, shape_values, triangle_rule
from .mesh import (LABEL_CONTACT, LABEL_DIRICHLET, LABEL_NEUMANN_0,
                   LABEL_NEUMANN_1)


class TensorField:
    """Elementwise linear 2x2 tensor field with centered, scaled monomials.

    ``coeffs[t, r, d, m]`` multiplies monomial ``m`` in ``(1, (x-c)/h,
    (y-c)/h)`` for row ``r``, column ``d`` on element ``t``.
    """

    def __init__(self, mesh, coeffs=None):
        self.mesh = mesh
        self.centers = mesh.vertices[mesh.triangles].mean(axis=1)
        self.h = mesh.diameters()
        if coeffs is None:
            coeffs = np.zeros((mesh.num_triangles, 2, 2, 3))
        self.coeffs = coeffs

    def eval(self, elements, points):
        """Tensor values; ``points`` has shape (ne, nq, 2) physical."""
        loc = (points - self.centers[elements][:, None, :]) / self.h[elements][:, None, None]
        mono = np.concatenate(
            [np.ones(loc.shape[:2])[..., None], loc], axis=2
        )  # (ne, nq, 3)
        return np.einsum("erdm,eqm->eqrd", self.coeffs[elements], mono)

    def divergence(self):
        """Row-wise divergence, constant per element: (nt, 2)."""
        return (self.coeffs[:, :, 0, 1] + self.coeffs[:, :, 1, 2]) / self.h[:, None]

    def __add__(self, other):
        out = TensorField(self.mesh)
        out.coeffs = self.coeffs + other.coeffs
        return out


@dataclass
class PatchInfo:
    """Diagnostics from the patch solves."""
    num_patches: int = 0
    max_residual: float = 0.0


class Equilibrator:
    """Builds equilibrated stresses for a sequence of Newton iterates."""

    def __init__(self, problem, faces, mode="exact"):
        if mode not in ("exact", "paper"):
            raise ValueError("mode must be 'exact' or 'paper'")
        self.problem = problem
        self.faces = faces
        self.mode = mode
        self.space = problem.space
        self.mesh = problem.mesh
        self._precompute()

    # ------------------------------------------------------------------
    def _precompute(self):
        mesh = self.mesh
        nt = mesh.num_triangles
        self.centers = mesh.vertices[mesh.triangles].mean(axis=1)
        self.h = mesh.diameters()
        self.areas = mesh.areas
        # volume quadrature shared by all element integrals here
        self.vbary, self.vw = triangle_rule(4)
        self.vpts = np.einsum("qi,tid->tqd", self.vbary, mesh.vertices[mesh.triangles])

        # Per-element BDM basis: 6 vector P1 fields dual to the edge normal
        # moments, expressed in centered scaled monomials.
        se, we = edge_rule(3)
        basis = np.zeros((nt, 6, 2, 3))
        for t in range(nt):
            M = np.zeros((6, 6))
            c = self.centers[t]
            ht = self.h[t]
            for le in range(3):
                e = mesh.tri_edges[t, le]
                a, b = mesh.edges[e]
                n = mesh.edge_normal(e)
                pa, pb = mesh.vertices[a], mesh.vertices[b]
                xq = np.outer(1 - se, pa) + np.outer(se, pb)
                length = float(np.hypot(*(pb - pa)))
                loc = (xq - c) / ht
                mono = np.column_stack([np.ones(len(se)), loc])  # (nq, 3)
                for j in range(2):
                    psi = (1 - se) if j == 0 else se
                    for d in range(2):
                        for m in range(3):
                            # dof of monomial field e_d * mono_m
                            M[2 * le + j, 3 * d + m] = length * np.sum(
                                we * psi * n[d] * mono[:, m]
                            )
            Minv = np.linalg.inv(M)
            # basis i solves M c_i = e_i, so take columns of the inverse
            basis[t] = Minv.T.reshape(6, 2, 3)
        self.basis = basis

        # values of the basis at the volume quadrature points
        loc = (self.vpts - self.centers[:, None, :]) / self.h[:, None, None]
        mono = np.concatenate([np.ones(loc.shape[:2])[..., None], loc], axis=2)
        self.Vq = np.einsum("tidm,tqm->tiqd", basis, mono)  # (nt, 6, nq, 2)
        # pairwise masses, divergences, first moments
        wA = self.vw[None, :] * self.areas[:, None]
        self.X = np.einsum("tq,tiqd,tjqd->tij", wA, self.Vq, self.Vq)
        self.divs = (basis[:, :, 0, 1] + basis[:, :, 1, 2]) / self.h[:, None]
        self.m0 = np.einsum("tq,tiqd->tid", wA, self.Vq)
        # hat-weighted moments: int_T v_i lambda_loc dx
        self.mhat = np.einsum("tq,tiqd,qa->tiad", wA, self.Vq, self.vbary)

        self.patches = mesh.vertex_patches()
        self.dirichlet_vertices = set(mesh.dirichlet_vertices().tolist())
        self.boundary_vertices = set(mesh.boundary_vertices().tolist())
        self.face_of_edge = {int(e): i for i, e in enumerate(self.faces.edges)}
        self.bary_grads = self.space.bary_gradients()
        self.sE, self.wE = edge_rule(self.faces.nq)

        # body force at volume quadrature points
        from .assembly import _sample
        self.fq = _sample(
            self.problem.body_force_fun, self.vpts.reshape(-1, 2)
        ).reshape(self.vpts.shape)

        # Neumann data at face quadrature points, keyed by edge id
        self.neumann_data = {}
        for label in (LABEL_NEUMANN_0, LABEL_NEUMANN_1):
            fun = self.problem.neumann_funs.get(label)
            for e in mesh.edges_with_label(label):
                a, b = mesh.edges[e]
                xq = np.outer(1 - self.sE, mesh.vertices[a]) + np.outer(self.sE, mesh.vertices[b])
                if fun is None:
                    self.neumann_data[int(e)] = np.zeros((len(self.sE), 2))
                else:
                    self.neumann_data[int(e)] = _sample(fun, xq)

    # ------------------------------------------------------------------
    def reconstruct(self, u_k, u_prev):
        """Return (sigma_dis, sigma_lin, info) for the current iterate."""
        mesh = self.mesh
        problem = self.problem
        mat = problem.material
        faces = self.faces

        # stress of the iterate at the volume quadrature points
        elems = np.arange(mesh.num_triangles)
        sig_u = self.space.stress(u_k, elems, self.vbary, mat.lam, mat.mu)

        # contact traces at the shared face rule
        pn_k, pt_k, _, _ = faces.traces(u_k)
        pn_prev, pt_prev, _, _ = faces.traces(u_prev)
        radius_k = ct.s_h(problem.friction, pn_k)
        radius_prev = ct.s_h(problem.friction, pn_prev)
        g_dis_n = ct.proj_neg(pn_k)
        g_dis_t = ct.proj_ball(pt_k, radius_k)
        g_lin_n = ct.p_lin_n(pn_k, pn_prev) - g_dis_n
        g_lin_t = ct.p_lin_t(pt_k, pt_prev, radius_prev) - g_dis_t

        sdis = TensorField(mesh)
        slin = TensorField(mesh)
        info = PatchInfo(num_patches=mesh.num_vertices)
        for a in range(mesh.num_vertices):
            self._solve_patch(
                a, u_k, sig_u, g_dis_n, g_dis_t, g_lin_n, g_lin_t, sdis, slin, info
            )
        return sdis, slin, info

    # ------------------------------------------------------------------
    def _patch_topology(self, a):
        mesh = self.mesh
        tris = self.patches[a]
        tset = set(tris.tolist())
        edges = sorted({int(e) for t in tris for e in mesh.tri_edges[t]})
        kind = {}
        for e in edges:
            t1, t2 = mesh.edge_tris[e]
            if t2 >= 0 and int(t1) in tset and int(t2) in tset:
                kind[e] = "free"
            elif t2 < 0:
                lab = mesh.edge_labels[e]
                if a not in mesh.edges[e]:
                    # hat function of the patch vertex vanishes here, so the
                    # weighted boundary data reduces to zero
                    kind[e] = "clamp" if lab != LABEL_DIRICHLET else "free"
                elif lab == LABEL_DIRICHLET:
                    kind[e] = "free"
                elif lab == LABEL_CONTACT:
                    kind[e] = "contact"
                else:
                    kind[e] = "neumann"
            else:
                kind[e] = "clamp"
        return tris, edges, kind

    def _face_data(self, e, a, g_n_face, g_t_face):
        """Essential moments of psi_a * (vector data) on edge e.

        ``g_n_face``/``g_t_face``: samples at the face rule, or None for
        Neumann edges where the raw vector data is used.  Returns (2, 2)
        array indexed by (row, moment) plus the rigid-moment contributions.
        """
        mesh = self.mesh
        va, vb = mesh.edges[e]
        pa, pb = mesh.vertices[va], mesh.vertices[vb]
        length = float(np.hypot(*(pb - pa)))
        s = self.sE
        psi_a = (1 - s) if a == va else s
        if g_n_face is not None:
            n = mesh.edge_normal(e)
            tau = np.array([-n[1], n[0]])
            gvec = g_n_face[:, None] * n[None, :] + g_t_face[:, None] * tau[None, :]
        else:
            gvec = self.neumann_data[int(e)]
        data = psi_a[:, None] * gvec  # (nq, 2)
        mom = np.empty((2, 2))
        for j in range(2):
            psi_j = (1 - s) if j == 0 else s
            mom[:, j] = length * np.einsum("q,qd->d", self.wE * psi_j, data)
        xq = np.outer(1 - s, pa) + np.outer(s, pb)
        return mom, data, xq, length

    def _solve_patch(self, a, u_k, sig_u, g_dis_n, g_dis_t, g_lin_n, g_lin_t,
                     sdis, slin, info):
        mesh = self.mesh
        tris, edges, kind = self._patch_topology(a)
        nT = len(tris)
        eloc = {e: i for i, e in enumerate(edges)}
        tloc = {int(t): i for i, t in enumerate(tris)}
        # a patch with a free flux edge on the clamped boundary needs no
        # compatibility handling: the local problem is solvable as is
        is_dirichlet_patch = a in self.dirichlet_vertices or any(
            mesh.edge_tris[e][1] < 0 and mesh.edge_labels[e] == LABEL_DIRICHLET
            for e in edges
        )
        nS = 4 * len(edges)  # (edge, row, moment)

        def sdof(e, r, j):
            return 4 * eloc[e] + 2 * r + j

        nU = 2 * nT
        nL = nT
        extra = 0
        if not is_dirichlet_patch:
            extra = 3  # 2 translation multipliers + skew slack / 3 rigid rows
        n = nS + nU + nL + extra
        A = np.zeros((n, n))
        rhs = np.zeros((n, 2))  # columns: dis, lin

        # rigid modes centered at the vertex
        va = mesh.vertices[a]

        def rigid_at(pts):
            z = np.zeros((len(pts), 3, 2))
            z[:, 0, 0] = 1.0
            z[:, 1, 1] = 1.0
            z[:, 2, 0] = pts[:, 1] - va[1]
            z[:, 2, 1] = -(pts[:, 0] - va[0])
            return z

        # ---------------- essential data -------------------------------
        essential = {}
        bdry_mom = np.zeros((3, 2))  # rigid-mode moments of boundary data
        for e in edges:
            if kind[e] == "free":
                continue
            if kind[e] == "clamp":
                for r in range(2):
                    for j in range(2):
                        essential[sdof(e, r, j)] = (0.0, 0.0)
                continue
            if kind[e] == "contact":
                i = self.face_of_edge[int(e)]
                mom_d, data_d, xq, length = self._face_data(e, a, g_dis_n[i], g_dis_t[i])
                mom_l, data_l, _, _ = self._face_data(e, a, g_lin_n[i], g_lin_t[i])
            else:  # neumann
                mom_d, data_d, xq, length = self._face_data(e, a, None, None)
                mom_l = np.zeros((2, 2))
                data_l = np.zeros_like(data_d)
            for r in range(2):
                for j in range(2):
                    essential[sdof(e, r, j)] = (mom_d[r, j], mom_l[r, j])
            z = rigid_at(xq)  # (nq, 3, 2)
            bdry_mom[:, 0] += length * np.einsum("q,qjd,qd->j", self.wE, z, data_d)
            bdry_mom[:, 1] += length * np.einsum("q,qjd,qd->j", self.wE, z, data_l)

        # ---------------- volume sources and rigid correction ----------
        # v_dis = -psi_a f + sigma(u_k) grad(psi_a) - y,  v_lin = +y
        wA = self.vw[None, :] * self.areas[tris][:, None]  # (nT, nq)
        pts = self.vpts[tris]  # (nT, nq, 2)
        lam_a = np.zeros((nT, len(self.vw)))
        grad_psi = np.zeros((nT, 2))
        for i, t in enumerate(tris):
            la = int(np.nonzero(mesh.triangles[t] == a)[0][0])
            lam_a[i] = self.vbary[:, la]
            grad_psi[i] = self.bary_grads[t, la]
        fq = self.fq[tris]  # (nT, nq, 2)
        sq = sig_u[tris]  # (nT, nq, 2, 2)
        src = -lam_a[..., None] * fq + np.einsum("tqrd,td->tqr", sq, grad_psi)

        # The rigid correction is only needed when the full rigid-body
        # orthogonality constraint is imposed on a boundary patch; with the
        # released skew mode the load is compatible as is, keeping the
        # linearization part free of discretization content.
        needs_y = (self.mode == "paper" and not is_dirichlet_patch
                   and a in self.boundary_vertices)
        if needs_y:
            zq = rigid_at(pts.reshape(-1, 2)).reshape(nT, -1, 3, 2)
            G = np.einsum("tq,tqjd,tqkd->jk", wA, zq, zq)
            rhs_y = np.einsum("tq,tqjd,tqd->j", wA, zq, src) - bdry_mom[:, 0]
            y = np.linalg.solve(G, rhs_y)
            yq = np.einsum("j,tqjd->tqd", y, zq)
        else:
            yq = np.zeros_like(src)

        v_dis = src - yq
        v_lin = yq

        # ---------------- assemble -------------------------------------
        iU = nS
        iL = nS + nU
        iX = nS + nU + nL
        for i, t in enumerate(tris):
            X = self.X[t]
            divs = self.divs[t]
            m0 = self.m0[t]
            area = self.areas[t]
            la = int(np.nonzero(mesh.triangles[t] == a)[0][0])
            # local stress dof -> (patch sdof, row)
            loc = []
            for le in range(3):
                e = int(mesh.tri_edges[t, le])
                for j in range(2):
                    for r in range(2):
                        loc.append((sdof(e, r, j), 2 * le + j, r))
            for (gi, bi, ri) in loc:
                # eq1 row for test dof gi (accumulated over elements)
                for (gj, bj, rj) in loc:
                    if ri == rj:
                        A[gi, gj] += X[bi, bj]
                # displacement coupling (r_T, div tau)
                A[gi, iU + 2 * i + ri] += divs[bi] * area
                A[iU + 2 * i + ri, gi] += divs[bi] * area
                # skew coupling (lambda_T, tau): int (tau_01 - tau_10)
                sk = m0[bi, 1] if ri == 0 else -m0[bi, 0]
                A[gi, iL + i] += sk
                A[iL + i, gi] += sk
                # eq1 rhs: (psi_a sigma(u_k), tau)
                rhs[gi, 0] += float(np.einsum(
                    "q,qd,qd->", wA[i] * lam_a[i], sq[i, :, ri, :], self.Vq[t, bi]
                ))
            # eq2 rhs
            for d in range(2):
                rhs[iU + 2 * i + d, 0] += float(np.einsum("q,q->", wA[i], v_dis[i, :, d]))
                rhs[iU + 2 * i + d, 1] += float(np.einsum("q,q->", wA[i], v_lin[i, :, d]))

        if not is_dirichlet_patch:
            zq = rigid_at(pts.reshape(-1, 2)).reshape(nT, -1, 3, 2)
            if self.mode == "paper":
                # rows/cols: (r, z_j) = 0, rho couples into eq2
                for j in range(3):
                    zint = np.einsum("tq,tqd->td", wA, zq[:, :, j, :])  # (nT,2)
                    for i in range(nT):
                        for d in range(2):
                            A[iX + j, iU + 2 * i + d] += zint[i, d]
                            A[iU + 2 * i + d, iX + j] += zint[i, d]
            else:
                # translations only
                for j in range(2):
                    zint = np.einsum("tq,tqd->td", wA, zq[:, :, j, :])
                    for i in range(nT):
                        for d in range(2):
                            A[iX + j, iU + 2 * i + d] += zint[i, d]
                            A[iU + 2 * i + d, iX + j] += zint[i, d]
                # release one global skew mode: eq3 gets -s*|T|, plus the
                # constraint sum_T lambda_T |T| = 0
                for i, t in enumerate(tris):
                    A[iL + i, iX + 2] -= self.areas[t]
                    A[iX + 2, iL + i] += self.areas[t]

        # ---------------- essential rows --------------------------------
        for gi, (vd, vl) in essential.items():
            A[gi, :] = 0.0
            A[gi, gi] = 1.0
            rhs[gi, 0] = vd
            rhs[gi, 1] = vl

        with np.errstate(all="ignore"):
            try:
                sol = sla.lu_solve(sla.lu_factor(A), rhs)
            except sla.LinAlgError:
                sol = np.full_like(rhs, np.nan)
        if not np.isfinite(sol).all():
            # small patches can make the multiplier block rank deficient with
            # a consistent right-hand side; fall back to the minimum-norm
            # least-squares solution, which leaves the stress unchanged
            sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        res = A @ sol - rhs
        info.max_residual = max(info.max_residual, float(np.abs(res).max()))

        # ---------------- accumulate global fields ----------------------
        for i, t in enumerate(tris):
            acc_d = np.zeros((2, 2, 3))
            acc_l = np.zeros((2, 2, 3))
            for le in range(3):
                e = int(mesh.tri_edges[t, le])
                for j in range(2):
                    for r in range(2):
                        gi = sdof(e, r, j)
                        acc_d[r] += sol[gi, 0] * self.basis[t, 2 * le + j]
                        acc_l[r] += sol[gi, 1] * self.basis[t, 2 * le + j]
            sdis.coeffs[t] += acc_d
            slin.coeffs[t] += acc_l
