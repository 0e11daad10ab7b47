"""Vector Lagrange finite element spaces on triangle meshes.

Degrees 1 and 2 are supported.  Degrees of freedom are interleaved per node
(``dof = 2*node + component``); for degree 2 the nodes are the mesh vertices
followed by the edge midpoints.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial import cKDTree


# ----------------------------------------------------------------------
# quadrature

def edge_rule(npts=6):
    """Gauss rule on [0, 1]; weights sum to one."""
    x, w = leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree):
    """Collapsed-Gauss rule on the reference triangle.

    Returns barycentric points ``(nq, 3)`` and weights summing to one, so
    ``integral = area * (w @ f)``.  Exact for polynomials of total degree
    ``degree``.
    """
    nu = (degree + 3) // 2
    nv = (degree + 2) // 2
    xu, wu = leggauss(nu)
    xv, wv = leggauss(nv)
    xu = 0.5 * (xu + 1.0)
    wu = 0.5 * wu
    xv = 0.5 * (xv + 1.0)
    wv = 0.5 * wv
    pts = []
    wts = []
    for iu in range(nu):
        for iv in range(nv):
            u = xu[iu]
            v = xv[iv] * (1.0 - u)
            pts.append((u, v))
            wts.append(wu[iu] * wv[iv] * (1.0 - u) * 2.0)
    pts = np.array(pts)
    wts = np.array(wts)
    bary = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    return bary, wts


# ----------------------------------------------------------------------
# shape functions (barycentric)

def shape_values(degree, bary):
    """Scalar shape functions at barycentric points, shape (nq, nen)."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    if degree == 1:
        return np.column_stack([l0, l1, l2])
    if degree == 2:
        return np.column_stack([
            l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
            4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
        ])
    raise ValueError("degree must be 1 or 2")


def shape_bary_grads(degree, bary):
    """d(shape)/d(lambda_i) at barycentric points, shape (nq, nen, 3)."""
    nq = len(bary)
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    z = np.zeros(nq)
    if degree == 1:
        g = np.zeros((nq, 3, 3))
        for i in range(3):
            g[:, i, i] = 1.0
        return g
    if degree == 2:
        g = np.zeros((nq, 6, 3))
        for i, l in enumerate((l0, l1, l2)):
            g[:, i, i] = 4 * l - 1
        # midnode on edge opposite vertex i couples the other two coords
        for i, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            la = (l1, l2, l0)[i]
            g[:, 3 + i, a] = 4 * bary[:, b]
            g[:, 3 + i, b] = 4 * bary[:, a]
        return g
    raise ValueError("degree must be 1 or 2")


class LagrangeSpace:
    """Continuous vector-valued Lagrange space of degree 1 or 2."""

    def __init__(self, mesh, degree=1):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        self.num_nodes = mesh.num_vertices + (mesh.num_edges if degree == 2 else 0)
        self.ndof = 2 * self.num_nodes
        self.nen = 3 if degree == 1 else 6
        self._grads = None
        self._locator = None

    # ------------------------------------------------------------------
    def node_coords(self):
        m = self.mesh
        if self.degree == 1:
            return m.vertices.copy()
        mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mid])

    def element_nodes(self):
        """(nt, nen) node indices per element."""
        m = self.mesh
        if self.degree == 1:
            return m.triangles.copy()
        return np.hstack([m.triangles, m.num_vertices + m.tri_edges])

    def element_dofs(self):
        """(nt, 2*nen) dof indices per element, interleaved by node."""
        nodes = self.element_nodes()
        d = np.empty((nodes.shape[0], 2 * nodes.shape[1]), dtype=np.int64)
        d[:, 0::2] = 2 * nodes
        d[:, 1::2] = 2 * nodes + 1
        return d

    def bary_gradients(self):
        """Constant gradients of the barycentric coordinates, (nt, 3, 2)."""
        if self._grads is None:
            m = self.mesh
            p = m.vertices[m.triangles]  # (nt, 3, 2)
            g = np.empty((m.num_triangles, 3, 2))
            twoA = 2.0 * m.areas
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / twoA
                g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / twoA
            self._grads = g
        return self._grads

    def physical_shape_grads(self, elements, bary):
        """Shape gradients in physical coordinates.

        Returns array of shape ``(len(elements), nq, nen, 2)``.
        """
        dldx = self.bary_gradients()[elements]  # (ne, 3, 2)
        dNdl = shape_bary_grads(self.degree, bary)  # (nq, nen, 3)
        return np.einsum("qni,eid->eqnd", dNdl, dldx)

    # ------------------------------------------------------------------
    # evaluation of FE functions

    def eval_function(self, u, elements, bary):
        """Values of the vector field ``u`` at barycentric points.

        ``bary`` may be (nq, 3) shared by all elements.  Returns (ne, nq, 2).
        """
        N = shape_values(self.degree, bary)  # (nq, nen)
        dofs = self.element_dofs()[elements]  # (ne, 2*nen)
        ue = u[dofs].reshape(len(elements), self.nen, 2)
        return np.einsum("qn,end->eqd", N, ue)

    def eval_gradient(self, u, elements, bary):
        """Gradients du_d/dx_j, shape (ne, nq, 2, 2)."""
        G = self.physical_shape_grads(elements, bary)  # (ne, nq, nen, 2)
        dofs = self.element_dofs()[elements]
        ue = u[dofs].reshape(len(elements), self.nen, 2)
        return np.einsum("eqnj,end->eqdj", G, ue)

    def strain(self, u, elements, bary):
        g = self.eval_gradient(u, elements, bary)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def stress(self, u, elements, bary, lam, mu):
        eps = self.strain(u, elements, bary)
        tr = eps[..., 0, 0] + eps[..., 1, 1]
        sig = 2.0 * mu * eps
        sig[..., 0, 0] += lam * tr
        sig[..., 1, 1] += lam * tr
        return sig

    def interpolate(self, f):
        """Nodal interpolation of a callable ``f(x) -> (2,)`` array."""
        pts = self.node_coords()
        vals = np.array([f(p) for p in pts], dtype=float)
        return vals.reshape(-1)

    # ------------------------------------------------------------------
    # boundary helpers

    def dirichlet_dofs(self):
        """Dofs (both components) of nodes on Dirichlet faces."""
        m = self.mesh
        from .mesh import LABEL_DIRICHLET
        de = m.edges_with_label(LABEL_DIRICHLET)
        nodes = set(np.unique(m.edges[de]).tolist())
        if self.degree == 2:
            nodes.update((m.num_vertices + de).tolist())
        nodes = np.array(sorted(nodes), dtype=np.int64)
        return np.concatenate([2 * nodes, 2 * nodes + 1])

    def edge_element(self, e):
        """Adjacent element of a boundary edge and its local edge index."""
        return int(self.mesh.edge_tris[e, 0]), int(self.mesh.edge_local[e, 0])

    def edge_bary(self, t, local_edge, s):
        """Barycentric coordinates on an element edge.

        ``s`` runs from the lower-id to the higher-id endpoint of the global
        edge, so quadrature points agree between neighbors.
        """
        m = self.mesh
        e = m.tri_edges[t, local_edge]
        a, b = m.edges[e]
        tri = m.triangles[t]
        la = int(np.nonzero(tri == a)[0][0])
        lb = int(np.nonzero(tri == b)[0][0])
        bary = np.zeros((len(s), 3))
        bary[:, la] = 1.0 - s
        bary[:, lb] = s
        return bary

    # ------------------------------------------------------------------
    # point location

    def locate(self, points, tol=1e-9):
        """Containing element and barycentric coordinates for each point.

        Points on shared edges resolve to the lowest adjacent element id.
        """
        m = self.mesh
        if self._locator is None:
            cent = m.vertices[m.triangles].mean(axis=1)
            self._locator = cKDTree(cent)
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        elems = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        grads = self.bary_gradients()  # (nt, 3, 2)
        p0 = m.vertices[m.triangles[:, 0]]
        remaining = np.arange(n)
        k = 8
        while len(remaining) and k <= max(64, m.num_triangles):
            kk = min(k, m.num_triangles)
            _, cand = self._locator.query(pts[remaining], k=kk)
            cand = np.atleast_2d(cand)
            best = np.full(len(remaining), -1, dtype=np.int64)
            bb = np.zeros((len(remaining), 3))
            for c in range(cand.shape[1]):
                tri = cand[:, c]
                d = pts[remaining] - p0[tri]
                lam12 = np.einsum("nij,nj->ni", grads[tri][:, 1:, :], d)
                lam = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
                ok = lam.min(axis=1) >= -tol
                take = ok & ((best < 0) | (tri < best))
                best[take] = tri[take]
                bb[take] = lam[take]
            found = best >= 0
            elems[remaining[found]] = best[found]
            bary[remaining[found]] = bb[found]
            remaining = remaining[~found]
            k *= 4
        if len(remaining):
            raise ValueError(f"{len(remaining)} points not located in mesh")
        return elems, np.clip(bary, 0.0, 1.0)


# ----------------------------------------------------------------------
# L2 projections used by the estimators

def face_projection_residual(values, weights, length, degree):
    """Norm of ``g - proj_{P^degree(F)} g`` from samples at face quadrature.

    ``values``: samples of g at the rule points (nq,) or (nq, k);
    ``weights``: rule weights on [0,1] (sum one); ``length``: face length.
    Returns the L2(F) norm of the projection residual (summed over the
    trailing components if g is vector-valued).
    """
    r = np.asarray(values) - face_projection_values(np.asarray(values), weights, degree)
    v = np.atleast_2d(r.T).T  # (nq, k)
    return float(np.sqrt(length * np.einsum("q,qk->", weights, v * v)))


def face_projection_values(values, weights, degree):
    """Values of the P^degree(F) projection of g at the same rule points."""
    s, basis = _legendre_basis(weights, degree)
    v = np.atleast_2d(values.T).T
    coeff = np.einsum("qj,q,qk->jk", basis, weights, v)
    out = np.einsum("qj,jk->qk", basis, coeff)
    return out.reshape(np.shape(values))


_leg_cache = {}


def _legendre_basis(weights, degree):
    """Orthonormal Legendre basis on [0,1] at the Gauss points of ``weights``.

    Orthonormal w.r.t. the weighted sum with unit total weight, so the basis
    is reusable for any face length via scaling of the weights.
    """
    key = (len(weights), degree)
    if key not in _leg_cache:
        s, w = edge_rule(len(weights))
        x = 2.0 * s - 1.0
        cols = []
        for j in range(degree + 1):
            c = np.zeros(j + 1)
            c[j] = 1.0
            cols.append(np.polynomial.legendre.legval(x, c) * np.sqrt(2 * j + 1))
        _leg_cache[key] = (s, np.column_stack(cols))
    return _leg_cache[key]


def element_projection_residual(space, element, values, bary, weights, degree):
    """Norm of ``g - proj_{P^degree(T)} g`` from element quadrature samples."""
    area = space.mesh.areas[element]
    pts = space.mesh.vertices[space.mesh.triangles[element]]
    xy = bary @ pts  # (nq, 2)
    h = space.mesh.diameters()[element]
    c = pts.mean(axis=0)
    # scaled monomials for conditioning
    mono = [np.ones(len(xy))]
    if degree >= 1:
        mono += [(xy[:, 0] - c[0]) / h, (xy[:, 1] - c[1]) / h]
    if degree >= 2:
        mono += [m1 * m2 for i, m1 in enumerate(mono[1:3]) for m2 in mono[1 + i:3]]
    M = np.column_stack(mono)
    v = np.atleast_2d(np.asarray(values).T).T
    W = weights * area
    G = M.T @ (W[:, None] * M)
    b = M.T @ (W[:, None] * v)
    coef = np.linalg.solve(G, b)
    r = v - M @ coef
    return float(np.sqrt(np.einsum("q,qk->", W, r * r)))
