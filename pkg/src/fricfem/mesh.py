"""Conforming triangle meshes with newest-vertex bisection refinement.

Triangles are stored counter-clockwise.  Each triangle's refinement edge is
the edge opposite its local vertex 0 (the newest vertex), which keeps
bisection shape-regular with finitely many similarity classes.
"""

import numpy as np

# Boundary labels understood by the solvers.
LABEL_DIRICHLET = "D"
LABEL_NEUMANN_0 = "N0"
LABEL_NEUMANN_1 = "N1"
LABEL_CONTACT = "C"
VALID_LABELS = (LABEL_DIRICHLET, LABEL_NEUMANN_0, LABEL_NEUMANN_1, LABEL_CONTACT)


class Mesh:
    """Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.
    triangles : (nt, 3) int array
        Vertex indices, counter-clockwise.  Local vertex 0 is treated as the
        newest vertex; the opposite edge is the refinement edge.
    boundary_labels : dict
        Maps a sorted boundary vertex pair ``(a, b)`` to a label from
        ``VALID_LABELS``.  Every boundary edge must be labeled.
    parents : (nt,) int array, optional
        For refined meshes, index of each triangle's parent in the previous
        mesh (-1 for copied triangles' own index semantics, see ``refine``).
    """

    def __init__(self, vertices, triangles, boundary_labels, parents=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be (nt, 3)")
        self.parents = parents
        self._build_edges()
        self._check_orientation()
        self._assign_boundary_labels(boundary_labels)

    # ------------------------------------------------------------------
    # construction helpers

    def _check_orientation(self):
        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(area2 <= 0.0):
            bad = np.nonzero(area2 <= 0.0)[0]
            raise ValueError(f"triangles not counter-clockwise: {bad[:10]}")
        self.areas = 0.5 * area2

    def _build_edges(self):
        t = self.triangles
        nt = len(t)
        # Local edge i is opposite local vertex i.
        raw = np.concatenate(
            [t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=0
        )
        key = np.sort(raw, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        self.edges = uniq  # (ne, 2) sorted vertex pairs
        self.tri_edges = inv.reshape(3, nt).T  # (nt, 3)
        ne = len(uniq)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_local = np.full((ne, 2), -1, dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        for idx in order:
            e = inv[idx]
            tri = idx % nt
            loc = idx // nt
            slot = 0 if edge_tris[e, 0] < 0 else 1
            edge_tris[e, slot] = tri
            edge_local[e, slot] = loc
        # Store adjacent triangles sorted by id so the shared-normal
        # convention (normal points from the lower to the higher id) is
        # easy to apply downstream.
        swap = (edge_tris[:, 1] >= 0) & (edge_tris[:, 1] < edge_tris[:, 0])
        edge_tris[swap] = edge_tris[swap][:, ::-1]
        edge_local[swap] = edge_local[swap][:, ::-1]
        self.edge_tris = edge_tris
        self.edge_local = edge_local
        self.boundary_edges = np.nonzero(edge_tris[:, 1] < 0)[0]

    def _assign_boundary_labels(self, boundary_labels):
        labels = np.full(len(self.edges), "", dtype="<U2")
        seen = set()
        for e in self.boundary_edges:
            key = (int(self.edges[e, 0]), int(self.edges[e, 1]))
            if key not in boundary_labels:
                raise ValueError(f"boundary edge {key} has no label")
            lab = boundary_labels[key]
            if lab not in VALID_LABELS:
                raise ValueError(f"invalid boundary label {lab!r}")
            labels[e] = lab
            seen.add(key)
        extra = set(boundary_labels) - seen
        if extra:
            raise ValueError(f"labels given for non-boundary edges: {sorted(extra)[:5]}")
        self.edge_labels = labels

    # ------------------------------------------------------------------
    # basic queries

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def boundary_label_dict(self):
        """Labels keyed by sorted vertex pair, for re-construction."""
        return {
            (int(self.edges[e, 0]), int(self.edges[e, 1])): str(self.edge_labels[e])
            for e in self.boundary_edges
        }

    def edge_lengths(self):
        p = self.vertices
        d = p[self.edges[:, 1]] - p[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def diameters(self):
        """Element diameters (longest edge)."""
        return self.edge_lengths()[self.tri_edges].max(axis=1)

    def edges_with_label(self, label):
        return np.nonzero(self.edge_labels == label)[0]

    def edge_normal(self, e):
        """Unit normal of edge ``e``.

        For a boundary edge this is the outward normal of the domain.  For an
        interior edge it points from the lower-id adjacent triangle into the
        higher-id one.
        """
        a, b = self.edges[e]
        tvec = self.vertices[b] - self.vertices[a]
        n = np.array([tvec[1], -tvec[0]])
        n /= np.hypot(n[0], n[1])
        tri = self.edge_tris[e, 0]
        c = self.vertices[self.triangles[tri]].mean(axis=0)
        mid = 0.5 * (self.vertices[a] + self.vertices[b])
        if np.dot(n, mid - c) < 0.0:
            n = -n
        return n

    def vertex_patches(self):
        """List of element-index arrays, one patch per vertex."""
        nv = self.num_vertices
        buckets = [[] for _ in range(nv)]
        for t, tri in enumerate(self.triangles):
            for v in tri:
                buckets[v].append(t)
            # tie-break by ascending element id is automatic
        return [np.array(b, dtype=np.int64) for b in buckets]

    def element_neighborhood(self, t):
        """Elements sharing at least one vertex with element ``t``."""
        patches = self.vertex_patches()
        out = set()
        for v in self.triangles[t]:
            out.update(patches[v].tolist())
        return np.array(sorted(out), dtype=np.int64)

    def element_neighborhoods(self):
        """Neighborhoods for all elements at once."""
        patches = self.vertex_patches()
        out = []
        for t in range(self.num_triangles):
            s = set()
            for v in self.triangles[t]:
                s.update(patches[v].tolist())
            out.append(np.array(sorted(s), dtype=np.int64))
        return out

    def dirichlet_vertices(self):
        """Vertices lying on at least one Dirichlet face."""
        e = self.edges_with_label(LABEL_DIRICHLET)
        return np.unique(self.edges[e])

    def boundary_vertices(self):
        return np.unique(self.edges[self.boundary_edges])

    # ------------------------------------------------------------------
    # refinement

    def refine(self, marked=None, uniform=False):
        """Bisect marked elements; return a new conforming mesh.

        Marked elements have their refinement edge bisected; conformity is
        restored by recursively marking refinement edges of any element that
        carries a marked edge.  With ``uniform=True`` every edge is marked,
        so every element splits into four children.
        """
        nt = self.num_triangles
        marked_edges = np.zeros(self.num_edges, dtype=bool)
        if uniform:
            marked_edges[:] = True
        else:
            marked = np.asarray(marked, dtype=np.int64)
            marked_edges[self.tri_edges[marked, 0]] = True
        # Closure: an element with any marked edge must have its refinement
        # edge (local edge 0) marked too.
        while True:
            any_marked = marked_edges[self.tri_edges].any(axis=1)
            need = any_marked & ~marked_edges[self.tri_edges[:, 0]]
            if not need.any():
                break
            marked_edges[self.tri_edges[need, 0]] = True

        # Midpoint vertex for each marked edge.
        new_pts = []
        midpoint = np.full(self.num_edges, -1, dtype=np.int64)
        nv = self.num_vertices
        for e in np.nonzero(marked_edges)[0]:
            a, b = self.edges[e]
            new_pts.append(0.5 * (self.vertices[a] + self.vertices[b]))
            midpoint[e] = nv + len(new_pts) - 1
        vertices = np.vstack([self.vertices, new_pts]) if new_pts else self.vertices.copy()

        # Split boundary labels.
        labels = {}
        for e in self.boundary_edges:
            a, b = self.edges[e]
            lab = str(self.edge_labels[e])
            if marked_edges[e]:
                m = midpoint[e]
                labels[tuple(sorted((int(a), int(m))))] = lab
                labels[tuple(sorted((int(m), int(b))))] = lab
            else:
                labels[(int(a), int(b))] = lab

        tris = []
        parents = []
        edge_of = {}

        def edge_id(a, b):
            key = (min(a, b), max(a, b))
            if key not in edge_of:
                raise KeyError(key)
            return edge_of[key]

        for e in range(self.num_edges):
            a, b = self.edges[e]
            edge_of[(min(int(a), int(b)), max(int(a), int(b)))] = e

        def emit(v0, v1, v2, parent):
            tris.append((v0, v1, v2))
            parents.append(parent)

        def split(v0, v1, v2, parent):
            # Refinement edge is (v1, v2).
            e = edge_id(int(v1), int(v2))
            if not marked_edges[e]:
                emit(v0, v1, v2, parent)
                return
            m = midpoint[e]
            # Children keep newest vertex first; their refinement edges are
            # the remaining parent edges, split further only if marked.
            for (c0, c1, c2) in ((m, v0, v1), (m, v2, v0)):
                ce = (min(int(c1), int(c2)), max(int(c1), int(c2)))
                if ce in edge_of and marked_edges[edge_of[ce]]:
                    mm = midpoint[edge_of[ce]]
                    emit(mm, c0, c1, parent)
                    emit(mm, c2, c0, parent)
                else:
                    emit(c0, c1, c2, parent)

        for t in range(nt):
            v0, v1, v2 = self.triangles[t]
            split(int(v0), int(v1), int(v2), t)

        return Mesh(vertices, np.array(tris, dtype=np.int64), labels,
                    parents=np.array(parents, dtype=np.int64))


def build_rectangle_mesh(x_range, y_range, nx, ny, labeler):
    """Structured triangulation of a rectangle.

    Each grid cell is split along its lower-left to upper-right diagonal.
    ``labeler(midpoint) -> label`` assigns a boundary label per boundary
    face; midpoints are never on corners, so side-based labelers are safe.
    Initial refinement edges are the cell diagonals (each triangle's longest
    edge), stored opposite local vertex 0.
    """
    x0, x1 = x_range
    y0, y1 = y_range
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            # Diagonal (a, c) is the longest edge of both triangles: keep it
            # opposite local vertex 0.
            tris.append((b, c, a))
            tris.append((d, a, c))
    tris = np.array(tris, dtype=np.int64)

    labels = {}
    for i in range(nx):
        for (ja, jb) in (((i, 0), (i + 1, 0)), ((i, ny), (i + 1, ny))):
            a, b = vid(*ja), vid(*jb)
            mid = 0.5 * (vertices[a] + vertices[b])
            labels[(min(a, b), max(a, b))] = labeler(mid)
    for j in range(ny):
        for (ia, ib) in (((0, j), (0, j + 1)), ((nx, j), (nx, j + 1))):
            a, b = vid(*ia), vid(*ib)
            mid = 0.5 * (vertices[a] + vertices[b])
            labels[(min(a, b), max(a, b))] = labeler(mid)
    return Mesh(vertices, tris, labels)


# ----------------------------------------------------------------------
# text format

FORMAT_HEADER = "mesh2d v1"


def write_mesh(mesh, path):
    """Write a mesh in the plain-text exchange format."""
    lines = [FORMAT_HEADER]
    lines.append(f"vertices {mesh.num_vertices}")
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"triangles {mesh.num_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    bl = mesh.boundary_label_dict()
    lines.append(f"boundary {len(bl)}")
    for (a, b), lab in sorted(bl.items()):
        lines.append(f"{a} {b} {lab}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a mesh written by :func:`write_mesh`."""
    with open(path) as f:
        tokens = f.read().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    if lines[0] != FORMAT_HEADER:
        raise ValueError(f"unsupported format header {lines[0]!r}")
    pos = 1

    def expect(section):
        nonlocal pos
        name, count = lines[pos].split()
        if name != section:
            raise ValueError(f"expected section {section!r}, got {name!r}")
        pos += 1
        return int(count)

    nv = expect("vertices")
    verts = np.array(
        [[float(v) for v in lines[pos + i].split()] for i in range(nv)]
    )
    pos += nv
    nt = expect("triangles")
    tris = np.array(
        [[int(v) for v in lines[pos + i].split()] for i in range(nt)],
        dtype=np.int64,
    )
    pos += nt
    nb = expect("boundary")
    labels = {}
    for i in range(nb):
        a, b, lab = lines[pos + i].split()
        labels[(min(int(a), int(b)), max(int(a), int(b)))] = lab
    return Mesh(verts, tris, labels)
