"""Simplicial models of the interval, circle, sphere and hemisphere.

Meshes carry base-metric element measures (Euclidean length in 1-D, flat
triangle area in 2-D) and are immutable after construction: all arrays are
marked read-only, so instances can be shared freely between threads.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "MeshError",
    "DiscreteManifold",
    "build_interval",
    "build_circle",
    "build_icosphere",
    "extract_hemisphere",
    "colatitude",
    "integrate",
    "pl_gradient_sq",
    "save_off",
    "load_off",
    "save_mesh_csv",
    "load_mesh_csv",
]

EQUATOR_TOL = 1e-9

_PHI = (1.0 + math.sqrt(5.0)) / 2.0

# Icosahedron oriented so every coordinate axis is a two-fold symmetry axis;
# the vertex set is then exactly closed under each sign flip, in particular
# (x, y, z) -> (x, y, -z), which subdivision preserves.
_ICO_VERTICES = np.array(
    [
        [-1.0, _PHI, 0.0], [1.0, _PHI, 0.0], [-1.0, -_PHI, 0.0], [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI], [0.0, 1.0, _PHI], [0.0, -1.0, -_PHI], [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0], [_PHI, 0.0, 1.0], [-_PHI, 0.0, -1.0], [-_PHI, 0.0, 1.0],
    ]
)

_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


class MeshError(ValueError):
    """Raised when a mesh violates a structural requirement."""


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class DiscreteManifold:
    """Simplicial mesh of one of the supported model manifolds.

    Parameters
    ----------
    kind : str
        One of ``"interval"``, ``"circle"``, ``"sphere"``, ``"hemisphere"``.
    vertices : ndarray
        Shape (n,) scalar coordinates for 1-D meshes (position on the line,
        arc position along the circle), shape (n, 3) unit vectors for sphere
        and hemisphere meshes.
    elements : ndarray of int
        Shape (ne, 2) segments or (ne, 3) triangles.
    element_measure : ndarray
        Base-metric length/area per element, all positive.
    boundary : ndarray of bool
        Per-vertex boundary flag; nonempty only for interval and hemisphere.
    pole : int or None
        Distinguished vertex used for radial (colatitude) constructions.
    length : float or None
        Total circumference, circle meshes only.
    parent_index : ndarray of int or None
        For hemispheres, the index of each vertex in the parent sphere mesh.
    """

    def __init__(self, kind, vertices, elements, element_measure, boundary,
                 pole=None, length=None, parent_index=None):
        if kind not in ("interval", "circle", "sphere", "hemisphere"):
            raise MeshError(f"unknown mesh kind {kind!r}")
        self.kind = kind
        self.dim = 1 if kind in ("interval", "circle") else 2
        self.vertices = _readonly(np.asarray(vertices, dtype=float))
        self.elements = _readonly(np.asarray(elements, dtype=np.int64))
        self.element_measure = _readonly(np.asarray(element_measure, dtype=float))
        self.boundary = _readonly(np.asarray(boundary, dtype=bool))
        self.pole = None if pole is None else int(pole)
        self.length = None if length is None else float(length)
        self.parent_index = None if parent_index is None else _readonly(
            np.asarray(parent_index, dtype=np.int64))
        self._validate()

    def _validate(self):
        n = self.n_vertices
        if self.elements.shape[1] != self.dim + 1:
            raise MeshError("element arity does not match mesh dimension")
        if self.elements.min() < 0 or self.elements.max() >= n:
            raise MeshError("element index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinate")
        if np.any(self.element_measure <= 0.0):
            raise MeshError("non-positive element measure")
        if self.boundary.shape != (n,):
            raise MeshError("boundary flag length mismatch")
        if self.dim == 2:
            radii = np.linalg.norm(self.vertices, axis=1)
            if np.max(np.abs(radii - 1.0)) > 1e-12:
                raise MeshError("sphere vertices must sit on the unit sphere")
        if self.pole is not None and not (0 <= self.pole < n):
            raise MeshError("pole index out of range")
        # single connected component over shared vertices
        j0 = self.elements[:, :-1].ravel()
        j1 = self.elements[:, 1:].ravel()
        adj = coo_matrix((np.ones_like(j0), (j0, j1)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise MeshError(f"mesh is not connected ({ncomp} components)")

    # -- basic queries ----------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def total_measure(self):
        return float(self.element_measure.sum())

    @property
    def boundary_vertices(self):
        return np.flatnonzero(self.boundary)

    @cached_property
    def vertex_measure(self):
        """Lumped vertex measure: each element spreads its measure evenly."""
        share = self.element_measure / self.elements.shape[1]
        m = np.zeros(self.n_vertices)
        np.add.at(m, self.elements.ravel(),
                  np.repeat(share, self.elements.shape[1]))
        return _readonly(m)

    @cached_property
    def edge_lengths(self):
        if self.dim == 1:
            return self.element_measure
        p = self.vertices[self.elements]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return _readonly(np.linalg.norm(e, axis=2).ravel())

    @property
    def min_edge_length(self):
        return float(self.edge_lengths.min())

    @property
    def max_edge_length(self):
        return float(self.edge_lengths.max())

    @cached_property
    def max_edge_colatitude_span(self):
        """Largest edge extent in colatitude (the radial resolution that
        matters for banded radial constructions; equatorial edges span 0)."""
        if self.kind == "circle":
            return self.max_edge_length * np.pi / (self.length / 2.0)
        if self.dim == 2:
            c = self.colatitudes
            el = self.elements
            spans = [np.abs(c[el[:, i]] - c[el[:, j]])
                     for i, j in ((0, 1), (1, 2), (2, 0))]
            return float(np.max(spans))
        return self.max_edge_length

    @cached_property
    def colatitudes(self):
        if self.pole is None:
            raise MeshError("mesh has no pole")
        if self.dim == 2:
            c = np.arccos(np.clip(self.vertices @ self.vertices[self.pole], -1, 1))
        else:
            if self.kind != "circle":
                raise MeshError("colatitude needs a circle or sphere mesh")
            arc = np.abs(self.vertices - self.vertices[self.pole]) % self.length
            arc = np.minimum(arc, self.length - arc)
            c = arc * np.pi / (self.length / 2.0)
        return _readonly(c)


# -- builders -------------------------------------------------------------

def build_interval(n, a, b):
    """Uniform mesh of the interval (a, b) with n segments.

    Both endpoints are boundary-flagged; the total measure is b - a exactly.
    """
    if n < 2:
        raise MeshError("interval mesh needs n >= 2")
    if not a < b:
        raise MeshError("interval needs a < b")
    x = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    measures = np.diff(x)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[0] = boundary[-1] = True
    return DiscreteManifold("interval", x, elements, measures, boundary, pole=0)


def build_circle(n, length):
    """Closed uniform mesh of a circle of the given circumference.

    Vertices are arc positions in [0, length); vertex 0 is the pole used for
    colatitude, defined as arc distance rescaled to [0, pi].
    """
    if n < 3:
        raise MeshError("circle mesh needs n >= 3")
    if length <= 0:
        raise MeshError("circle length must be positive")
    s = np.arange(n) * (length / n)
    elements = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    measures = np.full(n, length / n)
    boundary = np.zeros(n, dtype=bool)
    return DiscreteManifold("circle", s, elements, measures, boundary,
                            pole=0, length=length)


def _subdivide(verts, faces):
    verts = [v for v in verts]
    cache = {}
    new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)

    def midpoint(i, j):
        key = (i, j) if i < j else (j, i)
        idx = cache.get(key)
        if idx is None:
            m = verts[i] + verts[j]
            m /= np.linalg.norm(m)
            idx = len(verts)
            verts.append(m)
            cache[key] = idx
        return idx

    for k, (a, b, c) in enumerate(faces):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces[4 * k:4 * k + 4] = [[a, ab, ca], [b, bc, ab],
                                      [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), new_faces


def _edge_face_map(faces):
    m = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, w in ((a, b), (b, c), (c, a)):
            key = (u, w) if u < w else (w, u)
            m.setdefault(key, []).append(fi)
    return m


def _snap_equator(verts, min_edge):
    """Project vertices within 0.25 min-edge of the equator onto it."""
    colat = np.arccos(np.clip(verts[:, 2], -1, 1))
    near = np.abs(colat - np.pi / 2) < 0.25 * min_edge
    if np.any(near):
        v = verts.copy()
        v[near, 2] = 0.0
        norm = np.linalg.norm(v[near], axis=1)
        v[near] /= norm[:, None]
        return v
    return verts


def _conform_equator(verts, faces):
    """Flip the diagonal of every rhombus whose diagonal crosses the equator.

    Each equator-crossing edge must see two adjacent triangles whose opposite
    vertices both lie exactly on the equator (guaranteed by the mirror
    symmetry of the subdivided icosahedron); the flip replaces the crossing
    diagonal with the equatorial one, so no element straddles the equator.
    """
    z = verts[:, 2]
    sgn = np.where(np.abs(z) <= 1e-12, 0, np.sign(z)).astype(int)
    faces = faces.copy()
    for (u, w), adjacent in _edge_face_map(faces).items():
        if sgn[u] * sgn[w] != -1:
            continue
        if len(adjacent) != 2:
            raise MeshError("equator-crossing edge without two faces")
        f1, f2 = adjacent
        o1 = next(v for v in faces[f1] if v != u and v != w)
        o2 = next(v for v in faces[f2] if v != u and v != w)
        if sgn[o1] != 0 or sgn[o2] != 0:
            raise MeshError("cannot conform equator: off-equator rhombus")
        up, dn = (u, w) if sgn[u] > 0 else (w, u)
        faces[f1] = (o1, o2, up)
        faces[f2] = (o2, o1, dn)
    fsig = sgn[faces]
    if np.any((fsig.min(axis=1) < 0) & (fsig.max(axis=1) > 0)):
        raise MeshError("equator conforming failed")
    return faces


def _orient_outward(verts, faces):
    p0, p1, p2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    normal = np.cross(p1 - p0, p2 - p0)
    inward = np.einsum("ij,ij->i", normal, p0 + p1 + p2) < 0
    faces = faces.copy()
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return faces


def _triangle_areas(verts, faces):
    p0, p1, p2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def build_icosphere(level):
    """Icosahedron subdivided `level` times and projected to the unit sphere.

    The mesh is exactly symmetric under z -> -z, carries a conforming ring of
    vertices at colatitude pi/2 (hemisphere extraction is exact), and its
    pole is the vertex nearest (0, 0, 1) (exactly (0, 0, 1) for level >= 1).
    """
    if not 0 <= level <= 8:
        raise MeshError("icosphere level must be in [0, 8]")
    verts = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1)[:, None]
    faces = _ICO_FACES
    for _ in range(level):
        verts, faces = _subdivide(verts, faces)
    edge = verts[faces[:, [0, 1, 2]]] - verts[faces[:, [1, 2, 0]]]
    min_edge = float(np.linalg.norm(edge, axis=2).min())
    verts = _snap_equator(verts, min_edge)
    faces = _conform_equator(verts, faces)
    faces = _orient_outward(verts, faces)
    areas = _triangle_areas(verts, faces)
    pole = int(np.argmax(verts[:, 2]))
    boundary = np.zeros(len(verts), dtype=bool)
    return DiscreteManifold("sphere", verts, faces, areas, boundary, pole=pole)


def extract_hemisphere(mesh, pole=None):
    """Submesh of all elements on the pole side of the equator.

    Requires a conforming ring of vertices at colatitude pi/2 around `pole`
    (no element may straddle the equator); the ring is boundary-flagged in
    the extracted mesh.
    """
    if mesh.kind != "sphere":
        raise MeshError("hemisphere extraction needs a sphere mesh")
    if pole is None:
        pole = mesh.pole
    colat = np.arccos(np.clip(mesh.vertices @ mesh.vertices[pole], -1, 1))
    elem_colat = colat[mesh.elements]
    keep = np.all(elem_colat <= np.pi / 2 + EQUATOR_TOL, axis=1)
    conforming = np.all(elem_colat[~keep] >= np.pi / 2 - EQUATOR_TOL)
    if not conforming:
        raise MeshError("sphere mesh has no conforming equator ring "
                        "around the requested pole")
    used = np.unique(mesh.elements[keep])
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    boundary = np.abs(colat[used] - np.pi / 2) <= EQUATOR_TOL
    return DiscreteManifold(
        "hemisphere",
        mesh.vertices[used],
        remap[mesh.elements[keep]],
        mesh.element_measure[keep],
        boundary,
        pole=int(remap[pole]),
        parent_index=used,
    )


# -- field operations ------------------------------------------------------

def check_field(mesh, values, name="field"):
    """Validate a per-vertex scalar field and return it as a float array."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError(f"{name} is misaligned with the mesh "
                         f"({values.shape} vs {mesh.n_vertices} vertices)")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite values")
    return values


def colatitude(mesh, vertex=None):
    """Colatitude of one vertex (or all) with respect to the mesh pole.

    On spheres this is arccos of the inner product with the pole vertex; on
    circles the arc distance from the pole rescaled to [0, pi].
    """
    if vertex is None:
        return mesh.colatitudes
    return float(mesh.colatitudes[vertex])


def integrate(mesh, density):
    """Integral of a vertex density: element measure times vertex mean."""
    density = check_field(mesh, density, "density")
    return float(mesh.element_measure @ density[mesh.elements].mean(axis=1))


def pl_gradient_sq(mesh, u):
    """Squared norm of the piecewise-linear gradient of u, per element.

    1-D elements use the difference quotient; triangles the standard linear
    gradient in the element's own plane (tangent-plane norm).
    """
    u = check_field(mesh, u)
    ue = u[mesh.elements]
    if mesh.dim == 1:
        return ((ue[:, 1] - ue[:, 0]) / mesh.element_measure) ** 2
    ga, gb, gc = _gram_inverse(mesh)
    d1 = ue[:, 1] - ue[:, 0]
    d2 = ue[:, 2] - ue[:, 0]
    return ga * d1 * d1 + 2.0 * gb * d1 * d2 + gc * d2 * d2


def _gram_inverse(mesh):
    """Inverse Gram matrix entries (a, b, c) of each triangle's edge basis."""
    cache = getattr(mesh, "_gram_cache", None)
    if cache is None:
        p = mesh.vertices[mesh.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 * g12
        cache = (g22 / det, -g12 / det, g11 / det)
        mesh._gram_cache = cache
    return cache


# -- serialization ---------------------------------------------------------

def save_off(mesh, path):
    """Write a triangle mesh in OFF text format."""
    if mesh.dim != 2:
        raise MeshError("OFF export is for triangle meshes; use save_mesh_csv")
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_elements} 0\n")
        for v in mesh.vertices:
            fh.write("%.17g %.17g %.17g\n" % tuple(v))
        for t in mesh.elements:
            fh.write("3 %d %d %d\n" % tuple(t))


def load_off(path):
    """Read an OFF triangle mesh written by :func:`save_off`.

    Boundary flags are rebuilt from edge incidence; the pole is the vertex
    nearest (0, 0, 1).
    """
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if tokens[0] != "OFF":
        raise MeshError("not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        if k != 3:
            raise MeshError("only triangle faces are supported")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += 4
    faces = np.array(faces, dtype=np.int64)
    counts = {}
    for a, b, c in faces:
        for u, w in ((a, b), (b, c), (c, a)):
            key = (u, w) if u < w else (w, u)
            counts[key] = counts.get(key, 0) + 1
    boundary = np.zeros(nv, dtype=bool)
    for (u, w), cnt in counts.items():
        if cnt == 1:
            boundary[u] = boundary[w] = True
    kind = "hemisphere" if boundary.any() else "sphere"
    areas = _triangle_areas(verts, faces)
    pole = int(np.argmax(verts[:, 2]))
    return DiscreteManifold(kind, verts, faces, areas, boundary, pole=pole)


def save_mesh_csv(mesh, path):
    """Write a 1-D mesh as CSV rows (vertex, coordinate, boundary flag)."""
    if mesh.dim != 1:
        raise MeshError("CSV export is for 1-D meshes; use save_off")
    with open(path, "w") as fh:
        if mesh.kind == "circle":
            fh.write(f"# kind=circle length={mesh.length!r}\n")
        else:
            fh.write("# kind=interval\n")
        fh.write("vertex,coordinate,boundary\n")
        for i, (x, b) in enumerate(zip(mesh.vertices, mesh.boundary)):
            fh.write("%d,%.17g,%d\n" % (i, x, int(b)))


def load_mesh_csv(path):
    """Read a 1-D mesh written by :func:`save_mesh_csv`."""
    with open(path) as fh:
        header = fh.readline().strip()
        fh.readline()  # column names
        rows = [line.strip().split(",") for line in fh if line.strip()]
    coords = np.array([float(r[1]) for r in rows])
    if "kind=circle" in header:
        length = float(header.split("length=")[1])
        n = len(coords)
        elements = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
        gaps = np.diff(np.append(coords, coords[0] + length))
        return DiscreteManifold("circle", coords, elements, gaps,
                                np.zeros(n, dtype=bool), pole=0, length=length)
    boundary = np.array([r[2] == "1" for r in rows])
    n = len(coords) - 1
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return DiscreteManifold("interval", coords, elements, np.diff(coords),
                            boundary, pole=0)
