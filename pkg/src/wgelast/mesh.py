"""Triangular meshes of the unit square and a plain-text mesh importer.

Conventions used throughout the package:

* triangles are stored counterclockwise (positive signed area);
* each edge is stored as ``(lo, hi)`` with ``lo < hi`` (global vertex
  indices), and its global unit normal is the edge direction ``lo -> hi``
  rotated 90 degrees clockwise;
* for each (triangle, local edge) pair a sign is stored: ``+1`` if the
  triangle's outward normal on that edge equals the global edge normal,
  ``-1`` otherwise.

The sign bookkeeping makes normal traces of edge unknowns single-valued
per edge, which the weak divergence and the flux reconstruction rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SQUARE_LEVEL = 12

# local edge j of a triangle runs from vertex j to vertex (j+1) % 3
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    """Raised for invalid mesh input or failed validation."""


@dataclass(frozen=True)
class Mesh:
    """Immutable 2D triangulation with edge connectivity.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array, lower vertex index first
    tri_edges : (nt, 3) int array, global edge index of each local edge
    tri_edge_signs : (nt, 3) float array, +1/-1 orientation signs
    edge_is_boundary : (ne,) bool array
    tri_diameter : (nt,) float array, longest side of each triangle
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    edge_is_boundary: np.ndarray
    tri_diameter: np.ndarray

    def __post_init__(self):
        for arr in (self.vertices, self.triangles, self.edges, self.tri_edges,
                    self.tri_edge_signs, self.edge_is_boundary, self.tri_diameter):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        """Mesh size: largest triangle diameter."""
        return float(self.tri_diameter.max())

    @property
    def edge_vectors(self) -> np.ndarray:
        """(ne, 2) vectors from the lower-index to the higher-index vertex."""
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def edge_normals(self) -> np.ndarray:
        """(ne, 2) global unit normals (edge direction rotated clockwise)."""
        vec = self.edge_vectors
        length = np.linalg.norm(vec, axis=1, keepdims=True)
        return np.column_stack([vec[:, 1], -vec[:, 0]]) / length

    @property
    def tri_coords(self) -> np.ndarray:
        """(nt, 3, 2) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    @property
    def tri_areas(self) -> np.ndarray:
        c = self.tri_coords
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def tri_edge_coords(self) -> np.ndarray:
        """(nt, 3, 2, 2) endpoint coordinates of each local edge, in global
        (lower index first) order."""
        return self.vertices[self.edges[self.tri_edges]]

    def validate(self) -> None:
        """Assert all structural invariants; raise :class:`MeshError` otherwise."""
        if np.any(self.tri_areas <= 0.0):
            bad = int(np.argmin(self.tri_areas))
            raise MeshError(f"triangle {bad} is not counterclockwise (area {self.tri_areas[bad]:g})")

        counts = np.bincount(self.tri_edges.ravel(), minlength=self.n_edges)
        if np.any(counts > 2):
            bad = int(np.argmax(counts))
            raise MeshError(f"edge {bad} is incident to {counts[bad]} triangles (non-manifold)")
        if np.any(counts == 0):
            raise MeshError("unused edge in connectivity table")
        if not np.array_equal(counts == 1, self.edge_is_boundary):
            raise MeshError("boundary flags inconsistent with incidence counts")

        # interior edges are traversed once in each direction
        signsum = np.zeros(self.n_edges)
        np.add.at(signsum, self.tri_edges.ravel(), self.tri_edge_signs.ravel())
        interior = ~self.edge_is_boundary
        if np.any(signsum[interior] != 0.0):
            raise MeshError("interior edge with non-opposite orientation signs")

        euler = self.n_vertices - self.n_edges + self.n_triangles + 1
        if euler != 2:
            raise MeshError(f"Euler relation violated: V-E+F+1 = {euler}")

        if np.any(np.abs(np.linalg.norm(self.edge_normals, axis=1) - 1.0) > 1e-14):
            raise MeshError("non-unit edge normal")


def _connect(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Derive edges, signs, boundary flags from vertices + triangles."""
    nt = triangles.shape[0]
    pairs = triangles[:, _LOCAL_EDGES]              # (nt, 3, 2)
    lo = pairs.min(axis=2)
    hi = pairs.max(axis=2)
    sorted_pairs = np.stack([lo, hi], axis=2).reshape(-1, 2)
    edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(nt, 3)
    # +1 when the triangle traverses the edge from the lower global index
    signs = np.where(pairs[:, :, 0] == lo, 1.0, -1.0)

    counts = np.bincount(tri_edges.ravel(), minlength=edges.shape[0])
    boundary = counts == 1

    coords = vertices[triangles]
    side = np.linalg.norm(coords[:, [1, 2, 0]] - coords, axis=2)
    diam = side.max(axis=1)

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        tri_edge_signs=signs,
        edge_is_boundary=boundary,
        tri_diameter=diam,
    )


def build_square_mesh(level: int) -> Mesh:
    """Uniform triangulation of the unit square.

    Level ``l`` splits the square into ``2^l x 2^l`` cells and each cell
    into two triangles along its bottom-left to top-right diagonal, giving
    ``2*4^l`` triangles of diameter ``sqrt(2)/2^l``.
    """
    if not isinstance(level, (int, np.integer)) or isinstance(level, bool):
        raise MeshError("level must be an integer")
    if level < 1:
        raise MeshError(f"level must be >= 1, got {level}")
    if level > MAX_SQUARE_LEVEL:
        raise MeshError(f"level {level} exceeds the supported maximum {MAX_SQUARE_LEVEL}")

    n = 2 ** level
    ticks = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    # vertex (i, j) -> index i*(n+1) + j: x index major, y index minor
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    sw = (i * (n + 1) + j).ravel()
    se = sw + (n + 1)
    nw = sw + 1
    ne = se + 1
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    mesh = _connect(vertices, triangles)
    mesh.validate()
    return mesh


def edge_geometry(mesh: Mesh, edge_index: int):
    """Return (midpoint, length, unit normal) of one edge."""
    ne = mesh.n_edges
    if not -ne <= edge_index < ne:
        raise IndexError(f"edge index {edge_index} out of range for {ne} edges")
    a, b = mesh.edges[edge_index]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    vec = pb - pa
    length = float(np.linalg.norm(vec))
    normal = np.array([vec[1], -vec[0]]) / length
    return 0.5 * (pa + pb), length, normal


def _parse_table(text: str, label: str):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append(([float(tok) for tok in line.split()], lineno))
        except ValueError as exc:
            raise MeshError(f"{label} line {lineno}: {exc}") from None
    if not rows:
        raise MeshError(f"{label}: empty input")
    return rows


def import_mesh(node_text: str, ele_text: str) -> Mesh:
    """Build a mesh from plain-text vertex and triangle tables.

    The node table starts with a header line whose first entry is the vertex
    count; each following line is ``index x y [marker...]``. The element
    table starts with the triangle count; each following line is
    ``index v1 v2 v3``. Vertex indices may be 0- or 1-based. Triangles with
    negative orientation are silently flipped; duplicate vertices, degenerate
    triangles, and non-manifold edges are rejected.
    """
    node_rows = _parse_table(node_text, "node file")
    ele_rows = _parse_table(ele_text, "element file")

    nv = int(node_rows[0][0][0])
    body = node_rows[1:]
    if len(body) != nv:
        raise MeshError(f"node file: header promises {nv} vertices, found {len(body)}")
    vertices = np.empty((nv, 2))
    indices = np.empty(nv, dtype=np.int64)
    for pos, (vals, lineno) in enumerate(body):
        if len(vals) < 3:
            raise MeshError(f"node file line {lineno}: expected 'index x y'")
        indices[pos] = int(vals[0])
        vertices[pos] = vals[1:3]
    base = indices.min()
    if base not in (0, 1) or not np.array_equal(np.sort(indices), np.arange(base, base + nv)):
        raise MeshError("node file: vertex indices must be consecutive starting at 0 or 1")
    order = np.argsort(indices)
    vertices = vertices[order]

    _, first_seen, dup_counts = np.unique(
        vertices.round(12), axis=0, return_index=True, return_counts=True)
    if np.any(dup_counts > 1):
        bad = int(first_seen[np.argmax(dup_counts > 1)])
        raise MeshError(f"duplicate vertex at {tuple(vertices[bad])}")

    ntri = int(ele_rows[0][0][0])
    body = ele_rows[1:]
    if len(body) != ntri:
        raise MeshError(f"element file: header promises {ntri} triangles, found {len(body)}")
    triangles = np.empty((ntri, 3), dtype=np.int64)
    for pos, (vals, lineno) in enumerate(body):
        if len(vals) < 4:
            raise MeshError(f"element file line {lineno}: expected 'index v1 v2 v3'")
        triangles[pos] = [int(v) - base for v in vals[1:4]]
    if triangles.min() < 0 or triangles.max() >= nv:
        raise MeshError("element file: vertex index out of range")

    coords = vertices[triangles]
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.abs(coords).max() ** 2 + 1.0
    degenerate = np.abs(area2) <= 1e-14 * scale
    if np.any(degenerate):
        bad = int(np.argmax(degenerate))
        raise MeshError(f"degenerate triangle {bad}: vertices {triangles[bad].tolist()}")
    flip = area2 < 0
    triangles[flip] = triangles[flip][:, ::-1]

    mesh = _connect(vertices, triangles)
    mesh.validate()
    return mesh


def export_mesh(mesh: Mesh):
    """Serialize a mesh to (node_text, ele_text), 1-based, round-trippable
    through :func:`import_mesh`."""
    lines = [f"{mesh.n_vertices} 2 0 0"]
    for i, (x, y) in enumerate(mesh.vertices, start=1):
        lines.append(f"{i} {x:.17g} {y:.17g}")
    node_text = "\n".join(lines) + "\n"

    lines = [f"{mesh.n_triangles} 3 0"]
    for i, (a, b, c) in enumerate(mesh.triangles, start=1):
        lines.append(f"{i} {a + 1} {b + 1} {c + 1}")
    ele_text = "\n".join(lines) + "\n"
    return node_text, ele_text
