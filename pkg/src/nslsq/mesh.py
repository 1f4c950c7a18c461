"""Triangulations of the two cavity geometries with tagged boundaries.

Meshes are plain vertex/triangle arrays plus a list of boundary edges,
each tagged as moving lid or no-slip wall.  Generators are deterministic
structured constructions; external meshes come in through the Triangle
``.node``/``.ele`` plain-text format.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

R_DISK = 0.5  # semi-disk radius


class Tag(IntEnum):
    """Boundary tags.  LID carries the driven velocity, WALL is no-slip.

    Numeric values double as vertex markers in the Triangle file format;
    an edge inherits the tag of its larger endpoint marker, so WALL > LID
    makes corner vertices (tagged LID) not leak onto wall edges.
    """

    LID = 1
    WALL = 2


class MeshError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass
class Mesh:
    """Immutable 2D triangulation with tagged boundary edges.

    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array, canonicalized (i < j, lexicographic)
    boundary_tags : (nb,) int array of Tag values
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        self.boundary_tags = np.ascontiguousarray(self.boundary_tags, dtype=np.int64)
        self._canonicalize()
        self._validate()
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self.boundary_edges.setflags(write=False)
        self.boundary_tags.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for the stored orientation)."""
        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def _canonicalize(self):
        if len(self.boundary_edges):
            self.boundary_edges = np.sort(self.boundary_edges, axis=1)
            order = np.lexsort((self.boundary_edges[:, 1], self.boundary_edges[:, 0]))
            self.boundary_edges = self.boundary_edges[order]
            self.boundary_tags = self.boundary_tags[order]

    def _validate(self):
        nv = self.n_vertices
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= nv:
            raise MeshError("triangle vertex index out of range")
        if len(self.boundary_edges) and (
            self.boundary_edges.min() < 0 or self.boundary_edges.max() >= nv
        ):
            raise MeshError("boundary edge vertex index out of range")
        areas = self.areas()
        bad = np.nonzero(areas <= 0.0)[0]
        if len(bad):
            raise MeshError(f"triangle {bad[0]} has non-positive area {areas[bad[0]]}")
        # Boundary edges are exactly the edges owned by a single triangle.
        found = boundary_edges_brute_force(self.triangles)
        stored = {tuple(e) for e in self.boundary_edges}
        if stored != found:
            missing = found - stored
            extra = stored - found
            raise MeshError(
                f"boundary edge set mismatch: missing={sorted(missing)[:3]} "
                f"extra={sorted(extra)[:3]}"
            )


def boundary_edges_brute_force(triangles: np.ndarray) -> set[tuple[int, int]]:
    """Edges appearing in exactly one triangle, as sorted vertex pairs."""
    count: dict[tuple[int, int], int] = {}
    for a, b, c in np.asarray(triangles):
        for i, j in ((a, b), (b, c), (c, a)):
            key = (int(min(i, j)), int(max(i, j)))
            count[key] = count.get(key, 0) + 1
    return {e for e, n in count.items() if n == 1}


def unique_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All mesh edges and the triangle->edge map.

    Returns (edges, tri_edges): edges is (ne, 2) sorted vertex pairs in
    first-appearance order (deterministic); tri_edges is (nt, 3) with the
    edge index of (v0,v1), (v1,v2), (v2,v0) per triangle.
    """
    triangles = np.asarray(triangles)
    index: dict[tuple[int, int], int] = {}
    tri_edges = np.empty((len(triangles), 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(triangles):
        for k, (i, j) in enumerate(((a, b), (b, c), (c, a))):
            key = (int(min(i, j)), int(max(i, j)))
            e = index.get(key)
            if e is None:
                e = len(index)
                index[key] = e
            tri_edges[t, k] = e
    edges = np.array(list(index.keys()), dtype=np.int64).reshape(-1, 2)
    return edges, tri_edges


def _oriented(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip triangles with negative signed area to counterclockwise."""
    p = vertices
    t = np.array(triangles, dtype=np.int64)
    d1 = p[t[:, 1]] - p[t[:, 0]]
    d2 = p[t[:, 2]] - p[t[:, 0]]
    neg = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) < 0
    t[neg] = t[neg][:, [0, 2, 1]]
    return t


def generate_unit_square(n: int) -> Mesh:
    """Crossed-triangle mesh of [0,1]^2: n*n cells, 4 triangles each.

    All boundary edges are tagged WALL.
    """
    if n < 1:
        raise MeshError(f"n must be >= 1, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    grid = np.array([(x, y) for y in xs for x in xs])
    centers = np.array(
        [((xs[i] + xs[i + 1]) / 2, (xs[j] + xs[j + 1]) / 2) for j in range(n) for i in range(n)]
    )
    vertices = np.vstack([grid, centers])
    ngrid = (n + 1) ** 2

    def g(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            m = ngrid + j * n + i
            c00, c10 = g(i, j), g(i + 1, j)
            c11, c01 = g(i + 1, j + 1), g(i, j + 1)
            triangles += [(c00, c10, m), (c10, c11, m), (c11, c01, m), (c01, c00, m)]
    edges = []
    for i in range(n):
        edges += [(g(i, 0), g(i + 1, 0)), (g(i, n), g(i + 1, n))]
        edges += [(g(0, i), g(0, i + 1)), (g(n, i), g(n, i + 1))]
    edges = np.array(edges)
    return Mesh(vertices, np.array(triangles), edges, np.full(len(edges), Tag.WALL))


def generate_semidisk(h_target: float) -> Mesh:
    """Structured polar triangulation of the half-disk of radius 1/2, y <= 0.

    Rings of vertices at radii i/nr * R are connected by split quads; the
    innermost ring fans to the center.  The straight diameter edges are
    tagged LID (including the two corner vertices), the arc chords WALL.
    The grading factor 0.8 reproduces the triangle/vertex counts of a
    quasi-uniform unstructured mesh of the same nominal size.
    """
    if not (0.0 < h_target < R_DISK):
        raise MeshError(f"h_target must be in (0, {R_DISK}), got {h_target}")
    s = 0.8 * h_target
    nr = max(2, round(R_DISK / s))
    na = max(4, round(np.pi * R_DISK / s))

    vertices = [(0.0, 0.0)]
    for i in range(1, nr + 1):
        r = R_DISK * i / nr
        for j in range(na + 1):
            theta = -np.pi + np.pi * j / na
            x, y = r * np.cos(theta), r * np.sin(theta)
            if j == 0:
                x, y = -r, 0.0
            elif j == na:
                x, y = r, 0.0
            vertices.append((x, y))
    vertices = np.array(vertices)

    def ring(i, j):
        return 1 + (i - 1) * (na + 1) + j

    triangles = []
    for j in range(na):
        triangles.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, nr):
        for j in range(na):
            a, b = ring(i, j), ring(i + 1, j)
            c, d = ring(i + 1, j + 1), ring(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    triangles = _oriented(vertices, np.array(triangles))

    edges, tags = [], []
    for side in (0, na):
        chain = [0] + [ring(i, side) for i in range(1, nr + 1)]
        for a, b in zip(chain[:-1], chain[1:]):
            edges.append((a, b))
            tags.append(Tag.LID)
    for j in range(na):
        edges.append((ring(nr, j), ring(nr, j + 1)))
        tags.append(Tag.WALL)

    mesh = Mesh(vertices, triangles, np.array(edges), np.array(tags))
    lengths = edge_lengths(mesh)
    if lengths.max() > 1.5 * h_target:
        raise MeshError(
            f"max edge length {lengths.max():.3g} exceeds 1.5*h_target={1.5 * h_target:.3g}"
        )
    return mesh


def edge_lengths(mesh: Mesh) -> np.ndarray:
    edges, _ = unique_edges(mesh.triangles)
    d = mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]]
    return np.hypot(d[:, 0], d[:, 1])


def _records(text: str, what: str):
    """Yield (line_number, fields) for non-comment, non-blank lines."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def read_triangle_format(
    node_text: str, ele_text: str, boundary_tag_map: dict[int, Tag]
) -> Mesh:
    """Parse Triangle ``.node``/``.ele`` texts (2D, attribute-free subset).

    Vertex boundary markers are mapped to tags through boundary_tag_map;
    a boundary edge gets the tag of the larger of its endpoint markers.
    Clockwise triangles are reordered.  Raises ParseError with the
    offending line number.
    """
    records = _records(node_text, "node")
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(".node: empty file") from None
    try:
        nv, dim, nattr, nmark = (int(x) for x in header)
    except ValueError:
        raise ParseError(f".node line {lineno}: bad header {header!r}") from None
    if dim != 2 or nattr != 0:
        raise ParseError(f".node line {lineno}: only 2D attribute-free files supported")
    if nmark not in (0, 1):
        raise ParseError(f".node line {lineno}: boundary marker count must be 0 or 1")

    vertices = np.zeros((nv, 2))
    markers = np.zeros(nv, dtype=np.int64)
    base = None
    for k in range(nv):
        try:
            lineno, fields = next(records)
        except StopIteration:
            raise ParseError(f".node: expected {nv} vertex records, got {k}") from None
        if len(fields) != 3 + nmark:
            raise ParseError(f".node line {lineno}: expected {3 + nmark} fields")
        try:
            idx = int(fields[0])
            x, y = float(fields[1]), float(fields[2])
            mark = int(fields[3]) if nmark else 0
        except ValueError:
            raise ParseError(f".node line {lineno}: malformed record") from None
        if base is None:
            if idx not in (0, 1):
                raise ParseError(f".node line {lineno}: first index must be 0 or 1")
            base = idx
        if idx - base != k:
            raise ParseError(f".node line {lineno}: non-consecutive index {idx}")
        vertices[k] = (x, y)
        markers[k] = mark

    records = _records(ele_text, "ele")
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(".ele: empty file") from None
    try:
        nt, per_tri, nattr = (int(x) for x in header)
    except ValueError:
        raise ParseError(f".ele line {lineno}: bad header {header!r}") from None
    if per_tri != 3 or nattr != 0:
        raise ParseError(f".ele line {lineno}: only 3-node attribute-free triangles supported")

    triangles = np.zeros((nt, 3), dtype=np.int64)
    for k in range(nt):
        try:
            lineno, fields = next(records)
        except StopIteration:
            raise ParseError(f".ele: expected {nt} triangle records, got {k}") from None
        if len(fields) != 4:
            raise ParseError(f".ele line {lineno}: expected 4 fields")
        try:
            idx = int(fields[0])
            tri = [int(f) - base for f in fields[1:4]]
        except ValueError:
            raise ParseError(f".ele line {lineno}: malformed record") from None
        if min(tri) < 0 or max(tri) >= nv:
            raise ParseError(f".ele line {lineno}: vertex index out of range")
        triangles[k] = tri

    triangles = _oriented(vertices, triangles)
    edges = sorted(boundary_edges_brute_force(triangles))
    tags = []
    for i, j in edges:
        mark = int(max(markers[i], markers[j]))
        if mark not in boundary_tag_map:
            raise ParseError(f"boundary edge ({i},{j}) has unmapped marker {mark}")
        tags.append(boundary_tag_map[mark])
    return Mesh(vertices, triangles, np.array(edges).reshape(-1, 2), np.array(tags))


def write_triangle_format(mesh: Mesh) -> tuple[str, str]:
    """Triangle ``.node``/``.ele`` texts; round-trips bit-stable.

    Vertex markers: 0 interior, else the smallest incident boundary-edge
    tag (so corner vertices shared by LID and WALL edges are marked LID,
    matching the generators' corner policy).
    """
    markers = np.zeros(mesh.n_vertices, dtype=np.int64)
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        for v in (i, j):
            markers[v] = int(tag) if markers[v] == 0 else min(markers[v], int(tag))
    lines = [f"{mesh.n_vertices} 2 0 1"]
    for k, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{k + 1} {float(x)!r} {float(y)!r} {markers[k]}")
    node_text = "\n".join(lines) + "\n"
    lines = [f"{mesh.n_triangles} 3 0"]
    for k, (a, b, c) in enumerate(mesh.triangles):
        lines.append(f"{k + 1} {a + 1} {b + 1} {c + 1}")
    ele_text = "\n".join(lines) + "\n"
    return node_text, ele_text
