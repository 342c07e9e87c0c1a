"""Triangle mesh container, ingestion cleaning and topology."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import _kernels

logger = logging.getLogger(__name__)

EPS_PLANE = 1e-6
"""On-surface tolerance in mm."""

DEFAULT_MIN_T = 10 * EPS_PLANE
WELD_TOL = 1e-6
AREA_TOL = 1e-12
MAX_NONMANIFOLD_FRACTION = 0.01


class MeshError(Exception):
    """Base class for mesh ingestion failures."""


class MeshParseError(MeshError):
    pass


class TopologyError(MeshError):
    pass


@dataclass
class RepairReport:
    welded_vertices: int = 0
    unused_vertices: int = 0
    degenerate_faces: int = 0
    duplicate_faces: int = 0
    nonmanifold_edges: int = 0
    flipped_faces: int = 0
    components: int = 0

    @property
    def total(self) -> int:
        """Number of geometric repairs (welds and dropped faces)."""
        return self.welded_vertices + self.degenerate_faces + self.duplicate_faces


@dataclass(frozen=True)
class SurfacePoint:
    position: np.ndarray
    face_id: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "face_id", int(self.face_id))


@dataclass(frozen=True)
class GoalRegion:
    face_ids: frozenset

    def __init__(self, face_ids):
        ids = frozenset(int(f) for f in face_ids)
        if not ids:
            raise ValueError("goal region must contain at least one face")
        object.__setattr__(self, "face_ids", ids)

    def __contains__(self, face_id) -> bool:
        return int(face_id) in self.face_ids

    def validate(self, mesh: "TriangleMesh") -> None:
        bad = [f for f in self.face_ids if not 0 <= f < mesh.n_faces]
        if bad:
            raise ValueError(f"goal faces out of range: {sorted(bad)[:10]}")


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not abs(n - 1.0) <= 1e-9:
            raise ValueError(f"ray direction must be unit length (got norm {n})")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "direction", d)

    @classmethod
    def towards(cls, origin, target) -> "Ray":
        d = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
        return cls(origin, d / np.linalg.norm(d))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle surface with lumen-facing normals.

    ``edge_adjacency[f, k]`` is the face across edge ``(faces[f, k],
    faces[f, (k + 1) % 3])`` or -1 on an open boundary. Instances are
    treated as immutable; build them with :meth:`from_arrays` or
    :func:`~contactrrt.geometry.io.load_mesh`.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    face_areas: np.ndarray
    edge_adjacency: np.ndarray
    repairs: RepairReport = field(default_factory=RepairReport)
    use_bvh: bool = False

    @classmethod
    def from_arrays(cls, vertices, faces, *, scale: float = 1.0,
                    weld_tol: float = WELD_TOL,
                    max_nonmanifold_fraction: float = MAX_NONMANIFOLD_FRACTION,
                    orient: bool = True, use_bvh: bool = False) -> "TriangleMesh":
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3) * float(scale)
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) == 0:
            raise MeshError("mesh has no faces")
        if faces.min() < 0 or faces.max() >= len(vertices):
            raise MeshError("face references a vertex index out of range")
        report = RepairReport()

        vertices, faces = _weld(vertices, faces, weld_tol, report)
        faces = _drop_bad_faces(vertices, faces, report)
        if len(faces) == 0:
            raise MeshError("no faces left after cleaning")
        vertices, faces = _compact(vertices, faces, report)

        adjacency, edge_id, n_edges, n_bad = _build_adjacency(faces)
        report.nonmanifold_edges = n_bad
        if n_bad > max_nonmanifold_fraction * n_edges:
            raise TopologyError(
                f"{n_bad} of {n_edges} edges are non-manifold "
                f"(limit {max_nonmanifold_fraction:.1%})")

        labels = _components(adjacency)
        report.components = int(labels.max()) + 1
        if orient:
            faces, adjacency = _orient(vertices, faces, adjacency, labels, report)

        cross, areas = _kernels.face_geometry(vertices, faces)
        normals = cross / np.linalg.norm(cross, axis=1)[:, None]
        if report.total or report.flipped_faces:
            logger.info("mesh repairs: %s", report)
        return cls(_readonly(vertices), _readonly(faces), _readonly(normals),
                   _readonly(areas), _readonly(adjacency), report, use_bvh)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def corners(self):
        """(v0, v1, v2) per-face corner arrays."""
        return tuple(_readonly(self.vertices[self.faces[:, k]]) for k in range(3))

    @cached_property
    def edges(self):
        v0, v1, v2 = self.corners
        return _readonly(v1 - v0), _readonly(v2 - v0)

    @cached_property
    def centroids(self) -> np.ndarray:
        v0, v1, v2 = self.corners
        return _readonly((v0 + v1 + v2) / 3.0)

    @cached_property
    def bounding_radii(self) -> np.ndarray:
        c = self.centroids
        r = np.max([np.linalg.norm(v - c, axis=1) for v in self.corners], axis=0)
        return _readonly(r)

    @cached_property
    def cumulative_area(self) -> np.ndarray:
        return _readonly(np.cumsum(self.face_areas))

    @property
    def total_area(self) -> float:
        return float(self.cumulative_area[-1])

    @cached_property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @cached_property
    def bvh(self):
        from .bvh import BVH
        return BVH(self)

    def with_bvh(self, enabled: bool = True) -> "TriangleMesh":
        """Same mesh with the BVH acceleration toggled."""
        return TriangleMesh(self.vertices, self.faces, self.face_normals, self.face_areas,
                            self.edge_adjacency, self.repairs, enabled)

    def triangle(self, face_id: int) -> np.ndarray:
        return self.vertices[self.faces[face_id]]

    def neighbors(self, face_id: int) -> list[int | None]:
        return [None if n < 0 else int(n) for n in self.edge_adjacency[face_id]]

    def boundary_edge_count(self) -> int:
        return int((self.edge_adjacency < 0).sum())

    def is_closed(self) -> bool:
        return self.boundary_edge_count() == 0


def _weld(vertices, faces, tol, report):
    if tol <= 0 or len(vertices) < 2:
        return vertices, faces
    pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return vertices, faces
    n = len(vertices)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_groups, labels = connected_components(graph, directed=False)
    # representative = lowest original index in each group
    rep = np.full(n_groups, n, dtype=np.int64)
    np.minimum.at(rep, labels, np.arange(n))
    mapping = rep[labels]
    report.welded_vertices = int(n - n_groups)
    return vertices, mapping[faces]


def _drop_bad_faces(vertices, faces, report):
    repeated = ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2]))
    _, areas = _kernels.face_geometry(vertices, faces)
    degenerate = repeated | ~(areas > AREA_TOL)
    report.degenerate_faces = int(degenerate.sum())
    faces = faces[~degenerate]
    key = np.sort(faces, axis=1)
    _, first = np.unique(key, axis=0, return_index=True)
    keep = np.zeros(len(faces), dtype=bool)
    keep[first] = True
    report.duplicate_faces = int((~keep).sum())
    return faces[keep]


def _compact(vertices, faces, report):
    used = np.unique(faces)
    report.unused_vertices = int(len(vertices) - len(used) - report.welded_vertices)
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[faces]


def _build_adjacency(faces):
    """Return (adjacency, undirected edge id per (face, k), edge count, non-manifold count)."""
    nf = len(faces)
    a = faces
    b = np.roll(faces, -1, axis=1)
    key = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=-1).reshape(-1, 2)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    adjacency = np.full(3 * nf, -1, dtype=np.int64)
    half = np.arange(3 * nf)
    manifold = counts[inverse] == 2
    idx = half[manifold]
    order = idx[np.argsort(inverse[manifold], kind="stable")]
    first, second = order[0::2], order[1::2]
    adjacency[first] = second // 3
    adjacency[second] = first // 3
    return (adjacency.reshape(nf, 3), inverse.reshape(nf, 3), len(counts),
            int((counts > 2).sum()))


def _components(adjacency):
    nf = len(adjacency)
    f, k = np.nonzero(adjacency >= 0)
    graph = coo_matrix((np.ones(len(f)), (f, adjacency[f, k])), shape=(nf, nf))
    return connected_components(graph, directed=False)[1]


def _orient(vertices, faces, adjacency, labels, report):
    """Make winding consistent per component, then point normals into the lumen."""
    faces = faces.copy()
    nf = len(faces)
    flip = np.zeros(nf, dtype=bool)
    seen = np.zeros(nf, dtype=bool)
    for start in range(nf):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        while queue:
            f = queue.popleft()
            tri = faces[f]
            for k in range(3):
                g = adjacency[f, k]
                if g < 0 or seen[g]:
                    continue
                a, b = tri[k], tri[(k + 1) % 3]
                if flip[f]:
                    a, b = b, a
                # consistent neighbours traverse the shared edge as (b, a)
                gt = faces[g]
                pos = int(np.flatnonzero(gt == a)[0])
                same_dir = gt[(pos + 1) % 3] == b
                flip[g] = bool(same_dir)
                seen[g] = True
                queue.append(g)
    faces[flip] = faces[flip][:, ::-1]

    # majority vote per component on which side of the surface is enclosed
    cross, _ = _kernels.face_geometry(vertices, faces)
    normals = cross / np.linalg.norm(cross, axis=1)[:, None]
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    centroids = (v0 + v1 + v2) / 3.0
    edge_len = np.linalg.norm(v1 - v0, axis=1)
    for comp in range(labels.max() + 1):
        members = np.flatnonzero(labels == comp)
        sample = members[np.linspace(0, len(members) - 1, min(len(members), 64)).astype(int)]
        eps = 1e-3 * float(np.median(edge_len[members]))
        plus = centroids[sample] + eps * normals[sample]
        minus = centroids[sample] - eps * normals[sample]
        w = _kernels.winding_numbers(np.vstack([plus, minus]), v0, v1, v2)
        wp, wm = np.abs(w[:len(sample)]), np.abs(w[len(sample):])
        votes_in = int((wp > wm).sum())
        votes_out = int((wm > wp).sum())
        if votes_out > votes_in:
            faces[members] = faces[members][:, ::-1]
            flip[members] = ~flip[members]
    report.flipped_faces = int(flip.sum())
    # reversing a face's winding permutes its edge slots: (a,b,c) -> (c,b,a)
    # edges (ab, bc, ca) become (cb, ba, ac) i.e. old slots (1, 0, 2)
    adjacency = adjacency.copy()
    adjacency[flip] = adjacency[flip][:, [1, 0, 2]]
    return faces, adjacency
