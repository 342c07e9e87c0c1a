"""Geometric queries on a TriangleMesh used by the planner."""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .mesh import DEFAULT_MIN_T, EPS_PLANE, Ray, SurfacePoint, TriangleMesh


class BoundaryEdgeError(Exception):
    """Travel direction leaves the face through an open boundary edge."""

    def __init__(self, face_id: int, edge: int):
        super().__init__(f"face {face_id} edge {edge} has no neighbour (open mesh)")
        self.face_id = face_id
        self.edge = edge


class NoContactError(Exception):
    """A start ray left the mesh without touching the wall."""


def sample_point_on_anatomy(mesh: TriangleMesh, rng: np.random.Generator) -> SurfacePoint:
    """Area-uniform random point on the surface."""
    cum = mesh.cumulative_area
    f = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    f = min(f, mesh.n_faces - 1)
    r1, r2 = rng.random(2)
    s = math.sqrt(r1)
    a, b, c = mesh.vertices[mesh.faces[f]]
    return SurfacePoint((1.0 - s) * a + s * (1.0 - r2) * b + s * r2 * c, f)


def ray_intersect(mesh: TriangleMesh, ray: Ray, exclude_face: int | None = None,
                  min_t: float = DEFAULT_MIN_T, max_t: float = math.inf):
    """First wall hit along ``ray`` with travel distance in (min_t, max_t].

    Returns ``(SurfacePoint, t)`` or None. A hit on an edge shared by several
    faces is attributed to the lowest face id.
    """
    v0, _, _ = mesh.corners
    e1, e2 = mesh.edges
    if mesh.use_bvh:
        ids = mesh.bvh.ray_candidates(ray.origin, ray.direction, min_t, max_t)
        if len(ids) == 0:
            return None
        t, valid = _kernels.ray_hits(ray.origin, ray.direction, v0[ids], e1[ids], e2[ids],
                                     2.0 * mesh.face_areas[ids])
    else:
        ids = None
        t, valid = _kernels.ray_hits(ray.origin, ray.direction, v0, e1, e2,
                                     2.0 * mesh.face_areas)
    valid &= (t > min_t) & (t <= max_t)
    if exclude_face is not None:
        if ids is None:
            valid[exclude_face] = False
        else:
            valid &= ids != exclude_face
    hit = np.flatnonzero(valid)
    if len(hit) == 0:
        return None
    th = t[hit]
    tmin = th.min()
    near = hit[th <= tmin + 1e-9 * max(1.0, tmin)]
    face_ids = near if ids is None else ids[near]
    k = int(np.argmin(face_ids))
    face = int(face_ids[k])
    tf = float(t[near[k]])
    return SurfacePoint(ray.origin + tf * ray.direction, face), tf


def closest_point(mesh: TriangleMesh, point):
    """Return (SurfacePoint, distance) of the closest surface point."""
    p = np.asarray(point, dtype=float)
    if mesh.use_bvh:
        ids = mesh.bvh.nearest_candidates(p)
    else:
        # bounding-sphere pruning; still a full pass over faces
        dc = np.linalg.norm(mesh.centroids - p, axis=1)
        j = int(np.argmin(dc))
        _, d2j = _closest_on(mesh, p, np.array([j]))
        ub = math.sqrt(d2j[0])
        ids = np.flatnonzero(dc - mesh.bounding_radii <= ub + 1e-9)
    pts, d2 = _closest_on(mesh, p, ids)
    dmin = d2.min()
    tied = np.flatnonzero(d2 <= dmin + 1e-18 + 1e-12 * dmin)
    k = tied[np.argmin(ids[tied])]
    return SurfacePoint(pts[k], int(ids[k])), math.sqrt(d2[k])


def project_to_closest_surface(mesh: TriangleMesh, point) -> SurfacePoint:
    """Closest point on the mesh to ``point`` (ties go to the lowest face id)."""
    return closest_point(mesh, point)[0]


def _closest_on(mesh, p, ids):
    v0, v1, v2 = mesh.corners
    e1, e2 = mesh.edges
    return _kernels.closest_points(p, v0[ids], v1[ids], v2[ids], e1[ids], e2[ids],
                                   mesh.face_normals[ids])


def lumen_winding_number(mesh: TriangleMesh, points) -> np.ndarray:
    """Winding number of the lumen (about 1 inside, 0 outside)."""
    v0, v1, v2 = mesh.corners
    # normals point into the lumen, so the outward-oriented number is negated
    return -_kernels.winding_numbers(points, v0, v1, v2)


def inside_anatomy(mesh: TriangleMesh, point, eps: float = EPS_PLANE) -> bool:
    """True when ``point`` is in the lumen or within ``eps`` of the wall."""
    if lumen_winding_number(mesh, point)[0] >= 0.5:
        return True
    return closest_point(mesh, point)[1] <= eps


def exit_edge(mesh: TriangleMesh, at: SurfacePoint, direction):
    """Local index of the edge first crossed moving from ``at`` along ``direction``.

    Returns ``(edge, distance)``, the distance being measured in the face
    plane. Ties (leaving through a vertex) go to the lowest edge index.
    """
    f = at.face_id
    n = mesh.face_normals[f]
    d = np.asarray(direction, dtype=float)
    d = d - (d @ n) * n
    tri = mesh.vertices[mesh.faces[f]]
    p = at.position
    best_k, best_t = -1, math.inf
    for k in range(3):
        a = tri[k]
        edge = tri[(k + 1) % 3] - a
        m = np.cross(edge, n)
        m /= np.linalg.norm(m)
        rate = float(d @ m)
        if rate <= 1e-15:
            continue
        t = max(float((a - p) @ m), 0.0) / rate
        if t < best_t:
            best_k, best_t = k, t
    if best_k < 0:
        raise ValueError("direction has no in-plane component")
    return best_k, best_t


def adjacent_face_in_direction(mesh: TriangleMesh, at: SurfacePoint, direction) -> int:
    """Face across the edge crossed when travelling from ``at`` along ``direction``.

    Raises BoundaryEdgeError when that edge is an open boundary.
    """
    k, _ = exit_edge(mesh, at, direction)
    g = int(mesh.edge_adjacency[at.face_id, k])
    if g < 0:
        raise BoundaryEdgeError(at.face_id, k)
    return g


def resolve_start(mesh: TriangleMesh, entry_point, axis) -> SurfacePoint:
    """First wall contact along the insertion axis from a point in the lumen."""
    axis = np.asarray(axis, dtype=float)
    ray = Ray(entry_point, axis / np.linalg.norm(axis))
    hit = ray_intersect(mesh, ray, min_t=0.0)
    if hit is None:
        raise NoContactError(
            f"ray from {np.round(ray.origin, 4).tolist()} along "
            f"{np.round(ray.direction, 4).tolist()} leaves the mesh without wall contact")
    return hit[0]


def surface_point_error(mesh: TriangleMesh, sp: SurfacePoint):
    """(plane distance, min barycentric, max barycentric) for validation."""
    tri = mesh.vertices[mesh.faces[sp.face_id]]
    n = mesh.face_normals[sp.face_id]
    h = float((sp.position - tri[0]) @ n)
    bary = _kernels.barycentric(sp.position - h * n, *tri)
    return abs(h), float(bary.min()), float(bary.max())


def is_valid_surface_point(mesh: TriangleMesh, sp: SurfacePoint,
                           eps_plane: float = EPS_PLANE, bary_tol: float = 1e-9) -> bool:
    h, lo, hi = surface_point_error(mesh, sp)
    return h <= eps_plane and lo >= -bary_tol and hi <= 1.0 + bary_tol
