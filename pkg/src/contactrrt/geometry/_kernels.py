"""Vectorised per-face kernels shared by the mesh queries.

Everything here works on plain arrays so it can be reused by the mesh
builder (orientation vote) before a TriangleMesh exists.
"""
from __future__ import annotations

import numpy as np

FOUR_PI = 4.0 * np.pi


def face_geometry(vertices: np.ndarray, faces: np.ndarray):
    """Return (raw cross products, areas) for every face."""
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    cross = np.cross(v1 - v0, v2 - v0)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    return cross, areas


def winding_numbers(points, v0, v1, v2, chunk: int = 2_000_000) -> np.ndarray:
    """Generalised winding number of the oriented triangle soup at each point.

    Uses the Van Oosterom-Strackee solid angle. With outward-facing triangles a
    point inside a closed surface gets 1 and a point outside gets 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    nf = len(v0)
    step = max(1, chunk // max(nf, 1))
    for s in range(0, len(pts), step):
        p = pts[s:s + step, None, :]
        a = v0[None] - p
        b = v1[None] - p
        c = v2[None] - p
        la = np.sqrt(np.einsum("...i,...i", a, a))
        lb = np.sqrt(np.einsum("...i,...i", b, b))
        lc = np.sqrt(np.einsum("...i,...i", c, c))
        det = np.einsum("...i,...i", a, np.cross(b, c))
        denom = (la * lb * lc
                 + np.einsum("...i,...i", a, b) * lc
                 + np.einsum("...i,...i", b, c) * la
                 + np.einsum("...i,...i", c, a) * lb)
        out[s:s + step] = 2.0 * np.arctan2(det, denom).sum(axis=1) / FOUR_PI
    return out


def ray_hits(origin, direction, v0, e1, e2, double_areas, bary_tol: float = 1e-10,
             graze: float = 1e-6):
    """Moller-Trumbore against every face.

    Returns (t, valid) arrays; ``valid`` marks faces the infinite line crosses
    inside the (slightly inflated) triangle. Faces the ray meets at less than
    ``graze`` (cosine to the face normal) are ignored: a ray sliding along a
    face plane has an ill-conditioned hit distance.
    """
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > graze * double_areas
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    tvec = origin - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec @ direction) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    valid = ok & (u >= -bary_tol) & (v >= -bary_tol) & (u + v <= 1.0 + bary_tol)
    return t, valid


def closest_points(p, v0, v1, v2, e1, e2, unit_normals):
    """Closest point on each triangle to ``p``; returns (points, squared distances)."""
    p = np.asarray(p, dtype=float)
    w = p - v0
    h = np.einsum("ij,ij->i", w, unit_normals)
    proj = p - h[:, None] * unit_normals
    # barycentric coordinates of the in-plane foot
    r = proj - v0
    d00 = np.einsum("ij,ij->i", e1, e1)
    d01 = np.einsum("ij,ij->i", e1, e2)
    d11 = np.einsum("ij,ij->i", e2, e2)
    d20 = np.einsum("ij,ij->i", r, e1)
    d21 = np.einsum("ij,ij->i", r, e2)
    denom = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / denom
    bw = (d00 * d21 - d01 * d20) / denom
    inside = (bv >= 0.0) & (bw >= 0.0) & (bv + bw <= 1.0)

    best = proj.copy()
    best_d2 = h * h
    out = ~inside
    if out.any():
        pts_out = None
        d2_out = None
        for a, b in ((v0[out], v1[out]), (v1[out], v2[out]), (v2[out], v0[out])):
            ab = b - a
            s = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
            np.clip(s, 0.0, 1.0, out=s)
            q = a + s[:, None] * ab
            diff = p - q
            d2 = np.einsum("ij,ij->i", diff, diff)
            if pts_out is None:
                pts_out, d2_out = q, d2
            else:
                closer = d2 < d2_out
                pts_out[closer] = q[closer]
                d2_out[closer] = d2[closer]
        best[out] = pts_out
        best_d2[out] = d2_out
    return best, best_d2


def barycentric(p, a, b, c):
    """Barycentric coordinates of ``p`` (assumed in-plane) in triangle abc."""
    e1 = b - a
    e2 = c - a
    r = p - a
    d00 = e1 @ e1
    d01 = e1 @ e2
    d11 = e2 @ e2
    d20 = r @ e1
    d21 = r @ e2
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.array([1.0 - v - w, v, w])
