"""Synthetic vessel meshes used by the tests, the benchmark and the CLI.

Parametric shapes (plane, tube, sphere) have vertices exactly on the
analytic surface so they can be checked against closed-form answers. The
branching fixtures are built from a signed distance field with marching
cubes, which gives the same kind of irregular triangulation that a
segmentation pipeline produces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import marching_cubes

from .geometry import GoalRegion, TriangleMesh


@dataclass
class InletDisk:
    """Disk of entry points; the wire is pushed along ``axis`` tilted by ``tilt_deg``."""

    center: np.ndarray
    radius: float
    axis: np.ndarray
    tilt_deg: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        a = np.asarray(self.axis, dtype=float)
        self.axis = a / np.linalg.norm(a)

    def sample(self, rng: np.random.Generator):
        """Return (entry point, insertion direction)."""
        u, v = _basis(self.axis)
        r = self.radius * math.sqrt(rng.random())
        phi = 2.0 * math.pi * rng.random()
        point = self.center + r * (math.cos(phi) * u + math.sin(phi) * v)
        psi = 2.0 * math.pi * rng.random()
        tilt = math.radians(self.tilt_deg)
        side = math.cos(psi) * u + math.sin(psi) * v
        direction = math.cos(tilt) * self.axis + math.sin(tilt) * side
        return point, direction / np.linalg.norm(direction)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius,
                "axis": self.axis.tolist(), "tilt_deg": self.tilt_deg}


@dataclass
class Fixture:
    name: str
    mesh: TriangleMesh
    goals: dict = field(default_factory=dict)
    inlet: InletDisk | None = None

    @property
    def goal(self) -> GoalRegion:
        return next(iter(self.goals.values()))


def _basis(axis):
    axis = np.asarray(axis, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def square() -> TriangleMesh:
    """Unit square in z=0 split along the (0,0)-(1,1) diagonal."""
    v = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    return TriangleMesh.from_arrays(v, [(0, 1, 2), (0, 2, 3)])


def plane(size: float = 20.0, n: int = 10) -> TriangleMesh:
    """Flat square grid centred on the origin in z=0."""
    xs = np.linspace(-size / 2, size / 2, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b, c, d = a + n + 1, a + n + 2, a + 1
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh.from_arrays(verts, faces)


def tetrahedron() -> TriangleMesh:
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    return TriangleMesh.from_arrays(v, [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)])


def icosphere(radius: float = 10.0, subdivisions: int = 2) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh.from_arrays(radius * np.array(verts), faces)


def tube(radius: float = 5.0, length: float = 60.0, n_around: int = 24,
         n_along: int = 30, capped: bool = False) -> TriangleMesh:
    """Cylinder along +z from z=0 to z=length, vertices on the exact circle."""
    phi = 2.0 * math.pi * np.arange(n_around) / n_around
    zs = np.linspace(0.0, length, n_along + 1)
    ring = np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])
    verts = [np.column_stack([ring, np.full(n_around, z)]) for z in zs]
    verts = np.vstack(verts)
    faces = []
    for i in range(n_along):
        for j in range(n_around):
            a = i * n_around + j
            b = i * n_around + (j + 1) % n_around
            c, d = a + n_around, b + n_around
            faces += [(a, b, d), (a, d, c)]
    if capped:
        bottom, top = len(verts), len(verts) + 1
        verts = np.vstack([verts, [0.0, 0.0, 0.0], [0.0, 0.0, length]])
        last = n_along * n_around
        for j in range(n_around):
            k = (j + 1) % n_around
            faces.append((bottom, k, j))
            faces.append((top, last + j, last + k))
    return TriangleMesh.from_arrays(verts, faces)


def straight_tube_fixture(radius: float = 5.0, length: float = 60.0, n_around: int = 24,
                          n_along: int = 30, goal_length: float = 5.0) -> Fixture:
    mesh = tube(radius, length, n_around, n_along)
    goal = np.flatnonzero(mesh.centroids[:, 2] >= length - goal_length)
    inlet = InletDisk([0.0, 0.0, 1.0], 0.5 * radius, [0.0, 0.0, 1.0], tilt_deg=10.0)
    return Fixture("straight_tube", mesh, {"distal": GoalRegion(goal)}, inlet)


def timing_fixture() -> Fixture:
    """Open tube with exactly 10,000 faces."""
    return straight_tube_fixture(radius=5.0, length=100.0, n_around=50, n_along=100)


# --- implicit vessel trees -------------------------------------------------

def _segment_distance(points, a, b):
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    s = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - (a + s[:, None] * ab), axis=1)


def _smooth_min(a, b, k):
    h = np.clip(0.5 + 0.5 * (b - a) / k, 0.0, 1.0)
    return b * (1 - h) + a * h - k * h * (1 - h)


def _vessel_tree(segments, spacing, blend):
    """Marching-cubes surface of a union of capsules.

    ``segments`` is a list of vessels, each a list of (start, end, radius)
    pieces. Pieces of one vessel are joined with a hard union and vessels
    are blended with a smooth union of width ``blend``.
    """
    flat = [s for vessel in segments for s in vessel]
    pts = np.array([p for s in flat for p in s[:2]], dtype=float)
    rmax = max(s[2] for s in flat)
    lo = pts.min(0) - rmax - 2 * spacing
    hi = pts.max(0) + rmax + 2 * spacing
    axes = [np.arange(lo[i], hi[i] + spacing, spacing) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    field = None
    for vessel in segments:
        d = np.min([_segment_distance(grid, a, b) - r for a, b, r in vessel], axis=0)
        field = d if field is None else _smooth_min(field, d, blend)
    vol = field.reshape(len(axes[0]), len(axes[1]), len(axes[2]))
    verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=(spacing,) * 3,
                                        method="lewiner", allow_degenerate=False)
    return verts + lo, faces


def _cut_open(verts, faces, cuts):
    """Open the vessel ends; keep the largest connected piece.

    Each cut ``(point, outward_axis, reach)`` drops faces beyond the plane
    whose centroid lies within ``reach`` of ``point``.
    """
    c = verts[faces].mean(axis=1)
    keep = np.ones(len(faces), dtype=bool)
    for point, axis, reach in cuts:
        rel = c - np.asarray(point, dtype=float)
        beyond = rel @ np.asarray(axis, dtype=float) >= 0.0
        keep &= ~(beyond & (np.linalg.norm(rel, axis=1) < reach))
    mesh = TriangleMesh.from_arrays(verts, faces[keep])
    from .geometry.mesh import _components
    labels = _components(mesh.edge_adjacency)
    main = np.bincount(labels).argmax()
    if (labels != main).any():
        mesh = TriangleMesh.from_arrays(mesh.vertices, mesh.faces[labels == main])
    return mesh


def _branch_goal(mesh, end, axis, depth, radius):
    """Faces of the last ``depth`` mm of the branch ending at ``end``."""
    rel = mesh.centroids - np.asarray(end, dtype=float)
    s = rel @ np.asarray(axis, dtype=float)
    near = np.linalg.norm(rel, axis=1) < 2.0 * radius + depth
    return np.flatnonzero((s >= -depth) & near)


def y_bifurcation_fixture(trunk_radius: float = 5.0, branch_radius: float = 3.5,
                          trunk_length: float = 30.0, branch_length: float = 35.0,
                          half_angle_deg: float = 35.0, spacing: float = 1.4,
                          goal_depth: float = 4.0) -> Fixture:
    """Trunk along +z splitting into two branches in the x-z plane."""
    a = math.radians(half_angle_deg)
    root = np.zeros(3)
    left = branch_length * np.array([-math.sin(a), 0.0, math.cos(a)])
    right = branch_length * np.array([math.sin(a), 0.0, math.cos(a)])
    base = np.array([0.0, 0.0, -trunk_length])
    segs = [[(base, root, trunk_radius)], [(root, left, branch_radius)],
            [(root, right, branch_radius)]]
    verts, faces = _vessel_tree(segs, spacing, blend=2.0)
    reach_t, reach_b = 3.0 * trunk_radius, 3.0 * branch_radius
    cuts = [(base, (0, 0, -1), reach_t), (left, left / branch_length, reach_b),
            (right, right / branch_length, reach_b)]
    mesh = _cut_open(verts, faces, cuts)
    goals = {
        name: GoalRegion(_branch_goal(mesh, end, end / branch_length, goal_depth,
                                      branch_radius))
        for name, end in (("right", right), ("left", left))
    }
    inlet = InletDisk(base + [0.0, 0.0, 2.0], 0.5 * trunk_radius, [0.0, 0.0, 1.0],
                      tilt_deg=10.0)
    return Fixture("y_bifurcation", mesh, goals, inlet)


def aortic_arch_fixture(arch_radius: float = 25.0, vessel_radius: float = 6.0,
                        stub_radius: float = 3.0, stub_length: float = 18.0,
                        descending_length: float = 25.0, ascending_length: float = 15.0,
                        spacing: float = 1.6, goal_depth: float = 4.0,
                        n_arc: int = 24) -> Fixture:
    """Curved arch in the x-z plane with three branch stubs on top.

    The descending limb (x > 0) carries the inlet; stubs leave the arch at
    60, 90 and 120 degrees and are labelled LSA, LCCA and BCA in the order a
    wire coming up the descending aorta meets them.
    """
    arc = [arch_radius * np.array([math.cos(t), 0.0, math.sin(t)])
           for t in np.linspace(0.0, math.pi, n_arc + 1)]
    desc_end = arc[0] + [0.0, 0.0, -descending_length]
    asc_end = arc[-1] + [0.0, 0.0, -ascending_length]
    aorta = [(arc[i], arc[i + 1], vessel_radius) for i in range(n_arc)]
    aorta += [(desc_end, arc[0], vessel_radius), (arc[-1], asc_end, vessel_radius)]
    segs = [aorta]
    stubs = {}
    for name, deg in (("LSA", 60.0), ("LCCA", 90.0), ("BCA", 120.0)):
        t = math.radians(deg)
        start = arch_radius * np.array([math.cos(t), 0.0, math.sin(t)])
        end = start + [0.0, 0.0, vessel_radius + stub_length]
        stubs[name] = end
        segs.append([(start, end, stub_radius)])
    verts, faces = _vessel_tree(segs, spacing, blend=2.0)
    reach_v, reach_s = 3.0 * vessel_radius, 3.0 * stub_radius
    cuts = [(desc_end, (0, 0, -1), reach_v), (asc_end, (0, 0, -1), reach_v)]
    cuts += [(end, (0, 0, 1), reach_s) for end in stubs.values()]
    mesh = _cut_open(verts, faces, cuts)
    goals = {name: GoalRegion(_branch_goal(mesh, stubs[name], (0, 0, 1), goal_depth,
                                           stub_radius))
             for name in ("LCCA", "BCA", "LSA")}
    # steep enough that the first wall contact stays inside the descending limb
    inlet = InletDisk(desc_end + [0.0, 0.0, 2.0], 0.5 * vessel_radius, [0.0, 0.0, 1.0],
                      tilt_deg=20.0)
    return Fixture("aortic_arch", mesh, goals, inlet)


FIXTURES = {
    "straight_tube": straight_tube_fixture,
    "y_bifurcation": y_bifurcation_fixture,
    "aortic_arch": aortic_arch_fixture,
    "timing_tube": timing_fixture,
}


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
