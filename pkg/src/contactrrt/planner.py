"""Contact-aware RRT over vessel-wall contact points.

The tree grows on the mesh surface. Each extension picks one of three
motion primitives from the local shape of the wall: a wall-guided glide
where neighbouring faces fold towards the direction of travel, otherwise an
angled-catheter launch, falling back to a free-space rebound across the
lumen.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import (DEFAULT_MIN_T, BoundaryEdgeError, GoalRegion, Ray, SurfacePoint,
                       TriangleMesh, adjacent_face_in_direction, closest_point, inside_anatomy,
                       ray_intersect, sample_point_on_anatomy)

logger = logging.getLogger(__name__)

DEGENERATE = 1e-9
KAPPA_ZERO = 1e-12


class Primitive(str, Enum):
    ROOT = "root"
    GLIDE = "glide"
    REBOUND = "rebound"
    LAUNCH = "launch"


class Status(str, Enum):
    REACHED = "reached"
    BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass(frozen=True)
class PlannerConfig:
    """Planner parameters; lengths in mm, angles in radians.

    ``bend_threshold`` is a cosine: an extension is allowed when the cosine
    between the incoming direction and the new steer direction is at least
    this value.
    """

    step_size: float = 2.0
    bend_threshold: float = 0.5
    catheter_angle: float = math.radians(45.0)
    max_iterations: int = 10_000
    seed: int = 0
    tip_scan: float = 20.0
    goal: GoalRegion | None = None
    angle_range: tuple = (math.radians(30.0), math.radians(90.0))
    min_t: float = DEFAULT_MIN_T

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not -1.0 <= self.bend_threshold <= 1.0:
            raise ValueError("bend_threshold is a cosine and must lie in [-1, 1]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        lo, hi = self.angle_range
        if not lo - 1e-12 <= self.catheter_angle <= hi + 1e-12:
            raise ValueError(
                f"catheter_angle {math.degrees(self.catheter_angle):.1f} deg outside "
                f"[{math.degrees(lo):.1f}, {math.degrees(hi):.1f}]")
        if not self.tip_scan > self.min_t:
            raise ValueError("tip_scan must exceed min_t")

    def to_dict(self) -> dict:
        return {
            "step_size": self.step_size,
            "bend_threshold": self.bend_threshold,
            "catheter_angle": self.catheter_angle,
            "max_iterations": self.max_iterations,
            "seed": self.seed,
            "tip_scan": self.tip_scan,
            "goal": None if self.goal is None else sorted(self.goal.face_ids),
            "angle_range": list(self.angle_range),
            "min_t": self.min_t,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerConfig":
        data = dict(data)
        if data.get("goal") is not None:
            data["goal"] = GoalRegion(data["goal"])
        if "angle_range" in data:
            data["angle_range"] = tuple(data["angle_range"])
        return cls(**data)


@dataclass(frozen=True)
class TreeNode:
    point: SurfacePoint
    parent: int | None
    primitive: Primitive
    tip_point: np.ndarray | None = None
    steer: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_dict(self) -> dict:
        d = {
            "position": self.point.position.tolist(),
            "face_id": self.point.face_id,
            "parent": self.parent,
            "primitive": self.primitive.value,
            "steer": np.asarray(self.steer).tolist(),
        }
        if self.tip_point is not None:
            d["tip_point"] = self.tip_point.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        tip = d.get("tip_point")
        return cls(SurfacePoint(d["position"], d["face_id"]), d.get("parent"),
                   Primitive(d["primitive"]), None if tip is None else np.asarray(tip, float),
                   np.asarray(d.get("steer", (0.0, 0.0, 0.0)), float))


@dataclass(frozen=True)
class ConcavityResult:
    kappa: float
    adjacent_face: int | None


class Tree:
    """Growing set of nodes with a contiguous position array for nearest queries."""

    def __init__(self, root: SurfacePoint, capacity: int = 1024):
        self.nodes: list[TreeNode] = []
        self._pos = np.empty((max(capacity, 1), 3))
        self.add(TreeNode(root, None, Primitive.ROOT))

    def add(self, node: TreeNode) -> int:
        n = len(self.nodes)
        if node.parent is not None and not 0 <= node.parent < n:
            raise ValueError(f"parent {node.parent} is not in the tree")
        if n == len(self._pos):
            self._pos = np.concatenate([self._pos, np.empty_like(self._pos)])
        self._pos[n] = node.point.position
        self.nodes.append(node)
        return n

    @property
    def positions(self) -> np.ndarray:
        return self._pos[:len(self.nodes)]

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, i: int) -> TreeNode:
        return self.nodes[i]


def find_nearest_node(tree: Tree, q_sample: SurfacePoint) -> int:
    """Index of the node closest to the sample (lowest index on ties)."""
    diff = tree.positions - q_sample.position
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def compute_steer_vector(q_near: SurfacePoint, q_sample: SurfacePoint, n_near) -> np.ndarray:
    """Displacement to the sample projected onto the tangent plane at ``q_near``."""
    d = q_sample.position - q_near.position
    return d - (d @ n_near) * n_near


def compute_alignment(u_steer, q_near, q_previous=None) -> float:
    """Cosine between the steer direction and the incoming edge; +1 at the root."""
    if q_previous is None:
        return 1.0
    incoming = np.asarray(q_near, dtype=float) - np.asarray(q_previous, dtype=float)
    ni = math.sqrt(incoming @ incoming)
    nu = math.sqrt(u_steer @ u_steer)
    if ni < DEGENERATE or nu < DEGENERATE:
        return 1.0
    return float(np.clip((u_steer @ incoming) / (ni * nu), -1.0, 1.0))


def check_concavity(mesh: TriangleMesh, q_near: SurfacePoint, u_steer) -> ConcavityResult:
    """Signed fold of the wall ahead: u . (n_near x n_adj).

    An open boundary ahead is treated as a flat continuation.
    """
    try:
        adj = adjacent_face_in_direction(mesh, q_near, u_steer)
    except BoundaryEdgeError as exc:
        logger.warning("concavity check hit an open boundary (%s); using kappa = 0", exc)
        return ConcavityResult(0.0, None)
    n_near = mesh.face_normals[q_near.face_id]
    kappa = float(u_steer @ np.cross(n_near, mesh.face_normals[adj]))
    if abs(kappa) < KAPPA_ZERO:
        kappa = 0.0
    return ConcavityResult(kappa, adj)


def extend_glide(mesh: TriangleMesh, q_near: SurfacePoint, u_steer, step: float):
    """Slide ``step`` along the wall; None if the projection jumps farther than ``step``."""
    if step == 0.0:
        return q_near
    target = q_near.position + step * np.asarray(u_steer)
    q_new, dist = closest_point(mesh, target)
    if dist > step:
        return None
    return q_new


def tip_angle(q_near, u_steer, q_sample, lam: float) -> float:
    """Angle at q_near + lam * u between the sample and q_near."""
    tip = np.asarray(q_near) + lam * np.asarray(u_steer)
    a = np.asarray(q_sample) - tip
    b = np.asarray(q_near) - tip
    return math.atan2(np.linalg.norm(np.cross(a, b)), a @ b)


def solve_tip_distance(q_near, u_steer, q_sample, theta: float, lam_min: float,
                       lam_max: float, tol: float = 1e-6) -> float | None:
    """Smallest lam in (lam_min, lam_max] putting the sample at ``theta`` from the tip.

    The tip angle decreases monotonically with lam, so the root is bracketed
    and refined by bisection. Returns None when no lam in range works.
    """
    s = np.asarray(q_sample, dtype=float) - np.asarray(q_near, dtype=float)
    along = float(s @ u_steer)
    off = float(np.linalg.norm(s - along * np.asarray(u_steer)))

    def angle(lam):
        return math.atan2(off, lam - along)

    lo, hi = lam_min, lam_max
    if angle(lo) < theta or angle(hi) > theta:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if angle(mid) > theta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    lam = hi
    if lam <= lam_min or abs(angle(lam) - theta) > tol:
        return None
    return lam


def extend_launch(mesh: TriangleMesh, q_near: SurfacePoint, u_steer, q_sample: SurfacePoint,
                  theta: float, lam_max: float, min_t: float = DEFAULT_MIN_T):
    """Angled-catheter launch.

    Returns ``(q_tip, q_new)`` or None when the angle constraint has no
    solution, the tip leaves the lumen or the wire ray hits nothing.
    """
    u = np.asarray(u_steer, dtype=float)
    lam = solve_tip_distance(q_near.position, u, q_sample.position, theta, min_t, lam_max)
    if lam is None:
        return None
    q_tip = q_near.position + lam * u
    if not inside_anatomy(mesh, q_tip):
        return None
    d = q_sample.position - q_tip
    nd = np.linalg.norm(d)
    if nd < DEGENERATE:
        return None
    hit = ray_intersect(mesh, Ray(q_tip, d / nd), min_t=min_t)
    if hit is None:
        return None
    return q_tip, hit[0]


def extend_rebound(mesh: TriangleMesh, q_near: SurfacePoint, u_steer,
                   min_t: float = DEFAULT_MIN_T):
    """Free flight from ``q_near`` along ``u_steer`` to the next wall contact."""
    hit = ray_intersect(mesh, Ray(q_near.position, u_steer), min_t=min_t)
    return None if hit is None else hit[0]


@dataclass
class PlanResult:
    status: Status
    path: list
    iterations_used: int
    tree_size: int
    wall_time: float
    tree: Tree | None = field(default=None, repr=False, compare=False)

    @property
    def reached(self) -> bool:
        return self.status is Status.REACHED

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "status": self.status.value,
            "iterations": self.iterations_used,
            "tree_size": self.tree_size,
            "path": [n.to_dict() for n in self.path],
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


class ContactRRT:
    """Incremental planner state; ``plan`` drives it to completion.

    Kept as an object so benchmarks can step it and time checkpoints.
    """

    def __init__(self, mesh: TriangleMesh, q_init: SurfacePoint, config: PlannerConfig):
        if config.goal is not None:
            config.goal.validate(mesh)
        self.mesh = mesh
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.tree = Tree(q_init, capacity=min(config.max_iterations + 1, 65536))
        self.iterations = 0
        self.goal_node: int | None = None
        if config.goal is not None and q_init.face_id in config.goal:
            self.goal_node = 0

    def step(self) -> int | None:
        """Run one iteration; return the id of the inserted node, if any."""
        self.iterations += 1
        cfg, mesh, tree = self.config, self.mesh, self.tree
        q_sample = sample_point_on_anatomy(mesh, self.rng)
        near_id = find_nearest_node(tree, q_sample)
        near = tree[near_id]
        q_near = near.point
        if np.linalg.norm(q_sample.position - q_near.position) < DEGENERATE:
            return None
        n_near = mesh.face_normals[q_near.face_id]
        steer = compute_steer_vector(q_near, q_sample, n_near)
        norm = math.sqrt(steer @ steer)
        if norm < DEGENERATE:
            return None
        u = steer / norm
        previous = None if near.parent is None else tree[near.parent].point.position
        if compute_alignment(u, q_near.position, previous) < cfg.bend_threshold:
            return None

        tip = None
        if check_concavity(mesh, q_near, u).kappa >= 0.0:
            primitive = Primitive.GLIDE
            q_new = extend_glide(mesh, q_near, u, cfg.step_size)
        else:
            launched = extend_launch(mesh, q_near, u, q_sample, cfg.catheter_angle,
                                     cfg.tip_scan, cfg.min_t)
            if launched is not None:
                primitive = Primitive.LAUNCH
                tip, q_new = launched
            else:
                primitive = Primitive.REBOUND
                q_new = extend_rebound(mesh, q_near, u, cfg.min_t)
        if q_new is None or np.linalg.norm(q_new.position - q_near.position) < DEGENERATE:
            return None
        node_id = tree.add(TreeNode(q_new, near_id, primitive, tip, u))
        if cfg.goal is not None and q_new.face_id in cfg.goal and self.goal_node is None:
            self.goal_node = node_id
        return node_id

    def run(self) -> PlanResult:
        start = time.perf_counter()
        while self.goal_node is None and self.iterations < self.config.max_iterations:
            self.step()
        elapsed = time.perf_counter() - start
        if self.goal_node is not None:
            return PlanResult(Status.REACHED, extract_path(self.tree, self.goal_node),
                              self.iterations, len(self.tree), elapsed, self.tree)
        return PlanResult(Status.BUDGET_EXHAUSTED, [], self.iterations, len(self.tree),
                          elapsed, self.tree)


def plan(mesh: TriangleMesh, q_init: SurfacePoint, config: PlannerConfig) -> PlanResult:
    """Grow the tree until a node lands in the goal region or the budget runs out."""
    return ContactRRT(mesh, q_init, config).run()


def extract_path(tree: Tree, node_id: int) -> list:
    """Root-first list of nodes ending at ``node_id``."""
    path = []
    i = node_id
    while i is not None:
        path.append(tree[i])
        i = tree[i].parent
    path.reverse()
    return path


def with_seed(config: PlannerConfig, seed: int) -> PlannerConfig:
    return replace(config, seed=seed)
