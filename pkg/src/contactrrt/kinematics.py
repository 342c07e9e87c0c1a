"""Inverse kinematics from planned contact nodes to tool commands, plus replay.

Rotations use the two-argument arctangent ``atan2(t . v, |t x v|)``, so a
tangent parallel to the reference vector gives +pi/2 instead of a division
by zero. The sign follows ``t . v``: positive when the tip tangent leans
towards the lumen-side normal (or towards the target for the catheter).

Besides insertion and rotation each command carries the executed heading
and the primitive, which is what the idealised replay needs to re-trace a
path without a full elastic tool model.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (EPS_PLANE, DEFAULT_MIN_T, Ray, SurfacePoint, TriangleMesh,
                       closest_point, inside_anatomy, ray_intersect)
from .planner import Primitive

REPLAY_TOL = 1e-6


class Tool(str, Enum):
    GUIDEWIRE = "guidewire"
    CATHETER = "catheter"


class KinematicsError(Exception):
    def __init__(self, message: str, node: int | None = None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


class WallPenetrationError(Exception):
    def __init__(self, segment: int, message: str):
        super().__init__(f"segment {segment}: {message}")
        self.segment = segment


@dataclass(frozen=True)
class MotionCommand:
    tool: Tool
    insertion: float
    rotation: float
    source_node: int
    heading: tuple = (0.0, 0.0, 0.0)
    primitive: Primitive = Primitive.GLIDE

    def __post_init__(self):
        if self.insertion < 0:
            raise ValueError("insertion must be non-negative")
        if not -math.pi < self.rotation <= math.pi:
            raise ValueError("rotation must lie in (-pi, pi]")
        object.__setattr__(self, "tool", Tool(self.tool))
        object.__setattr__(self, "primitive", Primitive(self.primitive))
        object.__setattr__(self, "heading", tuple(float(x) for x in self.heading))


@dataclass
class ToolState:
    wire_tangent: np.ndarray
    catheter_tangent: np.ndarray
    wire_tip: np.ndarray
    catheter_tip: np.ndarray

    @classmethod
    def at(cls, position, tangent) -> "ToolState":
        t = np.asarray(tangent, dtype=float)
        t = t / np.linalg.norm(t)
        p = np.asarray(position, dtype=float)
        return cls(t.copy(), t.copy(), p.copy(), p.copy())

    def copy(self) -> "ToolState":
        return ToolState(self.wire_tangent.copy(), self.catheter_tangent.copy(),
                         self.wire_tip.copy(), self.catheter_tip.copy())


def axial_rotation(tangent, reference) -> float:
    t = np.asarray(tangent, dtype=float)
    v = np.asarray(reference, dtype=float)
    return math.atan2(float(t @ v), float(np.linalg.norm(np.cross(t, v))))


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros(3)


def ik_wire_step(q_near: SurfacePoint, q_new: SurfacePoint, n_new, state: ToolState,
                 source_node: int = -1, primitive: Primitive = Primitive.GLIDE) -> MotionCommand:
    """Guidewire insertion/rotation for a glide or rebound edge; updates ``state``."""
    chord = q_new.position - q_near.position
    d = float(np.linalg.norm(chord))
    phi = axial_rotation(state.wire_tangent, n_new)
    heading = _unit(chord)
    if d > 0:
        state.wire_tangent = heading
    state.wire_tip = q_new.position.copy()
    return MotionCommand(Tool.GUIDEWIRE, d, phi, source_node, heading, primitive)


def ik_launch_step(q_near: SurfacePoint, q_tip, q_sample, state: ToolState, n_land,
                   source_node: int = -1):
    """Catheter then guidewire command for an angled-catheter launch; updates ``state``."""
    q_tip = np.asarray(q_tip, dtype=float)
    target = q_sample.position if isinstance(q_sample, SurfacePoint) else np.asarray(q_sample, float)
    advance = q_tip - q_near.position
    d_c = float(np.linalg.norm(advance))
    if d_c < 1e-12:
        raise KinematicsError("catheter tip coincides with q_near", source_node)
    s = target - q_tip
    d_g = float(np.linalg.norm(s))
    if d_g < 1e-9:
        raise KinematicsError("degenerate launch: sample coincides with catheter tip", source_node)
    phi_c = axial_rotation(state.catheter_tangent, s)
    cat = MotionCommand(Tool.CATHETER, d_c, phi_c, source_node, advance / d_c, Primitive.LAUNCH)
    state.catheter_tangent = advance / d_c
    state.catheter_tip = q_tip.copy()
    phi_g = axial_rotation(state.wire_tangent, n_land)
    wire = MotionCommand(Tool.GUIDEWIRE, d_g, phi_g, source_node, s / d_g, Primitive.LAUNCH)
    state.wire_tangent = s / d_g
    state.wire_tip = target.copy()
    return cat, wire


def initial_state(path_or_start, heading=None) -> ToolState:
    """Tool state at the root; the tangent defaults to the first executed direction."""
    if isinstance(path_or_start, list):
        root = path_or_start[0].point.position
        if heading is None:
            heading = _first_heading(path_or_start)
    else:
        root = np.asarray(path_or_start, dtype=float)
    if heading is None or np.linalg.norm(heading) == 0:
        heading = (0.0, 0.0, 1.0)
    return ToolState.at(root, heading)


def _first_heading(path):
    if len(path) < 2:
        return None
    nxt = path[1]
    target = nxt.tip_point if nxt.primitive is Primitive.LAUNCH else nxt.point.position
    return _unit(target - path[0].point.position)


def compile_path(path: list, mesh: TriangleMesh, state: ToolState | None = None) -> list:
    """Turn a root-first node list into guidewire/catheter commands.

    Launch edges use the landing point as the wire target: the wire stops at
    the first wall contact on its way to the sample.
    """
    if not path:
        return []
    state = (state or initial_state(path)).copy()
    commands = []
    for i in range(1, len(path)):
        prev, node = path[i - 1], path[i]
        n_new = mesh.face_normals[node.point.face_id]
        if node.primitive is Primitive.LAUNCH:
            if node.tip_point is None:
                raise KinematicsError("launch node without tip point", i)
            commands.extend(ik_launch_step(prev.point, node.tip_point, node.point, state,
                                           n_new, source_node=i))
        elif node.primitive in (Primitive.GLIDE, Primitive.REBOUND):
            commands.append(ik_wire_step(prev.point, node.point, n_new, state,
                                         source_node=i, primitive=node.primitive))
        else:
            raise KinematicsError(f"unexpected primitive {node.primitive.value}", i)
    return commands


@dataclass
class ReplayResult:
    trajectory: list = field(default_factory=list)
    contacts: list = field(default_factory=list)


def replay(commands: list, start: SurfacePoint, mesh: TriangleMesh,
           state: ToolState | None = None, min_t: float = DEFAULT_MIN_T,
           tol: float = REPLAY_TOL, check_rotations: bool = True) -> ReplayResult:
    """Execute commands with idealised straight advances and ray-cast re-contact.

    ``contacts`` starts with ``start`` and gains one wall contact per executed
    edge; ``trajectory`` additionally contains catheter tip points. Raises
    WallPenetrationError when a segment would leave the lumen.
    """
    if state is None:
        first = commands[0].heading if commands else None
        state = initial_state(start.position, first)
    state = state.copy()
    pos = start.position.copy()
    out = ReplayResult([pos.copy()], [start])
    i = 0
    while i < len(commands):
        cmd = commands[i]
        h = np.asarray(cmd.heading, dtype=float)
        if cmd.tool is Tool.CATHETER:
            tip = pos + cmd.insertion * h
            if not inside_anatomy(mesh, tip):
                raise WallPenetrationError(i, "catheter tip leaves the lumen")
            if check_rotations:
                if i + 1 >= len(commands):
                    raise WallPenetrationError(i, "catheter advance without wire command")
                _check_rotation(i, cmd, state.catheter_tangent, commands[i + 1].heading, tol)
            state.catheter_tangent = h
            state.catheter_tip = tip
            out.trajectory.append(tip.copy())
            pos = tip
            i += 1
            continue
        if cmd.primitive is Primitive.GLIDE:
            end = pos + cmd.insertion * h
            contact, dist = closest_point(mesh, end)
            if dist > EPS_PLANE and not inside_anatomy(mesh, end):
                raise WallPenetrationError(i, "glide chord leaves the lumen")
        else:
            hit = ray_intersect(mesh, Ray(pos, h), min_t=min_t)
            if hit is None:
                raise WallPenetrationError(i, "wire leaves the mesh through an open end")
            contact, t_hit = hit
            if cmd.insertion > t_hit + tol:
                raise WallPenetrationError(
                    i, f"insertion {cmd.insertion:.6f} mm exceeds distance to wall {t_hit:.6f} mm")
            if cmd.insertion < t_hit - tol:
                raise WallPenetrationError(i, "wire stops in free space before re-contact")
        if check_rotations:
            _check_rotation(i, cmd, state.wire_tangent, mesh.face_normals[contact.face_id], tol)
        if cmd.insertion > 0:
            state.wire_tangent = h
        state.wire_tip = contact.position.copy()
        pos = contact.position.copy()
        out.trajectory.append(pos.copy())
        out.contacts.append(contact)
        i += 1
    return out


def _check_rotation(i, cmd, tangent, reference, tol):
    expected = axial_rotation(tangent, reference)
    if abs(expected - cmd.rotation) > max(tol, 1e-6):
        raise WallPenetrationError(
            i, f"rotation {cmd.rotation:.6f} rad inconsistent with tool state ({expected:.6f})")


# --- serialisation -----------------------------------------------------------

CSV_FIELDS = ["tool", "insertion_mm", "rotation_rad", "source_node", "primitive",
              "heading_x", "heading_y", "heading_z"]


def commands_to_csv(commands: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for c in commands:
        w.writerow([c.tool.value, repr(c.insertion), repr(c.rotation), c.source_node,
                    c.primitive.value, *(repr(x) for x in c.heading)])
    return buf.getvalue()


def commands_from_csv(text: str) -> list:
    rows = csv.DictReader(io.StringIO(text))
    missing = set(CSV_FIELDS[:4]) - set(rows.fieldnames or [])
    if missing:
        raise ValueError(f"command CSV lacks columns {sorted(missing)}")
    out = []
    for r in rows:
        heading = tuple(float(r.get(k) or 0.0) for k in ("heading_x", "heading_y", "heading_z"))
        out.append(MotionCommand(r["tool"], float(r["insertion_mm"]), float(r["rotation_rad"]),
                                 int(r["source_node"]), heading,
                                 r.get("primitive") or Primitive.GLIDE.value))
    return out


def commands_to_json(commands: list) -> str:
    return json.dumps([{"tool": c.tool.value, "insertion_mm": c.insertion,
                        "rotation_rad": c.rotation, "source_node": c.source_node,
                        "primitive": c.primitive.value, "heading": list(c.heading)}
                       for c in commands], indent=2)


def polyline_to_text(points) -> str:
    return "".join(" ".join(repr(float(x)) for x in p) + "\n"
                   for p in np.asarray(points, dtype=float))

