"""Geometric failure bound of the angled-catheter launch and tool selection."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FailureModelWarning(UserWarning):
    """Query lies where the straight-cylinder branch model is doubtful."""


@dataclass(frozen=True)
class FailureQuery:
    """Branch radius R and bent tip length L in mm; angles in radians."""

    branch_radius: float
    tip_length: float
    takeoff_angle: float
    bend_angle: float

    def __post_init__(self):
        if not self.branch_radius > 0:
            raise ValueError("branch_radius must be positive")
        if not self.tip_length > 0:
            raise ValueError("tip_length must be positive")
        if not 0.0 <= self.takeoff_angle <= math.pi:
            raise ValueError("takeoff_angle must lie in [0, pi]")

    @property
    def misalignment(self) -> float:
        return abs(self.takeoff_angle - self.bend_angle)


@dataclass(frozen=True)
class Tool:
    name: str
    bend_angle: float
    tip_length: float

    def __post_init__(self):
        if not 0.0 < self.bend_angle < math.pi:
            raise ValueError(f"tool {self.name!r}: bend angle must lie in (0, pi)")
        if not self.tip_length > 0:
            raise ValueError(f"tool {self.name!r}: tip length must be positive")


ToolInventory = list


def lateral_deviation(q: FailureQuery) -> float:
    """Sideways miss of the tip at the branch: L * sin|alpha - theta|."""
    if q.misalignment > math.pi / 2:
        warnings.warn(
            f"misalignment {math.degrees(q.misalignment):.1f} deg exceeds 90 deg; "
            "the cylinder model is unreliable there", FailureModelWarning, stacklevel=2)
    return q.tip_length * math.sin(q.misalignment)


def launch_fails(q: FailureQuery) -> bool:
    return q.branch_radius < lateral_deviation(q)


def select_tool(inventory, takeoff_angle: float, branch_radius: float):
    """Pick the tool whose bend angle best matches the takeoff angle.

    Ties go to the shorter tip, then to the name. Returns
    ``(tool, predicted deviation, feasible)``.
    """
    if not inventory:
        raise ValueError("tool inventory is empty")
    best = min(inventory, key=lambda t: (abs(takeoff_angle - t.bend_angle), t.tip_length, t.name))
    q = FailureQuery(branch_radius, best.tip_length, takeoff_angle, best.bend_angle)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FailureModelWarning)
        dev = lateral_deviation(q)
    return best, dev, not branch_radius < dev


def simulate_launch(q: FailureQuery, samples: int = 64, roll: float = 0.0) -> bool:
    """Brute-force check of a launch into an ideal cylindrical branch.

    The branch leaves the bifurcation apex at the takeoff angle from the
    parent axis; the bent tip leaves the same apex at the bend angle, in a
    plane rotated by ``roll`` about the parent axis. Failure means some point
    of the tip segment lies farther than R from the branch centerline.
    """
    parent = np.array([0.0, 0.0, 1.0])
    c, s = math.cos(roll), math.sin(roll)
    side = np.array([c, s, 0.0])
    branch = math.cos(q.takeoff_angle) * parent + math.sin(q.takeoff_angle) * side
    tip_dir = math.cos(q.bend_angle) * parent + math.sin(q.bend_angle) * side
    pts = np.linspace(0.0, q.tip_length, samples)[:, None] * tip_dir
    along = pts @ branch
    radial = np.linalg.norm(pts - along[:, None] * branch, axis=1)
    return bool(radial.max() > q.branch_radius)


def load_inventory(path) -> list:
    """Read a JSON array of {name, theta_deg, length_mm}."""
    data = json.loads(Path(path).read_text())
    tools = [Tool(str(d["name"]), math.radians(float(d["theta_deg"])), float(d["length_mm"]))
             for d in data]
    if not tools:
        raise ValueError(f"{path}: inventory is empty")
    return tools


def default_inventory(tip_length: float = 5.0) -> list:
    """Straight to recurved shapes spanning the usual commercial range."""
    return [Tool(f"angle-{d}", math.radians(d), tip_length) for d in (15, 30, 45, 90, 120)]


def failure_grid(radii, lengths, alphas, thetas):
    """Rows of (alpha, theta, L, R, d_dev, fails) over the full grid; angles in radians."""
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FailureModelWarning)
        for alpha, theta, length, radius in itertools.product(alphas, thetas, lengths, radii):
            q = FailureQuery(radius, length, alpha, theta)
            dev = lateral_deviation(q)
            rows.append((alpha, theta, length, radius, dev, radius < dev))
    return rows


def grid_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha_deg", "theta_deg", "L_mm", "R_mm", "d_dev_mm", "fails"])
    for alpha, theta, length, radius, dev, fails in rows:
        w.writerow([f"{math.degrees(alpha):.6f}", f"{math.degrees(theta):.6f}",
                    f"{length:.6f}", f"{radius:.6f}", f"{dev:.9f}", int(fails)])
    return buf.getvalue()
