"""Repeated seeded planning trials, success curves and timing."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np

from .geometry import NoContactError, SurfacePoint, TriangleMesh, resolve_start
from .planner import ContactRRT, PlannerConfig, Status

START_FAILED = "start-failed"
DEFAULT_GRID = tuple(range(1000, 60_001, 1000))


@dataclass
class TrialReport:
    seed: int
    start: SurfacePoint | None
    target: str
    status: str
    iterations_to_success: int | None
    per_iteration_time: float
    iterations_used: int = 0
    tree_size: int = 0
    message: str = ""

    def __post_init__(self):
        if (self.iterations_to_success is not None) != (self.status == Status.REACHED.value):
            raise ValueError("iterations_to_success must be set exactly when the goal was reached")

    @property
    def reached(self) -> bool:
        return self.status == Status.REACHED.value

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "seed": self.seed,
            "target": self.target,
            "status": self.status,
            "start": None if self.start is None else {
                "position": self.start.position.tolist(), "face_id": self.start.face_id},
            "iterations_to_success": self.iterations_to_success,
            "iterations_used": self.iterations_used,
            "tree_size": self.tree_size,
        }
        if self.message:
            d["message"] = self.message
        if include_timing:
            d["per_iteration_time"] = self.per_iteration_time
        return d


@dataclass
class SuccessCurve:
    grid: np.ndarray
    success_fraction: np.ndarray
    wilson_low: np.ndarray
    wilson_high: np.ndarray
    n: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "fraction", "wilson_low", "wilson_high"])
        for row in zip(self.grid, self.success_fraction, self.wilson_low, self.wilson_high):
            w.writerow([int(row[0]), f"{row[1]:.6f}", f"{row[2]:.6f}", f"{row[3]:.6f}"])
        return buf.getvalue()


def wilson_interval(successes: int, n: int, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0 or not 0 <= successes <= n:
        raise ValueError("need 0 <= successes <= n and n > 0")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / n
    z2n = z * z / n
    center = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    low, high = max(0.0, center - half), min(1.0, center + half)
    # exact endpoints at the extremes; rounding would otherwise leave 1 - 1e-17
    if successes == 0:
        low = 0.0
    if successes == n:
        high = 1.0
    return low, high


def success_curve(reports, grid=DEFAULT_GRID, confidence: float = 0.95,
                  exclude_start_failures: bool = False) -> SuccessCurve:
    """Fraction of trials that reached the goal within each iteration budget."""
    grid = np.asarray(grid, dtype=np.int64)
    if len(grid) and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    trials = [r for r in reports if not (exclude_start_failures and r.status == START_FAILED)]
    n = len(trials)
    if n == 0:
        raise ValueError("no trials to summarise")
    hits = np.sort([r.iterations_to_success for r in trials if r.reached])
    counts = np.searchsorted(hits, grid, side="right")
    bounds = [wilson_interval(int(k), n, confidence) for k in counts]
    return SuccessCurve(grid, counts / n, np.array([b[0] for b in bounds]),
                        np.array([b[1] for b in bounds]), n)


def _run_one(args) -> TrialReport:
    mesh, inlet, config, seed, target = args
    rng = np.random.default_rng([seed, 0x1A7E])
    point, axis = inlet.sample(rng)
    try:
        start = resolve_start(mesh, point, axis)
    except NoContactError as exc:
        return TrialReport(seed, None, target, START_FAILED, None, 0.0, message=str(exc))
    planner = ContactRRT(mesh, start, replace(config, seed=seed))
    result = planner.run()
    per_iter = result.wall_time / max(result.iterations_used, 1)
    its = result.iterations_used if result.reached else None
    return TrialReport(seed, start, target, result.status.value, its, per_iter,
                       result.iterations_used, result.tree_size)


def run_trials(mesh: TriangleMesh, entry_sampler, config: PlannerConfig, n_trials: int,
               base_seed: int | None = None, target: str = "goal",
               workers: int = 1) -> list:
    """Independent plans from random inlet starts; trial i uses seed base_seed + i.

    ``entry_sampler`` needs a ``sample(rng) -> (point, axis)`` method (see
    :class:`contactrrt.fixtures.InletDisk`). Reports come back sorted by seed.
    """
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    base = config.seed if base_seed is None else base_seed
    jobs = [(mesh, entry_sampler, config, base + i, target) for i in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    return sorted(reports, key=lambda r: r.seed)


@dataclass
class TimingRow:
    iterations: int
    cumulative_seconds: float
    mean_iteration_seconds: float
    tree_size: int


def timing_profile(mesh: TriangleMesh, q_init: SurfacePoint, config: PlannerConfig,
                   checkpoints) -> list:
    """Time one planner run (goal test disabled) at increasing iteration counts."""
    checkpoints = [int(c) for c in checkpoints]
    if not checkpoints or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be a non-empty increasing sequence")
    planner = ContactRRT(mesh, q_init,
                         replace(config, goal=None, max_iterations=checkpoints[-1]))
    rows = []
    elapsed = 0.0
    for target in checkpoints:
        t0 = time.perf_counter()
        while planner.iterations < target:
            planner.step()
        elapsed += time.perf_counter() - t0
        rows.append(TimingRow(target, elapsed, elapsed / target, len(planner.tree)))
    return rows


def timing_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iterations", "cumulative_s", "mean_per_iteration_s", "tree_size"])
    for r in rows:
        w.writerow([r.iterations, f"{r.cumulative_seconds:.6f}",
                    f"{r.mean_iteration_seconds:.9f}", r.tree_size])
    return buf.getvalue()


def reports_to_json(reports, include_timing: bool = False) -> str:
    return json.dumps([r.to_dict(include_timing) for r in reports], indent=2)
