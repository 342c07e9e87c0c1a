"""Command-line entry points: plan, bench, analyze-failure, replay.

Settings come from an optional YAML run file; command-line flags override
it. Exit codes: 0 success, 1 error, 2 planner budget exhausted.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bench, failure, fixtures, kinematics
from .geometry import GoalRegion, MeshError, NoContactError, SurfacePoint, load_mesh
from .geometry import project_to_closest_surface, resolve_start
from .planner import PlannerConfig, plan

logger = logging.getLogger("contactrrt")

OUT_ENV = "CONTACTRRT_OUT"
EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    mesh: str | None = None
    mesh_format: str | None = None
    scale: float = 1.0
    goal: str | list | None = None
    target: str | None = None
    planner: dict = field(default_factory=dict)
    start: dict | None = None
    inlet: dict | None = None
    out: str | None = None
    bvh: bool = False
    trials: int = 100
    grid: list | dict | None = None
    workers: int = 1
    timing: bool = False
    failure: dict = field(default_factory=dict)
    commands: str | None = None
    plan_file: str | None = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        if "format" in data:
            data["mesh_format"] = data.pop("format")
        if "plan" in data:
            data["plan_file"] = data.pop("plan")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        return cls(**data)

    def output_dir(self) -> Path:
        out = Path(self.out or os.environ.get(OUT_ENV) or "contactrrt-out")
        out.mkdir(parents=True, exist_ok=True)
        return out


# --- resolution helpers ------------------------------------------------------

def _load(cfg: RunConfig):
    """Return (mesh, fixture or None)."""
    if not cfg.mesh:
        raise ConfigError("no mesh given (use --mesh or 'mesh:' in the config)")
    if cfg.mesh.startswith("fixture:"):
        fx = fixtures.get_fixture(cfg.mesh.split(":", 1)[1])
        mesh = fx.mesh
    else:
        fx = None
        mesh = load_mesh(cfg.mesh, cfg.mesh_format, scale=cfg.scale)
    return mesh.with_bvh(cfg.bvh), fx


def load_goal_file(path, target: str | None = None) -> tuple:
    """Read a goal annotation: a JSON array of faces or a {name: [faces]} map."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, list):
        return GoalRegion(data), target or "goal"
    if isinstance(data, dict):
        named = {k: v for k, v in data.items() if isinstance(v, list)}
        if not named:
            raise ConfigError(f"{path}: no face lists found")
        name = target or next(iter(named))
        if name not in named:
            raise ConfigError(f"{path}: target {name!r} not in {sorted(named)}")
        return GoalRegion(named[name]), name
    raise ConfigError(f"{path}: goal file must hold a list or an object")


def _goal(cfg: RunConfig, fx) -> tuple:
    if isinstance(cfg.goal, list):
        return GoalRegion(cfg.goal), cfg.target or "goal"
    if cfg.goal:
        return load_goal_file(cfg.goal, cfg.target)
    if fx is not None:
        name = cfg.target or next(iter(fx.goals))
        if name not in fx.goals:
            raise ConfigError(f"fixture {fx.name} has no target {name!r}")
        return fx.goals[name], name
    raise ConfigError("no goal given (use --goal or 'goal:' in the config)")


def _planner_config(cfg: RunConfig, goal: GoalRegion) -> PlannerConfig:
    p = dict(cfg.planner)
    if "catheter_angle_deg" in p:
        p["catheter_angle"] = math.radians(p.pop("catheter_angle_deg"))
    if "angle_range_deg" in p:
        p["angle_range"] = tuple(math.radians(a) for a in p.pop("angle_range_deg"))
    if "bend_angle_deg" in p:
        p["bend_threshold"] = math.cos(math.radians(p.pop("bend_angle_deg")))
    try:
        return PlannerConfig(goal=goal, **p)
    except TypeError as exc:
        raise ConfigError(f"bad planner settings: {exc}") from None


def _inlet(cfg: RunConfig, fx):
    if cfg.inlet:
        return fixtures.InletDisk(**cfg.inlet)
    if fx is not None and fx.inlet is not None:
        return fx.inlet
    raise ConfigError("no inlet disk configured")


def _start(cfg: RunConfig, mesh, fx, seed: int) -> SurfacePoint:
    if cfg.start:
        if "axis" in cfg.start:
            return resolve_start(mesh, cfg.start["point"], cfg.start["axis"])
        return project_to_closest_surface(mesh, cfg.start["point"])
    inlet = _inlet(cfg, fx)
    point, axis = inlet.sample(np.random.default_rng([seed, 0x1A7E]))
    return resolve_start(mesh, point, axis)


def _grid(cfg: RunConfig, max_iterations: int):
    g = cfg.grid
    if g is None:
        step = max(1, max_iterations // 60) if max_iterations < 60_000 else 1000
        return list(range(step, max_iterations + 1, step))
    if isinstance(g, dict):
        return list(range(int(g.get("start", g["step"])), int(g["stop"]) + 1, int(g["step"])))
    return [int(x) for x in g]


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    logger.info("wrote %s", path)


# --- subcommands -------------------------------------------------------------

def cmd_plan(cfg: RunConfig) -> int:
    mesh, fx = _load(cfg)
    goal, name = _goal(cfg, fx)
    pc = _planner_config(cfg, goal)
    q_init = _start(cfg, mesh, fx, pc.seed)
    result = plan(mesh, q_init, pc)
    out = cfg.output_dir()
    doc = {"target": name, "config": pc.to_dict(), "start": {
        "position": q_init.position.tolist(), "face_id": q_init.face_id},
        "result": result.to_dict(include_timing=cfg.timing)}
    _write(out / "plan.json", json.dumps(doc, indent=2))
    if result.reached:
        cmds = kinematics.compile_path(result.path, mesh)
        _write(out / "commands.csv", kinematics.commands_to_csv(cmds))
        _write(out / "commands.json", kinematics.commands_to_json(cmds))
    _write(out / "path.xyz", kinematics.polyline_to_text([n.point.position for n in result.path]))
    logger.info("%s after %d iterations (%d nodes, %.3f s)", result.status.value,
                result.iterations_used, result.tree_size, result.wall_time)
    return EXIT_OK if result.reached else EXIT_BUDGET


def cmd_bench(cfg: RunConfig) -> int:
    mesh, fx = _load(cfg)
    goal, name = _goal(cfg, fx)
    pc = _planner_config(cfg, goal)
    inlet = _inlet(cfg, fx)
    reports = bench.run_trials(mesh, inlet, pc, cfg.trials, target=name, workers=cfg.workers)
    grid = _grid(cfg, pc.max_iterations)
    curve = bench.success_curve(reports, grid)
    out = cfg.output_dir()
    _write(out / "reports.json", bench.reports_to_json(reports, include_timing=cfg.timing))
    _write(out / "curve.csv", curve.to_csv())
    if cfg.timing:
        first = next((r.start for r in reports if r.start is not None), None)
        if first is not None:
            rows = bench.timing_profile(mesh, first, pc, grid)
            _write(out / "timing.csv", bench.timing_to_csv(rows))
    reached = sum(r.reached for r in reports)
    logger.info("%d/%d trials reached %s", reached, len(reports), name)
    return EXIT_OK


def _axis_values(values, default, degrees=False):
    if values is None:
        values = default
    if isinstance(values, dict):
        vals = np.linspace(float(values["min"]), float(values["max"]), int(values["n"]))
    elif isinstance(values, str):
        parts = [float(x) for x in values.split(":")]
        vals = np.linspace(parts[0], parts[1], int(parts[2])) if len(parts) == 3 else parts
    else:
        vals = [float(x) for x in values]
    vals = [float(v) for v in vals]
    return [math.radians(v) for v in vals] if degrees else vals


def cmd_analyze_failure(cfg: RunConfig) -> int:
    f = cfg.failure
    radii = _axis_values(f.get("radius_mm"), {"min": 1, "max": 6, "n": 10})
    lengths = _axis_values(f.get("length_mm"), {"min": 2, "max": 15, "n": 10})
    alphas = _axis_values(f.get("alpha_deg"), {"min": 25, "max": 90, "n": 10}, degrees=True)
    thetas = _axis_values(f.get("theta_deg"), [15, 30, 45, 90, 120], degrees=True)
    rows = failure.failure_grid(radii, lengths, alphas, thetas)
    out = cfg.output_dir()
    _write(out / "failure_grid.csv", failure.grid_to_csv(rows))
    if f.get("inventory"):
        tools = failure.load_inventory(f["inventory"])
        picks = []
        for alpha in alphas:
            for radius in radii:
                tool, dev, ok = failure.select_tool(tools, alpha, radius)
                picks.append({"alpha_deg": math.degrees(alpha), "R_mm": radius,
                              "tool": tool.name, "d_dev_mm": dev, "feasible": ok})
        _write(out / "tool_selection.json", json.dumps(picks, indent=2))
    return EXIT_OK


def cmd_replay(cfg: RunConfig) -> int:
    if not cfg.commands:
        raise ConfigError("replay needs --commands")
    cmds = kinematics.commands_from_csv(Path(cfg.commands).read_text())
    if cfg.plan_file:
        doc = json.loads(Path(cfg.plan_file).read_text())
        start = SurfacePoint(doc["start"]["position"], doc["start"]["face_id"])
        mesh, _ = _load(cfg)
    else:
        mesh, fx = _load(cfg)
        if not cfg.start:
            raise ConfigError("replay needs --plan or a start point")
        start = project_to_closest_surface(mesh, cfg.start["point"])
    try:
        res = kinematics.replay(cmds, start, mesh)
    except kinematics.WallPenetrationError as exc:
        logger.error("replay failed: %s", exc)
        return EXIT_ERROR
    out = cfg.output_dir()
    _write(out / "replay.xyz", kinematics.polyline_to_text(res.trajectory))
    _write(out / "contacts.json", json.dumps(
        [{"position": c.position.tolist(), "face_id": c.face_id} for c in res.contacts], indent=2))
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "bench": cmd_bench, "analyze-failure": cmd_analyze_failure,
            "replay": cmd_replay}


class _Parser(argparse.ArgumentParser):
    # usage errors must not collide with the budget-exhausted exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contactrrt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--config", help="YAML run file")
        p.add_argument("--mesh", help="STL/OBJ path or fixture:<name>")
        p.add_argument("--format", dest="mesh_format", choices=["stl-binary", "stl-ascii", "obj"])
        p.add_argument("--scale", type=float)
        p.add_argument("--goal", help="goal JSON (face list or named map)")
        p.add_argument("--target", help="named target inside the goal file")
        p.add_argument("--seed", type=int)
        p.add_argument("--iterations", type=int, help="planner iteration budget")
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
        p.add_argument("--bvh", action="store_true", default=None, help="use BVH acceleration")
        p.add_argument("--timing", action="store_true", default=None,
                       help="also write wall-clock measurements")
        p.add_argument("--start", help="start point x,y,z (projected onto the wall)")
        if name == "replay":
            p.add_argument("--commands", help="command CSV")
            p.add_argument("--plan", dest="plan_file", help="plan.json holding the start point")
    return parser


def merge_args(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in ("mesh", "mesh_format", "scale", "goal", "target", "trials", "workers", "out",
                "bvh", "timing", "commands", "plan_file"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if args.seed is not None:
        cfg.planner["seed"] = args.seed
    if args.iterations is not None:
        cfg.planner["max_iterations"] = args.iterations
    if args.start:
        cfg.start = {"point": [float(x) for x in args.start.split(",")]}
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if not args.verbose:
        logging.getLogger("contactrrt.planner").setLevel(logging.ERROR)
    try:
        cfg = merge_args(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, MeshError, NoContactError, FileNotFoundError, ValueError,
            KeyError, json.JSONDecodeError, kinematics.KinematicsError) as exc:
        print(f"contactrrt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
