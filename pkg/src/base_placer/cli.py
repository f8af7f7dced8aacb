"""Command line entry points: ``ik``, ``saddle``, ``simulate`` and ``explore``.

Exit codes: 0 success, 1 configuration error, 2 infeasible query, 3 no
feasible region found.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, saddle_spec
from .ik import BRANCHES, IkOptions, inverse_kinematics, residual_curves
from .kinematics import Pose, load_model
from .optimizer import Disk, ExplorationLog, evaluate_points, optimize
from .region import Cluster, PointCloud2, RegionReport, analyze
from .trajectory import PlacementObjective, Trajectory, generate_saddle

__all__ = ["main", "RunReport", "run_explore", "grid_scan", "render_svg"]

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NO_REGION = 0, 1, 2, 3


@dataclass
class RunReport:
    log: ExplorationLog
    regions: RegionReport
    config: dict
    timings: dict = field(default_factory=dict)

    @property
    def best(self) -> Cluster | None:
        return self.regions.clusters[0] if self.regions.clusters else None

    def to_dict(self) -> dict:
        best = None
        if self.best is not None:
            c = self.best.circle
            best = {"x": c.center[0], "y": c.center[1], "radius": c.radius}
        return {
            "version": __version__,
            "best_placement": best,
            "n_evaluations": len(self.log),
            "n_feasible": int(np.count_nonzero(self.log.scores == 0)),
            "n_clusters": len(self.regions.clusters),
            "timings": self.timings,
            "config": self.config,
        }


def grid_scan(objective, bounds, step: float, forbidden=None, workers: int = 1) -> ExplorationLog:
    """Score every node of a regular grid, row by row from ``ymin``."""
    xmin, xmax, ymin, ymax = bounds
    xs = np.arange(xmin, xmax + 0.5 * step, step)
    ys = np.arange(ymin, ymax + 0.5 * step, step)
    pts = np.array([(x, y) for y in ys for x in xs], dtype=float)
    log = ExplorationLog()
    log.append(0, pts, evaluate_points(objective, pts, forbidden, workers))
    return log


def run_explore(cfg: RunConfig, write: bool = True) -> RunReport:
    """Explore the placement plane, extract feasible regions and (optionally)
    write exploration.csv, regions.json, report.json and map.svg."""
    objective = PlacementObjective(cfg.model, cfg.trajectory, cfg.tcp, cfg.z_offset, cfg.sim)
    t0 = time.perf_counter()
    if cfg.mode == "grid":
        log = grid_scan(objective, cfg.bounds, cfg.grid_step, cfg.forbidden, cfg.workers)
    else:
        log = optimize(objective, cfg.swarm, traj_center=objective.target[:2])
    t1 = time.perf_counter()
    clusters = analyze(PointCloud2.from_log(log), cfg.alpha, cfg.min_radius, cfg.edge_step,
                       cfg.forbidden, cfg.score_eps)
    t2 = time.perf_counter()
    settings = {"alpha": cfg.alpha, "min_radius": cfg.min_radius, "edge_step": cfg.edge_step,
                "score_eps": cfg.score_eps}
    report = RunReport(log, RegionReport(clusters, settings), cfg.raw,
                       {"explore_s": round(t1 - t0, 3), "regions_s": round(t2 - t1, 3)})
    if write:
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        log.to_csv(out / "exploration.csv")
        report.regions.to_json(out / "regions.json")
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        (out / "map.svg").write_text(render_svg(log, clusters, cfg.bounds, cfg.trajectory, cfg.forbidden))
    return report


# -- SVG ----------------------------------------------------------------------------


def _score_color(s: float) -> str:
    if s == 0:
        return "#1f5fd6"
    s = min(max(s, 0.0), 1.0)
    # yellow (barely failing) to dark red (nothing done)
    r, g, b = 250 - 110 * s, 220 * (1 - s), 40 * (1 - s)
    return f"#{int(r):02x}{int(g):02x}{int(b):02x}"


def render_svg(log: ExplorationLog, clusters, bounds, traj: Trajectory | None = None,
               forbidden=None, size: int = 640) -> str:
    """Map of the explored cloud, the trajectory footprint, the workpiece and
    the regions with their inscribed circles.  Presentation only."""
    xmin, xmax, ymin, ymax = bounds
    pad = 20
    scale = (size - 2 * pad) / max(xmax - xmin, ymax - ymin)
    W = pad * 2 + scale * (xmax - xmin)
    H = pad * 2 + scale * (ymax - ymin)

    def X(x):
        return pad + (x - xmin) * scale

    def Y(y):
        return H - pad - (y - ymin) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
        f'viewBox="0 0 {W:.1f} {H:.1f}">',
        f'<rect x="{X(xmin):.1f}" y="{Y(ymax):.1f}" width="{scale * (xmax - xmin):.1f}" '
        f'height="{scale * (ymax - ymin):.1f}" fill="white" stroke="#888"/>',
    ]
    if isinstance(forbidden, Disk):
        parts.append(f'<circle cx="{X(forbidden.center[0]):.1f}" cy="{Y(forbidden.center[1]):.1f}" '
                     f'r="{forbidden.radius * scale:.1f}" fill="#ccc" stroke="#666"/>')
    elif forbidden is not None:
        pts = " ".join(f"{X(x):.1f},{Y(y):.1f}" for x, y in forbidden.vertices)
        parts.append(f'<polygon points="{pts}" fill="#ccc" stroke="#666"/>')
    if traj is not None:
        pts = " ".join(f"{X(p.p[0]):.1f},{Y(p.p[1]):.1f}" for p in traj.poses)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    for (x, y), s in zip(log.points, log.scores):
        parts.append(f'<circle cx="{X(x):.1f}" cy="{Y(y):.1f}" r="2.5" fill="{_score_color(s)}"/>')
    for c in clusters:
        d = ""
        for ring in c.polygon.rings:
            d += "M " + " L ".join(f"{X(x):.1f} {Y(y):.1f}" for x, y in ring) + " Z "
        parts.append(f'<path d="{d}" fill="#1f5fd6" fill-opacity="0.15" fill-rule="evenodd" '
                     f'stroke="#1f5fd6"/>')
        cx, cy = c.circle.center
        parts.append(f'<circle cx="{X(cx):.1f}" cy="{Y(cy):.1f}" r="{c.circle.radius * scale:.1f}" '
                     f'fill="none" stroke="#0a0" stroke-width="2"/>')
        parts.append(f'<circle cx="{X(cx):.1f}" cy="{Y(cy):.1f}" r="3" fill="#0a0"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- commands ---------------------------------------------------------------------------


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else None
    if cfg is None:
        raise ConfigError([("--config", "required")])
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "grid_step", None):
        overrides["grid_step"] = args.grid_step
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = str(Path(args.output_dir).resolve())
    if overrides or getattr(args, "seed", None) is not None or getattr(args, "workers", None):
        doc = dict(cfg.raw, **overrides)
        cfg = RunConfig.from_dict(doc, base_dir=Path(args.config).parent,
                                  seed=getattr(args, "seed", None), workers=getattr(args, "workers", None))
    return cfg


def cmd_ik(args) -> int:
    model = load_model(args.robot)
    pose = Pose.from_vector(args.pose)
    opts = IkOptions(q4_step=math.radians(args.q4_step_deg))
    sols = inverse_kinematics(model, pose, opts)
    if args.residual_csv:
        q4 = np.linspace(-math.pi, math.pi, args.samples)
        curves = residual_curves(model, pose, q4)
        with open(args.residual_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q4"] + [f"G_{'p' if b.eps1 > 0 else 'm'}{'p' if b.eps2 > 0 else 'm'}" for b in BRANCHES])
            for k, v in enumerate(q4):
                w.writerow([repr(float(v))] + ["" if not np.isfinite(curves[b][k]) else repr(float(curves[b][k]))
                                               for b in BRANCHES])
    rows = [{"q": [float(x) for x in s.q], "branch": [s.branch.eps1, s.branch.eps2], "residual": s.residual}
            for s in sols]
    print(f"{'#':>3} " + " ".join(f"{'q' + str(i + 1):>9}" for i in range(6)) + "  e1 e2      |G|")
    for i, r in enumerate(rows, 1):
        print(f"{i:>3} " + " ".join(f"{x:9.4f}" for x in r["q"])
              + f"  {r['branch'][0]:+d} {r['branch'][1]:+d}  {r['residual']:.1e}")
    if not rows:
        print("no solution")
    text = json.dumps(rows, indent=2)
    if args.json:
        Path(args.json).write_text(text + "\n")
    return EXIT_OK if rows else EXIT_INFEASIBLE


def cmd_saddle(args) -> int:
    block = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        block = dict(doc.get("trajectory", {}).get("saddle", doc.get("saddle", {})))
    for key in ("R_major", "r_minor", "tilt_deg", "bevel_deg", "lead_in", "samples", "azimuth_deg", "tool_spin"):
        val = getattr(args, key)
        if val is not None:
            block[key] = val
    if args.camera_in_axis:
        block["camera_in_axis"] = True
    try:
        traj = generate_saddle(saddle_spec(block))
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    doc = {"closed": traj.closed, "poses": traj.to_json()}
    Path(args.output).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{len(traj)} poses written to {args.output}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    objective = PlacementObjective(cfg.model, cfg.trajectory, cfg.tcp, cfg.z_offset, cfg.sim)
    base = objective.base_pose((args.x, args.y))
    outcomes = objective.outcomes((args.x, args.y))
    yaw = math.atan2(base.R[1, 0], base.R[0, 0])
    doc = {"base": [float(base.p[0]), float(base.p[1]), float(base.p[2]), yaw],
           "outcomes": [o.to_dict() for o in outcomes]}
    text = json.dumps(doc, indent=2)
    if args.json:
        Path(args.json).write_text(text + "\n")
    else:
        print(text)
    for i, o in enumerate(outcomes):
        print(f"posture {i}: {o.completed_fraction:.3f} done, failure={o.failure.value}", file=sys.stderr)
    if not any(o.completed_fraction == 1.0 for o in outcomes):
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_explore(args) -> int:
    cfg = _load_config(args)
    report = run_explore(cfg)
    best = report.best
    print(f"{len(report.log)} evaluations, {report.to_dict()['n_feasible']} feasible, "
          f"{len(report.regions.clusters)} regions -> {cfg.output_dir}")
    if best is None:
        return EXIT_NO_REGION
    c = best.circle
    print(f"best placement x={c.center[0]:.3f} y={c.center[1]:.3f} margin={c.radius:.3f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="base-placer", description="Robot base placement for cutting paths.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ik = sub.add_parser("ik", help="all inverse kinematic solutions of a flange pose")
    ik.add_argument("pose", nargs=6, type=float, metavar="V", help="x y z phi theta psi (m, rad, ZYX)")
    ik.add_argument("--robot", default="crx10ia_l")
    ik.add_argument("--q4-step-deg", type=float, default=0.25)
    ik.add_argument("--json", help="write solutions as JSON")
    ik.add_argument("--residual-csv", help="write the four residual curves over q4")
    ik.add_argument("--samples", type=int, default=3601)
    ik.set_defaults(func=cmd_ik)

    sd = sub.add_parser("saddle", help="write a saddle cut trajectory")
    sd.add_argument("--config", help="JSON with a trajectory.saddle block")
    sd.add_argument("-o", "--output", default="trajectory.json")
    sd.add_argument("--R-major", dest="R_major", type=float)
    sd.add_argument("--r-minor", dest="r_minor", type=float)
    sd.add_argument("--tilt-deg", type=float)
    sd.add_argument("--bevel-deg", type=float)
    sd.add_argument("--azimuth-deg", type=float)
    sd.add_argument("--lead-in", type=float)
    sd.add_argument("--samples", type=int)
    sd.add_argument("--tool-spin", choices=["tangent", "fixed"])
    sd.add_argument("--camera-in-axis", action="store_true")
    sd.set_defaults(func=cmd_saddle)

    sm = sub.add_parser("simulate", help="simulate every start posture at one base position")
    sm.add_argument("--config", required=True)
    sm.add_argument("--x", type=float, required=True)
    sm.add_argument("--y", type=float, required=True)
    sm.add_argument("--json", help="write outcomes here instead of stdout")
    sm.set_defaults(func=cmd_simulate)

    ex = sub.add_parser("explore", help="map feasible base positions and extract regions")
    ex.add_argument("--config", required=True)
    ex.add_argument("--mode", choices=["grid", "pso"])
    ex.add_argument("--grid-step", type=float)
    ex.add_argument("--output-dir")
    ex.add_argument("--seed", type=int)
    ex.add_argument("--workers", type=int)
    ex.set_defaults(func=cmd_explore)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
