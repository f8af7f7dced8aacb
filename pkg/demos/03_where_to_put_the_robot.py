"""Search the floor for a robust base position.

Runs the bundled case configuration twice: once with the swarm exactly as
published (N=4, 50 iterations) and once as a dense grid over the half plane
facing the pipes.  Each cloud is reduced to feasible regions and their
largest inscribed circles; the circle radius is the margin by which the base
may be misplaced without losing the cut.

    python demos/03_where_to_put_the_robot.py [--out demo_out] [--grid-step 0.05]
"""

import argparse
import json
import time
from importlib import resources
from pathlib import Path

import numpy as np

from base_placer.cli import grid_scan, render_svg, run_explore
from base_placer.config import RunConfig
from base_placer.region import PointCloud2, RegionReport, analyze
from base_placer.trajectory import PlacementObjective


def describe(name, log, clusters):
    n_ok = int(np.sum(log.scores == 0))
    print(f"{name}: {len(log)} placements, {n_ok} complete the cut, {len(clusters)} regions")
    for c in clusters[:3]:
        cx, cy = c.circle.center
        print(f"   circle at ({cx:+.3f}, {cy:+.3f}) radius {c.circle.radius:.3f} m, {c.n_points} points")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--grid-step", type=float, default=0.05)
    args = ap.parse_args()
    out = Path(args.out).resolve()

    doc = json.loads(resources.files("base_placer").joinpath("data/case_c.json").read_text())
    cfg = RunConfig.from_dict(dict(doc, output_dir=str(out / "pso")))
    t = time.perf_counter()
    report = run_explore(cfg)
    print(f"[{time.perf_counter() - t:.1f} s]")
    describe("swarm", report.log, report.regions.clusters)
    if not report.regions.clusters:
        print("   the swarm's feasible hits are too sparse for a 0.05 m alpha shape")

    if args.grid_step > cfg.alpha * 2 ** 0.5:
        print(f"note: grid cells of {args.grid_step} m have circumradius above alpha = {cfg.alpha} m,"
              " so no region can form")
    obj = PlacementObjective(cfg.model, cfg.trajectory, cfg.tcp, cfg.z_offset, cfg.sim)
    window = (-2.0, -0.4, -1.2, 1.4)
    t = time.perf_counter()
    log = grid_scan(obj, window, args.grid_step, cfg.forbidden)
    clusters = analyze(PointCloud2.from_log(log), cfg.alpha, cfg.min_radius, cfg.edge_step, cfg.forbidden)
    print(f"[{time.perf_counter() - t:.1f} s]")
    describe("grid", log, clusters)

    grid_dir = out / "grid"
    grid_dir.mkdir(parents=True, exist_ok=True)
    log.to_csv(grid_dir / "exploration.csv")
    RegionReport(clusters, {"alpha": cfg.alpha, "min_radius": cfg.min_radius}).to_json(grid_dir / "regions.json")
    (grid_dir / "map.svg").write_text(render_svg(log, clusters, window, cfg.trajectory, cfg.forbidden))
    print(f"\nmaps and tables under {out}")


if __name__ == "__main__":
    main()
