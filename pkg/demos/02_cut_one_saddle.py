"""Follow a saddle cut from one base position.

Two pipes meet at right angles; the torch must trace the intersection curve
with a 15 degree bevel.  From a given base position every inverse kinematic
start posture is driven along the path with resolved-rate steps until it
finishes or hits a singularity, a joint limit or a self collision.

    python demos/02_cut_one_saddle.py [--x -1.37 --y -0.66]
"""

import argparse
import math

import numpy as np

from base_placer import Pose, crx10ia_l
from base_placer.trajectory import PlacementObjective, SaddleSpec, generate_saddle

TCP = Pose.from_vector([0.038, 0.0, 0.409, math.pi / 4, 0.0, -math.pi / 2])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--x", type=float, default=-1.37)
    ap.add_argument("--y", type=float, default=-0.66)
    args = ap.parse_args()

    traj = generate_saddle(SaddleSpec(camera_in_axis=True))
    p = np.array([pose.p for pose in traj.poses])
    print(f"saddle: {len(traj)} poses, z from {p[:, 2].min():.3f} to {p[:, 2].max():.3f} m,"
          f" centroid {np.round(traj.centroid(), 3)}")

    obj = PlacementObjective(crx10ia_l(), traj, TCP, z_offset=-0.12)
    base = obj.base_pose((args.x, args.y))
    print(f"base at ({args.x}, {args.y}, {base.p[2]:.3f}) facing the cut\n")
    outcomes = obj.outcomes((args.x, args.y))
    for i, o in enumerate(outcomes):
        why = "" if o.failure.value == "none" else f" stopped by {o.failure.value} at step {o.failure_step}"
        print(f"posture {i:2d}: {100 * o.completed_fraction:5.1f}% of the path{why}")
    print(f"\nscore {obj((args.x, args.y)):.3f} (0 means at least one posture finishes the cut)")


if __name__ == "__main__":
    main()
