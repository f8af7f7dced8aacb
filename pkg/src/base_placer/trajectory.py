"""Saddle trajectories, resolved-rate path simulation and placement scoring.

A trajectory is a list of TCP poses in the world frame joined by straight
segments along which position and orientation vary uniformly.  For a base
placement, the poses are mapped to flange poses in the base frame, every IK
start posture is tried, and the arm is walked along the path with explicit
Euler steps ``q += J(q)^-1 dk``.  A walk stops at the first singularity,
joint-limit violation or self-collision.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .collision import _chain_clearance
from .ik import IkOptions, inverse_kinematics
from .kinematics import (
    Pose,
    RobotModel,
    _axis_angle,
    _frames,
    _jacobian_from_frames,
    axis_angle_to_rotation,
    rotation_to_axis_angle,
    to_base_frame,
)

__all__ = [
    "Trajectory",
    "PlacementObjective",
    "SaddleSpec",
    "StepPlan",
    "Failure",
    "SimulationOutcome",
    "SimOptions",
    "generate_saddle",
    "plan_segment",
    "simulate",
    "start_postures",
    "placement_pose",
    "evaluate_placement",
    "simulate_placement",
]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered TCP poses in the world frame.

    ``closed`` only records that the last pose returns to the start of the cut;
    the closing segment is already part of ``poses``.
    """

    poses: tuple[Pose, ...]
    closed: bool = False

    def __post_init__(self):
        poses = tuple(self.poses)
        if len(poses) < 2:
            raise ValueError("a trajectory needs at least 2 poses")
        for i in range(len(poses) - 1):
            a, b = poses[i], poses[i + 1]
            if np.allclose(a.p, b.p, atol=1e-12) and np.allclose(a.R, b.R, atol=1e-12):
                raise ValueError(f"poses {i} and {i + 1} are identical")
        object.__setattr__(self, "poses", poses)

    def __len__(self):
        return len(self.poses)

    @property
    def n_segments(self) -> int:
        return len(self.poses) - 1

    def centroid(self) -> np.ndarray:
        pts = np.array([p.p for p in self.poses])
        if self.closed:
            pts = pts[:-1]
        return pts.mean(axis=0)

    def transformed(self, T: Pose) -> "Trajectory":
        return Trajectory(tuple(T @ p for p in self.poses), self.closed)

    def to_json(self) -> list[dict]:
        out = []
        for pose in self.poses:
            v = pose.to_vector()
            out.append({"p": v[:3].tolist(), "rpy": v[3:].tolist()})
        return out

    @classmethod
    def from_json(cls, doc, closed: bool | None = None) -> "Trajectory":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        if isinstance(doc, dict):
            closed = doc.get("closed", False) if closed is None else closed
            doc = doc["poses"]
        poses = tuple(Pose.from_xyz_rpy(d["p"], d["rpy"]) for d in doc)
        return cls(poses, bool(closed))


@dataclass(frozen=True)
class SaddleSpec:
    """Cut path where a small tube meets a large one.

    The large tube axis is the world z axis.  The small tube axis leaves the
    origin at ``tilt`` from the z axis (pi/2 = perpendicular), heading along
    ``azimuth`` in the xy plane.  ``bevel`` tilts the tool about the path
    tangent; with ``camera_in_axis`` the untilted tool axis is the small-tube
    axis instead of the large-tube surface normal.  ``tool_spin`` picks the
    tool x axis: ``"tangent"`` follows the path, ``"fixed"`` keeps it on the
    projection of the world z axis so the tool does not turn about itself.
    """

    R_major: float = 0.5
    r_minor: float = 0.15
    tilt: float = math.pi / 2
    bevel: float = math.radians(15.0)
    camera_in_axis: bool = False
    lead_in: float = 0.05
    samples: int = 72
    azimuth: float = math.pi
    tool_spin: str = "tangent"

    def validate(self):
        errors = []
        if self.tool_spin not in ("tangent", "fixed"):
            errors.append("tool_spin: must be 'tangent' or 'fixed'")
        if not self.R_major > 0:
            errors.append("R_major: must be positive")
        if not 0 < self.r_minor < self.R_major:
            errors.append("r_minor: must satisfy 0 < r_minor < R_major")
        if not 0 < self.tilt < math.pi:
            errors.append("tilt: must lie in (0, pi)")
        elif self.r_minor / math.sin(self.tilt) >= self.R_major:
            errors.append("tilt: small tube too inclined to meet the large tube in a closed curve")
        if self.lead_in < 0:
            errors.append("lead_in: must be >= 0")
        if self.samples < 16:
            errors.append("samples: must be >= 16")
        if errors:
            raise ValueError("invalid SaddleSpec: " + "; ".join(errors))


def _saddle_points(spec: SaddleSpec, t: np.ndarray):
    """Positions and unit tangents of the intersection curve at parameters ``t``."""
    st, ct = math.sin(spec.tilt), math.cos(spec.tilt)
    axis = np.array([st * math.cos(spec.azimuth), st * math.sin(spec.azimuth), ct])
    e1 = np.cross([0.0, 0.0, 1.0], axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    t = np.asarray(t, dtype=float)[:, None]
    b = spec.r_minor * (np.cos(t) * e1 + np.sin(t) * e2)
    db = spec.r_minor * (-np.sin(t) * e1 + np.cos(t) * e2)
    # |s * axis_xy + b_xy| = R_major, outer root.
    a_xy = axis[:2]
    A = a_xy @ a_xy
    B = 2.0 * (b[:, :2] @ a_xy)
    C = np.sum(b[:, :2] ** 2, axis=1) - spec.R_major**2
    s = (-B + np.sqrt(B * B - 4.0 * A * C)) / (2.0 * A)
    pts = s[:, None] * axis + b
    h = pts[:, :2]
    ds = -np.sum(h * db[:, :2], axis=1) / (h @ a_xy)
    tangent = ds[:, None] * axis + db
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    return pts, tangent, axis


def generate_saddle(spec: SaddleSpec) -> Trajectory:
    """Closed saddle path with a straight tangential lead-in.

    Tool z axis: inward large-tube normal (or the inward small-tube axis with
    ``camera_in_axis``), turned by ``bevel`` about the part of the path
    tangent normal to that reference, so the tilt is exactly ``bevel``; tool
    x axis from ``spec.tool_spin``.
    """
    spec.validate()
    t = 2.0 * math.pi * np.arange(spec.samples) / spec.samples
    pts, tangents, axis = _saddle_points(spec, t)
    poses = []
    for p, tan in zip(pts, tangents):
        if spec.camera_in_axis:
            z_ref = -axis
        else:
            z_ref = -np.array([p[0], p[1], 0.0]) / spec.R_major
        # Tilt about the tangent's component normal to z_ref so the bevel is exact.
        n = tan - (tan @ z_ref) * z_ref
        z = axis_angle_to_rotation(spec.bevel, n / np.linalg.norm(n)) @ z_ref
        ref = tan if spec.tool_spin == "tangent" else np.array([0.0, 0.0, 1.0])
        x = ref - (ref @ z) * z
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        poses.append(Pose(p, np.column_stack([x, y, z])))
    cut = poses + [poses[0]]
    if spec.lead_in > 0:
        start = Pose(poses[0].p - spec.lead_in * tangents[0], poses[0].R)
        cut = [start] + cut
    return Trajectory(tuple(cut), closed=True)


@dataclass(frozen=True, eq=False)
class StepPlan:
    n_steps: int
    dk_p: np.ndarray
    dk_w: np.ndarray

    @property
    def dk(self) -> np.ndarray:
        return np.concatenate([self.dk_p, self.dk_w])


def plan_segment(p_from: Pose, p_to: Pose, dp: float) -> StepPlan:
    """Split one segment into ``ceil(|dp_total| / dp)`` equal Euler increments."""
    if not dp > 0:
        raise ValueError("dp must be positive")
    delta = p_to.p - p_from.p
    theta, u = rotation_to_axis_angle(p_to.R @ p_from.R.T)
    dist = float(np.linalg.norm(delta))
    if dist < 1e-15 and theta < 1e-12:
        raise ValueError("coincident poses cannot be planned")
    n = max(1, int(math.ceil(dist / dp - 1e-12)))
    return StepPlan(n, delta / n, theta * u / n)


@njit(cache=True, nogil=True)
def _plan_all(ps, Rs, dp):
    n_seg = ps.shape[0] - 1
    n_steps = np.empty(n_seg, dtype=np.int64)
    dks = np.empty((n_seg, 6))
    for i in range(n_seg):
        d = ps[i + 1] - ps[i]
        dist = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        n = max(1, int(math.ceil(dist / dp - 1e-12)))
        theta, u = _axis_angle(Rs[i + 1] @ Rs[i].T)
        n_steps[i] = n
        for k in range(3):
            dks[i, k] = d[k] / n
            dks[i, 3 + k] = theta * u[k] / n
    return n_steps, dks


class Failure(str, enum.Enum):
    NONE = "none"
    SINGULARITY = "singularity"
    JOINT_LIMIT = "joint_limit"
    SELF_COLLISION = "self_collision"
    START_UNREACHABLE = "start_unreachable"


_FAILURE_CODES = [Failure.NONE, Failure.SINGULARITY, Failure.JOINT_LIMIT, Failure.SELF_COLLISION]


@dataclass
class SimulationOutcome:
    completed_fraction: float
    failure: Failure
    failure_step: int
    min_abs_det: float
    min_limit_margin: float
    min_clearance: float
    max_tracking_error: float = 0.0
    q_start: list[float] | None = None
    q_end: list[float] | None = None

    @property
    def score(self) -> float:
        return 1.0 - self.completed_fraction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["failure"] = self.failure.value
        for k in ("min_abs_det", "min_limit_margin", "min_clearance", "max_tracking_error"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


@dataclass(frozen=True)
class SimOptions:
    """Simulation settings.

    ``closed_loop_gain`` in (0, 1] blends each increment toward the full
    remaining error to the next waypoint, pulling drift back onto the path.
    The default 0 is plain open-loop Euler.
    """

    dp: float = 0.002
    det_threshold: float = 1e-3
    closed_loop_gain: float = 0.0
    ik: IkOptions = field(default_factory=IkOptions)
    early_exit: bool = True


@njit(cache=True, nogil=True)
def _lu_solve(A, b):
    """Gaussian elimination with partial pivoting; returns (x, det, ok)."""
    n = A.shape[0]
    M = A.copy()
    x = b.copy()
    det = 1.0
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if abs(M[i, k]) > abs(M[p, k]):
                p = i
        if abs(M[p, k]) < 1e-14:
            return x, 0.0, False
        if p != k:
            for j in range(n):
                M[k, j], M[p, j] = M[p, j], M[k, j]
            x[k], x[p] = x[p], x[k]
            det = -det
        det *= M[k, k]
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            for j in range(k, n):
                M[i, j] -= f * M[k, j]
            x[i] -= f * x[k]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= M[i, j] * x[j]
        x[i] = s / M[i, i]
    return x, det, True


@njit(cache=True, nogil=True)
def _det6(A):
    _, det, ok = _lu_solve(A, np.zeros(A.shape[0]))
    return det if ok else 0.0


@njit(cache=True, nogil=True)
def _rodrigues(w):
    theta = math.sqrt(w[0] ** 2 + w[1] ** 2 + w[2] ** 2)
    R = np.eye(3)
    if theta < 1e-15:
        return R
    kx, ky, kz = w[0] / theta, w[1] / theta, w[2] / theta
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return R + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


@njit(cache=True, nogil=True)
def _points(Rs, ps, chain_frames, tcp_p, use_tcp):
    n = chain_frames.shape[0] + (1 if use_tcp else 0)
    pts = np.empty((n, 3))
    for i in range(chain_frames.shape[0]):
        pts[i] = ps[chain_frames[i]]
    if use_tcp:
        pts[n - 1] = ps[6] + Rs[6] @ tcp_p
    return pts


@njit(cache=True, nogil=True)
def _simulate_kernel(params, chain_frames, radii, tcp_p, use_tcp, q_min, q_max,
                     q0, p_start, R_start, n_steps, dks, det_thr, gain):
    """Walk every segment; returns (completed, code, step, stats..., q)."""
    n_seg = n_steps.shape[0]
    n_caps = chain_frames.shape[0] - 1 + (1 if use_tcp else 0)
    q = q0.copy()
    min_det = np.inf
    min_margin = np.inf
    min_clear = np.inf
    max_err = 0.0

    Rs, ps = _frames(params, q)
    J = _jacobian_from_frames(Rs, ps)
    # Checks at the start posture, in the same order as along the path.
    ad = abs(_det6(J))
    min_det = ad
    margin = np.min(np.minimum(q - q_min, q_max - q))
    min_margin = margin
    clear = _chain_clearance(_points(Rs, ps, chain_frames, tcp_p, use_tcp), radii, n_caps)
    min_clear = clear
    if ad <= det_thr:
        return 0, 1, 0, min_det, min_margin, min_clear, max_err, q
    if margin < 0.0:
        return 0, 2, 0, min_det, min_margin, min_clear, max_err, q
    if clear <= 0.0:
        return 0, 3, 0, min_det, min_margin, min_clear, max_err, q

    step = 0
    p_cmd = p_start.copy()
    R_cmd = R_start.copy()
    dk = np.empty(6)
    for s in range(n_seg):
        dR = _rodrigues(dks[s, 3:])
        for _ in range(n_steps[s]):
            step += 1
            for k in range(6):
                dk[k] = dks[s, k]
            p_cmd = p_cmd + dks[s, :3]
            R_cmd = dR @ R_cmd
            if gain > 0.0:
                # Aim at the next commanded pose instead of adding a blind increment.
                e_p = p_cmd - ps[6]
                theta, u = _axis_angle(R_cmd @ Rs[6].T)
                for k in range(3):
                    dk[k] = dks[s, k] + gain * (e_p[k] - dks[s, k])
                    dk[3 + k] = dks[s, 3 + k] + gain * (theta * u[k] - dks[s, 3 + k])
            dq, _, ok = _lu_solve(J, dk)
            if not ok:
                return s, 1, step, 0.0, min_margin, min_clear, max_err, q
            q = q + dq
            Rs, ps = _frames(params, q)
            J = _jacobian_from_frames(Rs, ps)
            e = ps[6] - p_cmd
            err = math.sqrt(e[0] ** 2 + e[1] ** 2 + e[2] ** 2)
            if err > max_err:
                max_err = err
            ad = abs(_det6(J))
            if ad < min_det:
                min_det = ad
            if ad <= det_thr:
                return s, 1, step, min_det, min_margin, min_clear, max_err, q
            margin = np.min(np.minimum(q - q_min, q_max - q))
            if margin < min_margin:
                min_margin = margin
            if margin < 0.0:
                return s, 2, step, min_det, min_margin, min_clear, max_err, q
            clear = _chain_clearance(_points(Rs, ps, chain_frames, tcp_p, use_tcp), radii, n_caps)
            if clear < min_clear:
                min_clear = clear
            if clear <= 0.0:
                return s, 3, step, min_det, min_margin, min_clear, max_err, q
    return n_seg, 0, step, min_det, min_margin, min_clear, max_err, q


def _pose_arrays(poses: Sequence[Pose]):
    ps = np.ascontiguousarray([p.p for p in poses], dtype=float)
    Rs = np.ascontiguousarray([p.R for p in poses], dtype=float)
    return ps, Rs


def _run(model, ps, Rs, plans, q0, tcp, opts: SimOptions) -> SimulationOutcome:
    n_steps, dks = plans
    use_tcp = tcp is not None
    tcp_p = tcp.p if use_tcp else np.zeros(3)
    q0 = np.asarray(q0, dtype=float).reshape(6)
    done, code, step, mdet, mmargin, mclear, merr, q = _simulate_kernel(
        model.params, model.chain_frames, model.capsule_radii, tcp_p, use_tcp,
        model.q_min, model.q_max, q0, ps[0], Rs[0], n_steps, dks,
        opts.det_threshold, opts.closed_loop_gain,
    )
    n_seg = len(n_steps)
    return SimulationOutcome(
        completed_fraction=done / n_seg,
        failure=_FAILURE_CODES[code],
        failure_step=int(step) if code else -1,
        min_abs_det=float(mdet),
        min_limit_margin=float(mmargin),
        min_clearance=float(mclear),
        max_tracking_error=float(merr),
        q_start=q0.tolist(),
        q_end=np.asarray(q).tolist(),
    )


def simulate(
    model: RobotModel,
    traj_base: Trajectory,
    q0,
    dp: float = 0.002,
    det_threshold: float = 1e-3,
    tcp: Pose | None = None,
    closed_loop_gain: float = 0.0,
) -> SimulationOutcome:
    """Follow ``traj_base`` (flange poses in the base frame) from posture ``q0``.

    ``tcp`` only adds the tool capsule to the self-collision model.
    """
    if not dp > 0:
        raise ValueError("dp must be positive")
    opts = SimOptions(dp=dp, det_threshold=det_threshold, closed_loop_gain=closed_loop_gain)
    ps, Rs = _pose_arrays(traj_base.poses)
    return _run(model, ps, Rs, _plan_all(ps, Rs, dp), q0, tcp, opts)


def start_postures(model: RobotModel, pose: Pose, ik: IkOptions | None = None) -> list[np.ndarray]:
    """Every IK solution of ``pose``, with each joint also tried shifted by
    +-2*pi when the shifted value is inside the limits.  Out-of-limit postures
    are dropped."""
    out = []
    for sol in inverse_kinematics(model, pose, ik):
        choices = []
        for i, v in enumerate(sol.q):
            reps = [v + k * 2.0 * math.pi for k in (0, 1, -1)]
            choices.append([r for r in reps if model.q_min[i] <= r <= model.q_max[i]])
        if any(not c for c in choices):
            continue
        for combo in np.array(np.meshgrid(*choices, indexing="ij")).reshape(6, -1).T:
            out.append(combo)
    return out


def placement_pose(xy, z: float, target) -> Pose:
    """Base pose at ``(x, y, z)`` with its x axis turned toward ``target``."""
    x, y = float(xy[0]), float(xy[1])
    yaw = math.atan2(float(target[1]) - y, float(target[0]) - x)
    c, s = math.cos(yaw), math.sin(yaw)
    return Pose([x, y, z], [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def simulate_placement(
    model: RobotModel,
    traj_world: Trajectory,
    base: Pose,
    tcp: Pose,
    opts: SimOptions | None = None,
    early_exit: bool | None = None,
) -> list[SimulationOutcome]:
    """Outcome of every start posture for one base placement."""
    opts = opts or SimOptions()
    early_exit = opts.early_exit if early_exit is None else early_exit
    base_poses = [to_base_frame(p, base, tcp) for p in traj_world.poses]
    starts = start_postures(model, base_poses[0], opts.ik)
    if not starts:
        return []
    ps, Rs = _pose_arrays(base_poses)
    plans = _plan_all(ps, Rs, opts.dp)
    outcomes = []
    for q0 in starts:
        out = _run(model, ps, Rs, plans, q0, tcp, opts)
        outcomes.append(out)
        if early_exit and out.failure is Failure.NONE:
            break
    return outcomes


def evaluate_placement(
    model: RobotModel,
    traj_world: Trajectory,
    base: Pose,
    tcp: Pose,
    opts: SimOptions | None = None,
) -> float:
    """Fraction of segments left unfinished by the best start posture (1 = none)."""
    outcomes = simulate_placement(model, traj_world, base, tcp, opts)
    if not outcomes:
        return 1.0
    return min(o.score for o in outcomes)


@dataclass(frozen=True, eq=False)
class PlacementObjective:
    """Score of a base position ``(x, y)`` on the plane ``z_offset`` below or
    above the trajectory centroid, with the base facing the centroid."""

    model: RobotModel
    traj_world: Trajectory
    tcp: Pose
    z_offset: float = 0.0
    opts: SimOptions = field(default_factory=SimOptions)

    @property
    def target(self) -> np.ndarray:
        return self.traj_world.centroid()

    def base_pose(self, xy) -> Pose:
        c = self.target
        return placement_pose(xy, c[2] + self.z_offset, c)

    def outcomes(self, xy) -> list[SimulationOutcome]:
        return simulate_placement(self.model, self.traj_world, self.base_pose(xy), self.tcp, self.opts,
                                  early_exit=False)

    def __call__(self, xy) -> float:
        return evaluate_placement(self.model, self.traj_world, self.base_pose(xy), self.tcp, self.opts)
