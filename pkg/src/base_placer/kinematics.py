"""Frame algebra and modified-DH (Khalil-Kleinfinger) kinematics of a 6R arm.

Rotations are plain 3x3 arrays and homogeneous transforms 4x4 arrays.  The
per-step kernels used by the trajectory simulator (``_frames``,
``_jacobian_from_frames``) are compiled with numba; everything else is numpy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

__all__ = [
    "MdhRow",
    "RobotModel",
    "Pose",
    "crx10ia_l",
    "load_model",
    "euler_zyx_to_rotation",
    "rotation_to_euler_zyx",
    "rotation_to_axis_angle",
    "axis_angle_to_rotation",
    "orthonormalize",
    "link_transform",
    "forward_kinematics",
    "link_points",
    "jacobian",
    "to_base_frame",
    "from_base_frame",
]

_HALF_PI = 0.5 * math.pi
_ALLOWED_TWISTS = (0.0, _HALF_PI, -_HALF_PI)


@dataclass(frozen=True)
class MdhRow:
    """One line of a modified DH table (lengths in m, angles in rad)."""

    d: float
    a: float
    alpha: float
    theta_offset: float = 0.0


@dataclass(frozen=True, eq=False)
class RobotModel:
    """A 6R serial arm: MDH table, joint limits and capsule radii.

    ``capsule_radii`` lists one radius per segment of the capsule chain built by
    :func:`link_points` (segments joining consecutive *distinct* frame origins
    from the base to frame 6), followed by one radius for the tool segment
    (frame 6 origin to TCP).
    """

    rows: tuple[MdhRow, ...]
    q_min: np.ndarray
    q_max: np.ndarray
    capsule_radii: np.ndarray
    name: str = "robot"
    params: np.ndarray = field(init=False, repr=False)
    chain_frames: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = tuple(self.rows)
        if len(rows) != 6:
            raise ValueError(f"expected 6 MDH rows, got {len(rows)}")
        for i, row in enumerate(rows):
            if not any(abs(row.alpha - t) < 1e-12 for t in _ALLOWED_TWISTS):
                raise ValueError(f"row {i + 1}: alpha must be 0 or +-pi/2, got {row.alpha}")
        q_min = np.asarray(self.q_min, dtype=float).reshape(6)
        q_max = np.asarray(self.q_max, dtype=float).reshape(6)
        if np.any(q_min >= q_max):
            raise ValueError("q_min must be strictly below q_max for every joint")
        params = np.array([[r.d, r.a, r.alpha, r.theta_offset] for r in rows], dtype=float)
        # Frame origins that coincide with their predecessor (a = d = 0) do not
        # start a new capsule segment.
        keep = [0] + [i + 1 for i, r in enumerate(rows) if math.hypot(r.a, r.d) > 1e-9]
        radii = np.asarray(self.capsule_radii, dtype=float).ravel()
        if radii.size != len(keep):
            raise ValueError(
                f"capsule_radii needs {len(keep)} entries ({len(keep) - 1} arm segments + tool), "
                f"got {radii.size}"
            )
        if np.any(radii <= 0):
            raise ValueError("capsule radii must be positive")
        for name, value in (
            ("rows", rows),
            ("q_min", q_min),
            ("q_max", q_max),
            ("capsule_radii", radii),
            ("params", params),
            ("chain_frames", np.array(keep, dtype=np.int64)),
        ):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def d1(self) -> float:
        return self.rows[0].d

    @property
    def a3(self) -> float:
        return self.rows[2].a

    @property
    def d4(self) -> float:
        return self.rows[3].d

    @property
    def d5(self) -> float:
        return self.rows[4].d

    @property
    def d6(self) -> float:
        return self.rows[5].d

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.q_min) and np.all(q <= self.q_max))

    def limit_margin(self, q) -> float:
        """Smallest distance to a joint limit; negative when outside."""
        q = np.asarray(q, dtype=float)
        return float(min(np.min(q - self.q_min), np.min(self.q_max - q)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mdh": [
                {"d": r.d, "a": r.a, "alpha": r.alpha, "theta_offset": r.theta_offset}
                for r in self.rows
            ],
            "q_min": self.q_min.tolist(),
            "q_max": self.q_max.tolist(),
            "capsule_radii": self.capsule_radii.tolist(),
        }


def crx10ia_l() -> RobotModel:
    """Fanuc CRX-10iA/L.

    Capsule radii (m): base column 0.09, upper arm 0.07, forearm 0.06, the two
    wrist links 0.05, tool 0.03.  The vendor does not publish them; they are
    conservative estimates.
    """
    pi = math.pi
    rows = (
        MdhRow(0.245, 0.0, 0.0),
        MdhRow(0.0, 0.0, pi / 2),
        MdhRow(0.0, 0.710, 0.0),
        MdhRow(0.540, 0.0, -pi / 2),
        MdhRow(0.150, 0.0, pi / 2),
        MdhRow(0.160, 0.0, -pi / 2),
    )
    q_min = [-pi, -pi / 2, -pi, -19 * pi / 18, -pi, -5 * pi / 4]
    q_max = [pi, 3 * pi / 2, 2 * pi, 19 * pi / 18, pi, 5 * pi / 4]
    radii = [0.09, 0.07, 0.06, 0.05, 0.05, 0.03]
    return RobotModel(rows, q_min, q_max, radii, name="crx10ia_l")


_BUILTIN_MODELS = {"crx10ia_l": crx10ia_l}


def load_model(source) -> RobotModel:
    """Build a :class:`RobotModel` from a built-in name, a JSON path or a dict.

    The JSON document looks like::

        {"name": ..., "mdh": [{"d", "a", "alpha", "theta_offset"} x 6],
         "q_min": [6], "q_max": [6], "capsule_radii": [...]}
    """
    if isinstance(source, RobotModel):
        return source
    if isinstance(source, str) and source in _BUILTIN_MODELS:
        return _BUILTIN_MODELS[source]()
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text())
    try:
        rows = tuple(
            MdhRow(float(r["d"]), float(r["a"]), float(r["alpha"]), float(r.get("theta_offset", 0.0)))
            for r in source["mdh"]
        )
        return RobotModel(
            rows,
            source["q_min"],
            source["q_max"],
            source["capsule_radii"],
            name=source.get("name", "robot"),
        )
    except KeyError as exc:
        raise ValueError(f"robot model is missing field {exc}") from None


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: position ``p`` (m) and rotation matrix ``R``."""

    p: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        if not self.is_valid():
            raise ValueError("Pose needs a finite position and a proper rotation (R^T R = I, det R = 1)")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def from_xyz_rpy(cls, xyz, rpy) -> "Pose":
        """Position plus Z-Y-X Euler angles ``(phi, theta, psi)``."""
        return cls(xyz, euler_zyx_to_rotation(*rpy))

    @classmethod
    def from_vector(cls, v) -> "Pose":
        """``[x, y, z, phi, theta, psi]``."""
        v = np.asarray(v, dtype=float).ravel()
        return cls.from_xyz_rpy(v[:3], v[3:6])

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], T[:3, :3])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, rotation_to_euler_zyx(self.R)])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T

    def inverse(self) -> "Pose":
        Rt = self.R.T
        return Pose(-Rt @ self.p, Rt)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.R @ other.p + self.p, self.R @ other.R)

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.R
        return bool(
            np.all(np.isfinite(self.p))
            and np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol
        )


def euler_zyx_to_rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    """``Rot(z, psi) @ Rot(y, theta) @ Rot(x, phi)``, written out element-wise."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
            [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
            [-st, sf * ct, cf * ct],
        ]
    )


def rotation_to_euler_zyx(R) -> np.ndarray:
    """Inverse of :func:`euler_zyx_to_rotation`, ``theta`` in [-pi/2, pi/2].

    At gimbal lock (``|theta| = pi/2``) ``phi`` is set to 0.
    """
    R = np.asarray(R, dtype=float)
    st = -R[2, 0]
    if abs(st) > 1.0 - 1e-12:
        theta = math.copysign(_HALF_PI, st)
        psi = math.atan2(-R[0, 1], R[1, 1])
        return np.array([0.0, theta, psi])
    theta = math.asin(max(-1.0, min(1.0, st)))
    return np.array([math.atan2(R[2, 1], R[2, 2]), theta, math.atan2(R[1, 0], R[0, 0])])


def axis_angle_to_rotation(theta: float, u) -> np.ndarray:
    """Rodrigues' rotation of angle ``theta`` about the unit axis ``u``."""
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    K = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


@njit(cache=True, nogil=True)
def _axis_angle(R):
    c = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    # Same angle as acos(c), but sin from the skew part keeps it accurate near pi.
    theta = math.atan2(0.5 * math.sqrt(w[0] ** 2 + w[1] ** 2 + w[2] ** 2), c)
    u = np.zeros(3)
    if theta < 1e-9:
        u[2] = 1.0
        return 0.0, u
    if math.pi - theta < 1e-6:
        # sin(theta) ~ 0: the symmetric part gives u u^T = (sym(R) - c I) / (1 - c).
        B = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                B[i, j] = (0.5 * (R[i, j] + R[j, i]) - (c if i == j else 0.0)) / (1.0 - c)
        k = 0
        for i in range(1, 3):
            if B[i, i] > B[k, k]:
                k = i
        n = math.sqrt(max(B[k, k], 0.0))
        for i in range(3):
            u[i] = B[i, k] / n
        # The largest entry of the skew part fixes the sign when theta < pi.
        m = 0
        for i in range(1, 3):
            if abs(w[i]) > abs(w[m]):
                m = i
        if w[m] * u[m] < 0.0:
            u = -u
        return theta, u
    s = 2.0 * math.sin(theta)
    u[0] = (R[2, 1] - R[1, 2]) / s
    u[1] = (R[0, 2] - R[2, 0]) / s
    u[2] = (R[1, 0] - R[0, 1]) / s
    return theta, u / math.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)


def rotation_to_axis_angle(R) -> tuple[float, np.ndarray]:
    """Angle in [0, pi] and unit axis of ``R`` (identity maps to ``(0, +z)``)."""
    theta, u = _axis_angle(np.ascontiguousarray(R, dtype=float))
    return float(theta), u


def orthonormalize(R) -> np.ndarray:
    """Nearest proper rotation to ``R`` (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    M = U @ Vt
    if np.linalg.det(M) < 0:
        U[:, -1] *= -1
        M = U @ Vt
    return M


def link_transform(row: MdhRow, q: float) -> np.ndarray:
    """4x4 transform from frame j-1 to frame j for joint value ``q``."""
    th = q + row.theta_offset
    ct, st = math.cos(th), math.sin(th)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    return np.array(
        [
            [ct, -st, 0.0, row.a],
            [ca * st, ca * ct, -sa, -row.d * sa],
            [sa * st, sa * ct, ca, row.d * ca],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


@njit(cache=True, nogil=True)
def _frames(params, q):
    """Rotations (7, 3, 3) and origins (7, 3) of frames 0..6 in the base frame."""
    Rs = np.zeros((7, 3, 3))
    ps = np.zeros((7, 3))
    Rs[0, 0, 0] = 1.0
    Rs[0, 1, 1] = 1.0
    Rs[0, 2, 2] = 1.0
    L = np.empty((3, 3))
    t = np.empty(3)
    for j in range(6):
        d, a, alpha, off = params[j, 0], params[j, 1], params[j, 2], params[j, 3]
        th = q[j] + off
        ct, st = math.cos(th), math.sin(th)
        ca, sa = math.cos(alpha), math.sin(alpha)
        L[0, 0], L[0, 1], L[0, 2] = ct, -st, 0.0
        L[1, 0], L[1, 1], L[1, 2] = ca * st, ca * ct, -sa
        L[2, 0], L[2, 1], L[2, 2] = sa * st, sa * ct, ca
        t[0], t[1], t[2] = a, -d * sa, d * ca
        for r in range(3):
            acc = ps[j, r]
            for k in range(3):
                acc += Rs[j, r, k] * t[k]
                s = 0.0
                for m in range(3):
                    s += Rs[j, r, m] * L[m, k]
                Rs[j + 1, r, k] = s
            ps[j + 1, r] = acc
    return Rs, ps


@njit(cache=True, nogil=True)
def _jacobian_from_frames(Rs, ps):
    """Geometric Jacobian of the frame-6 origin; joint i turns about z of frame i."""
    J = np.empty((6, 6))
    pn = ps[6]
    for i in range(6):
        z0, z1, z2 = Rs[i + 1, 0, 2], Rs[i + 1, 1, 2], Rs[i + 1, 2, 2]
        dx = pn[0] - ps[i + 1, 0]
        dy = pn[1] - ps[i + 1, 1]
        dz = pn[2] - ps[i + 1, 2]
        J[0, i] = z1 * dz - z2 * dy
        J[1, i] = z2 * dx - z0 * dz
        J[2, i] = z0 * dy - z1 * dx
        J[3, i] = z0
        J[4, i] = z1
        J[5, i] = z2
    return J


def forward_kinematics(model: RobotModel, q) -> tuple[Pose, list[Pose]]:
    """Flange pose and the seven frames 0..6, all in the base frame."""
    Rs, ps = _frames(model.params, np.asarray(q, dtype=float).reshape(6))
    frames = [Pose(ps[i], Rs[i]) for i in range(7)]
    return frames[-1], frames


def link_points(model: RobotModel, q, tcp: Pose | None = None) -> np.ndarray:
    """Capsule chain vertices: distinct frame origins, plus the TCP when given."""
    _, ps = _frames(model.params, np.asarray(q, dtype=float).reshape(6))
    pts = ps[model.chain_frames]
    if tcp is not None:
        Rs, _ = _frames(model.params, np.asarray(q, dtype=float).reshape(6))
        pts = np.vstack([pts, ps[6] + Rs[6] @ tcp.p])
    return pts


def jacobian(model: RobotModel, q) -> np.ndarray:
    """6x6 geometric Jacobian of the flange: rows (linear, angular), base frame."""
    Rs, ps = _frames(model.params, np.asarray(q, dtype=float).reshape(6))
    return _jacobian_from_frames(Rs, ps)


def to_base_frame(world_pose: Pose, base: Pose, tcp: Pose) -> Pose:
    """Flange pose in the base frame that puts the TCP at ``world_pose``."""
    return base.inverse() @ world_pose @ tcp.inverse()


def from_base_frame(flange_pose: Pose, base: Pose, tcp: Pose) -> Pose:
    """Inverse of :func:`to_base_frame`: TCP pose in the world frame."""
    return base @ flange_pose @ tcp


def poses_to_arrays(poses: Sequence[Pose]) -> tuple[np.ndarray, np.ndarray]:
    """Stack poses into ``(n, 3)`` positions and ``(n, 3, 3)`` rotations."""
    return (
        np.array([p.p for p in poses], dtype=float),
        np.array([p.R for p in poses], dtype=float),
    )
