"""Self-collision test on a chain of capsules.

Links are segments between consecutive distinct frame origins (plus the tool
segment when a TCP is given), each swept by a sphere.  Two non-adjacent
capsules collide when the distance between their axes is at most the sum of
their radii.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .kinematics import Pose, RobotModel, link_points

__all__ = [
    "Segment3",
    "CapsuleChain",
    "segment_min_distance",
    "capsule_chain",
    "self_collision",
]

_ZERO_LENGTH = 1e-6


@dataclass(frozen=True, eq=False)
class Segment3:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


@dataclass(frozen=True, eq=False)
class CapsuleChain:
    points: np.ndarray
    radii: np.ndarray

    @property
    def segments(self) -> list[Segment3]:
        return [Segment3(self.points[i], self.points[i + 1]) for i in range(len(self.points) - 1)]


@njit(cache=True, nogil=True)
def _clamp01(x):
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


@njit(cache=True, nogil=True)
def _precedes(p1, q1, p2, q2):
    """Lexicographic order on the endpoint coordinates of two segments."""
    for k in range(3):
        if p1[k] != p2[k]:
            return p1[k] < p2[k]
    for k in range(3):
        if q1[k] != q2[k]:
            return q1[k] < q2[k]
    return True


@njit(cache=True, nogil=True)
def _segdist(p1, q1, p2, q2):
    """Exactly symmetric wrapper: always walks from the lexicographically first segment."""
    if _precedes(p1, q1, p2, q2):
        return _segdist_ordered(p1, q1, p2, q2)
    return _segdist_ordered(p2, q2, p1, q1)


@njit(cache=True, nogil=True)
def _segdist_ordered(p1, q1, p2, q2):
    """Minimum distance between segments [p1, q1] and [p2, q2].

    Lines first; if the closest points leave the segments, clamp the first
    parameter and project onto the second segment; if that leaves the second
    segment, clamp it and project back onto the first.  Parallel lines start
    from the first endpoint of segment 1 and jump straight to the last step.
    """
    d1x, d1y, d1z = q1[0] - p1[0], q1[1] - p1[1], q1[2] - p1[2]
    d2x, d2y, d2z = q2[0] - p2[0], q2[1] - p2[1], q2[2] - p2[2]
    rx, ry, rz = p1[0] - p2[0], p1[1] - p2[1], p1[2] - p2[2]
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    eps = 1e-18
    if a <= eps and e <= eps:
        s = 0.0
        t = 0.0
    elif a <= eps:
        s = 0.0
        t = _clamp01(f / e)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= eps:
            t = 0.0
            s = _clamp01(-c / a)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > 1e-14 * a * e:
                s = _clamp01((b * f - c * e) / denom)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = _clamp01(-c / a)
            elif t > 1.0:
                t = 1.0
                s = _clamp01((b - c) / a)
    dx = p1[0] + d1x * s - p2[0] - d2x * t
    dy = p1[1] + d1y * s - p2[1] - d2y * t
    dz = p1[2] + d1z * s - p2[2] - d2z * t
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True, nogil=True)
def _chain_clearance(pts, radii, n_seg):
    """Smallest ``distance - r_i - r_j`` over non-successive segment pairs."""
    best = np.inf
    for i in range(n_seg - 2):
        li = 0.0
        for k in range(3):
            li += (pts[i + 1, k] - pts[i, k]) ** 2
        for j in range(i + 2, n_seg):
            lj = 0.0
            for k in range(3):
                lj += (pts[j + 1, k] - pts[j, k]) ** 2
            if li < _ZERO_LENGTH**2 and lj < _ZERO_LENGTH**2:
                continue
            c = _segdist(pts[i], pts[i + 1], pts[j], pts[j + 1]) - radii[i] - radii[j]
            if c < best:
                best = c
    return best


def segment_min_distance(s1: Segment3, s2: Segment3) -> float:
    """Exact minimum Euclidean distance between two 3D segments."""
    return float(_segdist(s1.a, s1.b, s2.a, s2.b))


def capsule_chain(model: RobotModel, q, tcp: Pose | None = None) -> CapsuleChain:
    pts = link_points(model, q, tcp)
    n_seg = len(pts) - 1
    return CapsuleChain(pts, model.capsule_radii[:n_seg].copy())


def self_collision(model: RobotModel, q, tcp: Pose | None = None) -> tuple[bool, float]:
    """``(colliding, min_clearance)`` for configuration ``q``.

    Every segment ``i`` is tested against segments ``j >= i + 2``; adjacent
    capsules share a joint and always touch.
    """
    chain = capsule_chain(model, q, tcp)
    clearance = float(_chain_clearance(chain.points, chain.radii, len(chain.radii)))
    return clearance <= 0.0, clearance
