"""Analytical inverse kinematics for the offset-wrist 6R architecture.

The wrist offset ``d5`` makes the wrist centre depend on ``q4``, so ``q4`` is
scanned: for every sign couple ``(eps1, eps2)`` the position equations give
``q1``, ``q3`` and ``q2`` in closed form, and an orientation identity gives a
scalar residual ``G(q4)`` whose zeros are the IK solutions.  ``q5`` and ``q6``
follow from the remaining rotation entries.

All formulas work on the geometric joint angles ``theta = q + theta_offset``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .kinematics import Pose, RobotModel

__all__ = [
    "Branch",
    "BRANCHES",
    "IkOptions",
    "IkSolution",
    "DegenerateSystemError",
    "wrist_center",
    "solve_q1",
    "solve_q3",
    "solve_q2",
    "residual",
    "residual_curves",
    "inverse_kinematics",
    "wrap_angle",
]

_TWO_PI = 2.0 * math.pi


class Branch(NamedTuple):
    eps1: int
    eps2: int


BRANCHES = (Branch(1, 1), Branch(1, -1), Branch(-1, 1), Branch(-1, -1))


class DegenerateSystemError(ArithmeticError):
    """The 2x2 linear system for q2 is singular (wrist centre on the q2 axis)."""


@dataclass(frozen=True)
class IkOptions:
    q4_step: float = math.radians(0.25)
    residual_tol: float = 1e-6
    refine_tol: float = 1e-10
    dedup_tol: float = 1e-4

    def __post_init__(self):
        if not self.q4_step > 0:
            raise ValueError("q4_step must be positive")
        for name in ("residual_tol", "refine_tol", "dedup_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class IkSolution:
    q: np.ndarray
    branch: Branch
    residual: float


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, _TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + _TWO_PI, w)
    return w if np.ndim(w) else float(w)


_TWISTS = (0.0, math.pi / 2, 0.0, -math.pi / 2, math.pi / 2, -math.pi / 2)


def _check_architecture(model: RobotModel):
    rows = model.rows
    ok = all(abs(r.alpha - t) < 1e-12 for r, t in zip(rows, _TWISTS))
    ok = ok and all(abs(rows[i].a) < 1e-12 for i in (0, 1, 3, 4, 5))
    ok = ok and all(abs(rows[i].d) < 1e-12 for i in (1, 2))
    if not ok:
        raise ValueError(
            f"model {model.name!r} is not of the supported offset-wrist 6R architecture"
        )


def wrist_center(pose: Pose, d6: float) -> np.ndarray:
    """Origin of frame 5: the flange position moved back by ``d6`` along its z axis."""
    return pose.p - d6 * pose.R[:, 2]


def _chain(model: RobotModel, P, R, th4, e1, e2):
    """Vectorised back-substitution for one branch; NaN marks infeasible samples."""
    d1, a3, d4, d5 = model.d1, model.a3, model.d4, model.d5
    th4 = np.asarray(th4, dtype=float)
    S4, C4 = np.sin(th4), np.cos(th4)
    with np.errstate(invalid="ignore", divide="ignore"):
        # -S1 Px + C1 Py = -d5 C4  ->  X S1 + Y C1 = Z
        X, Y, Z = -P[0], P[1], -d5 * C4
        den1 = X * X + Y * Y
        disc1 = den1 - Z * Z
        r1 = np.sqrt(np.where((disc1 >= 0) & (den1 > 1e-24), disc1, np.nan))
        S1 = (X * Z + e1 * Y * r1) / den1
        C1 = (Y * Z - e1 * X * r1) / den1

        # W1 C2 + W2 S2 = Xb C3 + Yb S3 + Zb ;  W1 S2 - W2 C2 = -Xb S3 + Yb C3
        W1 = P[0] * C1 + P[1] * S1
        W2 = P[2] - d1
        Xb, Yb, Zb = d5 * S4, -d4, a3
        B1 = 2.0 * Zb * Yb
        B2 = 2.0 * Zb * Xb
        B3 = W1 * W1 + W2 * W2 - Xb * Xb - Yb * Yb - Zb * Zb
        den3 = B1 * B1 + B2 * B2
        disc3 = den3 - B3 * B3
        r3 = np.sqrt(np.where(disc3 >= 0, disc3, np.nan))
        S3 = (B1 * B3 + e2 * B2 * r3) / den3
        C3 = (B2 * B3 - e2 * B1 * r3) / den3

        # X1 S2 + Y1 C2 = Z1 ;  X2 S2 + Y2 C2 = Z2
        X1, Y1, Z1 = W2, W1, Xb * C3 + Yb * S3 + Zb
        X2, Y2, Z2 = W1, -W2, -Xb * S3 + Yb * C3
        det = X1 * Y2 - X2 * Y1
        det = np.where(np.abs(det) < 1e-12, np.nan, det)
        S2 = (Z1 * Y2 - Z2 * Y1) / det
        C2 = (Z2 * X1 - Z1 * X2) / det

    th1 = np.arctan2(S1, C1)
    th2 = np.arctan2(S2, C2)
    th3 = np.arctan2(S3, C3)
    S23, C23 = np.sin(th2 + th3), np.cos(th2 + th3)
    r11, r12, r13 = R[0]
    r21, r22, r23 = R[1]
    r31, r32, r33 = R[2]
    G = S4 * (r33 * S23 + r13 * C1 * C23 + r23 * S1 * C23) + C4 * (r13 * S1 - r23 * C1)
    return th1, th2, th3, S1, C1, S23, C23, S4, C4, G


def _wrist(R, S1, C1, S23, C23, S4, C4):
    r11, r12, r13 = R[0]
    r21, r22, r23 = R[1]
    r31, r32, r33 = R[2]
    S5 = S4 * (r13 * S1 - r23 * C1) - C4 * (r33 * S23 + C23 * (r13 * C1 + r23 * S1))
    C5 = r33 * C23 - S23 * (r13 * C1 + r23 * S1)
    S6 = C4 * (r21 * C1 - r11 * S1) - r31 * S23 * S4 - C23 * S4 * (r11 * C1 + r21 * S1)
    C6 = C4 * (r22 * C1 - r12 * S1) - r32 * S23 * S4 - C23 * S4 * (r12 * C1 + r22 * S1)
    return np.arctan2(S5, C5), np.arctan2(S6, C6)


def _offset(model, i):
    return model.rows[i].theta_offset


def solve_q1(model: RobotModel, P, q4: float, eps1: int) -> Optional[float]:
    """``q1`` on branch ``eps1``, or ``None`` when ``X^2 + Y^2 < Z^2``."""
    P = np.asarray(P, dtype=float)
    th4 = q4 + _offset(model, 3)
    X, Y, Z = -P[0], P[1], -model.d5 * math.cos(th4)
    den = X * X + Y * Y
    disc = den - Z * Z
    if disc < 0 or den <= 1e-24:
        return None
    r = math.sqrt(disc)
    S1 = (X * Z + eps1 * Y * r) / den
    C1 = (Y * Z - eps1 * X * r) / den
    return math.atan2(S1, C1) - _offset(model, 0)


def _w(model, P, q1):
    th1 = q1 + _offset(model, 0)
    return P[0] * math.cos(th1) + P[1] * math.sin(th1), P[2] - model.d1


def solve_q3(model: RobotModel, P, q1: float, q4: float, eps2: int) -> Optional[float]:
    """``q3`` on branch ``eps2`` given ``q1``; ``None`` when ``B1^2 + B2^2 < B3^2``."""
    P = np.asarray(P, dtype=float)
    W1, W2 = _w(model, P, q1)
    th4 = q4 + _offset(model, 3)
    Xb, Yb, Zb = model.d5 * math.sin(th4), -model.d4, model.a3
    B1, B2 = 2 * Zb * Yb, 2 * Zb * Xb
    B3 = W1 * W1 + W2 * W2 - Xb * Xb - Yb * Yb - Zb * Zb
    den = B1 * B1 + B2 * B2
    disc = den - B3 * B3
    if disc < 0:
        return None
    r = math.sqrt(disc)
    S3 = (B1 * B3 + eps2 * B2 * r) / den
    C3 = (B2 * B3 - eps2 * B1 * r) / den
    return math.atan2(S3, C3) - _offset(model, 2)


def solve_q2(model: RobotModel, P, q1: float, q3: float, q4: float) -> float:
    """``q2`` from the linear 2x2 system; raises :class:`DegenerateSystemError`."""
    P = np.asarray(P, dtype=float)
    W1, W2 = _w(model, P, q1)
    th3 = q3 + _offset(model, 2)
    th4 = q4 + _offset(model, 3)
    S3, C3 = math.sin(th3), math.cos(th3)
    Xb, Yb, Zb = model.d5 * math.sin(th4), -model.d4, model.a3
    X1, Y1, Z1 = W2, W1, Xb * C3 + Yb * S3 + Zb
    X2, Y2, Z2 = W1, -W2, -Xb * S3 + Yb * C3
    det = X1 * Y2 - X2 * Y1
    if abs(det) < 1e-12:
        raise DegenerateSystemError("wrist centre lies on the q2 axis")
    S2 = (Z1 * Y2 - Z2 * Y1) / det
    C2 = (Z2 * X1 - Z1 * X2) / det
    return math.atan2(S2, C2) - _offset(model, 1)


def residual(model: RobotModel, pose: Pose, q4: float, branch: Branch) -> Optional[float]:
    """Residual ``G(q4)`` on one branch, ``None`` where the branch does not exist."""
    _check_architecture(model)
    P = wrist_center(pose, model.d6)
    G = _chain(model, P, pose.R, q4 + _offset(model, 3), branch.eps1, branch.eps2)[-1]
    G = float(G)
    return None if math.isnan(G) else G


def residual_curves(model: RobotModel, pose: Pose, q4) -> dict[Branch, np.ndarray]:
    """``G`` sampled at the joint values ``q4`` for every branch (NaN = no point)."""
    _check_architecture(model)
    P = wrist_center(pose, model.d6)
    th4 = np.asarray(q4, dtype=float) + _offset(model, 3)
    return {b: _chain(model, P, pose.R, th4, b.eps1, b.eps2)[-1] for b in BRANCHES}


def _valid_edges(g_of, lo, hi, tol):
    """Bisect for the validity boundary between valid ``lo`` and invalid ``hi``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(64):
        if np.all(np.abs(hi - lo) < tol):
            break
        mid = 0.5 * (lo + hi)
        ok = ~np.isnan(g_of(mid))
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return lo


def _bisect(g_of, lo, hi, glo, tol):
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    slo = np.sign(glo)
    for _ in range(128):
        if np.all(hi - lo < tol):
            break
        mid = 0.5 * (lo + hi)
        gm = g_of(mid)
        same = np.sign(gm) == slo
        # An invalid midpoint (NaN) shrinks from the low side like a same-sign hit.
        same |= np.isnan(gm)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _branch_roots(model, P, R, th_grid, e1, e2, opts: IkOptions) -> list[float]:
    def g_of(th):
        return _chain(model, P, R, th, e1, e2)[-1]

    g = g_of(th_grid)
    valid = ~np.isnan(g)
    th, gv = th_grid, g

    # Pin the ends of every valid run so roots between the last sample and a
    # branch boundary are not lost.
    k = np.nonzero(valid[:-1] != valid[1:])[0]
    if k.size:
        inside = np.where(valid[k], k, k + 1)
        outside = np.where(valid[k], k + 1, k)
        edges = _valid_edges(g_of, th_grid[inside], th_grid[outside], opts.refine_tol)
        ge = g_of(edges)
        keep = ~np.isnan(ge)
        th = np.concatenate([th_grid, edges[keep]])
        gv = np.concatenate([g, ge[keep]])
        order = np.argsort(th, kind="stable")
        th, gv = th[order], gv[order]

    ok = ~np.isnan(gv)
    pair = ok[:-1] & ok[1:]
    a, b = gv[:-1], gv[1:]
    crossing = pair & (((a < 0) & (b > 0)) | ((a > 0) & (b < 0)))
    exact = ok & (gv == 0.0)

    roots = list(th[exact])
    idx = np.nonzero(crossing)[0]
    if idx.size:
        roots.extend(_bisect(g_of, th[idx], th[idx + 1], gv[idx], opts.refine_tol))

    # Tangent (double) roots: |G| has a local minimum without a sign change.
    absg = np.abs(gv)
    cand = np.nonzero(
        ok[1:-1] & ok[:-2] & ok[2:]
        & (absg[1:-1] <= absg[:-2]) & (absg[1:-1] <= absg[2:])
        & (np.sign(gv[:-2]) == np.sign(gv[1:-1])) & (np.sign(gv[2:]) == np.sign(gv[1:-1]))
        & (absg[1:-1] < 1e-2) & (absg[1:-1] > 0)
    )[0] + 1
    for i in cand:
        res = minimize_scalar(
            lambda t: abs(float(g_of(t))) if not math.isnan(float(g_of(t))) else 1.0,
            bounds=(th[i - 1], th[i + 1]),
            method="bounded",
            options={"xatol": opts.refine_tol},
        )
        if res.fun < 1e-6:
            roots.append(float(res.x))
    return roots


def _to_joint_space(model: RobotModel, th: np.ndarray) -> np.ndarray:
    q = wrap_angle(th - model.params[:, 3])
    for i in range(6):
        if not model.q_min[i] <= q[i] <= model.q_max[i]:
            for shift in (_TWO_PI, -_TWO_PI):
                if model.q_min[i] <= q[i] + shift <= model.q_max[i]:
                    q[i] += shift
                    break
    return q


def inverse_kinematics(
    model: RobotModel, pose: Pose, opts: IkOptions | None = None
) -> list[IkSolution]:
    """All IK solutions of ``pose`` (flange in the base frame), sorted by ``q4``.

    ``q1, q4, q5, q6`` are in (-pi, pi]; ``q2, q3`` are moved by 2*pi when that
    brings them inside the joint limits.  Joint limits are not otherwise
    enforced.  An unreachable pose yields an empty list.
    """
    opts = opts or IkOptions()
    _check_architecture(model)
    P = wrist_center(pose, model.d6)
    R = pose.R
    n = max(int(math.ceil(_TWO_PI / opts.q4_step)), 8) + 1
    grid = np.linspace(-math.pi, math.pi, n)

    found = []
    for br in BRANCHES:
        roots = _branch_roots(model, P, R, grid, br.eps1, br.eps2, opts)
        if not roots:
            continue
        th4 = np.asarray(roots, dtype=float)
        th1, th2, th3, S1, C1, S23, C23, S4, C4, G = _chain(model, P, R, th4, br.eps1, br.eps2)
        th5, th6 = _wrist(R, S1, C1, S23, C23, S4, C4)
        for i in range(th4.size):
            if math.isnan(G[i]) or abs(G[i]) > opts.residual_tol:
                continue
            th = np.array([th1[i], th2[i], th3[i], th4[i], th5[i], th6[i]])
            found.append(IkSolution(_to_joint_space(model, th), br, float(G[i])))

    found.sort(key=lambda s: (float(wrap_angle(s.q[3])), BRANCHES.index(s.branch)))
    unique: list[IkSolution] = []
    for s in found:
        if any(np.max(np.abs(wrap_angle(s.q - u.q))) < opts.dedup_tol for u in unique):
            continue
        unique.append(s)
    return unique
