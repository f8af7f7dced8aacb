import math
import time

import numpy as np
import pytest

from base_placer.ik import (
    BRANCHES,
    Branch,
    DegenerateSystemError,
    IkOptions,
    inverse_kinematics,
    residual,
    residual_curves,
    solve_q1,
    solve_q2,
    solve_q3,
    wrap_angle,
    wrist_center,
)
from base_placer.kinematics import Pose, forward_kinematics, rotation_to_axis_angle

from conftest import PUBLISHED_SOLUTIONS, angle_diff, oracle_fk, random_in_limits

PUBLISHED_ROUNDING = pytest.mark.xfail(
    strict=True,
    reason="the published rows are up to 5.3e-3 rad from the exact solutions of the stated pose",
)


def _pose_of(q):
    return Pose.from_matrix(oracle_fk(q))


def _matching(sols, rows):
    """Greedy set-wise pairing; returns the worst per-joint gap."""
    left = list(range(len(sols)))
    worst = 0.0
    for row in rows:
        gaps = [np.max(angle_diff(sols[k].q, row)) for k in left]
        j = int(np.argmin(gaps))
        worst = max(worst, gaps[j])
        left.pop(j)
    return worst


def test_wrist_center_examples(model, reference_pose):
    np.testing.assert_allclose(wrist_center(Pose([0, 0, 1], np.eye(3)), 0.16), [0, 0, 0.84])
    np.testing.assert_allclose(wrist_center(reference_pose, 0.0), reference_pose.p)
    R = reference_pose.R
    expected = reference_pose.p - 0.16 * np.array([R[0, 2], R[1, 2], R[2, 2]])
    np.testing.assert_allclose(wrist_center(reference_pose, model.d6), expected, atol=1e-15)


def test_solve_q1_examples(model):
    q4 = math.pi / 2
    P = np.array([1.0, 0.0, 0.5])
    q1 = solve_q1(model, P, q4, +1)
    X, Y, Z = -P[0], P[1], -model.d5 * math.cos(q4)
    assert X * math.sin(q1) + Y * math.cos(q1) == pytest.approx(Z, abs=1e-12)
    assert solve_q1(model, np.array([0.01, 0.0, 0.5]), 0.0, +1) is None


def test_solve_q1_random_substitution(model):
    rng = np.random.default_rng(7)
    for _ in range(200):
        P = rng.uniform(-1, 1, 3)
        q4 = rng.uniform(-math.pi, math.pi)
        for e1 in (1, -1):
            q1 = solve_q1(model, P, q4, e1)
            if q1 is None:
                assert P[0] ** 2 + P[1] ** 2 < (model.d5 * math.cos(q4)) ** 2
                continue
            lhs = -P[0] * math.sin(q1) + P[1] * math.cos(q1)
            assert lhs == pytest.approx(-model.d5 * math.cos(q4), abs=1e-12)


def test_solve_q3_boundary_merges_branches(model):
    # At the edge of reach the two elbow branches meet.
    from scipy.optimize import minimize_scalar

    q = np.array([0.4, 0.3, 0.0, 0.7, 0.5, 0.0])

    def gap(q3):
        qq = q.copy()
        qq[2] = q3
        P = wrist_center(_pose_of(qq), model.d6)
        q1 = solve_q1(model, P, q[3], +1)
        a = solve_q3(model, P, q1, q[3], +1)
        b = solve_q3(model, P, q1, q[3], -1)
        return abs(wrap_angle(a - b))

    grid = np.linspace(-math.pi, math.pi, 721)
    k = int(np.argmin([gap(v) for v in grid]))
    res = minimize_scalar(gap, bounds=(grid[k - 1], grid[k + 1]), method="bounded", options={"xatol": 1e-12})
    assert res.fun < 1e-4
    assert gap(grid[k] + 0.5) > 0.1


def _q2_system(model, P, q1, q3, q4):
    """Both linear equations in (S2, C2), written out independently."""
    S1, C1, S3, C3, S4 = math.sin(q1), math.cos(q1), math.sin(q3), math.cos(q3), math.sin(q4)
    W1 = P[0] * C1 + P[1] * S1
    W2 = P[2] - model.d1
    Xb, Yb, Zb = model.d5 * S4, -model.d4, model.a3
    A = np.array([[W2, W1], [W1, -W2]])
    z = np.array([Xb * C3 + Yb * S3 + Zb, -Xb * S3 + Yb * C3])
    return A, z


def test_solve_q3_consistency_and_reach(model):
    rng = np.random.default_rng(8)
    checked = 0
    for q in random_in_limits(model, rng, 50):
        P = wrist_center(_pose_of(q), model.d6)
        for e1 in (1, -1):
            q1 = solve_q1(model, P, q[3], e1)
            if q1 is None:
                continue
            for e2 in (1, -1):
                q3 = solve_q3(model, P, q1, q[3], e2)
                if q3 is None:
                    continue
                A, z = _q2_system(model, P, q1, q3, q[3])
                S2, C2 = np.linalg.solve(A, z)
                assert S2 * S2 + C2 * C2 == pytest.approx(1.0, abs=1e-9)
                assert abs(wrap_angle(math.atan2(S2, C2) - solve_q2(model, P, q1, q3, q[3]))) < 1e-12
                checked += 1
    assert checked > 100
    far = np.array([5.0, 0.0, 0.0])
    for e1 in (1, -1):
        q1 = solve_q1(model, far, 0.0, e1)
        assert q1 is None or all(solve_q3(model, far, q1, 0.0, e2) is None for e2 in (1, -1))


def test_solve_q2_recovers_generator(model):
    rng = np.random.default_rng(9)
    for q in random_in_limits(model, rng, 100):
        P = wrist_center(_pose_of(q), model.d6)
        q2 = solve_q2(model, P, q[0], q[2], q[3])
        assert abs(wrap_angle(q2 - q[1])) < 1e-9


def test_solve_q2_published_row(model, reference_pose):
    P = wrist_center(reference_pose, model.d6)
    row = PUBLISHED_SOLUTIONS[0]
    assert abs(wrap_angle(solve_q2(model, P, row[0], row[2], row[3]) - row[1])) < 1e-3


def test_solve_q2_degenerate(model):
    with pytest.raises(DegenerateSystemError):
        solve_q2(model, np.array([0.0, 0.0, model.d1]), 0.0, 0.0, 0.0)


@PUBLISHED_ROUNDING
def test_residual_small_at_published_q4(model, reference_pose):
    sols = inverse_kinematics(model, reference_pose)
    worst = 0.0
    for row in PUBLISHED_SOLUTIONS:
        k = int(np.argmin([np.max(angle_diff(s.q, row)) for s in sols]))
        worst = max(worst, abs(residual(model, reference_pose, row[3], sols[k].branch)))
    assert worst < 1e-3


def test_residual_sign_changes(model, reference_pose):
    q4 = np.linspace(-math.pi, math.pi, 1441)
    curves = residual_curves(model, reference_pose, q4)
    total = 0
    for G in curves.values():
        ok = np.isfinite(G[:-1]) & np.isfinite(G[1:])
        total += int(np.count_nonzero(ok & (G[:-1] * G[1:] < 0)))
    assert total == 16


def test_residual_far_pose_is_none(model):
    far = Pose([4.0, 0.0, 0.0], np.eye(3))
    for br in BRANCHES:
        for q4 in np.linspace(-3, 3, 13):
            assert residual(model, far, q4, br) is None


def test_reference_pose_has_16_solutions(model, reference_pose):
    sols = inverse_kinematics(model, reference_pose)
    assert len(sols) == 16
    q4 = [s.q[3] for s in sols]
    assert q4 == sorted(q4)
    for s in sols:
        assert abs(s.residual) < 1e-9
        flange, _ = forward_kinematics(model, s.q)
        np.testing.assert_allclose(flange.p, reference_pose.p, atol=1e-9)
        np.testing.assert_allclose(flange.R, reference_pose.R, atol=1e-9)


def test_reference_solutions_near_published_rows(model, reference_pose):
    # Measured agreement with the rounded table: 5.3e-3 rad worst joint.
    assert _matching(inverse_kinematics(model, reference_pose), PUBLISHED_SOLUTIONS) < 6e-3


@PUBLISHED_ROUNDING
def test_reference_solutions_match_published_rows_1e3(model, reference_pose):
    assert _matching(inverse_kinematics(model, reference_pose), PUBLISHED_SOLUTIONS) < 1e-3


def test_unreachable_pose_is_empty(model):
    assert inverse_kinematics(model, Pose([2.0, 0.0, 0.3], np.eye(3))) == []


def test_round_trip_random(model):
    rng = np.random.default_rng(21)
    for q in random_in_limits(model, rng, 100):
        sols = inverse_kinematics(model, _pose_of(q))
        assert 0 < len(sols) <= 16
        gaps = [np.max(np.abs(wrap_angle(s.q - q))) for s in sols]
        assert min(gaps) < 1e-6


def test_soundness_and_branch_consistency(model):
    rng = np.random.default_rng(22)
    for q in random_in_limits(model, rng, 30):
        pose = _pose_of(q)
        P = wrist_center(pose, model.d6)
        for s in inverse_kinematics(model, pose):
            flange, _ = forward_kinematics(model, s.q)
            np.testing.assert_allclose(flange.p, pose.p, atol=1e-6)
            th, _ = rotation_to_axis_angle(flange.R @ pose.R.T)
            assert th < 1e-6
            q1 = solve_q1(model, P, s.q[3], s.branch.eps1)
            assert abs(wrap_angle(q1 - s.q[0])) < 1e-6
            q3 = solve_q3(model, P, q1, s.q[3], s.branch.eps2)
            assert abs(wrap_angle(q3 - s.q[2])) < 1e-6


def test_completeness_against_finer_scan(model):
    rng = np.random.default_rng(23)
    coarse = IkOptions(q4_step=math.radians(0.5))
    fine = IkOptions(q4_step=math.radians(0.05))
    for q in random_in_limits(model, rng, 50):
        pose = _pose_of(q)
        a = inverse_kinematics(model, pose, coarse)
        b = inverse_kinematics(model, pose, fine)
        for s in b:
            assert min(np.max(np.abs(wrap_angle(s.q - t.q))) for t in a) < 1e-4


def test_deterministic(model, reference_pose):
    a = inverse_kinematics(model, reference_pose)
    b = inverse_kinematics(model, reference_pose)
    assert [s.q.tolist() for s in a] == [s.q.tolist() for s in b]
    assert [s.branch for s in a] == [s.branch for s in b]


def test_runtime(model, reference_pose):
    inverse_kinematics(model, reference_pose)
    t = time.perf_counter()
    for _ in range(5):
        inverse_kinematics(model, reference_pose)
    assert (time.perf_counter() - t) / 5 < 0.1


def test_q2_q3_representatives_inside_limits(model):
    rng = np.random.default_rng(24)
    for q in random_in_limits(model, rng, 30):
        for s in inverse_kinematics(model, _pose_of(q)):
            for j in (0, 3, 4, 5):
                assert -math.pi < s.q[j] <= math.pi
            for j in (1, 2):
                lifted_inside = model.q_min[j] <= s.q[j] <= model.q_max[j]
                raw = wrap_angle(s.q[j])
                raw_inside = model.q_min[j] <= raw <= model.q_max[j]
                assert lifted_inside or not raw_inside


def test_branch_type():
    assert len(BRANCHES) == 4
    assert Branch(1, -1).eps2 == -1
