import math

import numpy as np
import pytest

from base_placer.kinematics import Pose, crx10ia_l

# The 16 published solutions for REFERENCE_POSE, rounded to 3 decimals.
PUBLISHED_SOLUTIONS = np.array([
    [1.108, 2.597, 2.062, -2.896, 2.690, 0.498],
    [0.900, 0.953, 0.858, -2.601, -0.169, -0.334],
    [0.312, 1.050, 0.713, -1.941, -0.679, -1.167],
    [3.129, 0.259, 0.688, -1.546, 2.241, -1.836],
    [-3.050, 2.077, 1.912, -1.436, 0.824, 1.165],
    [-0.393, 2.850, 1.922, -1.186, -1.762, 1.817],
    [-2.230, 0.461, 0.861, -0.526, 2.983, -0.318],
    [-2.226, 2.191, 2.003, -0.521, 0.150, 0.721],
    [-2.035, 0.543, 1.080, 0.248, 2.691, 0.500],
    [-2.240, 2.188, 2.283, 0.538, -0.168, -0.332],
    [-2.827, 2.090, 2.428, 1.198, -0.677, -1.165],
    [-0.013, 2.881, 2.452, 1.593, 2.240, -1.837],
    [0.089, 1.063, 1.229, 1.703, 0.826, 1.165],
    [2.749, 0.290, 1.219, 1.953, -1.764, 1.817],
    [0.909, 2.680, 2.280, 2.613, 2.983, -0.320],
    [0.913, 0.949, 1.138, 2.618, 0.151, 0.722],
])
REFERENCE_POSE = [-0.2406, -0.1188, 0.5603, 2.6204, 1.1236, 0.4276]
TORCH_TCP = [0.038, 0.0, 0.409, math.pi / 4, 0.0, -math.pi / 2]

# Plain re-typing of the MDH table, kept apart from the package on purpose.
_D = [0.245, 0.0, 0.0, 0.540, 0.150, 0.160]
_A = [0.0, 0.0, 0.710, 0.0, 0.0, 0.0]
_ALPHA = [0.0, math.pi / 2, 0.0, -math.pi / 2, math.pi / 2, -math.pi / 2]


def mdh_matrix(d, a, alpha, theta):
    ct, st, ca, sa = math.cos(theta), math.sin(theta), math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st, 0.0, a],
        [ca * st, ca * ct, -sa, -d * sa],
        [sa * st, sa * ct, ca, d * ca],
        [0.0, 0.0, 0.0, 1.0],
    ])


def oracle_fk(q):
    """Flange transform by a bare product of the six link matrices."""
    M = np.eye(4)
    for i in range(6):
        M = M @ mdh_matrix(_D[i], _A[i], _ALPHA[i], q[i])
    return M


def oracle_zyx(R):
    theta = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    return np.array([math.atan2(R[2, 1], R[2, 2]), theta, math.atan2(R[1, 0], R[0, 0])])


def angle_diff(a, b):
    return np.abs((np.asarray(a) - np.asarray(b) + np.pi) % (2 * np.pi) - np.pi)


def random_in_limits(model, rng, n):
    return rng.uniform(model.q_min, model.q_max, size=(n, 6))


@pytest.fixture(scope="session")
def model():
    return crx10ia_l()


@pytest.fixture(scope="session")
def reference_pose():
    return Pose.from_vector(REFERENCE_POSE)


@pytest.fixture(scope="session")
def torch_tcp():
    return Pose.from_vector(TORCH_TCP)


# -- acceptance verdicts --------------------------------------------------------

ACCEPTANCE: list[tuple[str, bool, str]] = []


def verdict(label: str, ok: bool, detail: str) -> bool:
    """Record one acceptance line; the caller asserts the returned flag."""
    ok = bool(ok)
    ACCEPTANCE.append((label, ok, detail))
    print(f"CRITERION {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE, key=lambda r: (int(r[0].split()[0]), r[0])):
        terminalreporter.write_line(f"CRITERION {label}: {'PASS' if ok else 'FAIL'} ({detail})")
