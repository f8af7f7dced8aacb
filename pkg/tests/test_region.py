import json
import math

import numpy as np
import pytest

from base_placer.optimizer import Disk
from base_placer.region import (
    DegenerateInputError,
    PointCloud2,
    RegionPolygon,
    RegionReport,
    alpha_shape,
    analyze,
    circumcircles,
    delaunay,
    largest_inscribed_circle,
    points_in_ring,
    ring_area,
)


def _grid(x0, x1, y0, y1, h):
    xs = np.arange(x0, x1 + h / 2, h)
    ys = np.arange(y0, y1 + h / 2, h)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def _disk_points(c, r, h):
    g = _grid(c[0] - r, c[0] + r, c[1] - r, c[1] + r, h)
    return g[np.hypot(g[:, 0] - c[0], g[:, 1] - c[1]) <= r]


def _poly(*xy):
    return RegionPolygon(np.asarray(xy, float))


L_SHAPE = _poly((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2))


def _brute_circle(poly, h=1e-3):
    """Dense grid maximum of the distance to the boundary over interior points."""
    lo, hi = poly.outer.min(axis=0), poly.outer.max(axis=0)
    g = _grid(lo[0], hi[0], lo[1], hi[1], h)
    g = g[poly.contains(g)]
    d = poly.boundary_distance(g)
    return g[np.argmax(d)], d.max()


# -- Delaunay -----------------------------------------------------------------


def test_square_two_triangles():
    tri = delaunay([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert len(tri.triangles) == 2
    shared = set(tri.triangles[0]) & set(tri.triangles[1])
    assert len(shared) == 2
    for t in tri.triangles:
        a, b, c = tri.vertices[t]
        assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0


def test_hexagon_plus_center():
    ang = np.arange(6) * math.pi / 3
    pts = np.vstack([[0.0, 0.0], np.column_stack([np.cos(ang), np.sin(ang)])])
    tri = delaunay(pts)
    assert len(tri.triangles) == 6
    assert all(0 in t for t in tri.triangles)


def _empty_circle_violations(tri):
    c, r = circumcircles(tri.vertices, tri.triangles)
    bad = 0
    for k, t in enumerate(tri.triangles):
        d = np.hypot(*(tri.vertices - c[k]).T)
        d[t] = np.inf
        bad += int(np.any(d < r[k] - 1e-9))
    return bad


def test_random_points_empty_circumcircles():
    rng = np.random.default_rng(0)
    tri = delaunay(rng.random((500, 2)))
    assert _empty_circle_violations(tri) == 0
    # Euler: 2n - 2 - h triangles for n points with h on the hull.
    n_hull = int(np.count_nonzero(tri.neighbors < 0))
    assert len(tri.triangles) == 2 * 500 - 2 - n_hull


def test_neighbors_are_mutual():
    rng = np.random.default_rng(1)
    tri = delaunay(rng.random((80, 2)))
    for t, row in enumerate(tri.neighbors):
        for k, n in enumerate(row):
            if n >= 0:
                assert t in tri.neighbors[n]
                edge = set(tri.triangles[t]) - {tri.triangles[t][k]}
                assert edge <= set(tri.triangles[n])


def test_duplicates_merged():
    pts = np.array([[0, 0], [1, 0], [0, 1], [1, 0], [0, 0]], float)
    tri = delaunay(pts)
    assert len(tri.vertices) == 3
    assert sorted(int(i) for s in tri.source for i in s) == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("pts", [[[0, 0], [1, 1], [2, 2], [3, 3]], [[0, 0], [1, 0]], [[1, 1]] * 5])
def test_degenerate_input(pts):
    with pytest.raises(DegenerateInputError):
        delaunay(pts)


# -- alpha shape --------------------------------------------------------------


def test_square_grid_alpha_shape():
    tri = delaunay(_grid(0, 1, 0, 1, 0.02))
    polys = alpha_shape(tri, 0.05)
    assert len(polys) == 1
    assert polys[0].area == pytest.approx(1.0, rel=0.02)
    assert ring_area(polys[0].outer) > 0
    assert len(polys[0].member_points) == 51 * 51


def test_two_blobs_two_clusters():
    pts = np.vstack([_disk_points((0, 0), 0.2, 0.02), _disk_points((1, 0), 0.2, 0.02)])
    polys = alpha_shape(delaunay(pts), 0.05)
    assert len(polys) == 2


def test_annulus_has_one_hole():
    g = _grid(-1, 1, -1, 1, 0.02)
    r = np.hypot(*g.T)
    polys = alpha_shape(delaunay(g[(r >= 0.4) & (r <= 0.9)]), 0.05)
    assert len(polys) == 1
    p = polys[0]
    assert len(p.holes) == 1 and ring_area(p.holes[0]) < 0
    expected = math.pi * (0.9**2 - 0.4**2)
    assert p.area == pytest.approx(expected, rel=0.05)
    assert not p.contains([[0.0, 0.0]])[0] and p.contains([[0.65, 0.0]])[0]


def test_tiny_alpha_gives_nothing():
    assert alpha_shape(delaunay(_grid(0, 1, 0, 1, 0.1)), 0.01) == []
    with pytest.raises(ValueError):
        alpha_shape(delaunay(_grid(0, 1, 0, 1, 0.1)), 0.0)


def test_alpha_monotone():
    rng = np.random.default_rng(3)
    tri = delaunay(rng.random((400, 2)))
    _, r = circumcircles(tri.vertices, tri.triangles)
    alphas = [0.02, 0.04, 0.06, 0.1, 1.0]
    kept = [set(np.flatnonzero(r <= a)) for a in alphas]
    assert all(a <= b for a, b in zip(kept, kept[1:]))
    areas = [sum(p.area for p in alpha_shape(tri, a)) for a in alphas]
    assert all(a <= b + 1e-12 for a, b in zip(areas, areas[1:]))


def test_members_inside_or_on_polygon():
    rng = np.random.default_rng(4)
    pts = np.vstack([rng.random((300, 2)), rng.random((200, 2)) * 0.5 + [2, 0]])
    for p in alpha_shape(delaunay(pts), 0.08):
        m = pts[p.member_points]
        ok = p.contains(m) | (p.boundary_distance(m) < 1e-9)
        assert ok.all()


def test_rings_conserve_kept_area():
    # Ragged random clouds pinch at vertices; no ring may be lost or doubled.
    for seed in range(5):
        pts = np.random.default_rng(seed).random((300, 2))
        tri = delaunay(pts)
        c, r = circumcircles(tri.vertices, tri.triangles)
        for alpha in (0.03, 0.05, 0.08):
            kept = tri.triangles[r <= alpha]
            v = tri.vertices
            ab, ac = v[kept[:, 1]] - v[kept[:, 0]], v[kept[:, 2]] - v[kept[:, 0]]
            tri_area = 0.5 * np.sum(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
            polys = alpha_shape(tri, alpha)
            assert sum(p.area for p in polys) == pytest.approx(tri_area, rel=1e-9, abs=1e-12)
            for p in polys:
                assert ring_area(p.outer) > 0 and all(ring_area(h) < 0 for h in p.holes)


# -- inscribed circle ---------------------------------------------------------


def test_unit_square_circle():
    c = largest_inscribed_circle(_poly((0, 0), (1, 0), (1, 1), (0, 1)), 0.01)
    assert abs(c.center[0] - 0.5) <= 0.01 and abs(c.center[1] - 0.5) <= 0.01
    assert abs(c.radius - 0.5) <= 0.01


def test_rectangle_circle():
    c = largest_inscribed_circle(_poly((0, 0), (2, 0), (2, 1), (0, 1)), 0.01)
    assert abs(c.radius - 0.5) <= 0.01
    assert 0.5 - 0.01 <= c.center[0] <= 1.5 + 0.01 and abs(c.center[1] - 0.5) <= 0.01


@pytest.mark.parametrize("step", [0.02, 0.01])
def test_l_shape_matches_grid_oracle(step):
    c = largest_inscribed_circle(L_SHAPE, step)
    _, r_ref = _brute_circle(L_SHAPE)
    assert abs(c.radius - r_ref) <= 2 * step


def _valid_circle(poly, c, step):
    ang = np.linspace(0, 2 * math.pi, 360, endpoint=False)
    rim = np.asarray(c.center) + c.radius * np.column_stack([np.cos(ang), np.sin(ang)])
    outside = ~poly.contains(rim)
    assert np.all(poly.boundary_distance(rim[outside]) <= step)
    rng = np.random.default_rng(0)
    rr = c.radius * np.sqrt(rng.random(500)) * 0.999
    th = rng.random(500) * 2 * math.pi
    inner = np.asarray(c.center) + np.column_stack([rr * np.cos(th), rr * np.sin(th)])
    assert poly.contains(inner).all()
    assert poly.contains([c.center])[0]
    assert np.all(poly.boundary_distance([c.center]) >= c.radius - 1e-9)


def test_circle_validity_on_alpha_shapes():
    g = _grid(-1, 1, -1, 1, 0.02)
    r = np.hypot(*g.T)
    keep = ((r >= 0.4) & (r <= 0.9)) | ((g[:, 0] > 0.8) & (np.abs(g[:, 1]) < 0.2))
    for poly in alpha_shape(delaunay(g[keep]), 0.05):
        _valid_circle(poly, largest_inscribed_circle(poly, 0.01), 0.01)
    _valid_circle(L_SHAPE, largest_inscribed_circle(L_SHAPE, 0.01), 0.01)


def test_sliver_is_degenerate():
    c = largest_inscribed_circle(_poly((0, 0), (1, 0), (1, 1e-4), (0, 1e-4)), 0.01)
    assert c.degenerate and c.radius == 0.0


# -- pipeline -----------------------------------------------------------------


def _cloud(feasible, h=0.02, extent=1.0):
    g = _grid(-extent, extent, -extent, extent, h)
    return PointCloud2(g, np.where(feasible(g), 0.0, 0.7))


def test_blob_radius():
    cloud = _cloud(lambda g: np.hypot(*(g - [0.3, -0.2]).T) <= 0.2 + 1e-9)
    clusters = analyze(cloud)
    assert len(clusters) == 1
    c = clusters[0].circle
    assert c.radius == pytest.approx(0.2, abs=0.02)
    assert np.hypot(c.center[0] - 0.3, c.center[1] + 0.2) < 0.02


def test_small_blob_dropped():
    cloud = _cloud(lambda g: np.hypot(*(g - [0.3, -0.2]).T) <= 0.04 + 1e-9)
    assert analyze(cloud) == []


def test_partial_scores_not_feasible():
    cloud = _cloud(lambda g: np.hypot(*g.T) <= 0.3)
    cloud = PointCloud2(cloud.points, np.where(cloud.scores == 0, 0.02, cloud.scores))
    assert analyze(cloud) == []
    assert len(analyze(cloud, score_eps=0.05)) == 1


def test_sorted_by_radius_and_forbidden_dropped():
    big = lambda g: np.hypot(*(g - [-0.5, 0]).T) <= 0.3
    small = lambda g: np.hypot(*(g - [0.6, 0]).T) <= 0.15
    cloud = _cloud(lambda g: big(g) | small(g))
    clusters = analyze(cloud)
    assert [round(c.circle.radius, 1) for c in clusters] == [0.3, 0.1]
    kept = analyze(cloud, forbidden=Disk((-0.5, 0.5), 0.25))
    assert len(kept) == 1 and kept[0].circle.center[0] > 0


def test_no_feasible_points():
    assert analyze(PointCloud2(np.random.default_rng(0).random((50, 2)), np.ones(50))) == []
    assert analyze(PointCloud2([[0, 0], [1, 1]], [0, 0])) == []


def test_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud2([[0, 0], [1, 1]], [0.0])
    with pytest.raises(ValueError):
        PointCloud2([[0, np.nan]], [0.0])


def test_report_json(tmp_path):
    cloud = _cloud(lambda g: np.hypot(*g.T) <= 0.3)
    rep = RegionReport(analyze(cloud), {"alpha": 0.05, "min_radius": 0.05})
    doc = json.loads(rep.to_json(tmp_path / "regions.json"))
    assert set(doc) == {"clusters", "settings"}
    c = doc["clusters"][0]
    assert set(c) == {"polygon", "circle", "n_points"}
    assert set(c["circle"]) == {"cx", "cy", "r"}
    assert c["n_points"] == int(np.count_nonzero(cloud.scores == 0))
    ring = np.array(c["polygon"]["outer"])
    assert points_in_ring(np.array([[c["circle"]["cx"], c["circle"]["cy"]]]), ring)[0]
