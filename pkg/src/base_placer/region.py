"""Feasible regions from a scored point cloud.

Feasible points are triangulated, triangles with a circumradius above
``alpha`` are discarded (alpha shape), and each connected piece of what is
left becomes a polygon with its holes.  The safest spot in a polygon is the
centre of its largest inscribed circle, found among the Voronoi vertices of
densely sampled boundary points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

__all__ = [
    "DegenerateInputError",
    "PointCloud2",
    "Triangulation",
    "RegionPolygon",
    "InscribedCircle",
    "Cluster",
    "RegionReport",
    "delaunay",
    "circumcircles",
    "alpha_shape",
    "largest_inscribed_circle",
    "analyze",
    "points_in_ring",
    "distance_to_segments",
    "ring_area",
]

_MERGE_TOL = 1e-9
_AREA_EPS = 1e-12


class DegenerateInputError(ValueError):
    """Fewer than three distinct points, or all of them on one line."""


@dataclass(frozen=True, eq=False)
class PointCloud2:
    points: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        sc = np.asarray(self.scores, dtype=float).reshape(-1)
        if len(pts) != len(sc):
            raise ValueError(f"{len(pts)} points but {len(sc)} scores")
        if np.isnan(pts).any() or np.isnan(sc).any():
            raise ValueError("point cloud contains NaN")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scores", sc)

    def __len__(self):
        return len(self.scores)

    @classmethod
    def from_log(cls, log) -> "PointCloud2":
        return cls(log.points, log.scores)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Delaunay triangulation with counter-clockwise triangles.

    ``neighbors[t, k]`` is the triangle across the edge opposite vertex
    ``k`` (-1 on the hull).  ``source[v]`` lists the input indices merged into
    vertex ``v``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    neighbors: np.ndarray
    source: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class RegionPolygon:
    """Outer ring counter-clockwise, holes clockwise, rings not repeated at the end."""

    outer: np.ndarray
    holes: tuple[np.ndarray, ...] = ()
    member_points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def rings(self) -> list[np.ndarray]:
        return [self.outer, *self.holes]

    @property
    def area(self) -> float:
        return ring_area(self.outer) + sum(ring_area(h) for h in self.holes)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.concatenate([r for r in self.rings])
        b = np.concatenate([np.roll(r, -1, axis=0) for r in self.rings])
        return a, b

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        inside = points_in_ring(xy, self.outer)
        for h in self.holes:
            inside &= ~points_in_ring(xy, h)
        return inside

    def boundary_distance(self, xy) -> np.ndarray:
        a, b = self.edges()
        return distance_to_segments(np.atleast_2d(np.asarray(xy, dtype=float)), a, b)

    def to_dict(self) -> dict:
        return {
            "outer": self.outer.tolist(),
            "holes": [h.tolist() for h in self.holes],
        }


@dataclass(frozen=True)
class InscribedCircle:
    center: tuple[float, float]
    radius: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"cx": self.center[0], "cy": self.center[1], "r": self.radius}


@dataclass(frozen=True)
class Cluster:
    polygon: RegionPolygon
    circle: InscribedCircle

    @property
    def n_points(self) -> int:
        return len(self.polygon.member_points)

    def to_dict(self) -> dict:
        return {"polygon": self.polygon.to_dict(), "circle": self.circle.to_dict(), "n_points": self.n_points}


@dataclass
class RegionReport:
    clusters: list[Cluster]
    settings: dict

    def to_dict(self) -> dict:
        return {"clusters": [c.to_dict() for c in self.clusters], "settings": dict(self.settings)}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


# -- small geometry helpers ---------------------------------------------------


def ring_area(ring) -> float:
    """Signed area, positive for counter-clockwise rings."""
    r = np.asarray(ring, dtype=float)
    x, y = r[:, 0], r[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def points_in_ring(xy: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd ray casting; points exactly on an edge may land either way."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    ring = np.asarray(ring, dtype=float)
    a, b = ring, np.roll(ring, -1, axis=0)
    x = xy[:, 0:1]
    y = xy[:, 1:2]
    straddle = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    crossings = straddle & (x < xc)
    return (np.count_nonzero(crossings, axis=1) % 2) == 1


def distance_to_segments(xy: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Distance from every point of ``xy`` to the nearest segment ``a[k]-b[k]``."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd > 0, dd, 1.0)
    out = np.empty(len(xy))
    for s in range(0, len(xy), chunk):
        p = xy[s:s + chunk, None, :]
        t = np.clip(np.einsum("pkj,kj->pk", p - a, d) / dd, 0.0, 1.0)
        diff = p - (a + t[..., None] * d)
        out[s:s + chunk] = np.sqrt(np.min(np.einsum("pkj,pkj->pk", diff, diff), axis=1))
    return out


def circumcircles(pts: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Circumcentres and radii; slivers with area below 1e-12 get radius inf."""
    A, B, C = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    b = B - A
    c = C - A
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    ok = np.abs(d) * 0.25 > _AREA_EPS
    dsafe = np.where(ok, d, 1.0)
    bb = np.einsum("ij,ij->i", b, b)
    cc = np.einsum("ij,ij->i", c, c)
    ux = (c[:, 1] * bb - b[:, 1] * cc) / dsafe
    uy = (b[:, 0] * cc - c[:, 0] * bb) / dsafe
    centers = A + np.column_stack([ux, uy])
    radii = np.where(ok, np.hypot(ux, uy), np.inf)
    centers[~ok] = np.nan
    return centers, radii


# -- triangulation --------------------------------------------------------------


def _merge_duplicates(points: np.ndarray):
    tree = cKDTree(points)
    pairs = tree.query_pairs(_MERGE_TOL, output_type="ndarray")
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(points))], dtype=int)
    keep, inverse = np.unique(roots, return_inverse=True)
    groups = [np.flatnonzero(inverse == k) for k in range(len(keep))]
    return points[keep], groups


def delaunay(points) -> Triangulation:
    """Delaunay triangulation after merging points closer than 1e-9."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateInputError(f"need at least 3 points, got {len(pts)}")
    verts, groups = _merge_duplicates(pts)
    if len(verts) < 3:
        raise DegenerateInputError("fewer than 3 distinct points")
    centred = verts - verts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateInputError("all points are collinear")
    try:
        dt = Delaunay(verts)
    except QhullError as exc:
        raise DegenerateInputError(str(exc)) from exc
    tris = dt.simplices.astype(int).copy()
    nbrs = dt.neighbors.astype(int).copy()
    p0, p1, p2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    cw = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])) < 0
    # Swapping vertices 1 and 2 flips orientation; neighbours follow their opposite vertex.
    tris[cw, 1], tris[cw, 2] = tris[cw, 2].copy(), tris[cw, 1].copy()
    nbrs[cw, 1], nbrs[cw, 2] = nbrs[cw, 2].copy(), nbrs[cw, 1].copy()
    return Triangulation(verts, tris, nbrs, tuple(groups))


# -- alpha shape ----------------------------------------------------------------


def _components(kept: np.ndarray, nbrs: np.ndarray) -> list[np.ndarray]:
    label = np.full(len(kept), -1, dtype=int)
    comps = []
    for seed in np.flatnonzero(kept):
        if label[seed] >= 0:
            continue
        stack = [seed]
        label[seed] = len(comps)
        members = []
        while stack:
            t = stack.pop()
            members.append(t)
            for n in nbrs[t]:
                if n >= 0 and kept[n] and label[n] < 0:
                    label[n] = len(comps)
                    stack.append(n)
        comps.append(np.array(sorted(members), dtype=int))
    return comps


def _trace_rings(verts: np.ndarray, edges: list[tuple[int, int]]) -> list[list[int]]:
    """Link directed boundary edges (interior on the left) into closed rings.

    Where several boundary edges leave one vertex, take the one reached first
    turning clockwise from the incoming edge; this keeps each ring simple.
    """
    out: dict[int, list[int]] = {}
    for a, b in edges:
        out.setdefault(a, []).append(b)
    used: set[tuple[int, int]] = set()
    rings = []
    for start in sorted(edges):
        if start in used:
            continue
        ring = [start[0]]
        used.add(start)
        prev, cur = start
        while cur != start[0] or len(ring) == 0:
            ring.append(cur)
            cands = [w for w in out.get(cur, []) if (cur, w) not in used]
            if not cands:
                break
            if len(cands) == 1:
                nxt = cands[0]
            else:
                back = math.atan2(verts[prev, 1] - verts[cur, 1], verts[prev, 0] - verts[cur, 0])

                def cw_turn(w):
                    ang = math.atan2(verts[w, 1] - verts[cur, 1], verts[w, 0] - verts[cur, 0])
                    turn = (back - ang) % (2.0 * math.pi)
                    return turn if turn > 0 else 2.0 * math.pi

                nxt = min(cands, key=cw_turn)
            used.add((cur, nxt))
            prev, cur = cur, nxt
        if ring[-1] == ring[0] and len(ring) > 1:
            ring.pop()
        if len(ring) >= 3:
            rings.append(ring)
    return rings


def alpha_shape(tri: Triangulation, alpha: float) -> list[RegionPolygon]:
    """Polygons of the triangles whose circumradius is at most ``alpha``.

    Triangles connected through shared edges form one polygon.  Returns an
    empty list when nothing survives the filter.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    _, radii = circumcircles(tri.vertices, tri.triangles)
    kept = radii <= alpha
    polys = []
    for comp in _components(kept, tri.neighbors):
        in_comp = np.zeros(len(kept), dtype=bool)
        in_comp[comp] = True
        edges = []
        for t in comp:
            v = tri.triangles[t]
            for k in range(3):
                n = tri.neighbors[t, k]
                if n < 0 or not in_comp[n]:
                    edges.append((int(v[(k + 1) % 3]), int(v[(k + 2) % 3])))
        rings = [tri.vertices[r] for r in _trace_rings(tri.vertices, edges)]
        areas = [ring_area(r) for r in rings]
        outers = [r for r, a in zip(rings, areas) if a > 0]
        holes = tuple(r for r, a in zip(rings, areas) if a < 0)
        if not outers:
            continue
        # An edge-connected component has one outer ring: at a pinch vertex the
        # clockwise-turn rule closes the pocket off as a hole.
        outer = max(outers, key=ring_area)
        vids = np.unique(tri.triangles[comp])
        members = np.sort(np.concatenate([tri.source[v] for v in vids]))
        polys.append(RegionPolygon(outer=outer, holes=holes, member_points=members))
    polys.sort(key=lambda p: -p.area)
    return polys


# -- inscribed circle -------------------------------------------------------------


def _sample_ring(ring: np.ndarray, step: float) -> np.ndarray:
    a = ring
    b = np.roll(ring, -1, axis=0)
    out = []
    for p, q in zip(a, b):
        n = max(1, int(math.ceil(np.linalg.norm(q - p) / step)))
        t = np.arange(n)[:, None] / n
        out.append(p + t * (q - p))
    return np.concatenate(out)


def largest_inscribed_circle(poly: RegionPolygon, edge_step: float = 0.01) -> InscribedCircle:
    """Best Voronoi vertex of the boundary samples lying strictly inside ``poly``.

    The radius is the exact distance from that vertex to the polygon edges.
    A polygon with no interior vertex, or thinner than ``edge_step``
    everywhere, gives a zero-radius circle flagged ``degenerate``.
    """
    if not edge_step > 0:
        raise ValueError("edge_step must be > 0")
    samples = np.concatenate([_sample_ring(r, edge_step) for r in poly.rings])
    samples, _ = _merge_duplicates(samples)
    cand = np.zeros((0, 2))
    if len(samples) >= 3:
        try:
            dt = Delaunay(samples)
            centers, radii = circumcircles(samples, dt.simplices)
            cand = centers[np.isfinite(radii)]
        except QhullError:
            pass
    if len(cand):
        cand = cand[poly.contains(cand)]
    if len(cand):
        dist = poly.boundary_distance(cand)
        inside = dist > 0
        cand, dist = cand[inside], dist[inside]
    if not len(cand) or dist.max() < 0.5 * edge_step:
        # Thinner than the sampling step: the radius is not resolved.
        c = poly.outer.mean(axis=0)
        return InscribedCircle((float(c[0]), float(c[1])), 0.0, degenerate=True)
    k = int(np.argmax(dist))
    return InscribedCircle((float(cand[k, 0]), float(cand[k, 1])), float(dist[k]))


# -- pipeline ---------------------------------------------------------------------


def _touches(poly: RegionPolygon, region) -> bool:
    """Whether ``poly`` overlaps a forbidden region (disk or polygon)."""
    if hasattr(region, "radius"):
        c = np.asarray(region.center, dtype=float)[None, :]
        return bool(poly.contains(c)[0] or poly.boundary_distance(c)[0] <= region.radius)
    verts = np.asarray(region.vertices, dtype=float)
    if poly.contains(verts).any():
        return True
    return bool(region.contains(np.concatenate(poly.rings)).any())


def analyze(cloud: PointCloud2, alpha: float = 0.05, min_radius: float = 0.05,
            edge_step: float = 0.01, forbidden=None, score_eps: float = 0.0) -> list[Cluster]:
    """Feasible clusters of ``cloud``, widest inscribed circle first.

    Only points scoring at most ``score_eps`` (exactly 0 by default) are
    used.  Clusters whose circle is smaller than ``min_radius``, or which
    overlap the ``forbidden`` region, are dropped.
    """
    keep = cloud.scores <= score_eps
    pts = cloud.points[keep]
    idx = np.flatnonzero(keep)
    try:
        tri = delaunay(pts)
    except DegenerateInputError:
        return []
    clusters = []
    for poly in alpha_shape(tri, alpha):
        poly = RegionPolygon(poly.outer, poly.holes, idx[poly.member_points])
        if forbidden is not None and _touches(poly, forbidden):
            continue
        circle = largest_inscribed_circle(poly, edge_step)
        if circle.degenerate or circle.radius < min_radius:
            continue
        clusters.append(Cluster(poly, circle))
    clusters.sort(key=lambda c: (-c.circle.radius, c.circle.center))
    return clusters
