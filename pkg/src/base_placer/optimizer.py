"""Particle swarm exploration of the placement plane with the DCluster topology.

The swarm size is ``N * (N + 1)`` for ``N`` particles per cluster.  Every
iteration the particles are ranked from worst to best and cut into ``N + 1``
fully connected clusters; each member of the worst (central) cluster is also
linked to the worst particle of one better cluster.  Particles start on a
circle along the border of the search box, heading for the trajectory.

Every evaluation is logged: downstream analysis needs the whole cloud, not
just the optimum.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Disk",
    "Polygon2",
    "SwarmConfig",
    "Swarm",
    "ExplorationLog",
    "init_swarm",
    "dcluster_clusters",
    "dcluster_topology",
    "step",
    "update_personal_best",
    "evaluate",
    "evaluate_points",
    "optimize",
]


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.hypot(xy[:, 0] - self.center[0], xy[:, 1] - self.center[1]) <= self.radius


@dataclass(frozen=True)
class Polygon2:
    vertices: tuple[tuple[float, float], ...]

    def contains(self, xy) -> np.ndarray:
        from .region import points_in_ring

        return points_in_ring(np.atleast_2d(np.asarray(xy, dtype=float)), np.asarray(self.vertices))


@dataclass(frozen=True)
class SwarmConfig:
    """Swarm settings; ``bounds`` is ``(xmin, xmax, ymin, ymax)`` in metres.

    ``centered_exploration`` draws the exploration kick from [-0.5, 0.5]^2
    instead of [0, 1]^2.  ``v0_fraction`` sets the initial speed as a fraction
    of the bounds diagonal.
    """

    n_cluster: int = 4
    iterations: int = 50
    w: float = 0.8
    c1: float = 0.35
    c2: float = 0.15
    e: float = 0.2
    seed: int = 0
    bounds: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0)
    forbidden_region: Disk | Polygon2 | None = None
    centered_exploration: bool = False
    v0_fraction: float = 0.05
    workers: int = 1

    def __post_init__(self):
        if self.n_cluster < 1:
            raise ValueError("n_cluster must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        for name in ("w", "c1", "c2", "e"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        xmin, xmax, ymin, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("bounds must be (xmin, xmax, ymin, ymax) with min < max")

    @property
    def size(self) -> int:
        return self.n_cluster * (self.n_cluster + 1)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[0], self.bounds[2]], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[1], self.bounds[3]], dtype=float)


@dataclass
class Swarm:
    x: np.ndarray
    v: np.ndarray
    f: np.ndarray
    pbest_x: np.ndarray
    pbest_f: np.ndarray
    iteration: int = 0

    @property
    def size(self) -> int:
        return self.x.shape[0]

    def best(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.pbest_f))
        return self.pbest_x[k].copy(), float(self.pbest_f[k])


@dataclass
class ExplorationLog:
    """Every evaluation as ``(iteration, particle_id, x, y, score)``, in
    ``(iteration, particle_id)`` order."""

    records: list[tuple[int, int, float, float, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, iteration: int, xs: np.ndarray, scores: Sequence[float]):
        for pid, (xy, s) in enumerate(zip(xs, scores)):
            self.records.append((iteration, pid, float(xy[0]), float(xy[1]), float(s)))

    @property
    def points(self) -> np.ndarray:
        return np.array([[r[2], r[3]] for r in self.records], dtype=float).reshape(-1, 2)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r[4] for r in self.records], dtype=float)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("iteration,particle_id,x,y,score\n")
        for it, pid, x, y, s in self.records:
            buf.write(f"{it},{pid},{x!r},{y!r},{s!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ExplorationLog":
        lines = Path(path).read_text().strip().splitlines()[1:]
        recs = []
        for line in lines:
            it, pid, x, y, s = line.split(",")
            recs.append((int(it), int(pid), float(x), float(y), float(s)))
        return cls(recs)


def init_swarm(cfg: SwarmConfig, traj_center) -> Swarm:
    """Particles evenly spaced on the largest circle inscribed in the bounds,
    each moving toward ``traj_center`` at ``v0_fraction`` of the bounds diagonal."""
    lo, hi = cfg.lower, cfg.upper
    center = 0.5 * (lo + hi)
    radius = 0.5 * float(np.min(hi - lo))
    S = cfg.size
    ang = 2.0 * math.pi * np.arange(S) / S
    x = center + radius * np.column_stack([np.cos(ang), np.sin(ang)])
    d = np.asarray(traj_center, dtype=float)[:2] - x
    n = np.linalg.norm(d, axis=1, keepdims=True)
    n[n == 0] = 1.0
    v0 = cfg.v0_fraction * float(np.linalg.norm(hi - lo))
    v = v0 * d / n
    f = np.full(S, np.inf)
    return Swarm(x=x, v=v, f=f, pbest_x=x.copy(), pbest_f=f.copy())


def dcluster_clusters(scores, n_cluster: int) -> list[list[int]]:
    """``N + 1`` clusters of particle ids, worst cluster first, best last.

    Within a cluster ids run from worst to best; ties keep id order.
    """
    scores = np.asarray(scores, dtype=float)
    N = n_cluster
    if scores.size != N * (N + 1):
        raise ValueError(f"DCluster needs N*(N+1) = {N * (N + 1)} particles, got {scores.size}")
    # Stable sort on -score: worst first, equal scores keep particle-id order.
    order = np.argsort(-scores, kind="stable")
    return [order[k * N:(k + 1) * N].tolist() for k in range(N + 1)]


def dcluster_topology(scores, n_cluster: int) -> list[set[int]]:
    """Neighbourhood (including self) of every particle id.

    The k-th member of the central (worst) cluster is linked both ways to the
    worst member of cluster ``k + 1``.
    """
    clusters = dcluster_clusters(scores, n_cluster)
    hoods: list[set[int]] = [set() for _ in range(len(scores))]
    for members in clusters:
        for i in members:
            hoods[i].update(members)
    central = clusters[0]
    for k, i in enumerate(central):
        j = clusters[k + 1][0]
        hoods[i].add(j)
        hoods[j].add(i)
    return hoods


def step(swarm: Swarm, neighborhoods: Sequence[set[int]], rng: np.random.Generator,
         cfg: SwarmConfig) -> Swarm:
    """Velocity and position update; positions are clamped to the bounds and the
    clamped velocity components zeroed.

    Random draws: one ``(S, 3, 2)`` block per iteration, i.e. for each particle
    in id order ``r1``, ``r2`` then the exploration vector.
    """
    S = swarm.size
    r = rng.random((S, 3, 2))
    lbest = np.empty_like(swarm.x)
    for i, hood in enumerate(neighborhoods):
        ids = sorted(hood)
        k = ids[int(np.argmin(swarm.pbest_f[ids]))]
        lbest[i] = swarm.pbest_x[k]
    re = r[:, 2] - 0.5 if cfg.centered_exploration else r[:, 2]
    v = (
        cfg.w * swarm.v
        + cfg.c1 * r[:, 0] * (swarm.pbest_x - swarm.x)
        + cfg.c2 * r[:, 1] * (lbest - swarm.x)
        + cfg.e * re
    )
    x = swarm.x + v
    lo, hi = cfg.lower, cfg.upper
    out = (x < lo) | (x > hi)
    x = np.clip(x, lo, hi)
    v = np.where(out, 0.0, v)
    return Swarm(x=x, v=v, f=swarm.f.copy(), pbest_x=swarm.pbest_x.copy(),
                 pbest_f=swarm.pbest_f.copy(), iteration=swarm.iteration + 1)


def update_personal_best(swarm: Swarm, f) -> Swarm:
    f = np.asarray(f, dtype=float)
    better = f <= swarm.pbest_f
    swarm.f = f
    swarm.pbest_x = np.where(better[:, None], swarm.x, swarm.pbest_x)
    swarm.pbest_f = np.where(better, f, swarm.pbest_f)
    return swarm


def evaluate_points(objective: Callable[[np.ndarray], float], xs: np.ndarray,
                    forbidden=None, workers: int = 1) -> list[float]:
    """Scores in input order; points in ``forbidden`` score 1 without a call.

    With ``workers > 1`` the calls run on a thread pool; the result order
    does not depend on the worker count.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    blocked = forbidden.contains(xs) if forbidden is not None else np.zeros(len(xs), dtype=bool)
    todo = [i for i in range(len(xs)) if not blocked[i]]
    scores = [1.0] * len(xs)
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: float(objective(xs[i].copy())), todo))
    else:
        results = [float(objective(xs[i].copy())) for i in todo]
    for i, s in zip(todo, results):
        scores[i] = s
    return scores


def evaluate(objective: Callable[[np.ndarray], float], xs: np.ndarray, cfg: SwarmConfig) -> list[float]:
    return evaluate_points(objective, xs, cfg.forbidden_region, cfg.workers)


def optimize(objective: Callable[[np.ndarray], float], cfg: SwarmConfig,
             traj_center=None, callback=None) -> ExplorationLog:
    """Run the swarm and return the log of all ``S * (iterations + 1)`` evaluations.

    ``traj_center`` (defaults to the bounds centre) only sets the initial
    headings.  ``callback(swarm)`` is called after each evaluation round.
    """
    if traj_center is None:
        traj_center = 0.5 * (cfg.lower + cfg.upper)
    rng = np.random.default_rng(cfg.seed)
    swarm = init_swarm(cfg, traj_center)
    log = ExplorationLog()

    f = evaluate(objective, swarm.x, cfg)
    swarm = update_personal_best(swarm, f)
    log.append(0, swarm.x, f)
    if callback:
        callback(swarm)
    for it in range(1, cfg.iterations + 1):
        hoods = dcluster_topology(swarm.f, cfg.n_cluster)
        swarm = step(swarm, hoods, rng, cfg)
        f = evaluate(objective, swarm.x, cfg)
        swarm = update_personal_best(swarm, f)
        log.append(it, swarm.x, f)
        if callback:
            callback(swarm)
    return log
