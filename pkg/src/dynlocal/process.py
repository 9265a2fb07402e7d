"""Birth-death-Brownian point process on the torus.

Two independent constructions are provided.

* The *marked* representation: a static Poisson process of rate ``n(1+T)``
  on the unit cube whose points carry a birth time, an exponential lifetime
  and a Brownian path. A point is alive at ``t`` iff ``birth <= t < birth +
  lifetime`` and sits at ``x0 + Z(t) - Z(birth)``.
* A *direct* event-driven simulation: ``Poisson(n)`` points at time 0,
  arrivals at rate ``n``, unit-mean lifetimes, Brownian moves while alive.

Both are stationary, so no burn-in is needed.

Brownian paths are sampled lazily. Queries for one point must be made at
nondecreasing times, each extending the path by a Gaussian increment.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .torus import ball_volume, project


class OutOfOrderQuery(ValueError):
    """A path was queried before its last sampled time."""


@dataclass(frozen=True)
class SimParams:
    """Model parameters.

    Attributes
    ----------
    n : float
        Intensity (expected number of alive points).
    T : float
        Time horizon.
    sigma : float
        Brownian scale per unit time, per coordinate.
    d : int
        Torus dimension.
    k : int
        Order of the functional.
    seed : int
        Root seed.
    """

    n: float
    T: float
    sigma: float
    d: int
    k: int = 2
    seed: int = 0

    def __post_init__(self):
        if not (self.n > 0 and math.isfinite(self.n)):
            raise ValueError(f"n must be positive, got {self.n}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive, got {self.T}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"k must be an integer >= 2, got {self.k}")
        if not 0 <= int(self.seed) <= 2**64 - 1:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        return {"n": self.n, "T": self.T, "sigma": self.sigma, "d": self.d,
                "k": self.k, "seed": int(self.seed)}


@dataclass
class MarkedPoint:
    """One point of the marked process with its lazily sampled path.

    ``path`` holds ``(time, displacement)`` entries, starting with
    ``(birth, 0)``; displacements are unwrapped Brownian increments since birth.
    """

    x0: np.ndarray
    birth: float
    lifetime: float
    sigma: float = 0.0
    horizon: float = math.inf
    path: list = field(default_factory=list)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if not self.lifetime > 0:
            raise ValueError("lifetime must be positive")
        if not self.path:
            self.path = [(float(self.birth), np.zeros_like(self.x0))]

    @property
    def death(self) -> float:
        return self.birth + self.lifetime


def _check_time(t: float, horizon: float) -> None:
    if not 0.0 <= t <= horizon:
        raise ValueError(f"time {t} outside [0, {horizon}]")


def alive(p: MarkedPoint, t: float) -> bool:
    """Whether ``p`` is alive at ``t``: birth <= t < birth + lifetime."""
    _check_time(t, p.horizon)
    return p.birth <= t < p.birth + p.lifetime


def position(p: MarkedPoint, t: float, rng: np.random.Generator) -> np.ndarray:
    """Torus position of ``p`` at ``t``, extending its path if needed.

    Raises
    ------
    OutOfOrderQuery
        If ``t`` precedes the last sampled time of the path.
    """
    t_last, z_last = p.path[-1]
    if t < t_last:
        raise OutOfOrderQuery(f"query at {t} precedes last sampled time {t_last}")
    if t > t_last:
        if p.sigma > 0:
            z = z_last + p.sigma * math.sqrt(t - t_last) * rng.standard_normal(p.x0.shape)
        else:
            z = z_last.copy()
        p.path.append((float(t), z))
        z_last = z
    return project(p.x0 + z_last)


@dataclass
class MarkedProcess:
    """Array form of the marked process, points sorted by birth time.

    The lazy path state (``u``: unwrapped current positions, ``last``: time of
    the last sample) is advanced by :func:`snapshot`.
    """

    params: SimParams
    x0: np.ndarray
    birth: np.ndarray
    lifetime: np.ndarray
    u: np.ndarray = None
    last: np.ndarray = None

    def __post_init__(self):
        if self.u is None:
            self.u = self.x0.copy()
        if self.last is None:
            self.last = self.birth.copy()

    def __len__(self) -> int:
        return self.x0.shape[0]

    @property
    def death(self) -> np.ndarray:
        return self.birth + self.lifetime

    @property
    def points(self) -> list[MarkedPoint]:
        """Fresh :class:`MarkedPoint` objects with paths reset to birth."""
        return [MarkedPoint(self.x0[i], float(self.birth[i]), float(self.lifetime[i]),
                            self.params.sigma, self.params.T)
                for i in range(len(self))]

    def alive_mask(self, t: float) -> np.ndarray:
        _check_time(t, self.params.T)
        return (self.birth <= t) & (t < self.death)


def sample_marked_process(params: SimParams, rng: np.random.Generator) -> MarkedProcess:
    """Draw the marks of the static Poisson process of rate ``n(1+T)``.

    Births are 0 with probability ``1/(1+T)`` and uniform on ``[0, T]``
    otherwise; lifetimes are Exp(1).
    """
    n, T, d = params.n, params.T, params.d
    N = int(rng.poisson(n * (1.0 + T)))
    x0 = project(rng.random((N, d)) - 0.5).reshape(N, d)
    late = rng.random(N) >= 1.0 / (1.0 + T)
    birth = np.where(late, T * rng.random(N), 0.0)
    lifetime = rng.exponential(1.0, N)
    # lifetimes of exactly zero have probability zero but are not representable
    lifetime = np.maximum(lifetime, np.finfo(float).tiny)
    order = np.argsort(birth, kind="stable")
    return MarkedProcess(params, x0[order], birth[order], lifetime[order])


def snapshot(proc: MarkedProcess, t: float, rng: np.random.Generator) -> np.ndarray:
    """Positions of the points alive at ``t``, as an ``(m, d)`` array.

    Alive points are advanced in index order, drawing ``d`` normals each.
    """
    mask = proc.alive_mask(t)
    idx = np.flatnonzero(mask)
    if np.any(proc.last[idx] > t):
        raise OutOfOrderQuery(f"snapshot at {t} precedes an earlier query")
    if proc.params.sigma > 0 and idx.size:
        step = proc.params.sigma * np.sqrt(t - proc.last[idx])
        proc.u[idx] += step[:, None] * rng.standard_normal((idx.size, proc.params.d))
    proc.last[idx] = t
    return project(proc.u[idx]).reshape(idx.size, proc.params.d)


def alive_step_counts(birth: np.ndarray, death: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Number of points alive at each grid time."""
    lo = np.searchsorted(grid, birth, side="left")
    hi = np.searchsorted(grid, death, side="left")
    diff = np.zeros(grid.size + 1, dtype=np.int64)
    np.add.at(diff, lo, 1)
    np.add.at(diff, hi, -1)
    return np.cumsum(diff[:-1])


def default_skin(radius: float, sigma: float, grid: np.ndarray, n: float = 1.0, d: int = 1) -> float:
    """Verlet skin minimising a rough per-step cost model.

    A step scans about ``n V_d(radius + skin)`` candidates per point. A
    rebuild costs a fixed amount plus the same scan, and happens every K
    steps, K being the number of steps before the largest of ``n d``
    Gaussian coordinate drifts reaches ``skin / 2``.
    """
    if sigma <= 0:
        return min(radius, 0.5)
    h = float(np.median(np.diff(grid))) if grid.size > 1 else 1.0
    step = sigma * math.sqrt(h) * math.sqrt(2.0 * math.log(max(n * d, 2.0)))
    best, best_cost = radius, math.inf
    for i in range(-4, 25):
        skin = min(radius * 2.0 ** (i / 2), 0.5)
        cand = n * ball_volume(radius + skin, d)
        # a vanishing drift (underflow included) never forces a rebuild
        ratio = skin / (2.0 * step) if step > 0 else math.inf
        K = max(1.0, ratio * ratio) if ratio < 1e150 else math.inf
        cost = cand + (20.0 + cand) / K
        if cost < best_cost:
            best, best_cost = skin, cost
    return best


def trajectory_pairs(proc: MarkedProcess, grid, radius: float, rng: np.random.Generator,
                     skin: float | None = None):
    """Every alive pair within ``radius`` at each grid time.

    Draws exactly the normals that successive :func:`snapshot` calls at the
    grid times would draw, in the same order, so both paths give identical
    positions. ``proc`` itself is not modified.

    Returns
    -------
    step, i, j : int arrays
    pos_i, pos_j : (P, d) arrays of torus coordinates
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty increasing sequence")
    if grid[0] < 0 or grid[-1] > proc.params.T:
        raise ValueError("grid must lie within [0, T]")
    if np.any(proc.last != proc.birth):
        raise ValueError("trajectory_pairs needs a process with untouched paths")
    sigma = float(proc.params.sigma)
    d = proc.params.d
    if sigma > 0:
        total = int(alive_step_counts(proc.birth, proc.death, grid).sum())
        normals = rng.standard_normal((total, d))
    else:
        normals = np.empty((0, d))
    if skin is None:
        skin = default_skin(radius, sigma, grid, proc.params.n, d)
    m = _kernels.cells_per_axis(radius + skin, len(proc), d)
    if m >= 3:
        half = _kernels.neighbour_table(m, d, _kernels.half_shell(d))
        full = _kernels.neighbour_table(m, d, _kernels.full_shell(d))
    else:
        half = full = np.zeros((1, 1), np.int64)
    out = _kernels.trajectory_pairs(
        np.ascontiguousarray(proc.x0, dtype=float), proc.birth, proc.death, grid,
        sigma, normals, float(radius), float(skin), m, half, full)
    return out[:5]


def sample_direct_dynamic(params: SimParams, grid, rng: np.random.Generator) -> list[np.ndarray]:
    """Event-driven birth-death-Brownian simulation observed at ``grid``.

    Keeps unwrapped coordinates per particle and projects only when a
    configuration is recorded. Brownian increments are drawn at each event
    time and at each grid time.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty increasing sequence")
    if grid[0] < 0 or grid[-1] > params.T:
        raise ValueError("grid must lie within [0, T]")
    n, d, sigma = params.n, params.d, params.sigma

    pos: dict[int, np.ndarray] = {}
    last: dict[int, float] = {}
    deaths: list[tuple[float, int]] = []
    next_id = 0

    def add(t0):
        nonlocal next_id
        pid = next_id
        next_id += 1
        pos[pid] = rng.random(d) - 0.5
        last[pid] = t0
        heapq.heappush(deaths, (t0 + rng.exponential(1.0), pid))

    def advance(t):
        if sigma > 0:
            for pid in sorted(pos):
                dt = t - last[pid]
                if dt > 0:
                    pos[pid] = pos[pid] + sigma * math.sqrt(dt) * rng.standard_normal(d)
                last[pid] = t

    for _ in range(int(rng.poisson(n))):
        add(0.0)
    t = 0.0
    next_birth = rng.exponential(1.0 / n)
    out = []
    for tg in grid:
        while True:
            t_death = deaths[0][0] if deaths else math.inf
            t_ev = min(next_birth, t_death)
            if t_ev > tg:
                break
            t = t_ev
            if t_ev == next_birth:
                add(t)
                next_birth = t + rng.exponential(1.0 / n)
            else:
                _, pid = heapq.heappop(deaths)
                # the dying point's position is never observed again
                del pos[pid], last[pid]
        t = tg
        advance(t)
        if pos:
            out.append(project(np.array([pos[p] for p in sorted(pos)])).reshape(-1, d))
        else:
            out.append(np.empty((0, d)))
    return out


__all__ = [
    "OutOfOrderQuery", "SimParams", "MarkedPoint", "MarkedProcess", "alive", "position",
    "sample_marked_process", "snapshot", "trajectory_pairs", "sample_direct_dynamic",
    "alive_step_counts", "default_skin",
]
