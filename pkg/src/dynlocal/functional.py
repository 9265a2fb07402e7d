"""Local interaction functionals and fast evaluation of f = sum over k-subsets.

An :class:`InteractionFunctional` is evaluated on batches of k-tuples given as
an ``(M, k, d)`` array of torus coordinates together with the scale ``r``.
The sum over all k-subsets of a configuration only needs the subsets of
diameter at most ``delta * r`` (every other subset contributes zero), and
those are exactly the k-cliques of the fixed-radius neighbour graph, found
with a periodic cell list.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .torus import displacement, project, sample_ball, scale

MAX_ISO_K = 8

Rule = Callable[[np.ndarray, float], np.ndarray]


# ---------------------------------------------------------------------------
# spatial indexing


@dataclass
class SpatialGrid:
    """Periodic cell list over the torus.

    Cells have width ``1/m >= radius``; ``m`` is capped so the number of cells
    stays proportional to the number of points.
    """

    points: np.ndarray
    radius: float
    m: int = field(init=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.atleast_2d(self.points), dtype=float)
        if not 0.0 < self.radius < 0.5:
            raise ValueError(f"radius must lie in (0, 1/2), got {self.radius}")
        n, d = self.points.shape
        self.m = _kernels.cells_per_axis(self.radius, n, d)

    @property
    def cell_width(self) -> float:
        return 1.0 / self.m

    @property
    def buckets(self) -> dict[tuple[int, ...], np.ndarray]:
        """Cell index vector -> indices of the points stored in it."""
        d = self.points.shape[1]
        lin = _kernels.cell_index(self.points, self.m)
        out: dict[tuple[int, ...], np.ndarray] = {}
        for c in np.unique(lin):
            key = tuple(int(v) for v in np.unravel_index(c, (self.m,) * d))
            out[key] = np.flatnonzero(lin == c)
        return out

    def pairs(self) -> np.ndarray:
        """Index pairs ``i < j`` at torus distance <= radius, shape (P, 2)."""
        n, d = self.points.shape
        if n < 2:
            return np.empty((0, 2), dtype=np.int64)
        if self.m < 3:
            i, j = _kernels.brute_pairs(self.points, self.radius)
        else:
            i, j = _kernels.grid_pairs(self.points, self.radius, self.m,
                                       _kernels.neighbour_table(self.m, d, _kernels.half_shell(d)))
        out = np.stack([i, j], axis=1)
        if len(out):
            out = out[np.lexsort((out[:, 1], out[:, 0]))]
        return out


def _extend_cliques(tuples: np.ndarray, pairs: np.ndarray, n: int) -> np.ndarray:
    """Grow sorted cliques by one vertex larger than their last member."""
    if len(tuples) == 0 or len(pairs) == 0:
        return np.empty((0, tuples.shape[1] + 1), dtype=np.int64)
    # forward adjacency in CSR form (pairs sorted by (i, j))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, pairs[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    nbrs = pairs[:, 1]
    keys = pairs[:, 0] * n + pairs[:, 1]

    last = tuples[:, -1]
    counts = indptr[last + 1] - indptr[last]
    rows = np.repeat(np.arange(len(tuples)), counts)
    if len(rows) == 0:
        return np.empty((0, tuples.shape[1] + 1), dtype=np.int64)
    first = np.repeat(indptr[last], counts)
    within = np.arange(len(rows)) - np.repeat(np.cumsum(counts) - counts, counts)
    cand = nbrs[first + within]
    ok = np.ones(len(rows), dtype=bool)
    for col in range(tuples.shape[1] - 1):
        q = tuples[rows, col] * n + cand
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        ok &= keys[pos] == q
    return np.column_stack([tuples[rows[ok]], cand[ok]])


def enumerate_local_ktuples(points, radius: float, k: int) -> np.ndarray:
    """Every k-subset of diameter <= radius, once, as sorted index rows.

    Returns an ``(M, k)`` integer array.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if k == 1:
        return np.arange(n, dtype=np.int64)[:, None]
    if n < k:
        return np.empty((0, k), dtype=np.int64)
    return cliques_from_pairs(SpatialGrid(pts, radius).pairs(), n, k)


def cliques_from_pairs(pairs: np.ndarray, n: int, k: int) -> np.ndarray:
    """k-cliques of the graph on ``n`` vertices with sorted edge rows ``i < j``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    tuples = pairs
    for _ in range(k - 2):
        tuples = _extend_cliques(tuples, pairs, n)
    return tuples


# ---------------------------------------------------------------------------
# graphs


def _validate_adjacency(a) -> np.ndarray:
    a = np.asarray(a, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be a square matrix")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(a)):
        raise ValueError("adjacency must have a zero diagonal")
    return a


def graph_isomorphic(a, b) -> bool:
    """Brute-force graph isomorphism for up to 8 vertices."""
    a = _validate_adjacency(a)
    b = _validate_adjacency(b)
    k = a.shape[0]
    if b.shape[0] != k:
        return False
    if k > MAX_ISO_K:
        raise NotImplementedError(f"isomorphism search supports k <= {MAX_ISO_K}, got {k}")
    if a.sum() != b.sum():
        return False
    if not np.array_equal(np.sort(a.sum(0)), np.sort(b.sum(0))):
        return False
    for perm in itertools.permutations(range(k)):
        p = np.asarray(perm)
        if np.array_equal(a[np.ix_(p, p)], b):
            return True
    return False


def _edge_bits(adj: np.ndarray) -> np.ndarray:
    """Pack the upper triangle of ``(..., k, k)`` adjacency into integers."""
    k = adj.shape[-1]
    iu, ju = np.triu_indices(k, 1)
    weights = (1 << np.arange(len(iu), dtype=np.int64)).astype(np.int64)
    return (adj[..., iu, ju].astype(np.int64) * weights).sum(axis=-1)


@dataclass(frozen=True)
class GeometricPattern:
    """A graph on k labelled vertices, matched up to isomorphism."""

    adjacency: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _validate_adjacency(self.adjacency))

    @classmethod
    def from_edges(cls, k: int, edges) -> "GeometricPattern":
        a = np.zeros((k, k), dtype=bool)
        for i, j in edges:
            if i == j or not (0 <= i < k and 0 <= j < k):
                raise ValueError(f"bad edge ({i}, {j}) for k={k}")
            a[i, j] = a[j, i] = True
        return cls(a)

    @property
    def k(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in np.flatnonzero(self.adjacency[v]):
                if int(w) not in seen:
                    seen.add(int(w))
                    stack.append(int(w))
        return len(seen) == self.k

    def labelings(self) -> np.ndarray:
        """Edge bitmasks of every relabelling of the pattern (sorted, unique)."""
        k = self.k
        if k > MAX_ISO_K:
            raise NotImplementedError(f"isomorphism search supports k <= {MAX_ISO_K}, got {k}")
        perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
        permuted = self.adjacency[perms[:, :, None], perms[:, None, :]]
        return np.unique(_edge_bits(permuted))


# ---------------------------------------------------------------------------
# functionals


@dataclass(frozen=True)
class InteractionFunctional:
    """A local, bounded, symmetric function of k-point subsets.

    ``rule(tuples, r)`` maps an ``(M, k, d)`` array of torus coordinates to
    ``M`` nonnegative values and must vanish on tuples of diameter above
    ``delta * r``.
    """

    k: int
    delta: float
    kind: str
    rule: Rule
    bound: float = 1.0
    pattern: Optional[GeometricPattern] = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"order k must be >= 2, got {self.k}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")
        if not self.bound > 0:
            raise ValueError("bound must be positive")

    def __call__(self, tuples, r: float) -> np.ndarray:
        tuples = np.asarray(tuples, dtype=float)
        if tuples.ndim == 2:
            tuples = tuples[None]
        if tuples.shape[1] != self.k:
            raise ValueError(f"expected {self.k}-tuples, got {tuples.shape[1]}")
        if len(tuples) == 0:
            return np.zeros(0)
        return np.asarray(self.rule(tuples, r), dtype=float)

    def evaluate_unit(self, y) -> np.ndarray:
        """xi_1(0, y) for displacement tuples ``y`` of shape (M, k-1, d)."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            y = y[None]
        zero = np.zeros((y.shape[0], 1, y.shape[2]))
        return self(project(np.concatenate([zero, y], axis=1)), 1.0)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "k": self.k, "delta": self.delta, "bound": self.bound}
        if self.pattern is not None:
            out["pattern"] = self.pattern.edges
        return out


def _pair_sq_distances(tuples: np.ndarray) -> np.ndarray:
    diff = tuples[:, :, None, :] - tuples[:, None, :, :]
    diff -= np.floor(diff + 0.5)
    return np.sum(diff * diff, axis=-1)


def make_pair_indicator(delta: float) -> InteractionFunctional:
    """xi_r({x, y}) = 1{ rho(x, y) <= delta * r }."""

    def rule(t, r):
        dx = displacement(t[:, 0], t[:, 1])
        return (np.sum(dx * dx, axis=-1) <= (delta * r) ** 2).astype(float)

    return InteractionFunctional(k=2, delta=delta, kind="pair", rule=rule)


def find_realization(pattern: GeometricPattern, delta: float, d: int, rng=None,
                     tries: int = 20000) -> Optional[np.ndarray]:
    """Randomised search for a unit-scale configuration realising ``pattern``.

    Samples k points in balls of several radii between a quarter of the
    connection radius and ``delta``; returns the first hit or None.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    k = pattern.k
    rho = delta / k
    target = pattern.labelings()
    radii = np.geomspace(rho / 4, delta / 2, 12)
    per = max(1, tries // len(radii))
    for rad in radii:
        pts = sample_ball(rng, (per, k), d, rad)
        adj = _pair_sq_distances(project(pts)) <= rho**2
        adj[:, np.arange(k), np.arange(k)] = False
        hit = np.flatnonzero(np.isin(_edge_bits(adj), target))
        if len(hit):
            return project(pts[hit[0]])
    return None


def make_subgraph_count(pattern: GeometricPattern, delta: float, d: int | None = None,
                        check_feasible: bool = True) -> InteractionFunctional:
    """Indicator that the geometric graph on Y with radius r*delta/k is isomorphic to ``pattern``.

    Only connected patterns are accepted: they force diameter <= (k-1) r delta / k,
    so the functional is local with parameter ``delta``.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if not pattern.is_connected():
        raise ValueError("pattern must be connected for the count to be local")
    k = pattern.k
    target = pattern.labelings()
    if check_feasible and d is not None and find_realization(pattern, delta, d) is None:
        warnings.warn(f"no realisation of pattern {pattern.edges} found in d={d}; "
                      "it may be infeasible", RuntimeWarning, stacklevel=2)

    def rule(t, r):
        adj = _pair_sq_distances(t) <= (r * delta / k) ** 2
        adj[:, np.arange(k), np.arange(k)] = False
        return np.isin(_edge_bits(adj), target).astype(float)

    return InteractionFunctional(k=k, delta=delta, kind="subgraph", rule=rule, pattern=pattern)


def make_zero_functional(k: int, delta: float) -> InteractionFunctional:
    return InteractionFunctional(k=k, delta=delta, kind="zero",
                                 rule=lambda t, r: np.zeros(len(t)))


def make_user_functional(k: int, delta: float, bound: float, rule: Rule, d: int,
                         rng=None, checks: int = 500, scales=(1.0, 0.3)) -> InteractionFunctional:
    """Register a custom rule after randomised checks of invariance, locality and bounds.

    Raises
    ------
    ValueError
        If any sampled input violates translation or scale invariance,
        locality, or the declared bound.
    """
    fnl = InteractionFunctional(k=k, delta=delta, kind="user", rule=rule, bound=bound)
    rng = np.random.default_rng(12345) if rng is None else rng
    for r in scales:
        # near-local configurations, so the checks see nonzero values
        base = rng.uniform(-0.5, 0.5, size=(checks, 1, d))
        offs = sample_ball(rng, (checks, k - 1), d, 1.2 * delta * r)
        tup = project(np.concatenate([base, base + offs], axis=1))
        vals = fnl(tup, r)
        if np.any(vals < 0) or np.any(vals > bound):
            raise ValueError("rule violates its declared bound")
        shift = rng.uniform(-0.5, 0.5, size=(checks, 1, d))
        if not np.allclose(fnl(project(tup + shift), r), vals, rtol=1e-12, atol=1e-12):
            raise ValueError("rule is not translation invariant")
        diam = np.sqrt(_pair_sq_distances(tup).max(axis=(1, 2)))
        if np.any(vals[diam > delta * r] != 0):
            raise ValueError("rule is not local: nonzero beyond diameter delta*r")
        alpha = rng.uniform(0.2, 1.0)
        rel = project(offs)  # anchored at the origin
        anchored = np.concatenate([np.zeros((checks, 1, d)), rel], axis=1)
        lhs = fnl(project(anchored), r)
        rhs = fnl(np.stack([scale(alpha, a) for a in anchored]), alpha * r)
        if not np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12):
            raise ValueError("rule is not scale invariant")
    return fnl


# ---------------------------------------------------------------------------
# evaluation of f


def _check_scale(fnl: InteractionFunctional, r: float) -> None:
    if not 0.0 < r <= 1.0:
        raise ValueError(f"r must lie in (0, 1], got {r}")
    if not r * fnl.delta < 0.5:
        raise ValueError(f"need r*delta < 1/2, got {r * fnl.delta}")


def evaluate_f(points, fnl: InteractionFunctional, r: float) -> float:
    """Sum of xi_r over all k-subsets of ``points``."""
    _check_scale(fnl, r)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < fnl.k:
        return 0.0
    # slight inflation so the rule, not the search, decides boundary cases
    radius = min(fnl.delta * r * (1 + 1e-9), 0.4999999)
    idx = enumerate_local_ktuples(pts, radius, fnl.k)
    if len(idx) == 0:
        return 0.0
    return float(np.sum(fnl(pts[idx], r)))


def evaluate_f_bruteforce(points, fnl: InteractionFunctional, r: float) -> float:
    """Reference evaluation over all k-subsets (small inputs only)."""
    _check_scale(fnl, r)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < fnl.k:
        return 0.0
    idx = np.array(list(itertools.combinations(range(pts.shape[0]), fnl.k)), dtype=np.int64)
    return float(np.sum(fnl(pts[idx], r)))


__all__ = [
    "SpatialGrid", "enumerate_local_ktuples", "cliques_from_pairs", "graph_isomorphic", "GeometricPattern",
    "InteractionFunctional", "make_pair_indicator", "make_subgraph_count",
    "make_user_functional", "make_zero_functional", "find_realization",
    "evaluate_f", "evaluate_f_bruteforce",
]
