"""Replicate simulation and empirical statistics.

* :func:`simulate_batch` produces a replicate-by-time matrix of f values,
  each replicate drawn from its own counter-based stream so the result does
  not depend on how replicates are spread over worker processes.
* :func:`empirical_covariance` pools lagged products over time (the process
  is stationary) and reports replicate-level standard errors.
* :func:`integrated_process` / :func:`integrated_cov` integrate the
  normalised trajectory for the white-noise regime.
* :func:`gaussianity_diagnostics` and :func:`ks_permutation_test` are
  distribution-free checks.
* :func:`mecke_check` compares brute-force sums over overlapping subsets of a
  Poisson sample with the corresponding integral formula.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import streams
from .functional import InteractionFunctional, _check_scale, cliques_from_pairs, evaluate_f
from .limits import CovarianceCurve, fmt17
from .moments import MomentEstimate
from .process import SimParams, sample_direct_dynamic, sample_marked_process, trajectory_pairs

MIN_REPLICATES = 30


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryBatch:
    """Samples of f on a time grid, one row per replicate.

    ``seeds`` records the root seed and the replicate indices; replicate
    ``i`` used ``streams.stream(root, REPLICATE, i)``.
    """

    params: SimParams
    grid: np.ndarray
    values: np.ndarray
    seeds: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be increasing")
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.size:
            raise ValueError(f"values must have shape (replicates, {self.grid.size})")
        if len(self.seeds.get("replicates", [])) != self.values.shape[0]:
            raise ValueError("seed ledger does not match the number of replicates")

    @property
    def replicates(self) -> int:
        return self.values.shape[0]


def _replicate_values(params: SimParams, fnl: InteractionFunctional, r: float, grid: np.ndarray,
                      index: int, method: str, skin: float | None) -> np.ndarray:
    rng = streams.stream(params.seed, streams.REPLICATE, index)
    G = grid.size
    if method == "direct":
        configs = sample_direct_dynamic(params, grid, rng)
        return np.array([evaluate_f(c, fnl, r) for c in configs])
    proc = sample_marked_process(params, rng)
    # slight inflation so the rule, not the search, decides boundary cases
    radius = min(fnl.delta * r * (1 + 1e-9), 0.4999999)
    step, i, j, pi, pj = trajectory_pairs(proc, grid, radius, rng, skin=skin)
    if len(step) == 0:
        return np.zeros(G)
    if fnl.k == 2:
        vals = fnl(np.stack([pi, pj], axis=1), r)
        return np.bincount(step, weights=vals, minlength=G)
    out = np.zeros(G)
    bounds = np.searchsorted(step, np.arange(G + 1))
    for g in range(G):
        a, b = bounds[g], bounds[g + 1]
        if b - a < fnl.k - 1:
            continue
        ids, inv = np.unique(np.concatenate([i[a:b], j[a:b]]), return_inverse=True)
        pos = np.empty((ids.size, pi.shape[1]))
        pos[inv[: b - a]] = pi[a:b]
        pos[inv[b - a:]] = pj[a:b]
        local = np.sort(np.stack([inv[: b - a], inv[b - a:]], axis=1), axis=1)
        local = local[np.lexsort((local[:, 1], local[:, 0]))]
        tup = cliques_from_pairs(local, ids.size, fnl.k)
        if len(tup):
            out[g] = float(np.sum(fnl(pos[tup], r)))
    return out


# shared with forked workers; functionals hold closures and do not pickle
_WORKER: dict = {}


def _run_chunk(indices):
    w = _WORKER
    return [(i, _replicate_values(w["params"], w["fnl"], w["r"], w["grid"], i, w["method"], w["skin"]))
            for i in indices]


def simulate_batch(params: SimParams, fnl: InteractionFunctional, r: float, grid, replicates: int,
                   method: str = "marked", threads: int = 1, skin: float | None = None,
                   first: int = 0, progress: Callable[[int], None] | None = None) -> TrajectoryBatch:
    """Simulate ``replicates`` trajectories of f on ``grid``.

    Parameters
    ----------
    method : {"marked", "direct"}
        Marked Poisson representation (fast, compiled) or the event-driven
        simulator (slow, for cross-checks).
    threads : int
        Worker processes. Results are identical for any value.
    first : int
        Index of the first replicate, so batches can be extended.
    """
    if method not in ("marked", "direct"):
        raise ValueError(f"unknown method {method!r}")
    if params.k != fnl.k:
        raise ValueError(f"params.k={params.k} does not match functional order {fnl.k}")
    _check_scale(fnl, r)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty increasing sequence")
    if grid[0] < 0 or grid[-1] > params.T:
        raise ValueError("grid must lie within [0, T]")
    if replicates < 1:
        raise ValueError("need at least one replicate")
    idx = list(range(first, first + replicates))
    values = np.empty((replicates, grid.size))
    threads = max(1, int(threads or 1))
    if threads == 1 or replicates < 2:
        for a, i in enumerate(idx):
            values[a] = _replicate_values(params, fnl, r, grid, i, method, skin)
            if progress:
                progress(a + 1)
    else:
        _WORKER.update(params=params, fnl=fnl, r=r, grid=grid, method=method, skin=skin)
        size = max(1, min(64, replicates // (4 * threads)))
        chunks = [idx[s:s + size] for s in range(0, replicates, size)]
        ctx = mp.get_context("fork")
        done = 0
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            for res in pool.map(_run_chunk, chunks):
                for i, v in res:
                    values[i - first] = v
                done += len(res)
                if progress:
                    progress(done)
    meta = {"r": float(r), "functional": fnl.to_dict(), "method": method}
    if skin is not None:
        meta["skin"] = float(skin)
    seeds = {"root": int(params.seed), "label": streams.REPLICATE, "replicates": idx}
    return TrajectoryBatch(params, grid, values, seeds, meta)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_batch(batch: TrajectoryBatch, csv_path, json_path=None, config_sha256: str = "") -> None:
    """Columnar CSV ``replicate,t,f`` and a JSON sidecar with params and seeds.

    The first CSV line is a ``#`` comment carrying the config hash and seed.
    """
    json_path = json_path or os.path.splitext(str(csv_path))[0] + ".json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_sha256={config_sha256} seed={batch.seeds['root']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "t", "f"])
        tg = [fmt17(t) for t in batch.grid]
        for rep, row in zip(batch.seeds["replicates"], batch.values):
            for t, v in zip(tg, row):
                w.writerow([rep, t, fmt17(v)])
    side = {"params": batch.params.to_dict(), "grid": [float(t) for t in batch.grid],
            "seeds": batch.seeds, "meta": batch.meta, "config_sha256": config_sha256,
            "csv": os.path.basename(str(csv_path))}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_batch(csv_path, json_path=None) -> TrajectoryBatch:
    json_path = json_path or os.path.splitext(str(csv_path))[0] + ".json"
    with open(json_path, encoding="utf-8") as fh:
        side = json.load(fh)
    grid = np.asarray(side["grid"], dtype=float)
    reps = side["seeds"]["replicates"]
    pos = {rep: a for a, rep in enumerate(reps)}
    values = np.full((len(reps), grid.size), np.nan)
    with open(csv_path, encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        next(rows)
        col = {}
        for rep, t, f in rows:
            a = pos[int(rep)]
            c = col.get(a, 0)
            values[a, c] = float(f)
            col[a] = c + 1
    return TrajectoryBatch(SimParams(**side["params"]), grid, values, side["seeds"], side["meta"])


# ---------------------------------------------------------------------------
# covariance


def _lag_pairs(grid: np.ndarray, lag: float, stride: int, tol: float = 1e-9):
    """Index pairs (a, b) with grid[b] - grid[a] == lag, a taken every ``stride``."""
    target = grid + lag
    b = np.searchsorted(grid, target - tol)
    ok = (b < grid.size)
    ok[ok] = np.abs(grid[b[ok]] - target[ok]) <= tol * max(1.0, abs(lag))
    a = np.flatnonzero(ok)[::stride]
    if a.size == 0:
        raise ValueError(f"lag {lag} is not a difference of grid times")
    return a, b[a]


def _normalisers(batch: TrajectoryBatch, normalization: str, mean, var):
    if normalization == "formula":
        if mean is None or var is None:
            raise ValueError("formula normalisation needs mean and var")
        return float(mean), float(var)
    if normalization == "empirical":
        v = batch.values
        return float(np.mean(v)), float(np.var(v, ddof=1))
    raise ValueError(f"normalization must be 'formula' or 'empirical', got {normalization!r}")


def replicate_covariances(batch: TrajectoryBatch, lags, normalization: str = "formula",
                          mean: float | None = None, var: float | None = None,
                          stride: int = 1) -> np.ndarray:
    """Per-replicate time-pooled normalised covariances, shape (R, len(lags))."""
    m, v = _normalisers(batch, normalization, mean, var)
    x = (batch.values - m) / math.sqrt(v)
    out = np.empty((batch.replicates, len(lags)))
    for c, lag in enumerate(lags):
        a, b = _lag_pairs(batch.grid, float(lag), stride)
        out[:, c] = np.mean(x[:, a] * x[:, b], axis=1)
    return out


def empirical_covariance(batch: TrajectoryBatch, lags, normalization: str = "formula",
                         mean: float | None = None, var: float | None = None,
                         stride: int = 1) -> CovarianceCurve:
    """Normalised covariance at each lag, pooled over time and replicates.

    ``normalization="formula"`` centres and scales with the supplied exact
    mean and variance; ``"empirical"`` uses the batch's own moments.
    Standard errors come from the spread of per-replicate estimates.

    Raises
    ------
    ValueError
        With fewer than 30 replicates, or a lag that is not a grid difference.
    """
    if batch.replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates, got {batch.replicates}")
    lags = np.asarray(lags, dtype=float)
    per = replicate_covariances(batch, lags, normalization, mean, var, stride)
    return CovarianceCurve(lags, per.mean(axis=0), per.std(axis=0, ddof=1) / math.sqrt(batch.replicates))


def grid_lags(grid: np.ndarray, upper: float, spacing: float | None = None,
              tol: float = 1e-9) -> np.ndarray:
    """Lags ``0, s, 2s, ...`` up to ``upper`` that are differences of grid times.

    ``spacing`` defaults to the grid step; it must be a multiple of it.
    """
    h = np.diff(grid)
    if h.size == 0 or np.ptp(h) > tol * max(1.0, h.max()) * 10:
        raise ValueError("a uniform grid is required")
    step = float(np.median(h))
    spacing = step if spacing is None else float(spacing)
    ratio = spacing / step
    if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
        raise ValueError(f"lag spacing {spacing} is not a multiple of the grid step {step}")
    count = int(math.floor(upper / spacing + 1e-9))
    return np.arange(count + 1) * round(ratio) * step


def estimate_mn(batch: TrajectoryBatch, normalization: str = "formula", mean=None, var=None,
                upper: float = 1.0, spacing: float = 0.01) -> tuple[float, CovarianceCurve]:
    """Trapezoid integral of the normalised covariance over lags in [0, upper].

    Lags are taken every ``spacing`` time units, which must be a multiple of
    the grid step.
    """
    lags = grid_lags(batch.grid, upper, spacing)
    curve = empirical_covariance(batch, lags, normalization, mean, var)
    return float(np.trapezoid(curve.values, curve.lags)), curve


def _normalised(batch: TrajectoryBatch, mean, var) -> np.ndarray:
    if mean is None or var is None:
        m, v = _normalisers(batch, "empirical", None, None)
    else:
        m, v = float(mean), float(var)
    return (batch.values - m) / math.sqrt(v)


def integrated_process(batch: TrajectoryBatch, t: float, mn: float, mean: float | None = None,
                       var: float | None = None, max_spacing: float = 0.01) -> np.ndarray:
    """Per-replicate trapezoid integral over [0, t] of the normalised trajectory / sqrt(2 mn).

    Raises
    ------
    ValueError
        If ``t`` lies beyond the grid, the grid does not start at 0, or the
        spacing on [0, t] exceeds ``max_spacing``.
    """
    grid = batch.grid
    if not mn > 0:
        raise ValueError("mn must be positive")
    if t < 0 or t > grid[-1] + 1e-12:
        raise ValueError(f"t={t} outside the grid [0, {grid[-1]}]")
    if abs(grid[0]) > 1e-12:
        raise ValueError("the grid must start at 0")
    if t == 0:
        return np.zeros(batch.replicates)
    x = _normalised(batch, mean, var) / math.sqrt(2.0 * mn)
    hi = np.searchsorted(grid, t, side="right")
    tt = grid[:hi]
    xx = x[:, :hi]
    if tt[-1] < t - 1e-12:
        # close the last partial interval by linear interpolation
        frac = (t - tt[-1]) / (grid[hi] - tt[-1])
        xend = xx[:, -1] + frac * (x[:, hi] - xx[:, -1])
        tt = np.append(tt, t)
        xx = np.column_stack([xx, xend])
    if np.any(np.diff(tt) > max_spacing + 1e-12):
        raise ValueError(f"grid spacing must be at most {max_spacing}")
    return np.trapezoid(xx, tt, axis=1)


def integrated_cov(batch: TrajectoryBatch, t1: float, t2: float, mn: float,
                   mean: float | None = None, var: float | None = None) -> MomentEstimate:
    """Replicate covariance of the integrals up to ``t1`` and ``t2``."""
    a = integrated_process(batch, t1, mn, mean, var)
    b = integrated_process(batch, t2, mn, mean, var)
    prod = (a - a.mean()) * (b - b.mean())
    R = prod.size
    est = MomentEstimate.from_samples(prod)
    return MomentEstimate(float(np.sum(prod) / (R - 1)), est.stderr, R)


# ---------------------------------------------------------------------------
# distributional checks


@dataclass
class GaussianityReport:
    samples: int
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    kurtosis_se: float
    ecdf_distance: float
    ecdf_pvalue: float

    @property
    def skewness_z(self) -> float:
        return self.skewness / self.skewness_se

    @property
    def kurtosis_z(self) -> float:
        return self.excess_kurtosis / self.kurtosis_se

    def within(self, z: float = 4.0) -> bool:
        return abs(self.skewness_z) <= z and abs(self.kurtosis_z) <= z

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _ks_normal(x: np.ndarray) -> float:
    """Sup distance between the ECDF of x and the normal fitted to it."""
    x = np.sort(x)
    n = x.size
    sd = x.std(ddof=1)
    if sd == 0:
        return 1.0
    cdf = stats.norm.cdf((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def gaussianity_diagnostics(samples, bootstrap: int = 200, rng=None) -> GaussianityReport:
    """Skewness and excess kurtosis with standard errors, plus an ECDF normality check.

    The standard errors are the exact ones for normal samples of this size.
    The ECDF distance to the fitted normal gets a p-value by parametric
    bootstrap, which accounts for the fitted mean and variance.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 500:
        raise ValueError(f"need at least 500 samples, got {n}")
    rng = np.random.default_rng(0) if rng is None else rng
    g1 = float(stats.skew(x, bias=False))
    g2 = float(stats.kurtosis(x, fisher=True, bias=False))
    ses = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    sek = 2.0 * ses * math.sqrt((n * n - 1.0) / ((n - 3) * (n + 5)))
    dist = _ks_normal(x)
    null = np.array([_ks_normal(rng.standard_normal(n)) for _ in range(bootstrap)])
    pval = float((1 + np.sum(null >= dist)) / (bootstrap + 1))
    return GaussianityReport(n, g1, ses, g2, sek, dist, pval)


def cramer_wold(samples, weights: Sequence[Sequence[float]], bootstrap: int = 200,
                rng=None) -> list[GaussianityReport]:
    """Diagnostics for linear combinations of the columns of ``samples`` (R, m)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be (replicates, coordinates)")
    out = []
    for w in weights:
        w = np.asarray(w, dtype=float)
        if w.shape != (x.shape[1],):
            raise ValueError("each weight vector needs one entry per column")
        out.append(gaussianity_diagnostics(x @ w, bootstrap, rng))
    return out


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_permutation_test(a, b, permutations: int = 999, rng=None) -> tuple[float, float]:
    """Two-sample ECDF (Kolmogorov-Smirnov) distance with a permutation p-value.

    Ties are handled exactly: the ECDFs are compared only at the ends of
    runs of equal pooled values.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ValueError("both samples must be nonempty")
    rng = np.random.default_rng(0) if rng is None else rng
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    sv = pooled[order]
    ends = np.flatnonzero(np.append(sv[1:] != sv[:-1], True))
    labels = np.zeros(pooled.size, dtype=np.int32)
    labels[:na] = 1

    def stat(lab_sorted):
        ca = np.cumsum(lab_sorted, axis=-1)[..., ends]
        cb = (ends + 1) - ca
        return np.max(np.abs(ca / na - cb / nb), axis=-1)

    observed = float(stat(labels[order]))
    count = 0
    block = max(1, min(permutations, 2_000_000 // pooled.size))
    done = 0
    while done < permutations:
        m = min(block, permutations - done)
        perm = np.stack([rng.permutation(labels) for _ in range(m)])
        count += int(np.sum(stat(perm) >= observed - 1e-12))
        done += m
    return observed, float((1 + count) / (permutations + 1))


# ---------------------------------------------------------------------------
# overlap patterns and the multivariate Mecke formula


def _block_key(J) -> tuple:
    J = tuple(sorted(int(i) for i in J))
    if not J:
        raise ValueError("blocks must be nonempty subsets")
    return J


@dataclass(frozen=True)
class IntersectionPattern:
    """How ``ell`` subsets overlap: ``counts[J]`` points lie in exactly the sets in J.

    Keys are nonempty subsets of ``{1..ell}`` given as tuples or sets.
    """

    ell: int
    counts: dict

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError("ell must be positive")
        clean = {}
        for J, c in self.counts.items():
            key = _block_key(J)
            if key[0] < 1 or key[-1] > self.ell:
                raise ValueError(f"block {key} is not a subset of 1..{self.ell}")
            if int(c) != c or c < 0:
                raise ValueError(f"block sizes must be nonnegative integers, got {c}")
            if c:
                clean[key] = clean.get(key, 0) + int(c)
        object.__setattr__(self, "counts", dict(sorted(clean.items())))

    @property
    def blocks(self) -> list[tuple[tuple, int]]:
        """Nonzero blocks in lexicographic order of J."""
        return list(self.counts.items())

    @property
    def size(self) -> int:
        return sum(self.counts.values())

    def subset_sizes(self) -> list[int]:
        return [sum(c for J, c in self.counts.items() if i in J) for i in range(1, self.ell + 1)]

    def label_sequence(self) -> np.ndarray:
        """Block index of each point under the fixed splitting convention."""
        return np.concatenate([np.full(c, b, dtype=np.int64) for b, (_, c) in enumerate(self.blocks)])


@lru_cache(maxsize=64)
def _assignments(labels: tuple) -> np.ndarray:
    """Distinct orderings of a multiset of block labels, shape (A, len)."""
    return np.array(sorted(set(itertools.permutations(labels))), dtype=np.int64).reshape(-1, len(labels))


@lru_cache(maxsize=64)
def _combinations(N: int, m: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(N), m)), dtype=np.int64).reshape(-1, m)


def _split(points: np.ndarray, label_rows: np.ndarray, pattern: IntersectionPattern) -> list[np.ndarray]:
    """Given tuples of points (M, |I|, d) and block labels (M, |I|), return the ell subsets."""
    blocks = [J for J, _ in pattern.blocks]
    out = []
    for i in range(1, pattern.ell + 1):
        member = np.array([i in J for J in blocks])
        mask = member[label_rows]
        # each row has the same number of members, so a stable argsort gathers them
        cols = np.argsort(~mask, axis=1, kind="stable")[:, : int(mask[0].sum())]
        out.append(np.take_along_axis(points, cols[..., None], axis=1))
    return out


def mecke_check(h: Callable[[list], np.ndarray], pattern: IntersectionPattern, n: float,
                reps: int, rng=None, d: int = 1, k: int | None = None,
                rhs_samples: int = 200_000):
    """Brute-force sum over subset tuples with a given overlap pattern vs the integral formula.

    ``h`` receives a list of ``ell`` arrays of shape ``(M, |X_i|, d)`` and
    returns ``M`` values. The left side averages, over ``reps`` Poisson(n)
    samples on the unit cube, the sum of ``h`` over all ordered tuples of
    subsets obeying ``pattern``. The right side is
    ``n^|I| E[h(split(X))] / prod_J I_J!`` for ``|I|`` iid uniform points,
    itself estimated by Monte Carlo.

    Returns
    -------
    (lhs, rhs) : tuple of MomentEstimate

    Raises
    ------
    ValueError
        If ``k`` is given and some subset in the pattern does not have ``k``
        points, or if a subset is empty.
    """
    sizes = pattern.subset_sizes()
    if min(sizes) == 0:
        raise ValueError("every subset must receive at least one point")
    if k is not None and any(s != k for s in sizes):
        raise ValueError(f"pattern gives subset sizes {sizes}, not all equal to k={k}")
    rng = np.random.default_rng() if rng is None else rng
    m = pattern.size
    lab = pattern.label_sequence()
    assign = _assignments(tuple(lab.tolist()))

    lhs = np.zeros(reps)
    for rep in range(reps):
        N = int(rng.poisson(n))
        if N < m:
            continue
        pts = rng.random((N, d)) - 0.5
        combos = _combinations(N, m)
        C, A = combos.shape[0], assign.shape[0]
        tuples = np.repeat(pts[combos], A, axis=0)
        labels = np.tile(assign, (C, 1))
        lhs[rep] = float(np.sum(h(_split(tuples, labels, pattern))))

    x = rng.random((rhs_samples, m, d)) - 0.5
    vals = np.asarray(h(_split(x, np.tile(lab, (rhs_samples, 1)), pattern)), dtype=float)
    vals = np.broadcast_to(vals, (rhs_samples,))
    scale = n**m / math.prod(math.factorial(c) for _, c in pattern.blocks)
    rhs = MomentEstimate.from_samples(scale * vals)
    return MomentEstimate.from_samples(lhs), rhs


def _torus_close(a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    dx = a - b
    dx -= np.round(dx)
    return np.sum(dx * dx, axis=-1) <= radius * radius


def mecke_battery(n: float = 12.0, d: int = 1, radius: float = 0.2):
    """Five canned (name, pattern, h) checks used by the verify suite."""
    def one(xs):
        return np.ones(len(xs[0]))

    def both_close(xs):
        return (_torus_close(xs[0][:, 0], xs[0][:, 1], radius)
                & _torus_close(xs[1][:, 0], xs[1][:, 1], radius)).astype(float)

    def smooth_star(xs):
        # bounded, symmetric within each block: depends on pairwise distances only
        out = np.ones(len(xs[0]))
        for x in xs:
            dx = x[:, 0] - x[:, 1]
            dx -= np.round(dx)
            out *= np.exp(-4.0 * np.sum(dx * dx, axis=-1))
        return out

    return [
        ("pairs", IntersectionPattern(1, {(1,): 2}), one),
        ("disjoint_pairs", IntersectionPattern(2, {(1,): 2, (2,): 2}), one),
        ("pairs_sharing_a_point", IntersectionPattern(2, {(1,): 1, (2,): 1, (1, 2): 1}), both_close),
        ("same_pair_twice", IntersectionPattern(2, {(1, 2): 2}), both_close),
        ("three_pairs_one_hub", IntersectionPattern(3, {(1,): 1, (2,): 1, (3,): 1, (1, 2, 3): 1}),
         smooth_star),
    ]


__all__ = [
    "TrajectoryBatch", "simulate_batch", "write_batch", "read_batch", "config_hash",
    "replicate_covariances", "empirical_covariance", "grid_lags", "estimate_mn",
    "integrated_process", "integrated_cov", "GaussianityReport", "gaussianity_diagnostics",
    "cramer_wold", "ks_statistic", "ks_permutation_test", "IntersectionPattern", "mecke_check",
    "mecke_battery",
]
