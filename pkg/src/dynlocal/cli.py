"""Command-line experiments: simulate, constants, covariance, verify, regime.

Every command reads a JSON config with three sections::

    {
      "model":  {"n": 1000, "T": 3.0, "d": 1, "k": 2, "delta": 0.25,
                 "functional": "pair", "pattern": [[0, 1]],
                 "r": {"a": 1.0, "p": 1.0}, "sigma": {"b": 0.0, "q": 1.0}},
      "run":    {"replicates": 200, "grid_spacing": 0.01, "lags": [0, 0.25, 0.5, 1],
                 "seed": 0, "mc_budget": 1000000},
      "output": {"directory": "out", "formats": ["csv", "json"]}
    }

The length scale is ``r = a n^-p`` and the motion scale ``sigma = b n^-q``
(``b = 0`` switches motion off). Unknown keys are rejected; a missing
required key exits with status 2 and names the key.

Output files carry the SHA-256 of the canonical config (without the output
section) and the seed, so identical inputs give identical bytes whatever
``--threads`` or ``--out`` are.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import limits, moments, streams, torus
from .estimator import (
    config_hash, cramer_wold, empirical_covariance, estimate_mn, gaussianity_diagnostics,
    ks_permutation_test, mecke_battery, mecke_check, simulate_batch, write_batch,
)
from .functional import (
    GeometricPattern, InteractionFunctional, evaluate_f, evaluate_f_bruteforce, make_pair_indicator,
    make_subgraph_count,
)
from .process import SimParams

EXIT_CONFIG = 2
EXIT_REFUSED = 3
EXIT_FAILED = 1

SUITES = ("geometry", "functional", "mecke", "equivalence", "gaussianity")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# configuration

_SCHEMA = {
    "model": {
        "required": ("n", "T", "d", "k", "delta", "r"),
        "optional": {"functional": "pair", "pattern": None, "sigma": {"b": 0.0, "q": 1.0}},
    },
    "run": {
        "required": (),
        "optional": {"replicates": 100, "grid_spacing": 0.01, "lags": [0.0, 0.25, 0.5, 1.0],
                     "seed": 0, "mc_budget": 1_000_000, "zeta_budget": 200_000, "method": "marked",
                     "regime": "auto", "normalization": "formula", "stride": 1, "mecke_reps": 2000},
    },
    "output": {
        "required": (),
        "optional": {"directory": "out", "formats": ["csv", "json"]},
    },
}


def _number(cfg: dict, key: str, path: str, lo=None, hi=None, integer=False, strict_lo=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if lo is not None and (v < lo or (strict_lo and v == lo)):
        raise ConfigError(path, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


def _scaling(v, path: str, coef: str, expo: str, allow_zero: bool) -> tuple[float, float]:
    if not isinstance(v, dict):
        raise ConfigError(path, f"expected an object with keys {coef!r} and {expo!r}")
    for key in v:
        if key not in (coef, expo):
            raise ConfigError(f"{path}.{key}", "unknown key")
    for key in (coef, expo):
        if key not in v:
            raise ConfigError(f"{path}.{key}", "missing required key")
    c = _number(v, coef, f"{path}.{coef}", lo=0.0, strict_lo=not allow_zero)
    e = _number(v, expo, f"{path}.{expo}", lo=0.0)
    return c, e


@dataclass
class ExperimentConfig:
    """Validated experiment settings."""

    n: list
    T: float
    d: int
    k: int
    delta: float
    functional: str
    pattern: list | None
    r_scale: tuple
    sigma_scale: tuple
    replicates: int
    grid_spacing: float
    lags: list
    seed: int
    mc_budget: int
    zeta_budget: int
    method: str
    regime: str
    normalization: str
    stride: int
    mecke_reps: int
    directory: str
    formats: list
    raw: dict = field(default_factory=dict)

    # -- derived quantities
    @property
    def n_value(self) -> float:
        if len(self.n) != 1:
            raise ConfigError("model.n", "this command needs a single n, not a grid")
        return self.n[0]

    def r_at(self, n: float) -> float:
        a, p = self.r_scale
        return a * n ** (-p)

    def sigma_at(self, n: float) -> float:
        b, q = self.sigma_scale
        return b * n ** (-q) if b > 0 else 0.0

    def params(self, seed: int | None = None) -> SimParams:
        n = self.n_value
        return SimParams(n=n, T=self.T, sigma=self.sigma_at(n), d=self.d, k=self.k,
                         seed=self.seed if seed is None else seed)

    def grid(self, T: float | None = None) -> np.ndarray:
        T = self.T if T is None else T
        count = int(math.floor(T / self.grid_spacing + 1e-9))
        return np.arange(count + 1) * self.grid_spacing

    def functional_obj(self) -> InteractionFunctional:
        if self.functional == "pair":
            if self.k != 2:
                raise ConfigError("model.functional", "the pair indicator needs k = 2")
            return make_pair_indicator(self.delta)
        if self.functional == "clique":
            edges = [(i, j) for i in range(self.k) for j in range(i + 1, self.k)]
        else:
            edges = self.pattern
        try:
            pattern = GeometricPattern.from_edges(self.k, edges)
            return make_subgraph_count(pattern, self.delta, self.d)
        except ValueError as exc:
            raise ConfigError("model.pattern", str(exc)) from exc

    def hash(self) -> str:
        return config_hash({key: self.raw[key] for key in ("model", "run")})


def parse_config(doc: dict, seed: int | None = None) -> ExperimentConfig:
    """Validate a config document, filling defaults. ``seed`` overrides ``run.seed``."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in doc:
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown section")
    if "model" not in doc:
        raise ConfigError("model", "missing required key")
    full = {}
    for sec, spec in _SCHEMA.items():
        given = doc.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(sec, "section must be an object")
        for key in given:
            if key not in spec["required"] and key not in spec["optional"]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
        for key in spec["required"]:
            if key not in given:
                raise ConfigError(f"{sec}.{key}", "missing required key")
        merged = {key: json.loads(json.dumps(v)) for key, v in spec["optional"].items()}
        merged.update(given)
        full[sec] = merged
    if seed is not None:
        full["run"]["seed"] = seed
    m, run, out = full["model"], full["run"], full["output"]

    n = m["n"] if isinstance(m["n"], list) else [m["n"]]
    if not n:
        raise ConfigError("model.n", "the n grid is empty")
    n = [_number({"n": v}, "n", "model.n", lo=0.0, strict_lo=True) for v in n]
    T = _number(m, "T", "model.T", lo=0.0, strict_lo=True)
    d = _number(m, "d", "model.d", lo=1, hi=8, integer=True)
    k = _number(m, "k", "model.k", lo=2, hi=8, integer=True)
    delta = _number(m, "delta", "model.delta", lo=0.0, hi=0.5, strict_lo=True)
    if delta >= 0.5:
        raise ConfigError("model.delta", "must be < 0.5")
    functional = m["functional"]
    if functional not in ("pair", "subgraph", "clique"):
        raise ConfigError("model.functional", "must be 'pair', 'subgraph' or 'clique'")
    pattern = m["pattern"]
    if functional == "subgraph":
        if pattern is None:
            raise ConfigError("model.pattern", "missing required key for a subgraph functional")
        if (not isinstance(pattern, list)
                or not all(isinstance(e, list) and len(e) == 2 for e in pattern)):
            raise ConfigError("model.pattern", "expected a list of [i, j] edges")
        pattern = [tuple(int(v) for v in e) for e in pattern]
    r_scale = _scaling(m["r"], "model.r", "a", "p", allow_zero=False)
    sigma_scale = _scaling(m["sigma"], "model.sigma", "b", "q", allow_zero=True)

    replicates = _number(run, "replicates", "run.replicates", lo=1, integer=True)
    spacing = _number(run, "grid_spacing", "run.grid_spacing", lo=0.0, strict_lo=True)
    if spacing > T:
        raise ConfigError("run.grid_spacing", "exceeds the horizon T")
    lags = run["lags"]
    if not isinstance(lags, list) or not lags:
        raise ConfigError("run.lags", "expected a nonempty list")
    lags = [_number({"v": v}, "v", "run.lags", lo=0.0) for v in lags]
    if any(b <= a for a, b in zip(lags, lags[1:])):
        raise ConfigError("run.lags", "must be increasing")
    for lag in lags:
        ratio = lag / spacing
        if abs(ratio - round(ratio)) > 1e-6:
            raise ConfigError("run.lags", f"lag {lag} is not a multiple of the grid spacing")
    if lags[-1] > T:
        raise ConfigError("run.lags", "largest lag exceeds T")
    seed_v = run["seed"]
    if isinstance(seed_v, bool) or not isinstance(seed_v, int) or not 0 <= seed_v < 2**64:
        raise ConfigError("run.seed", "must be an unsigned 64-bit integer")
    mc_budget = _number(run, "mc_budget", "run.mc_budget", lo=1000, integer=True)
    zeta_budget = _number(run, "zeta_budget", "run.zeta_budget", lo=1000, integer=True)
    if run["method"] not in ("marked", "direct"):
        raise ConfigError("run.method", "must be 'marked' or 'direct'")
    if run["regime"] not in ("auto", "slow", "moderate", "fast"):
        raise ConfigError("run.regime", "must be auto, slow, moderate or fast")
    if run["normalization"] not in ("formula", "empirical"):
        raise ConfigError("run.normalization", "must be 'formula' or 'empirical'")
    stride = _number(run, "stride", "run.stride", lo=1, integer=True)
    mecke_reps = _number(run, "mecke_reps", "run.mecke_reps", lo=10, integer=True)
    if not isinstance(out["directory"], str) or not out["directory"]:
        raise ConfigError("output.directory", "expected a nonempty path")
    formats = out["formats"]
    if not isinstance(formats, list) or any(f not in ("csv", "json") for f in formats):
        raise ConfigError("output.formats", "expected a list drawn from 'csv' and 'json'")

    return ExperimentConfig(n, T, d, k, delta, functional, pattern, r_scale, sigma_scale,
                            replicates, spacing, lags, int(seed_v), mc_budget, zeta_budget,
                            run["method"], run["regime"], run["normalization"], stride, mecke_reps,
                            out["directory"], formats, full)


def load_config(path: str, seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    return parse_config(doc, seed)


# ---------------------------------------------------------------------------
# helpers


def _header(cfg: ExperimentConfig) -> str:
    return f"config_sha256={cfg.hash()} seed={cfg.seed}"


def _dump_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _stamp(cfg: ExperimentConfig, doc: dict) -> dict:
    doc = dict(doc)
    doc["config_sha256"] = cfg.hash()
    doc["seed"] = cfg.seed
    return doc


def _constants(cfg: ExperimentConfig, fnl: InteractionFunctional) -> moments.LimitConstants:
    rng = streams.stream(cfg.seed, streams.CONSTANTS, 0)
    return moments.compute_constants(fnl, cfg.d, cfg.mc_budget, rng)


def _regime_report(cfg: ExperimentConfig, n_range=None) -> limits.RegimeReport:
    a, p = cfg.r_scale
    b, q = cfg.sigma_scale
    if b == 0:
        # no motion: slower than any power of r
        b, q = 1.0, math.inf
    return limits.classify_regime(p, q, a, b, n_range or cfg.n, cfg.k, cfg.d)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ExperimentConfig, threads: int) -> int:
    fnl = cfg.functional_obj()
    n = cfg.n_value
    batch = simulate_batch(cfg.params(), fnl, cfg.r_at(n), cfg.grid(), cfg.replicates,
                           method=cfg.method, threads=threads)
    os.makedirs(cfg.directory, exist_ok=True)
    path = os.path.join(cfg.directory, "trajectories.csv")
    write_batch(batch, path, config_sha256=cfg.hash())
    print(path)
    return 0


def cmd_constants(cfg: ExperimentConfig, threads: int) -> int:
    fnl = cfg.functional_obj()
    c = _constants(cfg, fnl)
    gammas = [1.0, moments.GAMMA_ZERO, moments.GAMMA_INF]
    if len(cfg.n) == 1:
        n = cfg.n[0]
        gammas.insert(0, n * cfg.r_at(n) ** cfg.d)
    doc = _stamp(cfg, c.to_dict(gammas))
    doc["lambda_sum"] = [float(np.sum(entry["values"])) for entry in doc["lambda"]]
    os.makedirs(cfg.directory, exist_ok=True)
    path = os.path.join(cfg.directory, "constants.json")
    _dump_json(path, doc)
    print(path)
    return 0


def cmd_covariance(cfg: ExperimentConfig, threads: int) -> int:
    fnl = cfg.functional_obj()
    n = cfg.n_value
    r, sigma = cfg.r_at(n), cfg.sigma_at(n)
    report = _regime_report(cfg, [n])
    kind = report.regime.kind if cfg.regime == "auto" else cfg.regime
    if sigma == 0 and kind != "slow":
        raise ConfigError("run.regime", f"{kind} regime needs motion (model.sigma.b > 0)")
    if kind == "fast":
        reason = limits.fast_regime_refusal(cfg.d, cfg.k)
        if reason:
            _log(f"refused: {reason}")
            _log(json.dumps(report.to_dict(), indent=2, sort_keys=True))
            return EXIT_REFUSED
        if report.violations:
            _log(f"warning: fast-regime conditions not met: {', '.join(report.violations)}")

    c = _constants(cfg, fnl)
    gamma = n * r**cfg.d
    lags = np.asarray(cfg.lags)
    if kind == "slow":
        theo = [limits.limit_cov(limits.RegimeSpec("slow", gamma), t, c) for t in lags]
    elif kind == "moderate":
        beta = (sigma / r) ** 2
        table = limits.zeta_table(c, fnl, [beta * t for t in lags if t > 0], cfg.zeta_budget,
                                  streams.stream(cfg.seed, streams.CONSTANTS, 1))
        spec = limits.RegimeSpec("moderate", gamma, beta)
        theo = [limits.limit_cov(spec, t, c, zeta_fn=table) for t in lags]
    else:
        spec = limits.RegimeSpec("fast", gamma)
        theo = [limits.limit_cov(spec, t, c, n=n, r=r, sigma=sigma) if t > 0 else math.nan
                for t in lags]

    T = max(cfg.T, float(lags[-1]))
    batch = simulate_batch(SimParams(n, T, sigma, cfg.d, cfg.k, cfg.seed), fnl, r, cfg.grid(T),
                           cfg.replicates, method=cfg.method, threads=threads)
    mean, var = moments.mean_f(n, r, c), moments.var_f(n, r, c)
    curve = empirical_covariance(batch, lags, cfg.normalization, mean, var, cfg.stride)
    os.makedirs(cfg.directory, exist_ok=True)
    path = os.path.join(cfg.directory, "covariance.csv")
    limits.write_curve_csv(path, lags, theo, curve.values, curve.stderr, kind, _header(cfg))
    if "json" in cfg.formats:
        meta = {"regime": kind, "report": report.to_dict(), "n": n, "r": r, "sigma": sigma,
                "gamma_finite_n": gamma, "mean_f": mean, "var_f": var,
                "constants": c.to_dict([gamma]), "normalization": cfg.normalization,
                "stride": cfg.stride, "replicates": cfg.replicates}
        if kind == "moderate":
            meta["beta"] = (sigma / r) ** 2
        if kind == "fast" and batch.grid[-1] >= 1.0:
            mn, _ = estimate_mn(batch, cfg.normalization, mean, var, spacing=0.01)
            meta["mn_estimate"] = {"value": mn, "method": "trapezoid over lags 0..1, spacing 0.01"}
            meta["mn_bounds"] = list(limits.mn_bounds(n, r, sigma, 0.01, c))
        _dump_json(os.path.join(cfg.directory, "covariance.json"), _stamp(cfg, meta))
    print(path)
    return 0


def cmd_regime(cfg: ExperimentConfig, threads: int) -> int:
    report = _regime_report(cfg)
    doc = _stamp(cfg, report.to_dict())
    if report.regime.kind == "fast":
        doc["refusal"] = limits.fast_regime_refusal(cfg.d, cfg.k)
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if "json" in cfg.formats:
        os.makedirs(cfg.directory, exist_ok=True)
        _dump_json(os.path.join(cfg.directory, "regime.json"), doc)
    return 0


# -- verification suites; each returns a list of (name, passed, detail)


def _suite_geometry(cfg, threads):
    rng = streams.stream(cfg.seed, streams.VERIFY, 0)
    checks = []

    def add(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    add("project_wraps", abs(float(torus.project([0.7])[0]) + 0.3) < 1e-15)
    add("project_half_open", float(torus.project([0.5])[0]) == -0.5
        and float(torus.project([-0.5])[0]) == -0.5)
    add("distance_wraps", abs(float(torus.distance([0.4], [-0.4])) - 0.2) < 1e-15)
    add("distance_diagonal", abs(float(torus.distance([0.4, 0.4], [-0.4, -0.4]))
                                 - math.sqrt(0.08)) < 1e-15)
    x = rng.random((200, 3)) - 0.5
    y = rng.random((200, 3)) - 0.5
    fast = torus.distance(x, y)
    brute = np.array([torus.distance_bruteforce(a, b) for a, b in zip(x, y)])
    add("distance_matches_bruteforce", np.max(np.abs(fast - brute)) < 1e-12,
        f"max diff {np.max(np.abs(fast - brute)):.3g}")
    add("distance_bounded", np.all(fast <= math.sqrt(3) / 2 + 1e-15))
    shift = rng.random(3) - 0.5
    pts = rng.random((30, 3)) - 0.5
    d0 = torus.pairwise_distances(pts)
    d1 = torus.pairwise_distances(torus.translate(pts, shift))
    add("translate_isometry", np.max(np.abs(d0 - d1)) < 1e-12)
    small = 0.05 * (rng.random((10, 3)) - 0.5)
    ds = torus.pairwise_distances(torus.scale(0.5, small))
    add("scale_halves_distances", np.max(np.abs(ds - 0.5 * torus.pairwise_distances(small))) < 1e-12)
    add("diameter_of_point", torus.diameter(np.zeros((1, 3))) == 0.0)
    return checks


def _suite_functional(cfg, threads):
    rng = streams.stream(cfg.seed, streams.VERIFY, 1)
    checks = []
    pair = make_pair_indicator(0.25)
    add = checks.append
    add(("pair_inside", float(pair(np.array([[[0.0], [0.2]]]), 1.0)[0]) == 1.0, ""))
    add(("pair_outside", float(pair(np.array([[[0.0], [0.3]]]), 1.0)[0]) == 0.0, ""))
    add(("pair_wraps", float(pair(np.array([[[0.45], [-0.45]]]), 1.0)[0]) == 1.0, ""))
    fnl = cfg.functional_obj()
    r = min(0.3, 0.45 / fnl.delta)
    worst = 0.0
    for _ in range(5):
        pts = rng.random((12, cfg.d)) - 0.5
        worst = max(worst, abs(evaluate_f(pts, fnl, r) - evaluate_f_bruteforce(pts, fnl, r)))
    add(("grid_matches_bruteforce", worst == 0.0, f"max diff {worst}"))
    tup = torus.project(0.1 * (rng.random((500, fnl.k, cfg.d)) - 0.5))
    shift = rng.random((500, 1, cfg.d)) - 0.5
    same = np.array_equal(fnl(tup, r), fnl(torus.project(tup + shift), r))
    add(("translation_invariant", same, ""))
    diam = np.array([torus.diameter(t) for t in tup])
    vals = fnl(tup, r)
    add(("local", np.all(vals[diam > fnl.delta * r] == 0), ""))
    return checks


def _suite_mecke(cfg, threads):
    rng = streams.stream(cfg.seed, streams.VERIFY, 2)
    checks = []
    for name, pattern, h in mecke_battery(n=8.0, d=1, radius=0.2):
        lhs, rhs = mecke_check(h, pattern, 8.0, cfg.mecke_reps, rng, d=1, rhs_samples=100_000)
        se = math.hypot(lhs.stderr, rhs.stderr)
        z = (lhs.value - rhs.value) / se if se > 0 else 0.0
        checks.append((name, abs(z) < 3.0,
                       f"lhs={lhs.value:.6g}+-{lhs.stderr:.3g} rhs={rhs.value:.6g}+-{rhs.stderr:.3g} z={z:.2f}"))
    return checks


def _centred_stats(x: np.ndarray, y: np.ndarray):
    """Mean, variance and covariance of paired samples, each with a standard error."""
    R = x.size
    cx, cy = x - x.mean(), y - y.mean()
    out = {}
    for name, s in (("mean", x), ("variance", cx * cx * R / (R - 1)), ("lag_covariance", cx * cy * R / (R - 1))):
        out[name] = (float(np.mean(s)), float(np.std(s, ddof=1) / math.sqrt(R)))
    return out


def _suite_equivalence(cfg, threads):
    fnl = cfg.functional_obj()
    n = cfg.n_value
    r = cfg.r_at(n)
    lag = 0.5
    grid = np.array([0.0, lag])
    base = cfg.params()
    params = SimParams(n, max(base.T, lag), base.sigma, cfg.d, cfg.k, cfg.seed)
    marked = simulate_batch(params, fnl, r, grid, cfg.replicates, "marked", threads)
    other = SimParams(n, params.T, base.sigma, cfg.d, cfg.k, (cfg.seed + 1) % 2**64)
    direct = simulate_batch(other, fnl, r, grid, cfg.replicates, "direct", threads)
    a = _centred_stats(marked.values[:, 0], marked.values[:, 1])
    b = _centred_stats(direct.values[:, 0], direct.values[:, 1])
    checks = []
    for name in a:
        (va, sa), (vb, sb) = a[name], b[name]
        se = math.hypot(sa, sb)
        z = (va - vb) / se if se > 0 else 0.0
        checks.append((name, abs(z) < 3.0, f"marked={va:.6g} direct={vb:.6g} z={z:.2f}"))
    stat, pval = ks_permutation_test(marked.values[:, 0], direct.values[:, 0], 999,
                                     streams.stream(cfg.seed, streams.VERIFY, 3))
    checks.append(("ecdf_two_sample", pval > 0.01, f"D={stat:.4g} p={pval:.3g}"))
    return checks


def _suite_gaussianity(cfg, threads):
    fnl = cfg.functional_obj()
    n = cfg.n_value
    r = cfg.r_at(n)
    base = cfg.params()
    grid = np.array([0.0, 0.5])
    params = SimParams(n, max(base.T, 0.5), base.sigma, cfg.d, cfg.k, cfg.seed)
    batch = simulate_batch(params, fnl, r, grid, cfg.replicates, cfg.method, threads)
    v = batch.values
    z = (v - v.mean()) / v.std(ddof=1)
    rng = streams.stream(cfg.seed, streams.VERIFY, 4)
    reports = [("f_at_0", gaussianity_diagnostics(z[:, 0], rng=rng))]
    reports.append(("f_at_0_plus_f_at_half", cramer_wold(z, [[1.0, 1.0]], rng=rng)[0]))
    checks = []
    for name, rep in reports:
        checks.append((name, rep.within(4.0),
                       f"skew={rep.skewness:.4g} ({rep.skewness_z:.2f} se) "
                       f"kurt={rep.excess_kurtosis:.4g} ({rep.kurtosis_z:.2f} se) ecdf_p={rep.ecdf_pvalue:.3g}"))
    return checks


_SUITE_FNS = {"geometry": _suite_geometry, "functional": _suite_functional, "mecke": _suite_mecke,
              "equivalence": _suite_equivalence, "gaussianity": _suite_gaussianity}


def cmd_verify(cfg: ExperimentConfig, threads: int, suite: str) -> int:
    checks = [(name, bool(ok), detail) for name, ok, detail in _SUITE_FNS[suite](cfg, threads)]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {suite}.{name} {detail}".rstrip())
    passed = all(ok for _, ok, _ in checks)
    if "json" in cfg.formats:
        os.makedirs(cfg.directory, exist_ok=True)
        doc = _stamp(cfg, {"suite": suite, "passed": passed,
                           "checks": [{"name": n_, "passed": ok, "detail": d} for n_, ok, d in checks]})
        _dump_json(os.path.join(cfg.directory, f"verify_{suite}.json"), doc)
    return 0 if passed else EXIT_FAILED


# ---------------------------------------------------------------------------
# entry point


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=_u64, default=None, help="override run.seed")
    common.add_argument("--out", default=None, help="override output.directory")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: all cores); results do not depend on it")
    parser = argparse.ArgumentParser(prog="dynlocal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write replicate trajectories")
    sub.add_parser("constants", parents=[common], help="estimate overlap integrals and weights")
    sub.add_parser("covariance", parents=[common], help="theoretical vs empirical covariance curve")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=SUITES)
    sub.add_parser("regime", parents=[common], help="classify a parameter scaling")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        if args.out:
            cfg.directory = args.out
        threads = args.threads if args.threads else (os.cpu_count() or 1)
        if threads < 1:
            raise ConfigError("--threads", "must be positive")
        if args.command == "verify":
            return cmd_verify(cfg, threads, args.suite)
        return {"simulate": cmd_simulate, "constants": cmd_constants, "covariance": cmd_covariance,
                "regime": cmd_regime}[args.command](cfg, threads)
    except ConfigError as exc:
        print(f"dynlocal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
