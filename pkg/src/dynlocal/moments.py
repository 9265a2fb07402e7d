"""Exact finite-n moments of f and the constants that drive the limits.

With ``X`` a k-tuple of iid uniform points, ``alpha(r) = E[xi_r(X)]`` and
``alpha_j(r)`` is the mean of ``xi_r(X) xi_r(X')`` when ``X`` and ``X'``
share ``j`` points. Scale invariance gives

    alpha_j(r) = r^{d(2k-j-1)} kappa_tilde_j,

where ``kappa_tilde_j`` is an integral over a product of balls of radius
``delta`` that is estimated here by Monte Carlo. The mean and variance of
f at intensity n follow:

    E f   = n^k alpha(r) / k!
    var f = sum_j n^{2k-j} alpha_j(r) / (j! ((k-j)!)^2).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .functional import InteractionFunctional
from .torus import ball_volume, project, sample_ball

CHUNK = 200_000
GAMMA_ZERO = "0"
GAMMA_INF = "inf"


@dataclass(frozen=True)
class MomentEstimate:
    """Monte-Carlo estimate with its standard error."""

    value: float
    stderr: float
    samples: int

    @classmethod
    def from_sums(cls, s1: float, s2: float, m: int) -> "MomentEstimate":
        mean = s1 / m
        var = max(s2 / m - mean * mean, 0.0) * m / max(m - 1, 1)
        return cls(float(mean), float(math.sqrt(var / m)), int(m))

    @classmethod
    def from_samples(cls, x) -> "MomentEstimate":
        x = np.asarray(x, dtype=float)
        m = x.size
        sd = float(np.std(x, ddof=1)) if m > 1 else 0.0
        return cls(float(np.mean(x)), sd / math.sqrt(m), int(m))

    @property
    def rel_err(self) -> float:
        return self.stderr / abs(self.value) if self.value else math.inf

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples}


def _mc(sampler, budget: int, rng, rel_tol: float | None = None, max_budget: int | None = None):
    """Accumulate ``sampler(rng, m)`` in chunks; optionally double until rel_tol.

    Sums are accumulated chunk by chunk in a fixed order, so results only
    depend on the generator state.
    """
    s1 = s2 = 0.0
    m = 0
    target = int(budget)
    max_budget = int(max_budget or 64 * budget)
    while True:
        while m < target:
            c = min(CHUNK, target - m)
            x = sampler(rng, c)
            s1 += float(np.sum(x))
            s2 += float(np.sum(x * x))
            m += c
        est = MomentEstimate.from_sums(s1, s2, m)
        if rel_tol is None or est.value == 0 or est.rel_err <= rel_tol or target >= max_budget:
            return est
        target = min(2 * target, max_budget)


def _check_budget(budget: int) -> int:
    if int(budget) < 1000:
        raise ValueError(f"budget must be at least 1000, got {budget}")
    return int(budget)


def _anchored(rest: np.ndarray) -> np.ndarray:
    """Prepend the origin to (m, k-1, d) offsets and wrap onto the torus."""
    m, _, d = rest.shape
    return project(np.concatenate([np.zeros((m, 1, d)), rest], axis=1))


def alpha(r: float, fnl: InteractionFunctional, d: int, budget: int = 10**6, rng=None,
          method: str = "importance") -> MomentEstimate:
    """Monte-Carlo estimate of ``E[xi_r(X)]`` for iid uniform k-tuples.

    ``method="naive"`` averages over uniform tuples. ``"importance"`` fixes
    the first point at the origin (translation invariance) and draws the rest
    uniformly in the ball of radius ``delta * r``, reweighting by the ball
    volume; this is exact because the functional vanishes outside that ball.
    """
    budget = _check_budget(budget)
    rng = np.random.default_rng() if rng is None else rng
    if not 0 < r <= 1 or not r * fnl.delta < 0.5:
        raise ValueError(f"need 0 < r <= 1 and r*delta < 1/2, got r={r}")
    k = fnl.k
    if method == "naive":
        def sampler(g, m):
            return fnl(g.random((m, k, d)) - 0.5, r)
    elif method == "importance":
        rad = fnl.delta * r
        w = ball_volume(rad, d) ** (k - 1)

        def sampler(g, m):
            return w * fnl(_anchored(sample_ball(g, (m, k - 1), d, rad)), r)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _mc(sampler, budget, rng)


def _pair_tuples(g, m, k, j, d, rad):
    """Anchored tuples X, X' sharing the origin and j-1 further points."""
    y = sample_ball(g, (m, 2 * k - j - 1), d, rad)
    x = _anchored(y[:, : k - 1])
    xp = _anchored(np.concatenate([y[:, : j - 1], y[:, k - 1:]], axis=1))
    return x, xp


def kappa_tilde(j: int, fnl: InteractionFunctional, d: int, budget: int = 10**6, rng=None,
                rel_tol: float | None = 0.01, max_budget: int | None = None) -> MomentEstimate:
    """Overlap integral of the unit-scale functional for tuples sharing ``j`` points.

    Samples uniformly on the product of ``2k - j - 1`` balls of radius
    ``delta`` and multiplies by its volume. The budget doubles until the
    relative standard error is below ``rel_tol`` or ``max_budget`` is hit.
    """
    k = fnl.k
    if not (isinstance(j, (int, np.integer)) and 1 <= j <= k):
        raise ValueError(f"j must be an integer in 1..{k}, got {j}")
    budget = _check_budget(budget)
    rng = np.random.default_rng() if rng is None else rng
    vol = ball_volume(fnl.delta, d) ** (2 * k - j - 1)

    def sampler(g, m):
        x, xp = _pair_tuples(g, m, k, j, d, fnl.delta)
        return vol * fnl(x, 1.0) * fnl(xp, 1.0)

    return _mc(sampler, budget, rng, rel_tol, max_budget)


# ---------------------------------------------------------------------------
# constants and closed-form moments


@dataclass
class LimitConstants:
    """Unit-scale constants of a functional in dimension ``d``.

    ``kappa_tilde[j-1]`` is the overlap integral for ``j`` shared points and
    ``alpha_unit`` is ``alpha(1)``, the plain integral of the functional
    (equal to ``kappa_tilde[k-1]`` for indicators).
    """

    k: int
    d: int
    delta: float
    kappa_tilde: np.ndarray
    kappa_tilde_stderr: np.ndarray
    alpha_unit: float
    alpha_unit_stderr: float = 0.0
    samples: list = field(default_factory=list)

    def __post_init__(self):
        self.kappa_tilde = np.asarray(self.kappa_tilde, dtype=float)
        self.kappa_tilde_stderr = np.asarray(self.kappa_tilde_stderr, dtype=float)
        if self.kappa_tilde.shape != (self.k,):
            raise ValueError("kappa_tilde needs one entry per j = 1..k")
        if np.any(self.kappa_tilde <= 0):
            raise ValueError("overlap integrals must be positive; is the functional feasible?")

    @property
    def kappa(self) -> np.ndarray:
        j = np.arange(1, self.k + 1)
        return self.kappa_tilde / _overlap_factorial(self.k, j)

    @property
    def kappa_stderr(self) -> np.ndarray:
        j = np.arange(1, self.k + 1)
        return self.kappa_tilde_stderr / _overlap_factorial(self.k, j)

    def lam(self, gamma) -> np.ndarray:
        return lam(gamma, self)

    def to_dict(self, gammas=(1.0,)) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "delta": self.delta,
            "kappa_tilde": self.kappa_tilde.tolist(),
            "kappa_tilde_stderr": self.kappa_tilde_stderr.tolist(),
            "kappa": self.kappa.tolist(),
            "kappa_stderr": self.kappa_stderr.tolist(),
            "alpha_unit": self.alpha_unit,
            "alpha_unit_stderr": self.alpha_unit_stderr,
            "samples": list(self.samples),
            "lambda": [{"gamma": _gamma_label(g), "values": lam(g, self).tolist()} for g in gammas],
        }

    def to_json(self, gammas=(1.0,)) -> str:
        return json.dumps(self.to_dict(gammas), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "LimitConstants":
        return cls(doc["k"], doc["d"], doc["delta"], doc["kappa_tilde"], doc["kappa_tilde_stderr"],
                   doc["alpha_unit"], doc.get("alpha_unit_stderr", 0.0), doc.get("samples", []))


def _overlap_factorial(k: int, j):
    j = np.asarray(j)
    fact = np.vectorize(math.factorial)
    return fact(j) * fact(k - j) ** 2


def compute_constants(fnl: InteractionFunctional, d: int, budget: int = 10**6, rng=None,
                      rel_tol: float | None = 0.01) -> LimitConstants:
    """Estimate every overlap integral (and the plain integral) of ``fnl``."""
    rng = np.random.default_rng() if rng is None else rng
    est = [kappa_tilde(j, fnl, d, budget, rng, rel_tol) for j in range(1, fnl.k + 1)]
    if fnl.kind in ("pair", "subgraph"):
        # indicators: xi^2 = xi, so the plain integral is the full overlap
        a = est[-1]
    else:
        a = alpha(1.0, fnl, d, budget, rng)
    return LimitConstants(fnl.k, d, fnl.delta, [e.value for e in est], [e.stderr for e in est],
                          a.value, a.stderr, [e.samples for e in est])


def _check_r(r: float, c: LimitConstants) -> None:
    if not (r > 0 and r * c.delta < 0.5):
        raise ValueError(f"scaling needs 0 < r < 1/(2 delta) = {0.5 / c.delta}, got r={r}")


def alpha_j(j: int, r: float, c: LimitConstants) -> float:
    """``r^{d(2k-j-1)} kappa_tilde_j``."""
    if not 1 <= j <= c.k:
        raise ValueError(f"j must lie in 1..{c.k}")
    _check_r(r, c)
    return float(r ** (c.d * (2 * c.k - j - 1)) * c.kappa_tilde[j - 1])


def alpha_r(r: float, c: LimitConstants) -> float:
    _check_r(r, c)
    return float(r ** (c.d * (c.k - 1)) * c.alpha_unit)


def mean_f(n: float, r: float, c: LimitConstants) -> float:
    """Expected value of f at intensity ``n``: ``n^k alpha(r) / k!``."""
    return float(n**c.k * alpha_r(r, c) / math.factorial(c.k))


def var_terms(n: float, r: float, c: LimitConstants) -> np.ndarray:
    """Per-overlap contributions ``n^{2k-j} alpha_j(r) / (j!((k-j)!)^2)``."""
    j = np.arange(1, c.k + 1)
    a = np.array([alpha_j(int(i), r, c) for i in j])
    return n ** (2 * c.k - j) * a / _overlap_factorial(c.k, j)


def var_f(n: float, r: float, c: LimitConstants) -> float:
    return float(np.sum(var_terms(n, r, c)))


def var_f_stderr(n: float, r: float, c: LimitConstants) -> float:
    """Standard error of :func:`var_f` propagated from the constants."""
    j = np.arange(1, c.k + 1)
    scale = n ** (2 * c.k - j) * r ** (c.d * (2 * c.k - j - 1)) / _overlap_factorial(c.k, j)
    return float(np.sqrt(np.sum((scale * c.kappa_tilde_stderr) ** 2)))


def kappa(j: int, c: LimitConstants) -> float:
    if not 1 <= j <= c.k:
        raise ValueError(f"j must lie in 1..{c.k}")
    return float(c.kappa[j - 1])


def _gamma_label(gamma):
    if isinstance(gamma, str):
        return gamma
    return "inf" if math.isinf(gamma) else float(gamma)


def lam(gamma, c: LimitConstants) -> np.ndarray:
    """Mixing weights ``kappa_j gamma^{-j} / sum_l kappa_l gamma^{-l}``.

    ``gamma`` may be the strings ``"0"`` or ``"inf"`` (or ``math.inf``) for the
    limits; these are resolved symbolically by the dominant power of gamma.
    """
    k = c.k
    if isinstance(gamma, str):
        key = gamma.strip().lower()
        if key in ("0", "zero", "0+"):
            gamma = 0
        elif key in ("inf", "infinity", "+inf"):
            gamma = math.inf
        else:
            gamma = float(key)
            if gamma <= 0 or not math.isfinite(gamma):
                raise ValueError(f"gamma must be positive, got {gamma}")
        if gamma == 0:
            out = np.zeros(k)
            out[-1] = 1.0  # gamma^{-k} dominates
            return out
    if math.isinf(gamma) and gamma > 0:
        out = np.zeros(k)
        out[0] = 1.0  # gamma^{-1} dominates
        return out
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive (use '0' or 'inf' for limits), got {gamma}")
    j = np.arange(1, k + 1)
    logw = np.log(c.kappa) - j * math.log(gamma)
    return np.exp(logw - logsumexp(logw))


def superposition_coefficients(gamma, c: LimitConstants) -> np.ndarray:
    """Unit-norm weights ``sqrt(lam_j)`` of the independent stationary
    Ornstein-Uhlenbeck components (rates ``j``) whose sum has covariance
    ``sum_j lam_j e^{-j t}``."""
    return np.sqrt(lam(gamma, c))


# ---------------------------------------------------------------------------
# correlation term


def _wrapped_gauss_logpdf(x: np.ndarray, s: float) -> np.ndarray:
    """Log-density of a centred Gaussian (sd ``s`` per axis) wrapped onto the torus."""
    reach = int(math.ceil(8 * s)) + 1
    nu = np.arange(-reach, reach + 1, dtype=float)
    z = (x[..., None] + nu) / s
    per_axis = logsumexp(-0.5 * z * z, axis=-1) - math.log(math.sqrt(2 * math.pi) * s)
    return np.sum(per_axis, axis=-1)


def theta_j_mc(j: int, r: float, sigma: float, Delta: float, fnl: InteractionFunctional, d: int,
               budget: int = 10**6, rng=None, method: str = "auto",
               rel_tol: float | None = None) -> MomentEstimate:
    """``E[xi_r(X) xi_r(X' + Z)]`` where X, X' share j points and Z ~ N(0, sigma^2 Delta).

    Importance sampled around the first point of X, which sits at the origin.
    The other points of X lie in the ball of radius ``delta * r``. The points
    of X' not shared with X lie in the same ball around the displaced first
    point. The shared points are handled in one of two ways.

    * ``"displace"`` draws their Gaussian displacements directly.
    * ``"density"`` draws displaced points 2..j uniformly in the ball around
      the displaced first point and weights by the wrapped Gaussian density
      of the required displacement. This is far more efficient when the
      motion is large compared with ``delta * r``.

    ``"auto"`` picks ``density`` when ``sigma * sqrt(Delta) > delta * r``.
    Both are unbiased.
    """
    k = fnl.k
    if not 1 <= j <= k:
        raise ValueError(f"j must lie in 1..{k}")
    if sigma < 0 or Delta < 0:
        raise ValueError("sigma and Delta must be nonnegative")
    if not 0 < r <= 1 or not r * fnl.delta < 0.5:
        raise ValueError(f"need 0 < r <= 1 and r*delta < 1/2, got r={r}")
    budget = _check_budget(budget)
    rng = np.random.default_rng() if rng is None else rng
    rad = fnl.delta * r
    s = sigma * math.sqrt(Delta)
    if method == "auto":
        method = "density" if (s > rad and j >= 2) else "displace"
    vol = ball_volume(rad, d)
    base_w = vol ** (2 * k - j - 1)

    def own_part(g, m):
        y = sample_ball(g, (m, k - 1), d, rad)
        x = np.concatenate([np.zeros((m, 1, d)), y], axis=1)
        return x, fnl(project(x), r)

    if method == "displace":
        def sampler(g, m):
            x, fx = own_part(g, m)
            shared = x[:, :j]
            if s > 0:
                shared = shared + s * g.standard_normal(shared.shape)
            rest = shared[:, :1] + sample_ball(g, (m, k - j), d, rad)
            xp = project(np.concatenate([shared, rest], axis=1))
            return base_w * fx * fnl(xp, r)
    elif method == "density":
        if s <= 0:
            raise ValueError("density method needs positive motion")

        def sampler(g, m):
            x, fx = own_part(g, m)
            first = s * g.standard_normal((m, 1, d))
            others = first + sample_ball(g, (m, j - 1 + k - j), d, rad)
            xp = project(np.concatenate([first, others], axis=1))
            # shared point i moved from x_i to xp_i
            logw = _wrapped_gauss_logpdf(project(xp[:, 1:j] - x[:, 1:j]), s).sum(axis=1)
            w = base_w * vol ** (j - 1) * np.exp(logw)
            return w * fx * fnl(xp, r)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _mc(sampler, budget, rng, rel_tol)


__all__ = [
    "MomentEstimate", "LimitConstants", "GAMMA_ZERO", "GAMMA_INF", "alpha", "kappa_tilde",
    "compute_constants", "alpha_j", "alpha_r", "mean_f", "var_f", "var_f_stderr", "var_terms",
    "kappa", "lam", "superposition_coefficients", "theta_j_mc",
]
