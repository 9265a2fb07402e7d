"""Limiting covariance of the normalised functional in the three motion regimes.

* slow (motion much smaller than the interaction range): a superposition of
  exponentials, ``sum_j lambda_j e^{-j t}``;
* moderate (motion comparable, ``sigma / r -> sqrt(beta)``): the j >= 2 terms
  are damped by ``zeta_j(beta t)``, a Gaussian-smoothed self-overlap of the
  functional divided by its undamped value;
* fast (motion much larger): a pre-limit ratio that depends on ``(n, r,
  sigma)`` and decays like a power of the lag, leading to white noise after
  integration.

Also here: the damping integrals themselves, the quadratic form behind them,
order-of-magnitude bounds on the white-noise scale, and classification of
power-law scalings ``r = a n^-p``, ``sigma = b n^-q``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .functional import InteractionFunctional
from .moments import (CHUNK, LimitConstants, MomentEstimate, _anchored, _check_budget, _mc,
                      _overlap_factorial, kappa_tilde, lam)
from .torus import ball_volume, sample_ball

KINDS = ("slow", "moderate", "fast")


# below this the damping kernel is sharply peaked relative to the unit balls
SMALL_BETA = 0.05


class SingularLag(ValueError):
    """The fast-regime expression diverges at lag zero."""


@dataclass(frozen=True)
class RegimeSpec:
    """Regime of a scaling: ``kind`` plus ``beta`` (moderate) and ``gamma``.

    ``gamma`` is the limit of ``n r^d``: a positive float or the symbols
    ``"0"`` / ``"inf"``.
    """

    kind: str
    gamma: object = 1.0
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "moderate" and not (self.beta is not None and self.beta > 0):
            raise ValueError("moderate regime requires beta > 0")


@dataclass
class CovarianceCurve:
    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.lags.ndim != 1 or self.lags.shape != self.values.shape:
            raise ValueError("lags and values must be matching 1-d arrays")
        if np.any(self.lags < 0) or np.any(np.diff(self.lags) <= 0):
            raise ValueError("lags must be nonnegative and increasing")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values")


# ---------------------------------------------------------------------------
# the quadratic form


def matrix_M(j: int, beta: float) -> np.ndarray:
    """``(j I - J) / (j beta)`` of size ``j-1``."""
    if j < 2 or beta <= 0:
        raise ValueError("need j >= 2 and beta > 0")
    m = j - 1
    return (j * np.eye(m) - np.ones((m, m))) / (j * beta)


def det_M(j: int, beta: float) -> float:
    """Closed-form determinant ``1 / (beta^{j-1} j)``."""
    if j < 2 or beta <= 0:
        raise ValueError("need j >= 2 and beta > 0")
    return 1.0 / (beta ** (j - 1) * j)


def zeta_kernel(w, j: int, beta: float) -> np.ndarray:
    """Damping kernel for shared-point displacements ``w`` of shape (..., j-1, d).

    ``(2 pi beta)^{-d(j-1)/2} j^{-d/2} exp(-(sum |w_i|^2 - j |mean-like term|^2) / (2 beta))``
    where the second term is ``j |sum_i w_i / j|^2``.
    """
    w = np.asarray(w, dtype=float)
    d = w.shape[-1]
    sq = np.sum(w * w, axis=(-2, -1))
    tot = np.sum(w, axis=-2)
    quad = sq - np.sum(tot * tot, axis=-1) / j
    norm = (2 * math.pi * beta) ** (-d * (j - 1) / 2) * j ** (-d / 2)
    return norm * np.exp(-quad / (2 * beta))


def zeta_kernel_matrix(w, j: int, beta: float) -> np.ndarray:
    """Same kernel written as a product over coordinates of Gaussian forms in ``matrix_M``."""
    w = np.asarray(w, dtype=float)
    M = matrix_M(j, beta)
    quad = np.einsum("...li,lm,...mi->...i", w, M, w)
    norm = 1.0 / ((2 * math.pi) ** ((j - 1) / 2) * math.sqrt(beta ** (j - 1) * j))
    return np.prod(norm * np.exp(-0.5 * quad), axis=-1)


# ---------------------------------------------------------------------------
# damping integrals


def _zeta_samples(g, m, fnl: InteractionFunctional, j: int, d: int):
    """Uniform draws on the ball product: both tuples' values and shared offsets."""
    k = fnl.k
    own = sample_ball(g, (m, k - 1), d, fnl.delta)
    other = sample_ball(g, (m, k - 1), d, fnl.delta)
    # first j-1 entries are the shared points z and z'
    fx = fnl(_anchored(own), 1.0)
    fy = fnl(_anchored(other), 1.0)
    return fx * fy, other[:, : j - 1] - own[:, : j - 1]


def zeta_tilde_many(j: int, betas, fnl: InteractionFunctional, d: int, budget: int = 10**6,
                    rng=None, method: str = "uniform") -> list[MomentEstimate]:
    """Damping integrals at several ``beta`` from one set of samples.

    ``method="uniform"`` samples the product of ``2k-2`` unit-scale balls and
    weights by the kernel times the product volume. ``"gaussian"`` draws the
    shared displacements from the Gaussian the kernel is proportional to
    (covariance ``beta (I + J)`` per coordinate) and scores whether the
    displaced points stay in their balls; it needs fresh samples per ``beta``
    and suits small ``beta``. For ``j = 1`` the integral equals the plain
    overlap integral and is estimated as such.
    """
    k = fnl.k
    if not 1 <= j <= k:
        raise ValueError(f"j must lie in 1..{k}")
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    if np.any(betas <= 0):
        raise ValueError("beta must be positive")
    budget = _check_budget(budget)
    rng = np.random.default_rng() if rng is None else rng
    if j == 1:
        est = kappa_tilde(1, fnl, d, budget, rng, rel_tol=None)
        return [est] * len(betas)
    vol = ball_volume(fnl.delta, d)
    if method == "uniform":
        s1 = np.zeros(len(betas))
        s2 = np.zeros(len(betas))
        m = 0
        while m < budget:
            c = min(CHUNK, budget - m)
            ff, w = _zeta_samples(rng, c, fnl, j, d)
            for b, beta in enumerate(betas):
                x = vol ** (2 * k - 2) * ff * zeta_kernel(w, j, beta)
                s1[b] += float(np.sum(x))
                s2[b] += float(np.sum(x * x))
            m += c
        return [MomentEstimate.from_sums(s1[b], s2[b], m) for b in range(len(betas))]
    if method == "gaussian":
        out = []
        for beta in betas:
            def sampler(g, c, beta=beta):
                own = sample_ball(g, (c, k - 1), d, fnl.delta)
                g0 = g.standard_normal((c, j - 1, d))
                h = g.standard_normal((c, 1, d))
                w = math.sqrt(beta) * (g0 + h)
                zp = own[:, : j - 1] + w
                inside = np.all(np.sum(zp * zp, axis=-1) <= fnl.delta**2, axis=-1)
                yp = sample_ball(g, (c, k - j), d, fnl.delta)
                other = np.concatenate([zp, yp], axis=1)
                val = fnl(_anchored(own), 1.0) * np.where(inside, fnl(_anchored(other), 1.0), 0.0)
                return vol ** (2 * k - j - 1) * val
            out.append(_mc(sampler, budget, rng))
        return out
    raise ValueError(f"unknown method {method!r}")


def zeta_tilde(j: int, beta: float, fnl: InteractionFunctional, d: int, budget: int = 10**6,
               rng=None, method: str = "uniform") -> MomentEstimate:
    """Damping integral for ``j`` shared points at ``beta`` (see :func:`zeta_tilde_many`)."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return zeta_tilde_many(j, [beta], fnl, d, budget, rng, method)[0]


def zeta_ratio(zt: MomentEstimate, kt_value: float, kt_stderr: float = 0.0) -> tuple[float, float]:
    """``zeta_tilde / kappa_tilde`` with first-order error propagation."""
    v = zt.value / kt_value
    if not zt.value:
        return v, zt.stderr / kt_value
    se = abs(v) * math.hypot(zt.stderr / zt.value, kt_stderr / kt_value)
    return v, se


@dataclass
class ZetaTable:
    """Damping factors ``zeta_j`` tabulated on a grid of beta, linearly interpolated.

    ``zeta_j(0) = 1`` and ``zeta_1 = 1`` hold by construction.
    """

    betas: np.ndarray
    values: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)

    def __call__(self, j: int, beta: float) -> float:
        if j == 1 or beta == 0:
            return 1.0
        b = np.concatenate([[0.0], self.betas])
        v = np.concatenate([[1.0], self.values[j]])
        if beta < 0 or beta > b[-1] * (1 + 1e-12):
            raise ValueError(f"beta={beta} outside the tabulated range [0, {b[-1]}]")
        return float(np.interp(beta, b, v))

    def se(self, j: int, beta: float) -> float:
        if j == 1 or beta == 0:
            return 0.0
        b = np.concatenate([[0.0], self.betas])
        return float(np.interp(beta, b, np.concatenate([[0.0], self.stderr[j]])))


def zeta_table(constants: LimitConstants, fnl: InteractionFunctional, betas, budget: int = 10**6,
               rng=None) -> ZetaTable:
    """Tabulate ``zeta_j(beta) = zeta_tilde_j(beta) / kappa_tilde_j`` for j = 2..k."""
    betas = np.asarray(sorted(set(float(b) for b in np.atleast_1d(betas) if b > 0)))
    tab = ZetaTable(betas)
    for j in range(2, constants.k + 1):
        ests = zeta_tilde_many(j, betas, fnl, constants.d, budget, rng)
        pairs = [zeta_ratio(e, constants.kappa_tilde[j - 1], constants.kappa_tilde_stderr[j - 1])
                 for e in ests]
        tab.values[j] = np.array([p[0] for p in pairs])
        tab.stderr[j] = np.array([p[1] for p in pairs])
    return tab


def zeta(j: int, beta: float, constants: LimitConstants, fnl: InteractionFunctional | None = None,
         budget: int = 10**6, rng=None, method: str = "auto") -> tuple[float, float]:
    """``(zeta_j(beta), stderr)``; exactly ``(1, 0)`` for ``j = 1`` or ``beta = 0``.

    ``method="auto"`` uses the Gaussian sampler below ``SMALL_BETA``, where the
    kernel is too peaked for uniform sampling, and the uniform one above.
    """
    if not 1 <= j <= constants.k:
        raise ValueError(f"j must lie in 1..{constants.k}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if j == 1 or beta == 0:
        return 1.0, 0.0
    if fnl is None:
        raise ValueError("a functional is needed to estimate zeta for j >= 2")
    if method == "auto":
        method = "gaussian" if beta < SMALL_BETA else "uniform"
    est = zeta_tilde(j, beta, fnl, constants.d, budget, rng, method)
    return zeta_ratio(est, constants.kappa_tilde[j - 1], constants.kappa_tilde_stderr[j - 1])


# ---------------------------------------------------------------------------
# covariance curves


def limit_cov(regime: RegimeSpec, t: float, constants: LimitConstants, zeta_fn=None,
              n: float | None = None, r: float | None = None, sigma: float | None = None) -> float:
    """Normalised covariance at lag ``t``.

    Parameters
    ----------
    zeta_fn : callable (j, beta) -> float, optional
        Damping factors; required for the moderate regime (a :class:`ZetaTable`).
    n, r, sigma : float, optional
        Required for the fast regime, whose expression is pre-limit.
    """
    if t < 0:
        raise ValueError("lag must be nonnegative")
    k = constants.k
    j = np.arange(1, k + 1)
    if regime.kind == "slow":
        return float(np.sum(lam(regime.gamma, constants) * np.exp(-j * t)))
    if regime.kind == "moderate":
        if zeta_fn is None:
            raise ValueError("moderate regime needs zeta_fn")
        lj = lam(regime.gamma, constants)
        z = np.array([1.0] + [zeta_fn(int(i), regime.beta * t) for i in j[1:]])
        return float(np.sum(lj * np.exp(-j * t) * z))
    if n is None or r is None or sigma is None:
        raise ValueError("fast regime needs n, r and sigma")
    if t == 0:
        raise SingularLag("the fast-regime expression is singular at lag 0")
    d = constants.d
    num = (np.exp(-j * t) * constants.kappa_tilde[0] / _overlap_factorial(k, j)
           * (2 * math.pi * t) ** (-d * (j - 1) / 2) * j ** (-d / 2)
           * (n * sigma**d) ** (-j.astype(float)) * (sigma / r) ** d)
    den = constants.kappa * (n * r**d) ** (-j.astype(float))
    return float(np.sum(num) / np.sum(den))


def limit_curve(regime: RegimeSpec, lags, constants: LimitConstants, **kw) -> CovarianceCurve:
    lags = np.asarray(lags, dtype=float)
    return CovarianceCurve(lags, [limit_cov(regime, float(t), constants, **kw) for t in lags])


def finite_n_cov(thetas, Delta: float, n: float, r: float, constants: LimitConstants) -> float:
    """Exact normalised covariance at lag ``Delta`` from correlation terms.

    ``thetas[j-1]`` is ``E[xi_r(X) xi_r(X' + Z)]`` for ``j`` shared points
    (see :func:`dynlocal.moments.theta_j_mc`); the denominator uses the
    variance formula.
    """
    k = constants.k
    j = np.arange(1, k + 1)
    thetas = np.asarray(thetas, dtype=float)
    fac = _overlap_factorial(k, j)
    a = np.array([r ** (constants.d * (2 * k - i - 1)) * constants.kappa_tilde[i - 1] for i in j])
    # divide through by n^{2k} to keep numbers representable
    num = np.sum(np.exp(-j * Delta) * n ** (-j.astype(float)) * thetas / fac)
    den = np.sum(n ** (-j.astype(float)) * a / fac)
    return float(num / den)


def mn_bounds(n: float, r: float, sigma: float, epsilon: float, constants: LimitConstants):
    """Order-of-magnitude bounds ``((r/sigma)^{2+eps}, (r/sigma)^{2 - 4/(d(k-1)+2)})``.

    Order constants are taken as 1. ``n`` is accepted for symmetry with the
    other regime helpers; the bounds depend on it only through ``r`` and
    ``sigma``.
    """
    if not (r > 0 and sigma > 0 and epsilon > 0):
        raise ValueError("need r, sigma, epsilon > 0")
    x = r / sigma
    up = 2 - 4 / (constants.d * (constants.k - 1) + 2)
    return x ** (2 + epsilon), x**up


# ---------------------------------------------------------------------------
# scalings


@dataclass
class RegimeReport:
    regime: RegimeSpec
    conditions: dict
    values: dict

    @property
    def violations(self) -> list[str]:
        return [name for name, ok in self.conditions.items() if not ok]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        g = self.regime.gamma
        return {"kind": self.regime.kind, "beta": self.regime.beta,
                "gamma": g if isinstance(g, str) else float(g),
                "conditions": dict(self.conditions), "violations": self.violations,
                "values": self.values}


def classify_regime(p: float, q: float, a: float = 1.0, b: float = 1.0, n_range=(1e3, 1e4),
                    k: int = 2, d: int = 1, epsilon: float = 0.01, tol: float = 1e-12) -> RegimeReport:
    """Regime and side conditions for ``r = a n^-p`` and ``sigma = b n^-q``.

    Exponents decide every limit; ``n_range`` only feeds the numeric values
    in the report.
    """
    if a <= 0 or b <= 0:
        raise ValueError("prefactors must be positive")
    e_mean = k - p * d * (k - 1)      # n^k r^{d(k-1)} ~ n^{e_mean}
    e_gamma = 1 - p * d               # n r^d
    e_sig = 1 - q * d                 # n sigma^d
    if abs(e_gamma) <= tol:
        gamma = a**d
    else:
        gamma = "inf" if e_gamma > 0 else "0"
    if abs(q - p) <= tol:
        kind, beta = "moderate", (b / a) ** 2
    elif q > p:
        kind, beta = "slow", None
    else:
        kind, beta = "fast", None
    cond = {"mean_diverges": e_mean > tol}
    if kind == "fast":
        cond["n_r_d_to_zero"] = e_gamma < -tol
        cond["n_sigma_d_bounded"] = e_sig <= tol
        cond["d_k_minus_1_at_least_3"] = d * (k - 1) >= 3
        cond["motion_ratio_small"] = (p - q) < e_mean * (0.25 - epsilon)
    vals = {}
    for n in np.atleast_1d(n_range):
        r, s = a * n ** (-p), b * n ** (-q)
        vals[f"{n:g}"] = {"r": r, "sigma": s, "n_r_d": n * r**d, "n_k_r_dk1": n**k * r ** (d * (k - 1)),
                          "n_sigma_d": n * s**d, "sigma_over_r": s / r}
    return RegimeReport(RegimeSpec(kind, gamma, beta), cond, vals)


def fast_regime_refusal(d: int, k: int) -> str | None:
    """Reason the fast regime is out of reach for ``(d, k)``, or None."""
    if d * (k - 1) < 3:
        return f"fast regime requires d(k-1) >= 3, got d={d}, k={k} (d(k-1)={d * (k - 1)})"
    return None


def fmt17(x) -> str:
    """Round-trip exact text for a float (17 significant digits)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_curve_csv(path, lags, theoretical, empirical, stderr, regime: str, header: str | None = None):
    """Covariance report with columns lag, theoretical, empirical, stderr, regime."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lag", "theoretical", "empirical", "stderr", "regime"])
        for row in zip(lags, theoretical, empirical, stderr):
            w.writerow([fmt17(v) for v in row] + [regime])


__all__ = [
    "RegimeSpec", "CovarianceCurve", "SingularLag", "matrix_M", "det_M", "zeta_kernel",
    "zeta_kernel_matrix", "zeta_tilde", "zeta_tilde_many", "zeta", "ZetaTable", "zeta_table",
    "limit_cov", "limit_curve", "finite_n_cov", "mn_bounds", "classify_regime", "RegimeReport",
    "fast_regime_refusal", "write_curve_csv", "fmt17",
]
