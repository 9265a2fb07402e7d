"""Geometry of the flat torus T^d, represented as the cube [-1/2, 1/2)^d.

Points are plain float arrays. A single point is a length-``d`` vector and a
set of points is an ``(m, d)`` array; every function here accepts either and
broadcasts over leading axes.
"""
from __future__ import annotations

import itertools

import numpy as np


def _as_points(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y.reshape(1)
    return y


def project(v) -> np.ndarray:
    """Map real vectors onto the torus, coordinates in [-1/2, 1/2).

    The half-open convention sends +1/2 to -1/2.

    Raises
    ------
    ValueError
        If any coordinate is not finite.
    """
    v = _as_points(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("project() requires finite coordinates")
    out = v - np.floor(v + 0.5)
    # floor(v + 0.5) can round up for v just below 1/2
    out = np.where(out >= 0.5, out - 1.0, out)
    out = np.where(out < -0.5, out + 1.0, out)
    return out


def displacement(x, y) -> np.ndarray:
    """Minimal-image displacement ``x - y`` on the torus, per coordinate."""
    x = _as_points(x)
    y = _as_points(y)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    dx = x - y
    return dx - np.round(dx)


def distance(x, y) -> np.ndarray | float:
    """Torus distance min_nu ||x - y + nu||.

    With coordinates in [-1/2, 1/2) the minimum is attained for nu in
    {-1, 0, 1}^d and separates over coordinates.
    """
    d = np.sqrt(np.sum(displacement(x, y) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def distance_bruteforce(x, y, box: int = 1) -> float:
    """Reference distance minimising over every shift in {-box..box}^d."""
    x = _as_points(x)
    y = _as_points(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    best = np.inf
    for nu in itertools.product(range(-box, box + 1), repeat=x.shape[-1]):
        best = min(best, float(np.linalg.norm(x - y + np.asarray(nu, dtype=float))))
    return best


def pairwise_distances(y) -> np.ndarray:
    y = np.atleast_2d(_as_points(y))
    return distance(y[:, None, :], y[None, :, :])


def translate(y, x) -> np.ndarray:
    """Set translation ``Y (+) x``: add coordinates, then wrap."""
    y = np.atleast_2d(_as_points(y))
    x = _as_points(x)
    if y.shape[-1] != x.shape[-1]:
        raise ValueError(f"dimension mismatch: {y.shape[-1]} vs {x.shape[-1]}")
    return project(y + x)


def scale(alpha: float, y) -> np.ndarray:
    """Scalar multiplication ``alpha (.) Y`` for 0 < alpha <= 1.

    No wrap is needed because |alpha * y_i| <= 1/2; project() still guards
    the half-open boundary.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    y = np.atleast_2d(_as_points(y))
    return project(alpha * y)


def diameter(y) -> float:
    """Largest pairwise torus distance in a nonempty set."""
    y = np.atleast_2d(_as_points(y))
    if y.shape[0] == 0:
        raise ValueError("diameter of an empty set is undefined")
    if y.shape[0] == 1:
        return 0.0
    return float(pairwise_distances(y).max())


def ball_volume(radius: float, d: int) -> float:
    """Lebesgue volume of a Euclidean d-ball."""
    from scipy.special import gammaln

    return float(np.exp(0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)) * radius**d)


def sample_ball(rng: np.random.Generator, size: tuple[int, ...], d: int, radius: float) -> np.ndarray:
    """Uniform samples in the centred Euclidean ball, shape ``size + (d,)``."""
    g = rng.standard_normal(size + (d,))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    u = rng.random(size + (1,)) ** (1.0 / d)
    return radius * u * g
