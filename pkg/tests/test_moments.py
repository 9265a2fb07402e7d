import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from dynlocal import moments
from dynlocal.functional import GeometricPattern, make_pair_indicator, make_subgraph_count, make_zero_functional
from dynlocal.moments import (
    LimitConstants, MomentEstimate, alpha, alpha_j, compute_constants, kappa, kappa_tilde, lam, mean_f,
    superposition_coefficients, theta_j_mc, var_f, var_terms,
)

PAIR = make_pair_indicator(0.25)
EXACT = LimitConstants(2, 1, 0.25, list(oracles.KAPPA_TILDE_1D), [0.0, 0.0], oracles.KAPPA_TILDE_1D[1])


def test_quadrature_oracle_for_overlaps():
    one, two = oracles.overlap_pair_1d()
    assert one == pytest.approx(0.25, abs=1e-12)
    assert two == pytest.approx(0.5, abs=1e-12)


def test_moment_estimate_stderr_definition():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    e = MomentEstimate.from_samples(x)
    assert e.value == pytest.approx(3.5)
    assert e.stderr == pytest.approx(np.std(x, ddof=1) / 2)
    f = MomentEstimate.from_sums(x.sum(), (x * x).sum(), x.size)
    assert f.value == pytest.approx(e.value) and f.stderr == pytest.approx(e.stderr)


def test_alpha_pair_indicator():
    rng = np.random.default_rng(0)
    imp = alpha(0.1, PAIR, 1, 10**5, rng)
    assert imp.value == pytest.approx(0.05, rel=1e-12)
    naive = alpha(0.1, PAIR, 1, 10**6, rng, method="naive")
    assert abs(naive.value - imp.value) < 3 * math.hypot(naive.stderr, imp.stderr)
    assert abs(naive.value - 0.05) < 4 * naive.stderr


def test_alpha_importance_vs_naive_triangle():
    tri = make_subgraph_count(GeometricPattern.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 0.45)
    rng = np.random.default_rng(1)
    imp = alpha(1.0, tri, 2, 10**6, rng)
    naive = alpha(1.0, tri, 2, 10**6, rng, method="naive")
    assert abs(naive.value - imp.value) < 3 * math.hypot(naive.stderr, imp.stderr)


def test_alpha_zero_functional_and_validation():
    assert alpha(0.5, make_zero_functional(2, 0.2), 2, 1000, np.random.default_rng(0)).value == 0.0
    with pytest.raises(ValueError):
        alpha(0.5, PAIR, 1, 10)
    with pytest.raises(ValueError):
        alpha(0.0, PAIR, 1, 1000)
    with pytest.raises(ValueError):
        alpha(0.5, PAIR, 1, 1000, method="other")


def test_kappa_tilde_pair_1d():
    rng = np.random.default_rng(2)
    k1 = kappa_tilde(1, PAIR, 1, 10**5, rng)
    k2 = kappa_tilde(2, PAIR, 1, 10**5, rng)
    # the balls are exactly the support, so the estimator has no variance
    assert k1.value == pytest.approx(0.25, rel=1e-12)
    assert k2.value == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        kappa_tilde(3, PAIR, 1, 1000, rng)
    with pytest.raises(ValueError):
        kappa_tilde(0, PAIR, 1, 1000, rng)


def test_kappa_tilde_pair_3d_against_closed_form():
    rng = np.random.default_rng(3)
    k1 = kappa_tilde(1, PAIR, 3, 10**5, rng)
    assert k1.value == pytest.approx(oracles.pair_3d_kappa_1(), rel=1e-12)


def test_kappa_tilde_positive_for_subgraphs():
    rng = np.random.default_rng(4)
    path = make_subgraph_count(GeometricPattern.from_edges(3, [(0, 1), (1, 2)]), 0.3)
    c = compute_constants(path, 2, 20000, rng, rel_tol=0.05)
    assert np.all(c.kappa_tilde > 0)
    assert np.all(c.kappa_tilde_stderr > 0)


def test_closed_form_moments():
    assert alpha_j(2, 0.1, EXACT) == pytest.approx(0.05)
    assert alpha_j(1, 0.1, EXACT) == pytest.approx(0.0025)
    assert alpha_j(2, 1.0, EXACT) == pytest.approx(0.5)
    assert mean_f(10, 0.1, EXACT) == pytest.approx(2.5)
    assert var_f(10, 0.1, EXACT) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        alpha_j(3, 0.1, EXACT)
    with pytest.raises(ValueError):
        alpha_j(1, 2.5, EXACT)


def test_variance_dominated_by_full_overlap_when_sparse():
    terms = var_terms(100, 1e-4, EXACT)  # n r^d = 0.01
    assert terms[-1] / terms.sum() > 0.95
    dense = var_terms(1e4, 1e-2, EXACT)  # n r^d = 100
    assert dense[0] / dense.sum() > 0.95


def test_kappa_and_lambda():
    assert kappa(1, EXACT) == pytest.approx(0.25)
    assert kappa(2, EXACT) == pytest.approx(0.25)
    assert np.allclose(lam(1.0, EXACT), [0.5, 0.5])
    assert lam("0", EXACT).tolist() == [0.0, 1.0]
    assert lam(moments.GAMMA_INF, EXACT).tolist() == [1.0, 0.0]
    assert lam(math.inf, EXACT).tolist() == [1.0, 0.0]
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(ValueError):
            lam(bad, EXACT)


def test_superposition_coefficients_reproduce_slow_covariance():
    c = LimitConstants(3, 2, 0.3, [0.01, 0.1, 0.7], [0, 0, 0], 0.7)
    w = superposition_coefficients(2.0, c)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    # stationary OU components with rates j and unit variance, sampled at lags 0 and t
    rng = np.random.default_rng(9)
    t, m = 0.4, 200_000
    j = np.arange(1, 4)
    x0 = rng.standard_normal((m, 3))
    xt = np.exp(-j * t) * x0 + np.sqrt(1 - np.exp(-2 * j * t)) * rng.standard_normal((m, 3))
    cov = np.mean((x0 @ w) * (xt @ w))
    assert cov == pytest.approx(np.sum(lam(2.0, c) * np.exp(-j * t)), abs=4 / math.sqrt(m))


@given(st.floats(1e-6, 1e6))
def test_lambda_sums_to_one(gamma):
    c = LimitConstants(3, 2, 0.3, [0.01, 0.1, 0.7], [0, 0, 0], 0.7)
    w = lam(gamma, c)
    assert abs(w.sum() - 1) < 1e-12
    assert np.all(w >= 0)


def test_constants_json_round_trip():
    doc = json.loads(EXACT.to_json([1.0, "0", "inf"]))
    assert doc["kappa"] == [0.25, 0.25]
    assert [entry["gamma"] for entry in doc["lambda"]] == [1.0, "0", "inf"]
    again = LimitConstants.from_dict(doc)
    assert np.array_equal(again.kappa_tilde, EXACT.kappa_tilde)


def test_alpha_scale_invariance():
    tri = make_subgraph_count(GeometricPattern.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 0.4)
    rng = np.random.default_rng(5)
    a1 = alpha(0.5, tri, 2, 10**5, rng)
    a2 = alpha(0.1, tri, 2, 10**5, rng)
    u1, u2 = a1.value / 0.5 ** (2 * 2), a2.value / 0.1 ** (2 * 2)
    se = math.hypot(a1.stderr / 0.5**4, a2.stderr / 0.1**4)
    assert abs(u1 - u2) < 3 * se


def test_theta_without_motion_equals_alpha_j():
    rng = np.random.default_rng(6)
    for j in (1, 2):
        t = theta_j_mc(j, 0.1, 0.0, 1.0, PAIR, 1, 10**5, rng)
        assert t.value == pytest.approx(alpha_j(j, 0.1, EXACT), rel=1e-12)
    tri = make_subgraph_count(GeometricPattern.from_edges(3, [(0, 1), (1, 2)]), 0.3)
    c = compute_constants(tri, 2, 10**5, rng, rel_tol=0.02)
    for j in (1, 2, 3):
        t = theta_j_mc(j, 0.2, 0.0, 1.0, tri, 2, 10**5, rng)
        target = alpha_j(j, 0.2, c)
        se = math.hypot(t.stderr, 0.2 ** (2 * (5 - j)) * c.kappa_tilde_stderr[j - 1])
        assert abs(t.value - target) < 3 * se


@pytest.mark.parametrize("b", [0.05, 0.5, 3.0])
def test_theta_with_motion_matches_closed_form(b):
    # sigma^2 Delta / r^2 = b, so the pair separation diffuses by 2 b in unit scale
    r = 0.01
    sigma = r * math.sqrt(b)
    target = r * oracles.zeta_tilde_pair_1d(b)
    rng = np.random.default_rng(7)
    for method in ("displace", "density"):
        t = theta_j_mc(2, r, sigma, 1.0, PAIR, 1, 4 * 10**5, rng, method=method)
        assert abs(t.value - target) < 3.5 * t.stderr, method


def test_theta_slow_limit_recovers_overlap():
    rng = np.random.default_rng(8)
    r = 0.01
    t = theta_j_mc(2, r, 1e-3 * r, 1.0, PAIR, 1, 10**5, rng)
    assert t.value / r == pytest.approx(0.5, rel=1e-2)


def test_theta_validation():
    with pytest.raises(ValueError):
        theta_j_mc(0, 0.1, 0.1, 1.0, PAIR, 1, 1000)
    with pytest.raises(ValueError):
        theta_j_mc(1, 0.1, -0.1, 1.0, PAIR, 1, 1000)
    with pytest.raises(ValueError):
        theta_j_mc(2, 0.1, 0.0, 1.0, PAIR, 1, 1000, method="density")
