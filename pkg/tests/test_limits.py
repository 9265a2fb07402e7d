import csv
import math

import numpy as np
import pytest

import oracles
from dynlocal.functional import GeometricPattern, make_pair_indicator, make_subgraph_count
from dynlocal.limits import (
    CovarianceCurve, RegimeSpec, SingularLag, ZetaTable, classify_regime, det_M, fast_regime_refusal,
    finite_n_cov, limit_cov, limit_curve, matrix_M, mn_bounds, write_curve_csv, zeta, zeta_kernel,
    zeta_kernel_matrix, zeta_table, zeta_tilde, zeta_tilde_many,
)
from dynlocal.moments import LimitConstants, compute_constants

PAIR = make_pair_indicator(0.25)
EXACT = LimitConstants(2, 1, 0.25, list(oracles.KAPPA_TILDE_1D), [0.0, 0.0], oracles.KAPPA_TILDE_1D[1])


def test_matrix_examples():
    assert matrix_M(2, 1.0).tolist() == [[0.5]]
    assert det_M(2, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert det_M(3, 2.0) == pytest.approx(1 / 12, abs=1e-15)
    with pytest.raises(ValueError):
        matrix_M(1, 1.0)
    with pytest.raises(ValueError):
        det_M(3, 0.0)


@pytest.mark.parametrize("j", range(2, 9))
@pytest.mark.parametrize("beta", [0.3, 1.0, 2.5])
def test_determinant_closed_form(j, beta):
    closed = 1.0 / (beta ** (j - 1) * j)
    assert abs(det_M(j, beta) - closed) <= 1e-12 * max(1.0, closed)
    assert abs(oracles.det_by_elimination(j, beta) - closed) <= 1e-12 * max(1.0, closed)
    assert abs(np.linalg.det(matrix_M(j, beta)) - closed) <= 1e-12 * max(1.0, closed)


@pytest.mark.parametrize("j,d", [(2, 1), (3, 2), (4, 3)])
def test_kernel_forms_agree(j, d):
    rng = np.random.default_rng(j * 10 + d)
    w = 0.3 * rng.standard_normal((500, j - 1, d))
    a = zeta_kernel(w, j, 0.7)
    b = zeta_kernel_matrix(w, j, 0.7)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_zeta_oracles_agree():
    for beta in (0.01, 0.25, 1.0, 4.0):
        assert oracles.zeta_tilde_pair_1d(beta) == pytest.approx(oracles.zeta_tilde_pair_1d_quad(beta), rel=1e-9)


def test_zeta_tilde_matches_quadrature():
    rng = np.random.default_rng(0)
    betas = [0.25, 1.0, 4.0]
    ests = zeta_tilde_many(2, betas, PAIR, 1, 10**6, rng)
    for beta, est in zip(betas, ests):
        target = oracles.zeta_tilde_pair_1d(beta)
        assert abs(est.value - target) < 3 * est.stderr, beta


def test_zeta_tilde_gaussian_method():
    rng = np.random.default_rng(1)
    for beta in (0.01, 0.25):
        est = zeta_tilde(2, beta, PAIR, 1, 4 * 10**5, rng, method="gaussian")
        assert abs(est.value - oracles.zeta_tilde_pair_1d(beta)) < 3.5 * est.stderr


def test_zeta_tilde_3d_matches_radial_quadrature():
    rng = np.random.default_rng(2)
    est = zeta_tilde(2, 0.01, PAIR, 3, 4 * 10**5, rng, method="gaussian")
    assert abs(est.value - oracles.zeta_tilde_pair_3d(0.01)) < 3.5 * est.stderr


def test_zeta_tilde_validation():
    with pytest.raises(ValueError):
        zeta_tilde(2, 0.0, PAIR, 1)
    with pytest.raises(ValueError):
        zeta_tilde(3, 1.0, PAIR, 1)
    with pytest.raises(ValueError):
        zeta_tilde(2, 1.0, PAIR, 1, 1000, method="other")


def test_zeta_boundary_values():
    assert zeta(1, 3.0, EXACT) == (1.0, 0.0)
    assert zeta(2, 0.0, EXACT) == (1.0, 0.0)
    rng = np.random.default_rng(3)
    small, _ = zeta(2, 1e-6, EXACT, PAIR, 10**5, rng)
    assert small == pytest.approx(1.0, abs=1e-2)
    big, _ = zeta(2, 1e4, EXACT, PAIR, 10**5, rng)
    assert 0 < big < 0.01
    with pytest.raises(ValueError):
        zeta(2, 1.0, EXACT)
    with pytest.raises(ValueError):
        zeta(2, -1.0, EXACT, PAIR)


def test_zeta_monotone_in_unit_interval():
    betas = np.array([0.1, 0.2, 0.5, 1, 2, 5, 10])
    tab = zeta_table(EXACT, PAIR, betas, 2 * 10**5, np.random.default_rng(4))
    v = tab.values[2]
    assert np.all((v > 0) & (v <= 1 + 3 * tab.stderr[2]))
    assert np.all(np.diff(v) < 0)
    exact = np.array([oracles.zeta_tilde_pair_1d(b) / 0.5 for b in betas])
    assert np.all(np.abs(v - exact) < 3.5 * tab.stderr[2])


def test_zeta_monotone_for_triangle():
    tri = make_subgraph_count(GeometricPattern.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 0.4)
    rng = np.random.default_rng(5)
    c = compute_constants(tri, 2, 10**5, rng, rel_tol=0.05)
    tab = zeta_table(c, tri, [0.1, 1.0, 10.0], 10**5, rng)
    for j in (2, 3):
        assert np.all(np.diff(tab.values[j]) < 0)
        assert np.all(tab.values[j] > 0)


def test_zeta_table_interpolation():
    tab = ZetaTable(np.array([1.0, 2.0]), {2: np.array([0.6, 0.4])}, {2: np.array([0.01, 0.02])})
    assert tab(2, 0.0) == 1.0 and tab(1, 5.0) == 1.0
    assert tab(2, 0.5) == pytest.approx(0.8)
    assert tab(2, 1.5) == pytest.approx(0.5)
    assert tab.se(2, 1.5) == pytest.approx(0.015)
    with pytest.raises(ValueError):
        tab(2, 3.0)


def test_slow_regime_values():
    slow = RegimeSpec("slow", 1.0)
    assert limit_cov(slow, 0.0, EXACT) == pytest.approx(1.0, abs=1e-15)
    assert limit_cov(slow, 1.0, EXACT) == pytest.approx(0.5 * math.exp(-1) + 0.5 * math.exp(-2), abs=1e-15)
    assert limit_cov(slow, 1.0, EXACT) == pytest.approx(0.2516, abs=1e-4)
    with pytest.raises(ValueError):
        limit_cov(slow, -0.1, EXACT)


@pytest.mark.parametrize("gamma", [0.01, 1.0, 100.0, "0", "inf"])
def test_slow_curve_envelope(gamma):
    t = np.linspace(0, 3, 31)
    curve = limit_curve(RegimeSpec("slow", gamma), t, EXACT)
    assert np.all(curve.values <= np.exp(-t) + 1e-15)
    assert np.all(curve.values >= np.exp(-2 * t) - 1e-15)


def test_moderate_regime_below_slow_and_continuous_at_zero():
    tab = ZetaTable(np.linspace(0.05, 5, 100))
    tab.values[2] = np.array([oracles.zeta_tilde_pair_1d(b) / 0.5 for b in tab.betas])
    tab.stderr[2] = np.zeros(100)
    mod = RegimeSpec("moderate", 1.0, beta=1.0)
    slow = RegimeSpec("slow", 1.0)
    assert limit_cov(mod, 0.0, EXACT, zeta_fn=tab) == pytest.approx(1.0)
    for t in (0.25, 0.5, 1.0, 2.0):
        m = limit_cov(mod, t, EXACT, zeta_fn=tab)
        assert m < limit_cov(slow, t, EXACT)
        exact = 0.5 * math.exp(-t) + 0.5 * math.exp(-2 * t) * oracles.zeta_tilde_pair_1d(t) / 0.5
        assert m == pytest.approx(exact, abs=1e-4)
    with pytest.raises(ValueError):
        limit_cov(mod, 0.5, EXACT)
    with pytest.raises(ValueError):
        RegimeSpec("moderate", 1.0)
    with pytest.raises(ValueError):
        RegimeSpec("other")


def test_limit_curve_is_positive_semidefinite():
    tab = ZetaTable(np.linspace(0.05, 8, 160))
    tab.values[2] = np.array([oracles.zeta_tilde_pair_1d(b) / 0.5 for b in tab.betas])
    tab.stderr[2] = np.zeros(160)
    times = np.linspace(0, 4, 17)
    lag = np.abs(times[:, None] - times[None, :])
    for spec in (RegimeSpec("slow", 1.0), RegimeSpec("moderate", 1.0, beta=2.0)):
        gram = np.vectorize(lambda t: limit_cov(spec, float(t), EXACT, zeta_fn=tab))(lag)
        assert np.linalg.eigvalsh(gram).min() > -1e-6


def test_fast_regime_singular_at_zero_and_decreasing():
    c3 = LimitConstants(2, 3, 0.25, [oracles.pair_3d_kappa_1(), 4 / 3 * math.pi * 0.25**3], [0, 0],
                        4 / 3 * math.pi * 0.25**3)
    fast = RegimeSpec("fast", "0")
    n = 1e4
    r, s = n ** -0.55, n ** -0.5
    with pytest.raises(SingularLag):
        limit_cov(fast, 0.0, c3, n=n, r=r, sigma=s)
    with pytest.raises(ValueError):
        limit_cov(fast, 0.5, c3)
    vals = [limit_cov(fast, t, c3, n=n, r=r, sigma=s) for t in (0.1, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(vals) < 0) and vals[-1] > 0


def test_finite_n_cov_reduces_to_slow_without_motion():
    n, r = 1000.0, 1e-3
    thetas = [r**2 * 0.25, r * 0.5]
    for delta in (0.0, 0.5, 2.0):
        got = finite_n_cov(thetas, delta, n, r, EXACT)
        assert got == pytest.approx(limit_cov(RegimeSpec("slow", 1.0), delta, EXACT), rel=1e-12)


def test_finite_n_cov_with_motion_matches_exact_pair_covariance():
    n, r, sigma, lag = 1000.0, 1e-3, 1e-3, 0.5
    thetas = [r**2 * 0.25, r * oracles.zeta_tilde_pair_1d(sigma**2 * lag / r**2)]
    got = finite_n_cov(thetas, lag, n, r, EXACT)
    assert got == pytest.approx(oracles.pair_covariance(lag, n, r, sigma, 1), rel=1e-12)


def test_mn_bounds():
    c3 = LimitConstants(2, 3, 0.25, [1.0, 1.0], [0, 0], 1.0)
    lo, hi = mn_bounds(1e4, 0.1, 1.0, 0.01, c3)
    assert lo == pytest.approx(0.1**2.01)
    assert hi == pytest.approx(0.1**1.2)
    assert lo <= hi
    lo, hi = mn_bounds(1e4, 0.999, 1.0, 0.01, c3)
    assert lo <= hi
    with pytest.raises(ValueError):
        mn_bounds(1e4, 0.1, 0.0, 0.01, c3)


def test_classify_regime_examples():
    mod = classify_regime(0.5, 0.5, a=1.0, b=2.0)
    assert mod.regime.kind == "moderate" and mod.regime.beta == pytest.approx(4.0)
    fast = classify_regime(0.55, 0.5, k=2, d=3)
    assert fast.regime.kind == "fast" and fast.regime.gamma == "0"
    assert fast.ok, fast.violations
    one_d = classify_regime(0.7, 0.5, k=2, d=1)
    assert one_d.regime.kind == "fast"
    assert "d_k_minus_1_at_least_3" in one_d.violations
    assert fast_regime_refusal(1, 2) is not None
    assert fast_regime_refusal(3, 2) is None
    slow = classify_regime(1.0, 1.5, a=1.0)
    assert slow.regime.kind == "slow" and slow.regime.gamma == pytest.approx(1.0)
    assert classify_regime(0.5, 1.0).regime.gamma == "inf"
    doc = fast.to_dict()
    assert doc["kind"] == "fast" and doc["violations"] == []
    with pytest.raises(ValueError):
        classify_regime(0.5, 0.5, a=0.0)


def test_curve_validation():
    with pytest.raises(ValueError):
        CovarianceCurve([0.0, 0.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        CovarianceCurve([0.0, 1.0], [1.0])


def test_curve_csv_schema(tmp_path):
    p = tmp_path / "c.csv"
    write_curve_csv(p, [0.0, 0.5], [math.nan, 0.3], [1.0, 0.31], [0.0, 0.01], "fast", header="config_sha256=x")
    lines = p.read_text().splitlines()
    assert lines[0] == "# config_sha256=x"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["lag", "theoretical", "empirical", "stderr", "regime"]
    assert rows[1][1] == "nan" and rows[2][-1] == "fast"
    assert float(rows[2][1]) == 0.3
