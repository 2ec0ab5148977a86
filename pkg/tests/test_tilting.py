import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from mdev.errors import DomainError, NoSolutionError
from mdev.numerics import RngStream
from mdev.tilting import (
    BoxDensityLaw,
    DiscreteLaw,
    GaussianLaw,
    distribution_from_spec,
    mgf,
    sample_tilted,
    sample_tilted_sum,
    solve_tilt,
    tilted_cov,
    tilted_mean,
)

STD2 = GaussianLaw(np.zeros(2), np.eye(2))
COIN = DiscreteLaw([-0.5, 0.5], [0.5, 0.5])


def test_mgf_examples():
    assert mgf(GaussianLaw([0.0], [[1.0]]), 1.0) == pytest.approx(math.exp(0.5), rel=1e-14)
    assert mgf(COIN, 0.8) == pytest.approx(math.cosh(0.4), rel=1e-14)
    for dist in (STD2, COIN, BoxDensityLaw([[-1, 1]], lambda x: np.ones(len(x)))):
        assert mgf(dist, np.zeros(dist.dim)) == pytest.approx(1.0, abs=1e-14)


def test_density_mgf_quadrature():
    uni = BoxDensityLaw([[-1, 1]], lambda x: np.ones(len(x)))
    for h in (0.3, 1.0, 4.0):
        assert mgf(uni, h) == pytest.approx(math.sinh(h) / h, rel=1e-8)
    # triangular table on [0, 2] is centered at 1; mgf of the centered law is (2 (cosh h - 1)) / h^2
    tri = BoxDensityLaw([[0, 2]], table=[0.0, 1.0, 0.0])
    assert tri.offset[0] == pytest.approx(1.0, abs=1e-12)
    for h in (0.5, 2.0):
        assert mgf(tri, h) == pytest.approx(2 * (math.cosh(h) - 1) / h**2, rel=1e-8)


def test_mgf_domain():
    g = GaussianLaw([0.0], [[1.0]])
    g.mgf_domain = 5.0
    with pytest.raises(DomainError):
        mgf(g, 6.0)


def test_tilted_mean_examples():
    assert np.allclose(tilted_mean(STD2, [0.3, -0.2]), [0.3, -0.2])
    assert tilted_mean(COIN, 0.8473)[0] == pytest.approx(0.5 * math.tanh(0.42365), rel=1e-12)
    assert tilted_mean(COIN, 0.8473)[0] == pytest.approx(0.2, abs=1e-4)
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    g = GaussianLaw([1.0, -1.0], cov)
    assert np.allclose(tilted_mean(g, [0.5, 0.1]), cov @ [0.5, 0.1])
    for dist in (g, COIN):
        assert np.allclose(tilted_mean(dist, np.zeros(dist.dim)), 0.0, atol=1e-15)
    assert np.allclose(tilted_cov(g, np.zeros(2)), cov)
    assert tilted_cov(COIN, 0.0)[0, 0] == pytest.approx(0.25)


def test_solve_tilt_examples():
    sol = solve_tilt(STD2, [0.3, -0.2])
    assert np.allclose(sol.h, [0.3, -0.2], atol=1e-14)
    assert sol.rate == pytest.approx(0.065, abs=1e-12)
    assert sol.lambda_value == -sol.rate
    sol = solve_tilt(COIN, 0.2)
    oracle = optimize.brentq(lambda h: 0.5 * math.tanh(h / 2) - 0.2, 0, 10, xtol=1e-14)
    assert sol.h[0] == pytest.approx(oracle, abs=1e-10)
    assert sol.h[0] == pytest.approx(2 * math.atanh(0.4), abs=1e-10)
    assert sol.iterations <= 50
    with pytest.raises(NoSolutionError):
        solve_tilt(COIN, 0.6)
    with pytest.raises(NoSolutionError):
        solve_tilt(COIN, 0.5)


def test_solve_tilt_near_hull():
    sol = solve_tilt(COIN, 0.4999)
    assert abs(tilted_mean(COIN, sol.h)[0] - 0.4999) <= 1e-10 * 1.4999


def test_discrete_2d_hull():
    square = DiscreteLaw([[1, 1], [1, -1], [-1, 1], [-1, -1]], [0.1, 0.2, 0.3, 0.4])
    v = np.array([0.3, 0.6])
    sol = solve_tilt(square, v)
    assert np.linalg.norm(tilted_mean(square, sol.h) - v) <= 1e-10 * (1 + np.linalg.norm(v))
    assert not square.interior_contains([2.0, 0.0])
    with pytest.raises(NoSolutionError):
        solve_tilt(square, [1.5, 0.0])


def test_density_solve():
    uni = BoxDensityLaw([[-1, 1], [-1, 1]], lambda x: np.ones(len(x)))
    v = np.array([0.4, -0.7])
    sol = solve_tilt(uni, v)
    assert np.linalg.norm(tilted_mean(uni, sol.h) - v) <= 1e-10 * (1 + np.linalg.norm(v))
    # coordinates are independent; coth(h) - 1/h = v per axis
    for hi, vi in zip(sol.h, v):
        assert 1 / math.tanh(hi) - 1 / hi == pytest.approx(vi, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.49, 0.49))
def test_residual_property(v):
    sol = solve_tilt(COIN, v)
    assert abs(tilted_mean(COIN, sol.h)[0] - v) <= 1e-10 * (1 + abs(v))


@pytest.mark.parametrize("dist", [GaussianLaw([0, 0], [[2.0, 0.3], [0.3, 1.0]]), COIN], ids=["gaussian", "bernoulli"])
def test_jacobian_matches_finite_difference(dist):
    rng = np.random.default_rng(1)
    step = 1e-4
    for _ in range(10):
        h = rng.uniform(-1.5, 1.5, size=dist.dim)
        jac = np.empty((dist.dim, dist.dim))
        for j in range(dist.dim):
            e = np.zeros(dist.dim)
            e[j] = step
            jac[:, j] = (tilted_mean(dist, h + e) - tilted_mean(dist, h - e)) / (2 * step)
        cov = tilted_cov(dist, h)
        assert np.allclose(jac, cov, rtol=1e-5, atol=1e-5 * np.abs(cov).max())


def test_small_v_expansion():
    # fit C once on a coarse grid, then check the bound on a fine grid
    fit = max(abs(solve_tilt(COIN, v).h[0] - v / 0.25) / v**2 for v in (0.02, 0.05, 0.1))
    for v in np.linspace(0.005, 0.1, 40):
        h = solve_tilt(COIN, v).h[0]
        # the coin has variance 1/4, so h(v) ~ v / sigma^2
        assert abs(h - v / 0.25) <= 1.01 * fit * v**2


def test_gaussian_rate_grid():
    for v in np.linspace(-2, 2, 20):
        sol = solve_tilt(GaussianLaw([0.0], [[1.0]]), v)
        assert sol.rate == pytest.approx(0.5 * v * v, abs=1e-10)


def test_sample_tilted_means():
    ws = sample_tilted(STD2, [1.0, 0.0], 100_000, RngStream(1))
    assert np.all(np.abs(ws.points.mean(axis=0) - [1.0, 0.0]) <= 3 / math.sqrt(1e5))
    h = solve_tilt(COIN, 0.2).h
    ws = sample_tilted(COIN, h, 100_000, RngStream(2))
    se = ws.points[:, 0].std(ddof=1) / math.sqrt(1e5)
    assert abs(ws.points[:, 0].mean() - 0.2) <= 3 * se


def test_reweighting_reproduces_tail():
    dist = BoxDensityLaw([[-1, 1]], lambda x: 1 + 0.5 * x[:, 0])
    g = lambda x: (x[:, 0] > 0.3).astype(float)  # noqa: E731
    ws = sample_tilted(dist, 1.5, 100_000, RngStream(3))
    est, se = ws.estimate(g)
    direct = dist.sample(0.0, 100_000, RngStream(4).rng)
    p = g(direct).mean()
    assert abs(est - p) <= 3 * math.hypot(se, math.sqrt(p * (1 - p) / 1e5))


def test_tilted_sum_tail_vs_direct():
    n, thresh = 30, 6.0
    h = solve_tilt(COIN, thresh / n).h
    s, lw = sample_tilted_sum(COIN, h, n, 100_000, RngStream(5).rng)
    vals = np.exp(lw) * (s[:, 0] >= thresh)
    est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(len(vals))
    # S = k - n/2 with k ~ Binomial(n, 1/2)
    exact = stats.binom.sf(thresh + n / 2 - 1, n, 0.5)
    assert abs(est - exact) <= 3 * se


def test_density_sampler_matches_mean():
    dist = BoxDensityLaw([[-1, 1]], lambda x: 1 + 0.5 * x[:, 0])
    h = solve_tilt(dist, 0.2).h
    x = dist.sample(h, 50_000, RngStream(6).rng)[:, 0]
    assert abs(x.mean() - 0.2) <= 3 * x.std(ddof=1) / math.sqrt(len(x))


def test_distribution_loader():
    d = distribution_from_spec({"kind": "discrete", "atoms": [[0, 0.5], [1, 0.5]]})
    assert d.offset[0] == 0.5 and mgf(d, 0.8) == pytest.approx(math.cosh(0.4))
    g = distribution_from_spec({"kind": "gaussian", "mean": [1, 2], "cov": [[1, 0], [0, 1]]})
    assert np.allclose(g.offset, [1, 2])
    t = distribution_from_spec({"kind": "density", "box": [[0, 2]], "table": [0, 1, 0]})
    assert t.to_spec()["kind"] == "density"
    with pytest.raises(DomainError):
        distribution_from_spec({"kind": "cauchy"})
    with pytest.raises(DomainError):
        distribution_from_spec({"kind": "discrete"})
    with pytest.raises(DomainError):
        DiscreteLaw([0, 1], [0.3, 0.3])
