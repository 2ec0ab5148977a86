import json
import math

import numpy as np
import pytest
from scipy import stats

from mdev.efficiency import (
    ExperimentConfig,
    ExperimentReport,
    MCSettings,
    bahadur_log_bound,
    config_hash,
    denominator,
    efficiency_sweep,
    numerator,
    theta_grid,
)
from mdev.errors import DomainError
from mdev.gaussian_exit import exit_ball_asymptotic, exit_ball_exact, exit_is
from mdev.geometry import Ball, Ellipsoid
from mdev.models import Bernoulli, EstimatorSpec, ExponentialRate, GaussianLocation, GaussianMeanVector
from mdev.numerics import RngStream

SAMPLE_MEAN = EstimatorSpec("sample_mean")
MLE = EstimatorSpec("mle")


def gaussian_config(**over):
    cfg = {
        "family": {"family": "gaussian_location", "sigma2": 1.0},
        "estimator": "sample_mean",
        "theta0": 0.0,
        "body": {"kind": "ball", "dim": 1, "r": 1.0},
        "bn_rule": {"c": 1.0, "gamma": 0.4},
        "n_grid": [100, 1000],
        "theta_grid_points": 5,
        "mc": {"n_trials": 20_000},
        "master_seed": 17,
    }
    cfg.update(over)
    return cfg


def test_config_validation():
    cfg = ExperimentConfig.from_dict(gaussian_config())
    assert cfg.b_n(100) == pytest.approx(100**-0.4)
    assert cfg.c_n(100) == pytest.approx(math.sqrt(math.log(100)))
    for gamma in (0.0, 0.5, 0.7):
        with pytest.raises(DomainError):
            ExperimentConfig.from_dict(gaussian_config(bn_rule={"gamma": gamma}))
    with pytest.warns(UserWarning):
        ExperimentConfig.from_dict(gaussian_config(bn_rule={"gamma": 0.3}))
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict(gaussian_config(body={"kind": "ball", "dim": 2, "r": 1.0}))
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict({"family": {"family": "bernoulli"}})
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_config_hash_canonical():
    a = gaussian_config()
    b = json.loads(json.dumps(a, sort_keys=True))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(gaussian_config(master_seed=18))


def test_denominator_examples():
    est = denominator(Ball(2, 1.0), 100, 0.3)
    assert est.method == "exact" and est.value == pytest.approx(math.exp(-4.5), rel=1e-12)
    est = denominator(Ball(2, 1.0), 400, 1.0)  # t = 20
    assert est.log_value == pytest.approx(-200.0, rel=1e-14)
    ell = Ellipsoid([1.0, 0.5], 1.0)
    est = denominator(ell, 25, 1.0, stream=RngStream(1))
    assert est.method == "asymptotic" and est.value == pytest.approx(6.868e-7, rel=1e-3)
    check = est.metadata["is_cross_check"]
    assert abs(check["relative_gap"]) < 0.1
    # out of regime: importance sampling
    est = denominator(ell, 4, 0.5, stream=RngStream(2))
    assert est.method == "is"
    with pytest.raises(DomainError):
        denominator(ell, 4, 0.5)


@pytest.mark.parametrize("t", [3.0, 4.5, 6.0])
def test_denominator_method_consistency(t):
    exact = exit_ball_exact(2, t, 1.0)
    asym = exit_ball_asymptotic(2, t, 1.0)
    is_ = exit_is(Ball(2, 1.0), t, 200_000, RngStream(int(t * 10)))
    assert asym.value == pytest.approx(exact.value, rel=1e-12)
    assert abs(is_.value - exact.value) <= max(3 * is_.std_error, 0.05 * exact.value)
    ell = Ellipsoid([1.0, 0.6], 1.0)
    a = denominator(ell, 1, t)
    b = exit_is(ell, t, 200_000, RngStream(3))
    assert abs(a.value - b.value) <= max(3 * b.std_error, 0.05 * b.value) or t == 3.0
    if t == 3.0:
        # the sharp asymptotic is still 5-10% off at distance 3
        assert abs(a.value / b.value - 1) < 0.12


def test_numerator_gaussian_exact_law():
    fam = GaussianLocation(1.0)
    est = numerator(fam, SAMPLE_MEAN, 0.0, 100, 0.3, Ball(1, 1.0), MCSettings(200_000), RngStream(3))
    exact = 2 * stats.norm.cdf(-3)
    assert exact == pytest.approx(2.6998e-3, rel=1e-4)
    assert abs(est.value - exact) <= 3 * est.std_error


def test_numerator_decreasing_in_bn():
    fam = Bernoulli()
    vals = [numerator(fam, MLE, 0.5, 200, b, Ball(1, 1.0), MCSettings(engine="exact"), RngStream(0)).value for b in (0.05, 0.1, 0.2, 0.5, 2.0)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


def test_numerator_bernoulli_enumeration_vs_mc():
    fam = Bernoulli()
    n = 400
    b_n = 0.4 * n**-0.35
    assert b_n == pytest.approx(0.049, abs=1e-3)
    exact = numerator(fam, MLE, 0.5, n, b_n, Ball(1, 1.0), MCSettings(engine="exact"), RngStream(0))
    # independent enumeration: |k/n - 1/2| * 2 >= b_n
    k = np.arange(n + 1)
    oracle = stats.binom.pmf(k, n, 0.5)[np.abs(k / n - 0.5) * 2 >= b_n * (1 - 1e-12)].sum()
    assert exact.value == pytest.approx(oracle, rel=1e-10)
    mc = numerator(fam, MLE, 0.5, n, b_n, Ball(1, 1.0), MCSettings(100_000, engine="mc"), RngStream(4))
    assert abs(mc.value - exact.value) <= 3 * mc.std_error


def test_numerator_is_matches_enumeration_in_tail():
    fam = Bernoulli()
    n, b_n = 300, 0.4
    exact = numerator(fam, SAMPLE_MEAN, 0.4, n, b_n, Ball(1, 1.0), MCSettings(engine="exact"), RngStream(0), theta0=0.5)
    is_ = numerator(fam, SAMPLE_MEAN, 0.4, n, b_n, Ball(1, 1.0), MCSettings(50_000, engine="is"), RngStream(5), theta0=0.5)
    assert exact.value < 1e-3
    assert abs(is_.value - exact.value) <= 3 * is_.std_error


def test_numerator_is_falls_back_for_nonlinear():
    est = numerator(ExponentialRate(), MLE, 2.0, 50, 0.3, Ball(1, 1.0), MCSettings(5000, use_is=True), RngStream(6))
    assert est.method == "mc" and est.warnings


def test_theta_grid():
    fam = GaussianMeanVector(d=2)
    grid, _ = theta_grid([1.0, -1.0], 0.5, 7, fam)
    assert np.any(np.all(grid == [1.0, -1.0], axis=1))
    assert np.all(np.linalg.norm(grid - [1.0, -1.0], axis=1) <= 0.5 + 1e-12)
    g1, _ = theta_grid(0.5, 0.2, 6, Bernoulli())
    assert 0.5 in g1[:, 0] and g1[:, 0].min() == pytest.approx(0.3) and g1[:, 0].max() == pytest.approx(0.7)
    g2, notes = theta_grid(0.05, 0.2, 5, Bernoulli())
    assert np.all(g2 > 0) and notes


def test_sweep_gaussian_attainment():
    report = efficiency_sweep(gaussian_config())
    for s in report.summary:
        assert abs(s["ratio_at_theta0"] - 1) <= 3 * s["ratio_at_theta0_std_error"]
    for r in report.rows:
        assert r["status"] == "ok" and 0 < r["ratio"] < math.inf
        assert r["ratio"] == pytest.approx(r["numerator"]["value"] / r["denominator"]["value"])


def test_sweep_mean_vector_attainment():
    cfg = gaussian_config(
        family={"family": "gaussian_mean_vector", "d": 2},
        theta0=[0.0, 0.0],
        body={"kind": "ellipsoid", "sigma": [1.0, 0.5], "r": 1.0},
        n_grid=[50],
        theta_grid_points=3,
    )
    report = efficiency_sweep(cfg)
    s = report.summary[0]
    assert abs(s["ratio_at_theta0"] - 1) <= 3 * s["ratio_at_theta0_std_error"] + 0.1


def test_sweep_deterministic_and_thread_independent():
    a = efficiency_sweep(gaussian_config(), threads=1).to_dict()
    b = efficiency_sweep(gaussian_config(), threads=4).to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    rt = ExperimentReport.from_dict(json.loads(json.dumps(a))).to_dict()
    assert rt == a


def test_sweep_records_failures():
    cfg = gaussian_config(
        family={"family": "bernoulli"},
        theta0=0.5,
        n_grid=[200_000],
        mc={"n_trials": 10, "engine": "exact"},
        theta_grid_points=1,
    )
    report = efficiency_sweep(cfg)
    assert report.rows[0]["status"] == "failed" and "enumeration" in report.rows[0]["error"]
    assert report.summary[0]["sup_ratio"] is None


def test_bahadur_examples():
    fam = GaussianLocation(1.0)
    n = 100
    out = bahadur_log_bound(fam, 0.0, SAMPLE_MEAN, n, 4 / math.sqrt(n))
    assert out["normalized_log"] == pytest.approx(math.log(2 * stats.norm.sf(4)) / 8, rel=1e-12)
    assert out["normalized_log"] == pytest.approx(-1.208, abs=1e-3)
    assert out["bound"] == -1.0 and out["slack"] == pytest.approx(-0.208, abs=1e-3)
    assert out["consistent"]
    s3 = bahadur_log_bound(fam, 0.0, SAMPLE_MEAN, n, 0.3)["slack"]
    s6 = bahadur_log_bound(fam, 0.0, SAMPLE_MEAN, n, 0.6)["slack"]
    assert abs(s6) < abs(s3)


def test_bahadur_bernoulli_and_is_switch():
    out = bahadur_log_bound(Bernoulli(), 0.5, MLE, 400, 0.1)
    assert out["bound"] == pytest.approx(-4.0)
    assert all(p["method"] == "exact" for p in out["per_theta"])
    fam = GaussianLocation(1.0)
    out = bahadur_log_bound(fam, 0.0, SAMPLE_MEAN, 100, 0.45, MCSettings(50_000, engine="mc"), RngStream(7))
    exact = math.log(2 * stats.norm.sf(4.5)) / (0.5 * 100 * 0.45**2)
    assert out["per_theta"][0]["method"] == "is"
    assert out["normalized_log"] == pytest.approx(exact, abs=0.02)
    with pytest.raises(DomainError):
        bahadur_log_bound(GaussianMeanVector(d=2), [0, 0], SAMPLE_MEAN, 10, 0.1)
