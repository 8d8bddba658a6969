"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Tolerances and runtime budgets are fixed here; every random input is seeded.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from itsim.cli import main
from itsim.inference import (
    SmootherSpec,
    SummaryStatistic,
    loess,
    make_envelope,
    smoothed_envelope,
    test_summary,
)
from itsim.lagfit import LaggedFit, fit_pre_policy, lagged_to_residual, residual_to_lagged
from itsim.linmodel import ModelSpec, OlsFit, classic_its, ols
from itsim.poststrat import GroupedMonthly, MixTarget, adjust_series
from itsim.power import PowerScenario, estimate_mdes, power_curve
from itsim.series import SyntheticSpec, TimeSeriesData, generate_synthetic
from itsim.simengine import simulate_trajectories

from oracles import dummy_regression_se, loess_point, normal_equations

DATA = Path(__file__).parent / "data"


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def test_criterion_01_ols_matches_normal_equations(record):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(k + 2, 51))
        X = rng.standard_normal((n, k)) * rng.uniform(0.5, 5, k) + rng.normal(0, 2, k)
        y = X @ rng.standard_normal(k) + rng.standard_normal(n)
        fit = ols(X, y)
        b, s, V = normal_equations(X, y)
        worst = max(worst, rel_err(fit.coefficients, b), rel_err(fit.sigma_hat, s), rel_err(fit.vcov, V))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5
    record(1, "OLS oracle", ok, f"max relative error {worst:.2e} (tol 1e-10), {elapsed:.2f}s (limit 5s)")
    assert ok


def test_criterion_02_closed_form_impact_se(record):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst, delta_err, min_ratio = 0.0, 0.0, np.inf
    for _ in range(50):
        n_pre, n_post = int(rng.integers(4, 60)), int(rng.integers(1, 24))
        t = np.arange(1, n_pre + n_post + 1) + int(rng.integers(0, 100))
        y = rng.normal(0, 5) + rng.normal(0, 0.5) * t + rng.standard_normal(len(t)) * rng.uniform(0.1, 3)
        data = TimeSeriesData(times=t, outcome=y, t0=int(t[n_pre - 1]))
        res = classic_its(data)
        delta, se, _ = dummy_regression_se(t, y, data.t0)
        worst = max(worst, rel_err(res.se_delta, se))
        # impacts can be near zero, so compare them on the scale of the outcome
        delta_err = max(delta_err, float(np.max(np.abs(res.delta_hat - delta)) / np.max(np.abs(y))))
        min_ratio = min(min_ratio, float(np.min(res.se_delta / res.sigma_hat)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and delta_err <= 1e-10 and min_ratio >= 1 and elapsed < 5
    record(
        2, "closed-form impact SE", ok,
        f"SE max relative error {worst:.2e} (tol 1e-10), impact error {delta_err:.2e} of max|y|, "
        f"min se/sigma {min_ratio:.4f} (>= 1), {elapsed:.2f}s",
    )
    assert ok


def test_criterion_03_parameterization_roundtrip(record):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        b0, b1, rho = rng.uniform(-50, 50), rng.uniform(-2, 2), rng.uniform(-0.95, 0.95)
        back = lagged_to_residual(*residual_to_lagged(b0, b1, rho))
        worst = max(worst, rel_err(back, (b0, b1, rho)))
    # noiseless recursion started off its trend, so the lag is identified
    beta0, beta1, rho = 5.0, 0.25, 0.6
    a0, a1, a2 = residual_to_lagged(beta0, beta1, rho)
    t = np.arange(1, 41)
    y = np.empty(40)
    y[0] = beta0 + beta1 + 3.0
    for i in range(1, 40):
        y[i] = a0 + a1 * t[i] + a2 * y[i - 1]
    fit = fit_pre_policy(TimeSeriesData(times=t, outcome=y, t0=30), ModelSpec())
    got = (fit.ols.coef("(Intercept)"), fit.ols.coef("t"), fit.rho_hat)
    rec_err = float(np.max(np.abs(np.subtract(got, (a0, a1, a2)))))
    ok = worst <= 1e-12 and rec_err <= 1e-9
    record(
        3, "parameterization roundtrip", ok,
        f"roundtrip max relative error {worst:.2e} (tol 1e-12), noiseless fit error {rec_err:.2e}",
    )
    assert ok


def test_criterion_04_residual_moments(record):
    start = time.perf_counter()
    d = generate_synthetic(SyntheticSpec(beta0=3, beta1=0.01, rho=0.6, sigma=1, n_pre=9990, n_post=10, seed=404))
    t = d.times.astype(float)
    X = np.column_stack([np.ones_like(t), t])
    resid = d.outcome - X @ np.linalg.lstsq(X, d.outcome, rcond=None)[0]
    var = resid.var()
    corr = np.corrcoef(resid[1:], resid[:-1])[0, 1]
    elapsed = time.perf_counter() - start
    ok = abs(var / 1.5625 - 1) <= 0.05 and abs(corr - 0.6) <= 0.05 and elapsed < 10
    record(4, "residual moments", ok, f"variance {var:.4f} (1.5625 +/-5%), lag-1 corr {corr:.4f} (0.6 +/-0.05)")
    assert ok


def test_criterion_05_ar_variance_accumulation(record):
    start = time.perf_counter()
    t = np.arange(1, 41)
    data = TimeSeriesData(times=t, outcome=np.sin(t.astype(float)), t0=37)
    coefs = np.array([1.0, 0.1, 0.5])
    fit = LaggedFit(
        ols=OlsFit(coefs, np.eye(3) * 0.01, 1.0, ["(Intercept)", "t", "lag_Y"], 36),
        spec=ModelSpec(),
    )
    tr = simulate_trajectories(fit, data, 50_000, seed=505, parameter_uncertainty=False)
    var = tr.trajectories.var(axis=0)
    expected = np.array([1.0, 1.25, 1.3125])
    err = np.abs(var / expected - 1)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(err <= 0.03)) and elapsed < 30
    record(
        5, "AR variance accumulation", ok,
        f"variances {np.round(var, 4).tolist()} vs {expected.tolist()} (max rel error {err.max():.4f}, tol 0.03)",
    )
    assert ok


@pytest.fixture(scope="module")
def null_replications():
    """500 null datasets, each with 1000 simulated trajectories."""
    start = time.perf_counter()
    covered, p_values = [], []
    for i in range(500):
        d = generate_synthetic(SyntheticSpec(beta0=10, beta1=0.05, rho=0.3, sigma=1, n_pre=60, n_post=6, seed=1000 + i))
        tr = simulate_trajectories(fit_pre_policy(d, ModelSpec()), d, 1000, seed=i)
        env = make_envelope(tr, d)
        covered.append(env.lower[5] <= env.observed[5] <= env.upper[5])
        p_values.append(test_summary(tr, d, SummaryStatistic.range_average(61, 66)).p_value)
    return np.array(covered), np.array(p_values), time.perf_counter() - start


@pytest.mark.slow
def test_criterion_06_coverage_calibration(record, null_replications):
    covered, _, elapsed = null_replications
    cov = covered.mean()
    ok = 0.92 <= cov <= 0.98 and elapsed < 300
    record(6, "coverage calibration", ok, f"horizon-6 coverage {cov:.3f} (in [0.92, 0.98]), {elapsed:.1f}s (limit 300s)")
    assert ok


@pytest.mark.slow
def test_criterion_07_null_p_value_uniformity(record, null_replications):
    _, p, _ = null_replications
    # p = min(q, 1 - q) is uniform on (0, 1/2] under the null, so 2p is uniform on (0, 1]
    ks = stats.kstest(2 * p, "uniform").statistic
    ok = ks < 0.08
    record(7, "null p-value uniformity", ok, f"KS distance of 2p from U(0,1) {ks:.4f} (< 0.08)")
    assert ok


@pytest.mark.slow
def test_criterion_08_seasonality_narrows_envelope(record):
    seasonal, plain = [], []
    for i in range(20):
        spec = SyntheticSpec(beta0=20, beta1=0.05, rho=0.5, sigma=1, n_pre=72, n_post=12, seed=800 + i, sin_coef=4, cos_coef=2)
        d = generate_synthetic(spec)
        for model, out in ((ModelSpec.parse("intercept,trend,sinusoid"), seasonal), (ModelSpec(), plain)):
            tr = simulate_trajectories(fit_pre_policy(d, model), d, 2000, seed=i)
            out.append(make_envelope(tr, d).width.mean())
    ratio = np.mean(seasonal) / np.mean(plain)
    ok = ratio <= 0.75
    record(
        8, "seasonality narrows envelope", ok,
        f"mean width {np.mean(seasonal):.3f} with seasonality vs {np.mean(plain):.3f} without (ratio {ratio:.3f}, <= 0.75)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_09_smoothing_narrows_envelope(record):
    wins = 0
    for i in range(200):
        d = generate_synthetic(SyntheticSpec(beta0=10, beta1=0.05, rho=0.3, sigma=1, n_pre=60, n_post=18, seed=5000 + i))
        tr = simulate_trajectories(fit_pre_policy(d, ModelSpec()), d, 500, seed=i)
        raw = make_envelope(tr, d).width.mean()
        smooth = smoothed_envelope(tr, d, SmootherSpec()).width.mean()
        wins += smooth < raw
    p = stats.binomtest(wins, 200, 0.5, alternative="greater").pvalue
    ok = p < 0.01
    record(9, "smoothing narrows envelope", ok, f"smoothed narrower in {wins}/200 runs, sign test p {p:.2e} (< 0.01)")
    assert ok


def test_criterion_10_loess_oracle(record):
    rng = np.random.default_rng(1010)
    worst, line_err = 0.0, 0.0
    for _ in range(20):
        x = np.sort(rng.uniform(0, 30, 30))
        y = rng.standard_normal(30).cumsum()
        for degree, span in ((1, 0.75), (2, 0.5), (1, 0.25)):
            got = loess(x, y, SmootherSpec(span=span, degree=degree))
            want = np.array([loess_point(x, y, x0, span, degree) for x0 in x])
            worst = max(worst, float(np.max(np.abs(got - want))))
        a, b = rng.normal(0, 10, 2)
        line_err = max(line_err, float(np.max(np.abs(loess(x, a + b * x, SmootherSpec(span=0.3)) - (a + b * x)))))
    ok = worst <= 1e-8 and line_err <= 1e-9
    record(10, "loess oracle", ok, f"max deviation from weighted LS {worst:.2e} (tol 1e-8), line error {line_err:.2e}")
    assert ok


def test_criterion_11_post_stratification(record):
    # group a: 8 events in 40 cases, group b: 30 events in 60 cases, target mix half-and-half
    counts = GroupedMonthly(np.array([1]), ("a", "b"), np.array([[40, 60]]), np.array([[8.0, 30.0]]), "count")
    props = GroupedMonthly(np.array([1]), ("a", "b"), np.array([[40, 60]]), np.array([[0.2, 0.5]]))
    half = MixTarget({"a": 0.5, "b": 0.5})
    c = adjust_series(counts, half)[0]
    p = adjust_series(props, half)[0]
    own = adjust_series(props, MixTarget({"a": 0.4, "b": 0.6}))[0]
    ok = c == 35.0 and p == 0.35 and own == props.raw_outcome()[0]
    record(11, "post-stratification", ok, f"count {float(c)!r} (35), proportion {float(p)!r} (0.35), identity {float(own)!r} == {float(props.raw_outcome()[0])!r}")
    assert ok


def test_criterion_12_envelope_determinism(record, tmp_path, capsys):
    golden = (DATA / "golden_envelope.csv").read_bytes()
    args = ["envelope", "--input", str(DATA / "monthly.csv"), "--t0", "48", "--model", "intercept,trend,sinusoid,Temp",
            "--R", "2000", "--seed", "11", "--smooth"]
    same = {}
    for threads in (1, 2, 8):
        out = tmp_path / f"t{threads}"
        code = main(args + ["--threads", str(threads), "--out-dir", str(out)])
        same[threads] = code == 0 and (out / "envelope.csv").read_bytes() == golden
    capsys.readouterr()
    ok = all(same.values())
    record(12, "envelope determinism", ok, "golden file byte-identical at threads " + ", ".join(f"{k}: {v}" for k, v in same.items()))
    assert ok


@pytest.mark.slow
def test_criterion_13_power_sanity(record):
    start = time.perf_counter()
    base_gen = SyntheticSpec(beta0=10, beta1=0.05, rho=0.3, sigma=1, n_pre=60, n_post=12)
    base = PowerScenario(generator=base_gen, R_inner=1000, n_outer=400, seed=1313)
    null, strong = power_curve(base, [0.0, 20 * base_gen.stationary_sd])

    small = PowerScenario(generator=base_gen, R_inner=500, n_outer=200, seed=1314)
    mdes_base = estimate_mdes(small)
    mdes_sigma = estimate_mdes(PowerScenario(
        generator=SyntheticSpec(beta0=10, beta1=0.05, rho=0.3, sigma=2, n_pre=60, n_post=12),
        R_inner=500, n_outer=200, seed=1314,
    ))
    mdes_long = estimate_mdes(PowerScenario(
        generator=SyntheticSpec(beta0=10, beta1=0.05, rho=0.3, sigma=1, n_pre=120, n_post=12),
        R_inner=500, n_outer=200, seed=1314,
    ))
    elapsed = time.perf_counter() - start
    checks = {
        "null": null.rejection_rate <= base.alpha + 0.03,
        "strong": strong.rejection_rate > 0.99,
        "sigma": mdes_base <= mdes_sigma * 1.03,
        "n_pre": mdes_long <= mdes_base * 1.03,
        "time": elapsed < 600,
    }
    ok = all(checks.values())
    record(
        13, "power sanity", ok,
        f"null rejection {null.rejection_rate:.4f} (<= 0.08), strong-effect power {strong.rejection_rate:.4f} (> 0.99), "
        f"MDES {mdes_base:.3f} -> {mdes_sigma:.3f} at 2 sigma, -> {mdes_long:.3f} at 2 n_pre, {elapsed:.0f}s",
    )
    assert ok
