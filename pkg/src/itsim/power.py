"""Nested-simulation power and minimum detectable effect size (MDES).

Outer replicates draw whole synthetic datasets; each is analysed with the
usual fit / simulate / test pipeline. A constant effect only shifts the
post-policy observations, which the pre-policy fit never sees, so each outer
replicate is simulated once and re-tested for any effect size. Power curves
therefore use common random numbers across effects.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ItsError, NumericalError
from .inference import SummaryStatistic, _band
from .lagfit import fit_pre_policy
from .linmodel import ModelSpec
from .series import SyntheticSpec, TimeSeriesData, generate_synthetic
from .simengine import simulate_trajectories

log = logging.getLogger(__name__)

POWER_TOL = 0.02
MONOTONE_SLACK = 0.03


def child_seed(seed: int, *path: int) -> int:
    """64-bit seed derived from ``seed`` and an index path."""
    ss = np.random.SeedSequence([int(seed), *map(int, path)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class PowerScenario:
    generator: SyntheticSpec
    effect: float = 0.0
    R_inner: int = 1000
    n_outer: int = 200
    alpha: float = 0.05
    summary: SummaryStatistic | None = None  # default: average of all post-policy months
    seed: int = 0
    model: ModelSpec = field(default_factory=ModelSpec)

    def __post_init__(self):
        if self.R_inner < 100:
            raise InputError("R_inner must be at least 100")
        if self.n_outer < 50:
            raise InputError("n_outer must be at least 50")
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")

    def summary_stat(self) -> SummaryStatistic:
        if self.summary is not None:
            return self.summary
        g = self.generator
        return SummaryStatistic.range_average(g.t0 + 1, g.t0 + g.n_post)


@dataclass(frozen=True)
class PowerResult:
    rejection_rate: float
    mean_interval_width: float
    width_by_horizon: np.ndarray
    n_outer: int
    n_failed: int
    effect: float
    mdes_estimate: float | None = None


@dataclass
class _Outer:
    data: TimeSeriesData
    evaluate: object
    n_series: int
    ci: tuple[float, float]
    widths: np.ndarray

    def rejects(self, effect: float) -> bool:
        y = self.data.outcome[: self.n_series] + effect * self.data.post_mask[: self.n_series]
        t_obs = float(self.evaluate(y))
        return not (self.ci[0] <= t_obs <= self.ci[1])


def _one_outer(scenario: PowerScenario, i: int) -> _Outer:
    gen = dataclasses.replace(scenario.generator, seed=child_seed(scenario.seed, i, 0))
    data = generate_synthetic(gen)
    fit = fit_pre_policy(data, scenario.model)
    traj = simulate_trajectories(fit, data, scenario.R_inner, child_seed(scenario.seed, i, 1))
    stat = scenario.summary_stat()
    f = stat.evaluator(traj, data)
    t_star = f(traj.full_series(data))
    lo, hi = np.quantile(t_star, [scenario.alpha / 2, 1 - scenario.alpha / 2])
    band_lo, band_hi = _band(traj.trajectories, scenario.alpha)
    n_series = int(np.sum(data.times <= traj.times[-1]))
    return _Outer(data, f, n_series, (float(lo), float(hi)), band_hi - band_lo)


def _run_outer(scenario: PowerScenario, threads: int = 1):
    def safe(i):
        try:
            return _one_outer(scenario, i)
        except ItsError as exc:
            log.warning("outer replicate %d failed: %s", i, exc)
            return None

    idx = range(scenario.n_outer)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(safe, idx))
    else:
        results = [safe(i) for i in idx]
    ok = [r for r in results if r is not None]
    if not ok:
        raise NumericalError("every outer replicate failed to fit")
    return ok, len(results) - len(ok)


def _rate(outers, effect: float) -> float:
    return float(np.mean([o.rejects(effect) for o in outers]))


def _result(outers, n_failed, scenario, effect) -> PowerResult:
    widths = np.mean([o.widths for o in outers], axis=0)
    return PowerResult(
        rejection_rate=_rate(outers, effect),
        mean_interval_width=float(widths.mean()),
        width_by_horizon=widths,
        n_outer=scenario.n_outer,
        n_failed=n_failed,
        effect=effect,
    )


def estimate_power(scenario: PowerScenario, threads: int = 1) -> PowerResult:
    """Share of simulated datasets whose observed summary falls outside the
    simulated ``1 - alpha`` interval when ``scenario.effect`` is added to every
    post-policy month. Failed fits are counted in ``n_failed``."""
    outers, n_failed = _run_outer(scenario, threads)
    return _result(outers, n_failed, scenario, scenario.effect)


def power_curve(scenario: PowerScenario, effects, threads: int = 1) -> list[PowerResult]:
    outers, n_failed = _run_outer(scenario, threads)
    return [_result(outers, n_failed, scenario, float(e)) for e in effects]


def _bisect(outers, target, hi, tol):
    lo = 0.0
    p_lo = _rate(outers, lo)
    if p_lo >= target:
        return 0.0
    p_hi = _rate(outers, hi)
    if p_hi < target:
        hi *= 2
        p_hi = _rate(outers, hi)
        if p_hi < target:
            raise NumericalError(f"power {p_hi:.3f} at effect {hi:g} still below target {target}")
    for _ in range(200):
        mid = (lo + hi) / 2
        p_mid = _rate(outers, mid)
        if p_mid < p_lo - MONOTONE_SLACK or p_mid > p_hi + MONOTONE_SLACK:
            return None
        if abs(p_mid - target) <= tol or hi - lo <= 1e-9 * max(hi, 1.0):
            return mid
        if p_mid < target:
            lo, p_lo = mid, p_mid
        else:
            hi, p_hi = mid, p_mid
    return (lo + hi) / 2


def estimate_mdes(scenario: PowerScenario, target_power: float = 0.8, threads: int = 1, tol: float = POWER_TOL) -> float:
    """Smallest constant post-policy shift detected with ``target_power``.

    Bisection over ``[0, 20 * stationary SD]`` (doubled once if the target is
    not reached). A power curve that is non-monotone beyond Monte Carlo
    noise triggers one retry with twice as many outer replicates.
    """
    if not 0 < target_power < 1:
        raise InputError("target_power must lie in (0, 1)")
    sd = scenario.generator.stationary_sd
    hi = 20 * sd if sd > 0 else 1.0
    for attempt in range(2):
        outers, _ = _run_outer(scenario, threads)
        mdes = _bisect(outers, target_power, hi, tol)
        if mdes is not None:
            return mdes
        log.warning("non-monotone power curve; retrying with n_outer=%d", 2 * scenario.n_outer)
        scenario = dataclasses.replace(scenario, n_outer=2 * scenario.n_outer)
    raise NumericalError("power is not monotone in the effect size beyond Monte Carlo noise")
