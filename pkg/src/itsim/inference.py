"""Envelopes, summary-statistic tests and smoothing of simulated and observed
series.

All smoothers here are linear in the data, so each one is built once as a
matrix and applied to the observed series and every simulated series alike.
That guarantees the observed and reference series are processed identically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, WindowTooSmallError
from .linmodel import ModelSpec, select_columns, structural_columns
from .series import TimeSeriesData
from .simengine import TrajectorySet

FIT_RANGES = ("post_only", "all", "pre_only")


@dataclass(frozen=True)
class SmootherSpec:
    """Loess settings, optionally wrapped around a working seasonality model.

    With ``seasonality_model`` set, smoothing runs in five steps: fit the
    model (no lags) over ``fit_range``, predict, take residuals, loess the
    residuals, add them back to the predictions.
    """

    span: float = 0.75
    degree: int = 1
    fit_range: str = "post_only"
    seasonality_model: ModelSpec | None = None

    def __post_init__(self):
        if not 0 < self.span <= 1:
            raise InputError(f"span must lie in (0, 1], got {self.span}")
        if self.degree not in (0, 1, 2):
            raise InputError("degree must be 0, 1 or 2")
        if self.fit_range not in FIT_RANGES:
            raise InputError(f"fit_range must be one of {FIT_RANGES}")
        if self.seasonality_model is not None and (
            self.seasonality_model.lag_outcome or self.seasonality_model.lag_covariates
        ):
            object.__setattr__(self, "seasonality_model", self.seasonality_model.without_lags())


def _bandwidth(d_sorted: np.ndarray, q: int, degree: int) -> float:
    # distance to the q-th nearest point; widened to the next distinct distance
    # while fewer than degree + 1 points would get positive tricube weight
    h = d_sorted[q - 1]
    while np.sum(d_sorted < h) < degree + 1:
        larger = d_sorted[d_sorted > h]
        h = larger[0] if len(larger) else 2 * d_sorted[-1]
        if h == 0:
            break
    return h


def tricube(u):
    u = np.clip(np.abs(u), 0, 1)
    return (1 - u**3) ** 3


def loess_matrix(x, span: float = 0.75, degree: int = 1, x_eval=None) -> np.ndarray:
    """Linear operator ``L`` with ``loess(y) = L @ y``.

    Row ``i`` fits a weighted polynomial of ``degree`` around ``x_eval[i]``
    using the ``ceil(span * n)`` nearest points with tricube weights.
    """
    x = np.asarray(x, dtype=float)
    x_eval = x if x_eval is None else np.asarray(x_eval, dtype=float)
    n = len(x)
    q = min(n, max(1, math.ceil(span * n - 1e-12)))
    if n < degree + 2 or q < degree + 2:
        raise WindowTooSmallError(
            f"loess window of {q} points (n={n}, span={span}) is too small for degree {degree}"
        )
    L = np.empty((len(x_eval), n))
    for i, x0 in enumerate(x_eval):
        dist = np.abs(x - x0)
        h = _bandwidth(np.sort(dist), q, degree)
        w = tricube(dist / h) if h > 0 else (dist == 0).astype(float)
        B = np.vander(x - x0, degree + 1, increasing=True)
        BtW = B.T * w
        try:
            coef_map = np.linalg.solve(BtW @ B, BtW)
        except np.linalg.LinAlgError:
            raise WindowTooSmallError(f"singular local fit at x={x0}") from None
        L[i] = coef_map[0]
    return L


def loess(x, y, spec: SmootherSpec = SmootherSpec(), x_eval=None) -> np.ndarray:
    """Local polynomial smooth of ``y`` against ``x``, evaluated at ``x_eval``
    (defaults to ``x``)."""
    y = np.asarray(y, dtype=float)
    if len(y) != len(x):
        raise InputError("x and y differ in length")
    return loess_matrix(x, spec.span, spec.degree, x_eval) @ y


def _fit_mask(times, t0, fit_range):
    times = np.asarray(times)
    if fit_range == "post_only":
        return times > t0
    if fit_range == "pre_only":
        return times <= t0
    return np.ones(len(times), dtype=bool)


def smoother_matrix(data: TimeSeriesData, spec: SmootherSpec, times, eval_times) -> tuple[np.ndarray, np.ndarray]:
    """Operator taking a series observed at ``times`` to smoothed values at
    ``eval_times``.

    Returns ``(S, mask)``: ``smoothed = S @ series[mask]``.
    """
    times = np.asarray(times, dtype=np.int64)
    eval_times = np.asarray(eval_times, dtype=np.int64)
    mask = _fit_mask(times, data.t0, spec.fit_range)
    fit_t = times[mask]
    if len(fit_t) == 0:
        raise InputError(f"no points in fit range {spec.fit_range!r}")
    L = loess_matrix(fit_t, spec.span, spec.degree, eval_times)
    if spec.seasonality_model is None:
        return L, mask
    Xf, _ = structural_columns(data, spec.seasonality_model, fit_t)
    Xe, _ = structural_columns(data, spec.seasonality_model, eval_times)
    if not (np.all(np.isfinite(Xf)) and np.all(np.isfinite(Xe))):
        raise InputError("working seasonality model covariates missing over the smoothing range")
    keep = select_columns(Xf)
    if len(keep) >= len(fit_t):
        raise WindowTooSmallError("working seasonality model has as many columns as points")
    Xf, Xe = Xf[:, keep], Xe[:, keep]
    coef_map = np.linalg.pinv(Xf)  # y_fit -> coefficients
    predict_eval = Xe @ coef_map
    predict_fit = Xf @ coef_map
    resid_map = np.eye(len(fit_t)) - predict_fit
    return predict_eval + L @ resid_map, mask


def smooth_series(series, data: TimeSeriesData, spec: SmootherSpec, times=None, eval_times=None) -> np.ndarray:
    """Smooth one series (or a stack of series, one per row).

    ``series`` is aligned with ``times`` (default: ``data.times``); only points
    in ``spec.fit_range`` enter the fit. Results are returned at
    ``eval_times`` (default: the fit-range times).
    """
    times = data.times if times is None else np.asarray(times, dtype=np.int64)
    series = np.asarray(series, dtype=float)
    if series.shape[-1] != len(times):
        raise InputError("series length does not match times")
    if eval_times is None:
        eval_times = times[_fit_mask(times, data.t0, spec.fit_range)]
    S, mask = smoother_matrix(data, spec, times, eval_times)
    return series[..., mask] @ S.T


@dataclass(frozen=True)
class Envelope:
    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mean_prediction: np.ndarray
    observed: np.ndarray
    alpha: float = 0.05
    smoothed: bool = False

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")


def _observed_at(data, times):
    return np.array([data.outcome[data.index_of(t)] for t in times])


def _band(values, alpha):
    lo, hi = np.quantile(values, [alpha / 2, 1 - alpha / 2], axis=0)
    return lo, hi


def make_envelope(traj: TrajectorySet, data: TimeSeriesData, alpha: float = 0.05) -> Envelope:
    """Per-month middle ``1 - alpha`` band and mean of the simulated paths."""
    _check_alpha(alpha)
    if traj.R < 1:
        raise InputError("empty trajectory set")
    lo, hi = _band(traj.trajectories, alpha)
    return Envelope(
        times=traj.times,
        lower=lo,
        upper=hi,
        mean_prediction=traj.trajectories.mean(axis=0),
        observed=_observed_at(data, traj.times),
        alpha=alpha,
    )


def _series_times(traj, data):
    return data.times[data.times <= traj.times[-1]]


def smoothed_envelope(traj: TrajectorySet, data: TimeSeriesData, spec: SmootherSpec, alpha: float = 0.05) -> Envelope:
    """Envelope of smoothed simulated paths, with the observed series smoothed
    by the very same operator."""
    _check_alpha(alpha)
    times = _series_times(traj, data)
    S, mask = smoother_matrix(data, spec, times, traj.times)
    sims = traj.full_series(data)[:, mask] @ S.T
    obs = data.outcome[: len(times)][mask] @ S.T
    lo, hi = _band(sims, alpha)
    return Envelope(
        times=traj.times,
        lower=lo,
        upper=hi,
        mean_prediction=sims.mean(axis=0),
        observed=obs,
        alpha=alpha,
        smoothed=True,
    )


@dataclass(frozen=True)
class SummaryStatistic:
    """Scalar summary of a post-policy path.

    ``range_average`` averages months ``first..last``; ``smoothed_value``
    takes the smoothed series at month ``at``.
    """

    kind: str
    first: int | None = None
    last: int | None = None
    at: int | None = None
    smoother: SmootherSpec | None = None
    description: str = ""

    @classmethod
    def range_average(cls, first: int, last: int) -> "SummaryStatistic":
        if first > last:
            raise InputError("range_average needs first <= last")
        return cls("range_average", first=int(first), last=int(last), description=f"average of months {first}..{last}")

    @classmethod
    def smoothed_value(cls, at: int, smoother: SmootherSpec) -> "SummaryStatistic":
        return cls("smoothed_value", at=int(at), smoother=smoother, description=f"smoothed value at month {at}")

    def evaluator(self, traj: TrajectorySet, data: TimeSeriesData):
        """Function mapping full series rows (aligned to the data times up to
        the horizon) to summary values."""
        times = _series_times(traj, data)
        post = traj.times
        if self.kind == "range_average":
            if self.first > self.last:
                raise InputError("empty summary range")
            if self.first <= data.t0 or self.last > post[-1]:
                raise InputError(f"summary range {self.first}..{self.last} outside post-policy months")
            cols = (times >= self.first) & (times <= self.last)
            return lambda full: full[..., cols].mean(axis=-1)
        if self.kind == "smoothed_value":
            if self.at <= data.t0 or self.at > post[-1]:
                raise InputError(f"month {self.at} outside post-policy months")
            S, mask = smoother_matrix(data, self.smoother, times, [self.at])
            row = S[0]
            return lambda full: full[..., mask] @ row
        raise InputError(f"unknown summary kind {self.kind!r}")


@dataclass(frozen=True)
class TestResult:
    t_obs: float
    ci: tuple[float, float]
    p_value: float
    impact_ci: tuple[float, float]
    impact_point: float
    simulated_mean: float
    R: int
    alpha: float

    __test__ = False  # not a pytest class

    @property
    def reject(self) -> bool:
        return not (self.ci[0] <= self.t_obs <= self.ci[1])


def percentile_rank(t_obs: float, t_star: np.ndarray) -> float:
    """Mid-rank percentile of ``t_obs`` among ``t_star`` with a +1/2
    continuity correction: ``(#below + #ties/2 + 1/2) / (R + 1)``."""
    t_star = np.asarray(t_star)
    below = np.sum(t_star < t_obs)
    ties = np.sum(t_star == t_obs)
    return float((below + 0.5 * ties + 0.5) / (len(t_star) + 1))


def summarize_test(t_obs: float, t_star: np.ndarray, alpha: float = 0.05) -> TestResult:
    """Compare an observed summary with its simulated reference values.

    The reported ``p_value`` is ``min(q, 1 - q)`` for the mid-rank ``q`` and is
    not doubled; multiply by two for the convention that doubles one tail.
    """
    _check_alpha(alpha)
    t_star = np.asarray(t_star, dtype=float)
    lo, hi = np.quantile(t_star, [alpha / 2, 1 - alpha / 2])
    q = percentile_rank(t_obs, t_star)
    sim_mean = float(t_star.mean())
    return TestResult(
        t_obs=float(t_obs),
        ci=(float(lo), float(hi)),
        p_value=min(q, 1 - q),
        impact_ci=(float(t_obs - hi), float(t_obs - lo)),
        impact_point=float(t_obs - sim_mean),
        simulated_mean=sim_mean,
        R=len(t_star),
        alpha=alpha,
    )


def test_summary(traj: TrajectorySet, data: TimeSeriesData, stat: SummaryStatistic, alpha: float = 0.05) -> TestResult:
    """Posterior-predictive test of ``stat`` on the observed series against
    the simulated paths."""
    f = stat.evaluator(traj, data)
    times = _series_times(traj, data)
    t_obs = float(f(data.outcome[: len(times)]))
    t_star = f(traj.full_series(data))
    return summarize_test(t_obs, t_star, alpha)


test_summary.__test__ = False


ENVELOPE_COLUMNS = ("t", "observed", "mean_prediction", "lower", "upper")
SMOOTHED_COLUMNS = ("smoothed_observed", "smoothed_lower", "smoothed_upper")


def _fmt(v) -> str:
    return format(float(v), ".12g")


def write_envelope_csv(path, envelope: Envelope, smoothed: Envelope | None = None) -> Path:
    """Write the envelope (and optionally its smoothed counterpart) as CSV."""
    path = Path(path)
    header = list(ENVELOPE_COLUMNS)
    if smoothed is not None:
        if not np.array_equal(smoothed.times, envelope.times):
            raise InputError("smoothed envelope covers different months")
        header += SMOOTHED_COLUMNS
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(envelope.times):
            row = [str(int(t))] + [
                _fmt(a[i]) for a in (envelope.observed, envelope.mean_prediction, envelope.lower, envelope.upper)
            ]
            if smoothed is not None:
                row += [_fmt(a[i]) for a in (smoothed.observed, smoothed.lower, smoothed.upper)]
            w.writerow(row)
    return path
