"""Monthly single-unit time series: container, CSV ingestion, lag columns and
a synthetic generator for the linear-trend-plus-AR(1) process."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    DataLoadError,
    InputError,
    MissingColumnError,
    NonConsecutiveTimesError,
    NonNumericCellError,
    T0OutOfRangeError,
)

QUARTER_COLUMNS = ("Q2", "Q3", "Q4")
LAG_PREFIX = "lag_"


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeriesData:
    """Ordered monthly observations of one unit.

    ``t0`` is the last pre-policy month. Covariate columns are aligned to
    ``times`` and may contain NaN (e.g. the first entry of a lag column);
    the outcome may not.
    """

    times: np.ndarray
    outcome: np.ndarray
    t0: int
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    outcome_name: str = "Y"

    def __post_init__(self):
        times = np.asarray(self.times)
        if times.ndim != 1 or len(times) == 0:
            raise InputError("times must be a non-empty 1-d sequence")
        if not np.all(np.equal(np.mod(times, 1), 0)):
            raise InputError("times must be integers")
        times = _frozen(times, dtype=np.int64)
        if len(times) > 1 and not np.all(np.diff(times) == 1):
            bad = int(np.flatnonzero(np.diff(times) != 1)[0])
            raise NonConsecutiveTimesError(f"{times[bad]} followed by {times[bad + 1]}")
        outcome = _frozen(self.outcome)
        if outcome.shape != times.shape:
            raise InputError("outcome length does not match times")
        if not np.all(np.isfinite(outcome)):
            raise InputError("outcome values must be finite")
        t0 = int(self.t0)
        n_pre = int(np.sum(times <= t0))
        if t0 not in times or n_pre < 3 or n_pre == len(times):
            raise T0OutOfRangeError(t0, int(times[0]), int(times[-1]))
        covs = {}
        for name, col in dict(self.covariates).items():
            col = _frozen(col)
            if col.shape != times.shape:
                raise InputError(f"covariate {name!r} has length {len(col)}, expected {len(times)}")
            covs[name] = col
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "covariates", covs)

    def __len__(self):
        return len(self.times)

    @property
    def pre_mask(self) -> np.ndarray:
        return self.times <= self.t0

    @property
    def post_mask(self) -> np.ndarray:
        return self.times > self.t0

    @property
    def post_times(self) -> np.ndarray:
        return self.times[self.post_mask]

    @property
    def n_pre(self) -> int:
        return int(np.sum(self.pre_mask))

    @property
    def n_post(self) -> int:
        return len(self) - self.n_pre

    def index_of(self, t: int) -> int:
        i = int(t) - int(self.times[0])
        if i < 0 or i >= len(self.times):
            raise InputError(f"time {t} outside observed range")
        return i

    def covariate_at(self, name: str, times) -> np.ndarray:
        """Values of covariate ``name`` at arbitrary times (NaN where unobserved)."""
        col = self.covariates[name]
        times = np.asarray(times, dtype=np.int64)
        idx = times - self.times[0]
        out = np.full(times.shape, np.nan)
        ok = (idx >= 0) & (idx < len(col))
        out[ok] = col[idx[ok]]
        return out

    def month_of_year(self, times) -> np.ndarray:
        """Calendar month (1-12) for arbitrary times.

        Anchored on the ``M`` column when present, otherwise ``t = 1`` is
        taken to be January.
        """
        times = np.asarray(times, dtype=np.int64)
        if "M" in self.covariates:
            m0 = int(self.covariates["M"][0])
            return (m0 - 1 + (times - self.times[0])) % 12 + 1
        return (times - 1) % 12 + 1

    def replace(self, **changes) -> "TimeSeriesData":
        kwargs = dict(
            times=self.times,
            outcome=self.outcome,
            t0=self.t0,
            covariates=self.covariates,
            outcome_name=self.outcome_name,
        )
        kwargs.update(changes)
        return TimeSeriesData(**kwargs)

    def with_outcome(self, outcome) -> "TimeSeriesData":
        return self.replace(outcome=outcome)

    def with_covariates(self, extra: Mapping[str, np.ndarray]) -> "TimeSeriesData":
        covs = dict(self.covariates)
        covs.update(extra)
        return self.replace(covariates=covs)


def quarter_indicators(months) -> dict[str, np.ndarray]:
    """Q2/Q3/Q4 0-1 indicators; Q1 (Jan-Mar) is the baseline."""
    months = np.asarray(months)
    quarter = (months - 1) // 3 + 1
    return {f"Q{q}": (quarter == q).astype(float) for q in (2, 3, 4)}


def _parse_float(text, column, row):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise NonNumericCellError(column, row, text) from None
    return value


def load_csv(path, outcome_name: str, t0: int) -> TimeSeriesData:
    """Read a monthly series from a comma-separated file.

    The file needs an integer ``t`` column and the outcome column. Every other
    column is kept as a numeric covariate. When a month-of-year column ``M`` is
    present, quarter indicators ``Q2``-``Q4`` are derived from it (unless the
    file already has them).
    """
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataLoadError(f"{path} is empty") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]

    for required in ("t", outcome_name):
        if required not in header:
            raise MissingColumnError(required, str(path))

    columns: dict[str, list[float]] = {h: [] for h in header}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataLoadError(f"row {lineno} has {len(row)} cells, expected {len(header)}")
        for name, cell in zip(header, row):
            cell = cell.strip()
            if cell == "" or cell.upper() == "NA":
                if name in ("t", outcome_name):
                    raise DataLoadError(f"missing value in column {name!r} (row {lineno})")
                columns[name].append(math.nan)
            else:
                columns[name].append(_parse_float(cell, name, lineno))

    t = np.array(columns.pop("t"))
    if not np.all(np.mod(t, 1) == 0):
        raise NonNumericCellError("t", "?", "non-integer time")
    t = t.astype(np.int64)
    if len(t) > 1 and not np.all(np.diff(t) == 1):
        bad = int(np.flatnonzero(np.diff(t) != 1)[0])
        raise NonConsecutiveTimesError(f"{t[bad]} followed by {t[bad + 1]}")
    t0 = int(t0)
    if len(t) == 0 or t0 not in t or np.sum(t <= t0) < 3 or t0 >= t[-1]:
        raise T0OutOfRangeError(t0, int(t[0]) if len(t) else 0, int(t[-1]) if len(t) else 0)

    y = np.array(columns.pop(outcome_name))
    covs = {name: np.array(vals) for name, vals in columns.items()}
    if "M" in covs:
        m = covs["M"]
        if np.any(~np.isfinite(m)) or np.any((m < 1) | (m > 12)) or np.any(np.mod(m, 1) != 0):
            raise DataLoadError("month-of-year column M must hold integers 1-12")
        for name, col in quarter_indicators(m).items():
            covs.setdefault(name, col)
    return TimeSeriesData(times=t, outcome=y, t0=t0, covariates=covs, outcome_name=outcome_name)


def add_lagged_covariates(data: TimeSeriesData, spec) -> TimeSeriesData:
    """Return ``data`` with lag-1 copies of the outcome and of the covariate
    columns the model uses.

    New columns are named ``lag_<name>``; their first entry is NaN, which
    marks the earliest month as unusable for lagged fitting.
    """
    names = []
    if spec.lag_covariates:
        names = list(spec.data_columns())
        if "quarter_dummies" in spec.term_kinds() and not all(q in data.covariates for q in QUARTER_COLUMNS):
            data = data.with_covariates(quarter_indicators(data.month_of_year(data.times)))
    for name in names:
        if name not in data.covariates:
            raise MissingColumnError(name)
    extra = {}
    if spec.lag_outcome:
        extra[LAG_PREFIX + data.outcome_name] = _shift(data.outcome)
    for name in names:
        extra[LAG_PREFIX + name] = _shift(data.covariates[name])
    return data.with_covariates(extra)


def _shift(values):
    out = np.empty(len(values))
    out[0] = np.nan
    out[1:] = values[:-1]
    return out


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a linear trend with optional seasonality and AR(1) noise.

    ``quarter_offsets`` are added in months 4-6, 7-9 and 10-12;
    ``sin_coef``/``cos_coef`` multiply ``sin(2 pi t / 12)`` and
    ``cos(2 pi t / 12)``.
    """

    beta0: float = 0.0
    beta1: float = 0.0
    rho: float = 0.0
    sigma: float = 1.0
    n_pre: int = 24
    n_post: int = 12
    seed: int = 0
    quarter_offsets: tuple[float, float, float] | None = None
    sin_coef: float = 0.0
    cos_coef: float = 0.0
    t_start: int = 1

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise InputError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.sigma < 0:
            raise InputError("sigma must be nonnegative")
        if self.n_pre < 3 or self.n_post < 1:
            raise InputError("need n_pre >= 3 and n_post >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")

    @property
    def t0(self) -> int:
        return self.t_start + self.n_pre - 1

    @property
    def stationary_sd(self) -> float:
        return self.sigma / math.sqrt(1.0 - self.rho**2)

    def structural(self, times) -> np.ndarray:
        """Noise-free mean of the series at ``times``."""
        t = np.asarray(times, dtype=float)
        mean = self.beta0 + self.beta1 * t
        if self.quarter_offsets is not None:
            q = quarter_indicators((np.asarray(times, dtype=np.int64) - 1) % 12 + 1)
            for g, name in zip(self.quarter_offsets, QUARTER_COLUMNS):
                mean = mean + g * q[name]
        if self.sin_coef or self.cos_coef:
            mean = mean + self.sin_coef * np.sin(2 * np.pi * t / 12) + self.cos_coef * np.cos(2 * np.pi * t / 12)
        return mean


def ar1_noise(n: int, rho: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path: first value from N(0, sigma^2 / (1 - rho^2))."""
    shocks = rng.standard_normal(n) * sigma
    eps = np.empty(n)
    eps[0] = shocks[0] / math.sqrt(1.0 - rho**2)
    for i in range(1, n):
        eps[i] = rho * eps[i - 1] + shocks[i]
    return eps


def generate_synthetic(spec: SyntheticSpec) -> TimeSeriesData:
    """Draw one series from ``spec``; deterministic given ``spec.seed``.

    The returned data carry a month-of-year column ``M`` (``t = 1`` is
    January) so seasonal models can be fit to them directly.
    """
    n = spec.n_pre + spec.n_post
    times = np.arange(spec.t_start, spec.t_start + n, dtype=np.int64)
    rng = np.random.default_rng(int(spec.seed))
    y = spec.structural(times) + ar1_noise(n, spec.rho, spec.sigma, rng)
    months = ((times - 1) % 12 + 1).astype(float)
    covs = {"M": months, **quarter_indicators(months)}
    return TimeSeriesData(times=times, outcome=y, t0=spec.t0, covariates=covs)
