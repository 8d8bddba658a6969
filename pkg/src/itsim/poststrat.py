"""Post-stratification of grouped monthly aggregates to a fixed case mix."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataLoadError, InputError, MissingColumnError, NonConsecutiveTimesError, NonNumericCellError
from .series import TimeSeriesData, quarter_indicators

KINDS = ("mean_or_proportion", "count")


@dataclass(frozen=True)
class GroupedMonthly:
    """Per-month, per-group case counts ``n`` and outcomes ``y``.

    ``n`` and ``y`` have shape ``(len(times), len(groups))``. A group with no
    cases in a month has ``n = 0`` and ``y = NaN``.
    """

    times: np.ndarray
    groups: tuple[str, ...]
    n: np.ndarray
    y: np.ndarray
    outcome_kind: str = "mean_or_proportion"
    months: np.ndarray | None = None

    def __post_init__(self):
        if self.outcome_kind not in KINDS:
            raise InputError(f"outcome_kind must be one of {KINDS}")
        times = np.asarray(self.times, dtype=np.int64)
        if len(times) > 1 and not np.all(np.diff(times) == 1):
            raise NonConsecutiveTimesError()
        n = np.asarray(self.n, dtype=float)
        y = np.asarray(self.y, dtype=float)
        shape = (len(times), len(self.groups))
        if n.shape != shape or y.shape != shape:
            raise InputError(f"n and y must have shape {shape}")
        if np.any(n < 0) or np.any(np.mod(n, 1) != 0):
            raise InputError("group counts must be nonnegative integers")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "y", y)

    @property
    def totals(self) -> np.ndarray:
        return self.n.sum(axis=1)

    def raw_outcome(self) -> np.ndarray:
        """Unadjusted monthly outcome: case-weighted mean, or total count."""
        y = np.nan_to_num(self.y)
        if self.outcome_kind == "count":
            return y.sum(axis=1)
        return (self.n * y).sum(axis=1) / self.totals


@dataclass(frozen=True)
class MixTarget:
    pi_star: Mapping[str, float]

    def __post_init__(self):
        w = np.array(list(self.pi_star.values()), dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise InputError("target weights must be nonnegative and sum to 1")


def load_grouped_csv(path, outcome_kind: str = "mean_or_proportion") -> GroupedMonthly:
    """Read a long-format CSV with columns ``t, group, n, y`` (and optional ``M``)."""
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in ("t", "group", "n", "y"):
            if col not in header:
                raise MissingColumnError(col, str(path))
        records = []
        for lineno, raw in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in raw.items()}
            vals = {}
            for col in ("t", "n", "y", "M"):
                if col not in row:
                    continue
                try:
                    vals[col] = float(row[col])
                except ValueError:
                    raise NonNumericCellError(col, lineno, row[col]) from None
            records.append((int(vals["t"]), row["group"], vals["n"], vals["y"], vals.get("M")))
    if not records:
        raise DataLoadError(f"{path} has no rows")
    times = np.arange(min(r[0] for r in records), max(r[0] for r in records) + 1)
    seen_times = {r[0] for r in records}
    if len(seen_times) != len(times):
        raise NonConsecutiveTimesError("months missing from grouped data")
    groups = tuple(sorted({r[1] for r in records}))
    n = np.zeros((len(times), len(groups)))
    y = np.full((len(times), len(groups)), np.nan)
    months = np.full(len(times), np.nan)
    for t, g, nn, yy, m in records:
        i, j = t - times[0], groups.index(g)
        if n[i, j] or not math.isnan(y[i, j]):
            raise DataLoadError(f"duplicate row for month {t}, group {g!r}")
        n[i, j], y[i, j] = nn, yy
        if m is not None:
            months[i] = m
    has_months = not np.all(np.isnan(months))
    return GroupedMonthly(times, groups, n, y, outcome_kind, months if has_months else None)


def compute_target_mix(data: GroupedMonthly, first: int, last: int) -> MixTarget:
    """Share of cases in each group over months ``first..last``."""
    sel = (data.times >= first) & (data.times <= last)
    if first > last or not np.any(sel):
        raise InputError(f"window {first}..{last} contains no months")
    counts = data.n[sel].sum(axis=0)
    total = counts.sum()
    if total <= 0:
        raise InputError("no cases in the target window")
    return MixTarget({g: float(c / total) for g, c in zip(data.groups, counts)})


def adjust_series(data: GroupedMonthly, target: MixTarget) -> np.ndarray:
    """Reweight every month to the target mix.

    Means/proportions: ``sum_s pi_s * Y_s``. Counts: ``N * sum_s pi_s * Y_s / N_s``.
    """
    missing = set(target.pi_star) - set(data.groups)
    if missing:
        raise InputError(f"target groups absent from data: {sorted(missing)}")
    idx = [data.groups.index(g) for g in target.pi_star]
    w = np.array(list(target.pi_star.values()))
    n = data.n[:, idx]
    y = data.y[:, idx]
    need = w > 0
    empty = (n == 0) & need
    if np.any(empty):
        i, j = np.argwhere(empty)[0]
        raise InputError(
            f"group {list(target.pi_star)[j]!r} has no cases in month {data.times[i]} but nonzero target weight"
        )
    if data.outcome_kind == "count":
        rate = np.where(need, y / np.where(n > 0, n, 1), 0.0)
        return data.totals * (rate @ w)
    return np.where(need, y, 0.0) @ w


def to_time_series(data: GroupedMonthly, values, t0: int, outcome_name: str = "Y_adj") -> TimeSeriesData:
    """Wrap an adjusted series as :class:`~itsim.series.TimeSeriesData` so the
    usual fitting pipeline can run on it unchanged."""
    covs = {}
    if data.months is not None:
        covs = {"M": data.months, **quarter_indicators(data.months)}
    return TimeSeriesData(times=data.times, outcome=values, t0=t0, covariates=covs, outcome_name=outcome_name)
