"""Analysis configuration: an INI-style file of ``key = value`` lines grouped
under section headers, with every key overridable from the command line.

Section names are for the reader only; keys are looked up flat, so each key
may appear in at most one section.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError
from .inference import SmootherSpec
from .linmodel import PIVOT_TOL, ModelSpec

LAG_CHOICES = ("all", "outcome")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


@dataclass
class AnalysisConfig:
    input: str | None = None
    outcome: str = "Y"
    t0: int | None = None
    model: str = "intercept,trend"
    lag: str = "all"
    pivot_tol: float = PIVOT_TOL
    R: int = 10_000
    alpha: float = 0.05
    seed: int = 0
    threads: int = 1
    out_dir: str = "itsim_out"
    # smoothing
    smooth: bool = False
    span: float = 0.75
    degree: int = 1
    fit_range: str = "post_only"
    season_model: str | None = None
    # summary test
    first: int | None = None
    last: int | None = None
    at: int | None = None
    # post-stratification
    kind: str = "mean_or_proportion"
    window_first: int | None = None
    window_last: int | None = None
    # power
    beta0: float = 0.0
    beta1: float = 0.0
    rho: float = 0.3
    sigma: float = 1.0
    n_pre: int = 60
    n_post: int = 12
    effect: float = 0.0
    R_inner: int = 1000
    n_outer: int = 200
    target_power: float | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.lag not in LAG_CHOICES:
            raise InputError(f"lag must be one of {LAG_CHOICES}, got {self.lag!r}")
        if self.R < 1:
            raise InputError("R must be at least 1")
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if not 0 < self.pivot_tol < 1:
            raise InputError("pivot_tol must lie in (0, 1)")

    def model_spec(self) -> ModelSpec:
        return ModelSpec.parse(self.model, lag_outcome=True, lag_covariates=self.lag == "all")

    def smoother(self) -> SmootherSpec:
        season = ModelSpec.parse(self.season_model, False, False) if self.season_model else None
        return SmootherSpec(span=self.span, degree=self.degree, fit_range=self.fit_range, seasonality_model=season)

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise InputError(f"missing required setting {name!r} (config key or --{name.replace('_', '-')})")


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(AnalysisConfig) if f.name != "extra"}


def _convert(name: str, value):
    if value is None:
        return None
    kind = FIELD_TYPES[name]
    try:
        if "bool" in kind:
            return _bool(value)
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError:
        raise InputError(f"bad value {value!r} for {name!r}") from None
    return str(value)


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (R, R_inner)
    try:
        text = path.read_text(encoding="utf-8")
        if not text.lstrip().startswith("["):
            text = "[analysis]\n" + text
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise InputError(f"cannot parse {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            key = key.replace("-", "_")
            if key in values:
                raise InputError(f"key {key!r} set in more than one section")
            values[key] = value
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> AnalysisConfig:
    """Defaults, then file values, then non-None overrides."""
    merged = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in FIELD_TYPES:
                raise InputError(f"unknown configuration key {key!r}")
            merged[key] = _convert(key, value)
    return AnalysisConfig(**merged)
