"""Lagged-outcome regression on pre-policy months and conversion to the
trend-plus-AR(1)-residual parameterization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError, InputError, NonstationaryError
from .linmodel import PIVOT_TOL, ModelSpec, OlsFit, build_design, ols
from .series import LAG_PREFIX, TimeSeriesData


@dataclass(frozen=True)
class LaggedFit:
    """OLS fit of ``Y[t]`` on structural columns, their lags and ``Y[t-1]``."""

    ols: OlsFit
    spec: ModelSpec
    outcome_name: str = "Y"
    lag_identified: bool = True

    @property
    def lag_outcome_name(self) -> str:
        return LAG_PREFIX + self.outcome_name

    @property
    def rho_index(self) -> int:
        return self.ols.column_names.index(self.lag_outcome_name)

    @property
    def rho_hat(self) -> float:
        return float(self.ols.coefficients[self.rho_index])

    @property
    def sigma_tilde(self) -> float:
        return self.ols.sigma_hat

    @property
    def beta_lag(self) -> dict[str, float]:
        """Coefficients on the retained lagged structural columns."""
        return {
            nm: float(c)
            for nm, c in zip(self.ols.column_names, self.ols.coefficients)
            if nm.startswith(LAG_PREFIX) and nm != self.lag_outcome_name
        }

    def coefficients(self) -> dict[str, float]:
        return dict(zip(self.ols.column_names, map(float, self.ols.coefficients)))


def fit_pre_policy(data: TimeSeriesData, spec: ModelSpec, tol: float = PIVOT_TOL) -> LaggedFit:
    """Fit the lagged-outcome model to months ``t <= t0``.

    The earliest month has no lag and is skipped. Lagged structural columns
    that duplicate contemporaneous ones (the intercept, ``t - 1``, lagged
    sinusoids) are dropped. The lag-outcome coefficient is always kept.
    """
    if not spec.lag_outcome:
        raise InputError("the lagged-outcome fit needs lag_outcome=True")
    pre_y = data.outcome[data.pre_mask]
    if np.ptp(pre_y) == 0:
        raise DegenerateDesignError("pre-policy outcome is constant")
    d = build_design(data, spec, "pre_only", tol)
    lag_name = LAG_PREFIX + data.outcome_name
    identified = lag_name in d.column_names
    n_coef = len(d.column_names) + (0 if identified else 1)
    if len(d.y) < n_coef + 2:
        raise DegenerateDesignError(f"{len(d.y)} usable pre-policy months for {n_coef} coefficients")
    fit = ols(d.X, d.y, d.column_names, tol)
    dropped = d.dropped_columns + fit.dropped_columns
    coefs, vcov, names = fit.coefficients, fit.vcov, list(fit.column_names)
    if not identified:
        # Y[t-1] lies in the span of the trend terms: the pre-policy series is
        # an exact trend, so carry rho = 0 with no uncertainty
        if fit.sigma_hat > 1e-8 * max(1.0, float(np.abs(d.y).max())):
            raise DegenerateDesignError("lagged outcome is collinear with the structural terms")
        dropped = [c for c in dropped if c != lag_name]
        coefs = np.append(coefs, 0.0)
        vcov = np.pad(vcov, ((0, 1), (0, 1)))
        names.append(lag_name)
    fit = OlsFit(
        coefficients=coefs,
        vcov=vcov,
        sigma_hat=fit.sigma_hat,
        column_names=names,
        n_used=fit.n_used,
        dropped_columns=dropped,
        residuals=fit.residuals,
    )
    return LaggedFit(ols=fit, spec=spec, outcome_name=data.outcome_name, lag_identified=identified)


@dataclass(frozen=True)
class ResidualParams:
    """Trend ``beta0 + beta1 t`` with AR(1) residuals of coefficient ``rho``
    and innovation SD ``sigma``."""

    beta0: float
    beta1: float
    rho: float
    sigma: float

    @property
    def stationary_sd(self) -> float:
        if abs(self.rho) >= 1:
            return math.inf
        return self.sigma / math.sqrt(1 - self.rho**2)

    @property
    def residual_variance(self) -> float:
        return self.stationary_sd**2

    @property
    def residual_autocovariance(self) -> float:
        return self.rho * self.residual_variance


def residual_to_lagged(beta0: float, beta1: float, rho: float) -> tuple[float, float, float]:
    """(beta0, beta1, rho) -> intercept, slope and lag coefficient of the
    lagged-outcome model."""
    return beta0 + rho * (beta1 - beta0), beta1 * (1 - rho), rho


def lagged_to_residual(b0: float, b1: float, b2: float) -> tuple[float, float, float]:
    """Inverse of :func:`residual_to_lagged`."""
    if b2 == 1:
        raise NonstationaryError("lag coefficient equals 1; trend parameters are undefined")
    rho = b2
    beta1 = b1 / (1 - rho)
    beta0 = b0 / (1 - rho) - b1 * rho / (1 - rho) ** 2
    return beta0, beta1, rho


def to_residual_params(fit: LaggedFit) -> ResidualParams:
    """Convert a pure-trend lagged fit to trend-plus-AR(1) parameters.

    Seasonal or covariate models are refused: there is no closed form for
    them here.
    """
    if not fit.spec.is_pure_trend():
        raise InputError("conversion is only defined for an intercept + linear-time model")
    coefs = fit.coefficients()
    b0, b1, b2 = coefs["(Intercept)"], coefs["t"], fit.rho_hat
    beta0, beta1, rho = lagged_to_residual(b0, b1, b2)
    return ResidualParams(beta0=beta0, beta1=beta1, rho=rho, sigma=fit.sigma_tilde)


@dataclass(frozen=True)
class ConstraintRow:
    column: str
    beta: float
    beta_lag: float
    implied: float  # -rho_hat * beta

    @property
    def discrepancy(self) -> float:
        return self.beta_lag - self.implied


def check_constraint(fit: LaggedFit) -> list[ConstraintRow]:
    """Compare each free lag coefficient with ``-rho_hat * beta`` of its
    contemporaneous column.

    Under the trend-plus-AR(1) model these agree up to estimation error; the
    discrepancies are reported, never judged.
    """
    coefs = fit.coefficients()
    rho = fit.rho_hat
    rows = []
    for lag_name, bl in fit.beta_lag.items():
        base = lag_name[len(LAG_PREFIX):]
        if base not in coefs:
            continue
        rows.append(ConstraintRow(column=base, beta=coefs[base], beta_lag=bl, implied=-rho * coefs[base]))
    return rows
