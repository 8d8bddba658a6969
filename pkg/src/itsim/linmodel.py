"""Least squares with collinear-column dropping, structural model terms, and
the classic dummy-variable ITS baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateDesignError, InputError, MissingColumnError
from .series import LAG_PREFIX, QUARTER_COLUMNS, TimeSeriesData, quarter_indicators

PIVOT_TOL = 1e-9

TERM_KINDS = ("intercept", "linear_time", "quarter_dummies", "covariate", "sinusoid_pair")

# CLI spellings for the term kinds
_TERM_ALIASES = {
    "intercept": "intercept",
    "1": "intercept",
    "trend": "linear_time",
    "t": "linear_time",
    "linear_time": "linear_time",
    "quarters": "quarter_dummies",
    "quarter_dummies": "quarter_dummies",
    "sinusoid": "sinusoid_pair",
    "sin12": "sinusoid_pair",
    "sinusoid_pair": "sinusoid_pair",
}


@dataclass(frozen=True)
class Term:
    kind: str
    name: str | None = None

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise InputError(f"unknown term kind {self.kind!r}")
        if (self.kind == "covariate") != (self.name is not None):
            raise InputError("covariate terms (and only those) carry a column name")

    def column_names(self) -> list[str]:
        if self.kind == "intercept":
            return ["(Intercept)"]
        if self.kind == "linear_time":
            return ["t"]
        if self.kind == "quarter_dummies":
            return list(QUARTER_COLUMNS)
        if self.kind == "sinusoid_pair":
            return ["sin12", "cos12"]
        return [self.name]


@dataclass(frozen=True)
class ModelSpec:
    """Structural trend terms plus the lag policy.

    ``lag_outcome`` adds ``Y[t-1]``; ``lag_covariates`` adds the lag-1 copy
    of every structural column (collinear copies are dropped at fit time).
    """

    terms: tuple[Term, ...] = (Term("intercept"), Term("linear_time"))
    lag_outcome: bool = True
    lag_covariates: bool = True

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise InputError("model needs at least one term")
        kinds = [t.kind for t in terms]
        for k in ("intercept", "linear_time", "quarter_dummies", "sinusoid_pair"):
            if kinds.count(k) > 1:
                raise InputError(f"term {k!r} given more than once")
        names = self.structural_names()
        if len(set(names)) != len(names):
            raise InputError(f"duplicate model columns in {names}")

    @classmethod
    def parse(cls, text: str, lag_outcome=True, lag_covariates=True) -> "ModelSpec":
        """Build a spec from a comma-separated list such as
        ``"intercept,trend,quarters,Temp"``; unrecognised tokens name covariates."""
        terms = []
        for tok in (s.strip() for s in text.split(",")):
            if not tok:
                continue
            kind = _TERM_ALIASES.get(tok.lower())
            terms.append(Term(kind) if kind else Term("covariate", tok))
        return cls(tuple(terms), lag_outcome=lag_outcome, lag_covariates=lag_covariates)

    def term_kinds(self) -> list[str]:
        return [t.kind for t in self.terms]

    def structural_names(self) -> list[str]:
        return [c for term in self.terms for c in term.column_names()]

    def data_columns(self) -> list[str]:
        """Covariate columns drawn from the data (named covariates and quarter dummies)."""
        cols = []
        for term in self.terms:
            if term.kind == "covariate":
                cols.append(term.name)
            elif term.kind == "quarter_dummies":
                cols.extend(QUARTER_COLUMNS)
        return cols

    def is_pure_trend(self) -> bool:
        return sorted(self.term_kinds()) == ["intercept", "linear_time"]

    def without_lags(self) -> "ModelSpec":
        return ModelSpec(self.terms, lag_outcome=False, lag_covariates=False)

    def describe(self) -> str:
        parts = []
        for t in self.terms:
            parts.append(t.name if t.kind == "covariate" else t.kind)
        lags = []
        if self.lag_outcome:
            lags.append("outcome")
        if self.lag_covariates:
            lags.append("covariates")
        return ", ".join(parts) + (f" (lagged: {', '.join(lags)})" if lags else "")


def structural_columns(data: TimeSeriesData, spec: ModelSpec, times) -> tuple[np.ndarray, list[str]]:
    """Evaluate the structural terms at arbitrary ``times``.

    Unobserved covariate values come back as NaN.
    """
    times = np.asarray(times, dtype=np.int64)
    t = times.astype(float)
    cols, names = [], []
    for term in spec.terms:
        if term.kind == "intercept":
            cols.append(np.ones(len(t)))
        elif term.kind == "linear_time":
            cols.append(t)
        elif term.kind == "quarter_dummies":
            if all(q in data.covariates for q in QUARTER_COLUMNS):
                cols.extend(data.covariate_at(q, times) for q in QUARTER_COLUMNS)
            else:
                q = quarter_indicators(data.month_of_year(times))
                cols.extend(q[name] for name in QUARTER_COLUMNS)
        elif term.kind == "sinusoid_pair":
            cols.append(np.sin(2 * np.pi * t / 12))
            cols.append(np.cos(2 * np.pi * t / 12))
        else:
            if term.name not in data.covariates:
                raise MissingColumnError(term.name)
            cols.append(data.covariate_at(term.name, times))
        names.extend(term.column_names())
    return np.column_stack(cols), names


def exogenous_columns(data: TimeSeriesData, spec: ModelSpec, times) -> tuple[np.ndarray, list[str]]:
    """Structural columns plus (if requested) their lag-1 copies, in design order."""
    X, names = structural_columns(data, spec, times)
    if spec.lag_covariates:
        L, lnames = structural_columns(data, spec, np.asarray(times, dtype=np.int64) - 1)
        X = np.column_stack([X, L])
        names = names + [LAG_PREFIX + n for n in lnames]
    return X, names


def full_columns(data: TimeSeriesData, spec: ModelSpec, times) -> tuple[np.ndarray, list[str]]:
    """All candidate design columns at ``times``, lagged outcome last."""
    X, names = exogenous_columns(data, spec, times)
    if spec.lag_outcome:
        prev = np.asarray(times, dtype=np.int64) - 1 - data.times[0]
        lag_y = np.full(len(prev), np.nan)
        ok = (prev >= 0) & (prev < len(data))
        lag_y[ok] = data.outcome[prev[ok]]
        X = np.column_stack([X, lag_y])
        names = names + [LAG_PREFIX + data.outcome_name]
    return X, names


def select_columns(X: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Indices of a maximal linearly independent subset of columns of ``X``.

    Columns are taken in order (a QR factorization whose pivot order is the
    column order), so a later column is dropped when it is spanned by earlier
    ones. A column is dropped when its pivot, the norm of its component
    orthogonal to the retained columns, falls below ``tol`` times the
    largest pivot seen.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    basis = np.empty((n, 0))
    keep = []
    largest = 0.0
    for j in range(p):
        v = X[:, j].copy()
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            v -= basis @ (basis.T @ v)
        pivot = float(np.linalg.norm(v))
        largest = max(largest, pivot)
        if pivot == 0.0 or pivot < tol * largest:
            continue
        keep.append(j)
        basis = np.column_stack([basis, v / pivot])
    return np.array(keep, dtype=int)


@dataclass(frozen=True)
class Design:
    X: np.ndarray
    y: np.ndarray
    times: np.ndarray
    column_names: list[str]
    dropped_columns: list[str]


def build_design(data: TimeSeriesData, spec: ModelSpec, range: str = "pre_only", tol: float = PIVOT_TOL) -> Design:
    """Design matrix for fitting ``spec`` to the rows in ``range``.

    ``range`` is ``"pre_only"`` (months up to ``t0``) or ``"all"``. Rows
    with an undefined lag (the first month) are skipped, and columns that are
    linearly dependent on earlier ones are dropped and recorded.
    """
    if range not in ("pre_only", "all"):
        raise InputError(f"range must be 'pre_only' or 'all', got {range!r}")
    rows = data.pre_mask if range == "pre_only" else np.ones(len(data), dtype=bool)
    times = data.times[rows]
    X, names = full_columns(data, spec, times)
    usable = np.all(np.isfinite(X), axis=1)
    if not np.any(usable):
        raise DegenerateDesignError("no usable rows for the design")
    X, times, y = X[usable], times[usable], data.outcome[rows][usable]
    keep = select_columns(X, tol)
    kept = [names[i] for i in keep]
    dropped = [nm for i, nm in enumerate(names) if i not in set(keep)]
    return Design(X=X[:, keep], y=y, times=times, column_names=kept, dropped_columns=dropped)


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit on the retained (linearly independent) columns."""

    coefficients: np.ndarray
    vcov: np.ndarray
    sigma_hat: float
    column_names: list[str]
    n_used: int
    dropped_columns: list[str] = field(default_factory=list)
    residuals: np.ndarray | None = None

    @property
    def df_resid(self) -> int:
        return self.n_used - len(self.coefficients)

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def predict(self, X_retained: np.ndarray) -> np.ndarray:
        return np.asarray(X_retained) @ self.coefficients


def ols(design: np.ndarray, y: np.ndarray, column_names=None, tol: float = PIVOT_TOL) -> OlsFit:
    """Ordinary least squares with collinear columns removed.

    Returns coefficients on the retained columns, ``sigma_hat^2 (X'X)^-1`` as
    the covariance, and ``sigma_hat^2 = RSS / (n - k)`` with ``k`` the
    retained column count.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise InputError("design rows must match the outcome length")
    if column_names is None:
        column_names = [f"x{j}" for j in range(X.shape[1])]
    keep = select_columns(X, tol)
    if len(keep) == 0:
        raise DegenerateDesignError("design has no non-degenerate columns")
    n, k = X.shape[0], len(keep)
    if n < k + 1:
        raise DegenerateDesignError(f"{n} rows cannot support {k} coefficients plus a residual variance")
    Xk = X[:, keep]
    Q, R = np.linalg.qr(Xk)
    beta = linalg.solve_triangular(R, Q.T @ y)
    resid = y - Xk @ beta
    sigma2 = float(resid @ resid) / (n - k)
    Rinv = linalg.solve_triangular(R, np.eye(k))
    vcov = sigma2 * (Rinv @ Rinv.T)
    vcov = (vcov + vcov.T) / 2
    kept = set(keep.tolist())
    return OlsFit(
        coefficients=beta,
        vcov=vcov,
        sigma_hat=float(np.sqrt(sigma2)),
        column_names=[column_names[j] for j in keep],
        n_used=n,
        dropped_columns=[nm for j, nm in enumerate(column_names) if j not in kept],
        residuals=resid,
    )


def fit_structural(data: TimeSeriesData, spec: ModelSpec, range: str = "pre_only") -> OlsFit:
    """Fit ``spec`` by OLS, including whatever lag columns it requests."""
    d = build_design(data, spec, range)
    fit = ols(d.X, d.y, d.column_names)
    if d.dropped_columns:
        fit = OlsFit(
            coefficients=fit.coefficients,
            vcov=fit.vcov,
            sigma_hat=fit.sigma_hat,
            column_names=fit.column_names,
            n_used=fit.n_used,
            dropped_columns=d.dropped_columns + fit.dropped_columns,
            residuals=fit.residuals,
        )
    return fit


@dataclass(frozen=True)
class ClassicItsResult:
    times: np.ndarray
    delta_hat: np.ndarray
    se_delta: np.ndarray
    trend: tuple[float, float]
    sigma_hat: float
    S: np.ndarray


def classic_its(data: TimeSeriesData) -> ClassicItsResult:
    """Linear-trend ITS with one dummy per post-policy month.

    Impacts are observed minus the pre-policy trend line; standard errors use
    ``sigma_hat * sqrt(1 + S00 + 2 k S10 + k^2 S11)`` with ``S`` the inverse
    cross-product matrix of the pre-policy intercept/time design and ``k``
    the post-policy time value.
    """
    if data.n_pre < 4:
        raise DegenerateDesignError("classic ITS needs at least 4 pre-policy months")
    pre = data.pre_mask
    t_pre = data.times[pre].astype(float)
    X = np.column_stack([np.ones(len(t_pre)), t_pre])
    fit = ols(X, data.outcome[pre], ["(Intercept)", "t"])
    if len(fit.coefficients) != 2:
        raise DegenerateDesignError("pre-policy trend design is rank deficient")
    S = np.linalg.inv(X.T @ X)
    b0, b1 = fit.coefficients
    k = data.post_times.astype(float)
    delta = data.outcome[data.post_mask] - (b0 + b1 * k)
    se = fit.sigma_hat * np.sqrt(1 + S[0, 0] + 2 * k * S[1, 0] + k**2 * S[1, 1])
    return ClassicItsResult(
        times=data.post_times.copy(),
        delta_hat=delta,
        se_delta=se,
        trend=(float(b0), float(b1)),
        sigma_hat=fit.sigma_hat,
        S=S,
    )
