"""Parameter draws and recursive simulation of counterfactual post-policy
trajectories from a fitted lagged-outcome model.

Every replicate owns a counter-based random stream keyed by the master seed
and its replicate id, so results do not depend on how replicates are split
across threads.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import linalg

from .errors import DegenerateDesignError, InputError
from .lagfit import LaggedFit
from .linmodel import exogenous_columns
from .series import TimeSeriesData

EXPLOSIVE_WARN_FRACTION = 0.05


def replicate_rng(seed: int, replicate_id: int) -> np.random.Generator:
    """Independent Philox stream for one replicate."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InputError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=seed + (int(replicate_id) << 64)))


@dataclass(frozen=True)
class ParamDraw:
    beta_star: np.ndarray
    sigma_star: float
    replicate_id: int


@dataclass(frozen=True)
class ParamDraws:
    """``R`` parameter draws stored column-wise."""

    beta_star: np.ndarray  # (R, k)
    sigma_star: np.ndarray  # (R,)
    column_names: list[str]
    rho_index: int

    def __len__(self):
        return len(self.sigma_star)

    def __getitem__(self, r) -> ParamDraw:
        return ParamDraw(self.beta_star[r], float(self.sigma_star[r]), int(r))

    def __iter__(self) -> Iterator[ParamDraw]:
        return (self[r] for r in range(len(self)))

    @property
    def rho_star(self) -> np.ndarray:
        return self.beta_star[:, self.rho_index]


def _cov_root(vcov: np.ndarray) -> np.ndarray:
    """Matrix ``L`` with ``L @ L.T == vcov`` (vcov may be singular)."""
    try:
        return linalg.cholesky(vcov, lower=True)
    except linalg.LinAlgError:
        w, v = np.linalg.eigh(vcov)
        return v * np.sqrt(np.clip(w, 0, None))


def _draw_block(fit: LaggedFit, seed, ids, horizon, parameter_uncertainty):
    """Draws for replicates ``ids``: (beta*, sigma*, innovations)."""
    o = fit.ols
    k = len(o.coefficients)
    df = o.df_resid
    root = _cov_root(o.vcov)
    betas = np.empty((len(ids), k))
    sigmas = np.empty(len(ids))
    shocks = np.empty((len(ids), horizon))
    for i, rid in enumerate(ids):
        rng = replicate_rng(seed, rid)
        x = rng.chisquare(df)
        z = rng.standard_normal(k + horizon)
        if parameter_uncertainty:
            ratio = np.sqrt(df / x)
            sigmas[i] = o.sigma_hat * ratio
            # the fitted covariance already carries sigma_hat^2; rescale it to sigma*^2
            scale = ratio if o.sigma_hat > 0 else 1.0
            betas[i] = o.coefficients + scale * (root @ z[:k])
        else:
            sigmas[i] = o.sigma_hat
            betas[i] = o.coefficients
        shocks[i] = z[k:]
    return betas, sigmas, shocks


def _draw_all(fit, R, seed, horizon, parameter_uncertainty, threads):
    if R < 1:
        raise InputError("R must be at least 1")
    if fit.ols.df_resid < 1:
        raise DegenerateDesignError("fit has no residual degrees of freedom")
    ids = np.arange(R)
    threads = max(1, int(threads))
    if threads == 1:
        return _draw_block(fit, seed, ids, horizon, parameter_uncertainty)
    chunks = np.array_split(ids, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _draw_block(fit, seed, c, horizon, parameter_uncertainty), chunks))
    return tuple(np.concatenate([p[j] for p in parts]) for j in range(3))


def draw_params(fit: LaggedFit, R: int, seed: int, parameter_uncertainty: bool = True, threads: int = 1) -> ParamDraws:
    """Draw ``R`` plausible parameter vectors.

    ``sigma* = sigma_hat * sqrt(df / x)`` with ``x ~ chi2(df)``, then
    ``beta* ~ N(beta_hat, (sigma*/sigma_hat)^2 vcov)``. With
    ``parameter_uncertainty=False`` every draw equals the estimate.
    """
    betas, sigmas, _ = _draw_all(fit, R, seed, 0, parameter_uncertainty, threads)
    return ParamDraws(betas, sigmas, list(fit.ols.column_names), fit.rho_index)


@dataclass(frozen=True)
class TrajectorySet:
    times: np.ndarray
    trajectories: np.ndarray  # (R, horizon)
    draws: ParamDraws
    seed: int
    anchor: tuple[int, float]

    @property
    def R(self) -> int:
        return self.trajectories.shape[0]

    def full_series(self, data: TimeSeriesData) -> np.ndarray:
        """Observed pre-policy values followed by each simulated continuation."""
        pre = data.outcome[data.pre_mask]
        return np.hstack([np.broadcast_to(pre, (self.R, len(pre))), self.trajectories])


def simulate_trajectories(
    fit: LaggedFit,
    data: TimeSeriesData,
    R: int,
    seed: int,
    horizon: int | None = None,
    parameter_uncertainty: bool = True,
    threads: int = 1,
) -> TrajectorySet:
    """Simulate ``R`` counterfactual paths for months ``t0+1 .. horizon``.

    Each replicate draws its own parameters, then steps forward from the
    observed ``Y[t0]``: structural and lagged-covariate terms at ``t``, plus
    ``rho*`` times the previous simulated value, plus ``N(0, sigma*^2)``
    noise.
    """
    if horizon is None:
        horizon = int(data.times[-1])
    if horizon <= data.t0:
        raise InputError("horizon must lie after t0")
    times = np.arange(data.t0 + 1, horizon + 1, dtype=np.int64)
    H = len(times)

    names = fit.ols.column_names
    exog_idx = [i for i, nm in enumerate(names) if i != fit.rho_index]
    Z_all, z_names = exogenous_columns(data, fit.spec, times)
    Z = Z_all[:, [z_names.index(names[i]) for i in exog_idx]]
    missing = ~np.all(np.isfinite(Z), axis=1)
    if np.any(missing):
        raise InputError(f"covariate values missing for post-policy time {times[missing][0]}")

    betas, sigmas, shocks = _draw_all(fit, R, seed, H, parameter_uncertainty, threads)
    mean_part = betas[:, exog_idx] @ Z.T
    rho = betas[:, fit.rho_index]
    y_t0 = float(data.outcome[data.index_of(data.t0)])
    out = np.empty((R, H))
    prev = np.full(R, y_t0)
    for h in range(H):
        prev = mean_part[:, h] + rho * prev + sigmas * shocks[:, h]
        out[:, h] = prev
    return TrajectorySet(
        times=times,
        trajectories=out,
        draws=ParamDraws(betas, sigmas, list(names), fit.rho_index),
        seed=int(seed),
        anchor=(data.t0, y_t0),
    )


@dataclass(frozen=True)
class RhoDiagnostics:
    frac_explosive: float
    frac_negative: float
    warn: bool


def rho_diagnostics(draws: ParamDraws, threshold: float = EXPLOSIVE_WARN_FRACTION) -> RhoDiagnostics:
    """Share of draws with ``rho* >= 1`` or ``rho* < 0``. Draws are not censored."""
    rho = draws.rho_star
    if len(rho) == 0:
        raise InputError("no draws")
    explosive = float(np.mean(rho >= 1))
    negative = float(np.mean(rho < 0))
    warn = explosive > threshold
    if warn:
        warnings.warn(
            f"{explosive:.1%} of parameter draws have rho* >= 1; envelopes may be very wide",
            RuntimeWarning,
            stacklevel=2,
        )
    return RhoDiagnostics(explosive, negative, warn)
