"""Simulation-based analysis of interrupted time series designs.

Fit a lagged-outcome regression to pre-policy months, simulate plausible
counterfactual post-policy trajectories, and compare the observed series
against them.
"""

__version__ = "0.1.0"

from .errors import DataLoadError, InputError, ItsError, NumericalError  # noqa: E402
from .inference import (  # noqa: E402
    Envelope,
    SmootherSpec,
    SummaryStatistic,
    TestResult,
    loess,
    make_envelope,
    smooth_series,
    smoothed_envelope,
    test_summary,
)
from .lagfit import LaggedFit, ResidualParams, check_constraint, fit_pre_policy, to_residual_params  # noqa: E402
from .linmodel import ModelSpec, OlsFit, Term, build_design, classic_its, ols  # noqa: E402
from .poststrat import GroupedMonthly, MixTarget, adjust_series, compute_target_mix  # noqa: E402
from .power import PowerScenario, estimate_mdes, estimate_power  # noqa: E402
from .series import (  # noqa: E402
    SyntheticSpec,
    TimeSeriesData,
    add_lagged_covariates,
    generate_synthetic,
    load_csv,
)
from .simengine import TrajectorySet, draw_params, rho_diagnostics, simulate_trajectories  # noqa: E402
