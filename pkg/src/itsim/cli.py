"""Command-line front end.

Commands: ``fit``, ``envelope``, ``test``, ``adjust``, ``power``. Exit codes:
0 success, 1 numerical failure, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import LAG_CHOICES, AnalysisConfig, build_config, read_config_file
from .errors import InputError, ItsError, NumericalError
from .inference import (
    SummaryStatistic,
    make_envelope,
    smoothed_envelope,
    test_summary,
    write_envelope_csv,
)
from .lagfit import check_constraint, fit_pre_policy
from .plotting import plot_envelope, plot_widths
from .poststrat import adjust_series, compute_target_mix, load_grouped_csv
from .power import PowerScenario, estimate_mdes, estimate_power
from .series import SyntheticSpec, load_csv
from .simengine import rho_diagnostics, simulate_trajectories

log = logging.getLogger("itsim")


def _fmt(v) -> str:
    return format(float(v), ".12g")


def _out_dir(cfg: AnalysisConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg: AnalysisConfig):
    cfg.require("input", "t0")
    return load_csv(cfg.input, cfg.outcome, cfg.t0)


def _write_summary(out: Path, text: str) -> None:
    (out / "summary.txt").write_text(text, encoding="utf-8")


def fit_report(fit, data) -> str:
    o = fit.ols
    se = np.sqrt(np.diag(o.vcov))
    lines = [
        f"Lagged-outcome fit of {data.outcome_name} on {fit.spec.describe()}",
        f"pre-policy months used: {o.n_used} (t0 = {data.t0})",
        "",
        f"{'term':<16}{'estimate':>14}{'std.error':>14}",
    ]
    for nm, c, s in zip(o.column_names, o.coefficients, se):
        lines.append(f"{nm:<16}{c:>14.6g}{s:>14.6g}")
    lines += [
        "",
        f"rho_hat = {fit.rho_hat:.6g}" + ("" if fit.lag_identified else " (not identified: exact pre-policy trend)"),
        f"sigma_tilde = {fit.sigma_tilde:.6g}",
        f"dropped (collinear): {', '.join(o.dropped_columns) if o.dropped_columns else 'none'}",
    ]
    rows = check_constraint(fit)
    if rows:
        lines += ["", "lag-constraint diagnostic (beta_lag vs -rho*beta):"]
        for r in rows:
            lines.append(f"  {r.column:<14} beta_lag={r.beta_lag:.6g} implied={r.implied:.6g} diff={r.discrepancy:.3g}")
    return "\n".join(lines) + "\n"


def cmd_fit(cfg: AnalysisConfig) -> str:
    data = _load(cfg)
    fit = fit_pre_policy(data, cfg.model_spec(), cfg.pivot_tol)
    out = _out_dir(cfg)
    report = fit_report(fit, data)
    with (out / "coefficients.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "estimate", "std_error", "status"])
        for nm, c, s in zip(fit.ols.column_names, fit.ols.coefficients, np.sqrt(np.diag(fit.ols.vcov))):
            w.writerow([nm, _fmt(c), _fmt(s), "estimated"])
        for nm in fit.ols.dropped_columns:
            w.writerow([nm, "", "", "dropped"])
    _write_summary(out, report)
    return report


def _simulate(cfg, data):
    fit = fit_pre_policy(data, cfg.model_spec(), cfg.pivot_tol)
    traj = simulate_trajectories(fit, data, cfg.R, cfg.seed, threads=cfg.threads)
    return fit, traj


def _rho_lines(traj) -> list[str]:
    diag = rho_diagnostics(traj.draws)
    lines = [f"draws with rho* >= 1: {diag.frac_explosive:.2%}; rho* < 0: {diag.frac_negative:.2%}"]
    if diag.warn:
        lines.append("WARNING: many explosive draws; the model may be misspecified or the series too short")
    return lines


def cmd_envelope(cfg: AnalysisConfig) -> str:
    data = _load(cfg)
    fit, traj = _simulate(cfg, data)
    env = make_envelope(traj, data, cfg.alpha)
    smooth = smoothed_envelope(traj, data, cfg.smoother(), cfg.alpha) if cfg.smooth else None
    out = _out_dir(cfg)
    write_envelope_csv(out / "envelope.csv", env, smooth)
    plot_envelope(env, data, out / "envelope.svg", smooth, title=f"{data.outcome_name}: R = {cfg.R}")
    outside = int(np.sum((env.observed < env.lower) | (env.observed > env.upper)))
    lines = [
        f"Envelope for {data.outcome_name}: {cfg.R} trajectories, seed {cfg.seed}, alpha {cfg.alpha}",
        f"post-policy months: {env.times[0]}..{env.times[-1]}; observed outside band: {outside}",
        f"mean band width: {env.width.mean():.6g}",
    ]
    if smooth is not None:
        lines.append(f"mean smoothed band width: {smooth.width.mean():.6g}")
    lines += _rho_lines(traj)
    text = "\n".join(lines) + "\n"
    _write_summary(out, text)
    return text


def _summary_stat(cfg, data) -> SummaryStatistic:
    if cfg.at is not None:
        return SummaryStatistic.smoothed_value(cfg.at, cfg.smoother())
    first = cfg.first if cfg.first is not None else data.t0 + 1
    last = cfg.last if cfg.last is not None else int(data.times[-1])
    return SummaryStatistic.range_average(first, last)


def test_record(res, stat) -> dict:
    return {
        "statistic": stat.description,
        "t_obs": res.t_obs,
        "ci_lower": res.ci[0],
        "ci_upper": res.ci[1],
        "p_value": res.p_value,
        "impact_point": res.impact_point,
        "impact_ci_lower": res.impact_ci[0],
        "impact_ci_upper": res.impact_ci[1],
        "simulated_mean": res.simulated_mean,
        "reject": res.reject,
        "alpha": res.alpha,
        "R": res.R,
    }


def cmd_test(cfg: AnalysisConfig) -> str:
    data = _load(cfg)
    _, traj = _simulate(cfg, data)
    stat = _summary_stat(cfg, data)
    res = test_summary(traj, data, stat, cfg.alpha)
    out = _out_dir(cfg)
    (out / "test_result.json").write_text(json.dumps(test_record(res, stat), indent=2) + "\n", encoding="utf-8")
    level = 100 * (1 - cfg.alpha)
    text = (
        f"Summary: {stat.description}\n"
        f"observed: {res.t_obs:.6g}\n"
        f"simulated {level:g}% interval: ({res.ci[0]:.6g}, {res.ci[1]:.6g}); mean {res.simulated_mean:.6g}\n"
        f"impact: {res.impact_point:.6g}, {level:g}% interval ({res.impact_ci[0]:.6g}, {res.impact_ci[1]:.6g})\n"
        f"p-value (min(q, 1-q)): {res.p_value:.4g}; {'reject' if res.reject else 'do not reject'} at alpha={cfg.alpha}\n"
    )
    _write_summary(out, text)
    return text


def cmd_adjust(cfg: AnalysisConfig) -> str:
    cfg.require("input", "t0")
    grouped = load_grouped_csv(cfg.input, cfg.kind)
    first = cfg.window_first if cfg.window_first is not None else cfg.t0 + 1
    last = cfg.window_last if cfg.window_last is not None else int(grouped.times[-1])
    target = compute_target_mix(grouped, first, last)
    adjusted = adjust_series(grouped, target)
    raw = grouped.raw_outcome()
    out = _out_dir(cfg)
    with (out / "adjusted.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["t"] + (["M"] if grouped.months is not None else []) + ["raw", "adjusted"]
        w.writerow(header)
        for i, t in enumerate(grouped.times):
            row = [str(int(t))]
            if grouped.months is not None:
                row.append(str(int(grouped.months[i])))
            w.writerow(row + [_fmt(raw[i]), _fmt(adjusted[i])])
    mix = ", ".join(f"{g}={p:.4f}" for g, p in target.pi_star.items())
    text = (
        f"Post-stratified {grouped.outcome_kind} outcome to the case mix of months {first}..{last}\n"
        f"target mix: {mix}\n"
        f"wrote {len(adjusted)} months to adjusted.csv (analyse with --outcome adjusted)\n"
    )
    _write_summary(out, text)
    return text


def _scenario(cfg: AnalysisConfig) -> PowerScenario:
    gen = SyntheticSpec(
        beta0=cfg.beta0, beta1=cfg.beta1, rho=cfg.rho, sigma=cfg.sigma,
        n_pre=cfg.n_pre, n_post=cfg.n_post,
    )
    return PowerScenario(
        generator=gen, effect=cfg.effect, R_inner=cfg.R_inner, n_outer=cfg.n_outer,
        alpha=cfg.alpha, seed=cfg.seed, model=cfg.model_spec(),
    )


def cmd_power(cfg: AnalysisConfig) -> str:
    sc = _scenario(cfg)
    res = estimate_power(sc, threads=cfg.threads)
    mdes = estimate_mdes(sc, cfg.target_power, threads=cfg.threads) if cfg.target_power is not None else None
    out = _out_dir(cfg)
    with (out / "power.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["effect", "rejection_rate", "mean_interval_width", "n_outer", "n_failed", "target_power", "mdes"])
        w.writerow([
            _fmt(res.effect), _fmt(res.rejection_rate), _fmt(res.mean_interval_width), res.n_outer, res.n_failed,
            "" if cfg.target_power is None else _fmt(cfg.target_power), "" if mdes is None else _fmt(mdes),
        ])
    with (out / "interval_widths.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["horizon", "mean_width"])
        for h, v in enumerate(res.width_by_horizon, start=1):
            w.writerow([h, _fmt(v)])
    plot_widths(res.width_by_horizon, out / "interval_widths.svg", title="Envelope width by horizon")
    text = (
        f"Power for a constant shift of {cfg.effect:g} ({sc.n_outer} datasets x {sc.R_inner} trajectories)\n"
        f"rejection rate at alpha={cfg.alpha}: {res.rejection_rate:.4f} ({res.n_failed} failed fits)\n"
        f"mean envelope width: {res.mean_interval_width:.6g}\n"
    )
    if mdes is not None:
        text += f"MDES at power {cfg.target_power:g}: {mdes:.6g}\n"
    _write_summary(out, text)
    return text


COMMANDS = {
    "fit": (cmd_fit, "fit the lagged-outcome model to pre-policy months"),
    "envelope": (cmd_envelope, "simulate counterfactual trajectories; write envelope CSV and SVG"),
    "test": (cmd_test, "test a post-policy summary statistic against the simulations"),
    "adjust": (cmd_adjust, "post-stratify grouped monthly data to a fixed case mix"),
    "power": (cmd_power, "estimate power (and optionally MDES) by nested simulation"),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI-style configuration file")
    p.add_argument("--input")
    p.add_argument("--outcome")
    p.add_argument("--t0", type=int)
    p.add_argument("--model", help="comma-separated terms, e.g. intercept,trend,quarters,Temp")
    p.add_argument("--lag", choices=LAG_CHOICES, help="lag the outcome only, or outcome and covariates")
    p.add_argument("--pivot-tol", dest="pivot_tol", type=float, help="relative pivot below which a column is dropped")
    p.add_argument("--R", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--smooth", action="store_const", const=True, default=None)
    p.add_argument("--span", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--fit-range", dest="fit_range", choices=("post_only", "all", "pre_only"))
    p.add_argument("--season-model", dest="season_model")
    p.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "test":
            p.add_argument("--first", type=int)
            p.add_argument("--last", type=int)
            p.add_argument("--at", type=int, help="test the smoothed value at this month instead")
        if name == "adjust":
            p.add_argument("--kind", choices=("mean_or_proportion", "count"))
            p.add_argument("--window-first", dest="window_first", type=int)
            p.add_argument("--window-last", dest="window_last", type=int)
        if name == "power":
            for key, typ in (
                ("beta0", float), ("beta1", float), ("rho", float), ("sigma", float),
                ("n-pre", int), ("n-post", int), ("effect", float), ("R-inner", int),
                ("n-outer", int), ("target-power", float),
            ):
                p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=typ)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, overrides)
        func = COMMANDS[args.command][0]
        sys.stdout.write(func(cfg))
    except InputError as exc:
        print(f"itsim {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"itsim {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ItsError as exc:
        print(f"itsim {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
