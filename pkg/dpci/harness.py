"""
Replicated pricing experiments.

Each trial simulates one episode, fits the pilot sequence, whitens, debiases
and records whether the debiased and Wald intervals cover the true demand.
Trials use independent random streams keyed by (base_seed, trial_index) so
reports do not depend on the worker schedule.
"""

import json
import logging
import multiprocessing
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .demand_model import ModelSpec, mean_demand, default_logistic_spec
from .estimator import pilot_sequence
from .inference import (
    COVER_SLACK,
    debias,
    normalized_errors,
    pointwise_ci,
    uniform_grid,
    uniform_halfwidths,
    wald_ci,
    wald_fit,
)
from .pricing_env import ContextProcess, Policy, run_episode
from .utils import (
    SCHEMA_VERSION,
    convert_queries,
    dumps_json,
    query_label,
    trial_seed,
    write_csv,
    write_json,
)
from .whitening import BUDGETS, default_eta, whiten, whitening_diagnostics

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ExperimentConfig",
    "TrialRecord",
    "CoverageReport",
    "ErrorTable",
    "ScalingTable",
    "load_config",
    "bundled_configs",
    "run_trial",
    "coverage_experiment",
    "error_distribution_experiment",
    "scaling_experiment",
    "clopper_pearson",
]

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"

# alternative names accepted by load_config
CONFIG_ALIASES = {"paper_logistic": "logistic_walk"}


class ConfigError(ValueError):
    """Raised for missing or invalid experiment configurations."""


class ExperimentError(RuntimeError):
    """Raised when too many trials of an experiment fail."""


@dataclass
class ExperimentConfig:
    """
    Replicated-experiment settings.

    Parameters
    ----------
    name : string, default='custom'
    model : ModelSpec
        True demand model, the logistic model with theta0 = (-1, 1) by default.
    policy : Policy
    context : ContextProcess
        Template of the context process; every trial uses a fresh copy.
    T : int, default=2000
        Selling periods per trial.
    n_trials : int, default=1000
    alphas : tuple of float, default=(0.3, 0.2, 0.1, 0.05)
        Miscoverage levels.
    queries : list of (p, x), default=[(0.5, 0), (0.5, 1), (1, 1)]
        Points for point-wise intervals.
    price_points, context_points : int, default=51, 101
        Resolution of the uniform-band grid.
    context_bound : float, default=1.0
        The grid covers contexts in [-context_bound, context_bound]^k.
    M : int, default=2000
        Monte-Carlo draws for uniform bands.
    upsilon : float, default=0.6
        Norm budget exponent, eta = T^(-upsilon).
    base_seed : int, default=0
    workers : int, default=1
        Use multiprocessing for >1 worker. -1 uses all available cores.
    uniform : bool, default=True
        Compute uniform bands.
    wald : bool, default=True
        Compute the Wald baseline.
    pilot_ridge : float, optional
        Ridge penalty of the pilot fits before the last period.
    pilot_refit_every : int, default=1
    pilot_min_curvature : float, default=0.0
        Curvature gate of the pilot fits, see ``pilot_sequence``.
    whitening_budget : string, default='absolute'
        Column budget rule of the whitening matrix, 'absolute' or 'relative'.
    max_failure_rate : float, default=0.1
        Fraction of failed trials above which an experiment aborts.
    """

    name: str = "custom"
    model: ModelSpec = field(default_factory=default_logistic_spec)
    policy: Policy = field(default_factory=Policy)
    context: ContextProcess = field(default_factory=ContextProcess)
    T: int = 2000
    n_trials: int = 1000
    alphas: Tuple[float, ...] = (0.3, 0.2, 0.1, 0.05)
    queries: List = field(
        default_factory=lambda: [(0.5, (0.0,)), (0.5, (1.0,)), (1.0, (1.0,))]
    )
    price_points: int = 51
    context_points: int = 101
    context_bound: float = 1.0
    M: int = 2000
    upsilon: float = 0.6
    base_seed: int = 0
    workers: int = 1
    uniform: bool = True
    wald: bool = True
    pilot_ridge: Optional[float] = None
    pilot_refit_every: int = 1
    pilot_min_curvature: float = 0.0
    whitening_budget: str = "absolute"
    max_failure_rate: float = 0.1

    def __post_init__(self):
        self.alphas = tuple(float(a) for a in self.alphas)
        try:
            self.queries = convert_queries(self.queries)
        except (TypeError, ValueError) as err:
            raise ConfigError("Queries must be (p, x) pairs: {}".format(err))
        self.validate()

    def validate(self):
        if self.T < 1:
            raise ConfigError("T must be at least 1. Given {}.".format(self.T))
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1. Given {}.".format(self.n_trials))
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative. Given {}.".format(self.base_seed))
        if not self.alphas or not all(0 < a < 1 for a in self.alphas):
            raise ConfigError("alphas must be non-empty and lie in (0, 1).")
        if not 0.5 < self.upsilon < 1:
            raise ConfigError("upsilon must lie in (1/2, 1). Given {}.".format(self.upsilon))
        if self.uniform and self.M < 100:
            raise ConfigError("Uniform bands need M >= 100. Given {}.".format(self.M))
        if self.price_points < 1 or self.context_points < 1:
            raise ConfigError("Grid resolutions must be positive.")
        if not (self.workers == -1 or self.workers >= 1):
            raise ConfigError("workers must be -1 or a positive integer.")
        if self.pilot_min_curvature < 0:
            raise ConfigError(
                "pilot_min_curvature must be non-negative. Given {}.".format(self.pilot_min_curvature)
            )
        if self.whitening_budget not in BUDGETS:
            raise ConfigError(
                "whitening_budget must be one of {}. Given {!r}.".format(
                    ", ".join(BUDGETS), self.whitening_budget
                )
            )
        if self.context.dim != self.model.context_dim:
            raise ConfigError(
                "Context process has dimension {} but the model expects {}.".format(
                    self.context.dim, self.model.context_dim
                )
            )
        for p, x in self.queries:
            if len(x) != self.model.context_dim:
                raise ConfigError(
                    "Query context {} does not match context dimension {}.".format(
                        x, self.model.context_dim
                    )
                )
        return self

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with some settings replaced; ``None`` values are ignored."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        try:
            return replace(self, **overrides)
        except TypeError as err:
            raise ConfigError(str(err))

    def to_dict(self, runtime: bool = True) -> dict:
        """Plain dict; ``runtime=False`` leaves out settings that do not affect results."""
        out = {
            "name": self.name,
            "model": self.model.to_dict(),
            "policy": self.policy.to_dict(),
            "context": self.context.to_dict(),
            "T": self.T,
            "n_trials": self.n_trials,
            "alphas": list(self.alphas),
            "queries": [[p, list(x)] for p, x in self.queries],
            "price_points": self.price_points,
            "context_points": self.context_points,
            "context_bound": self.context_bound,
            "M": self.M,
            "upsilon": self.upsilon,
            "base_seed": self.base_seed,
            "uniform": self.uniform,
            "wald": self.wald,
            "pilot_ridge": self.pilot_ridge,
            "pilot_refit_every": self.pilot_refit_every,
            "pilot_min_curvature": self.pilot_min_curvature,
            "whitening_budget": self.whitening_budget,
            "max_failure_rate": self.max_failure_rate,
        }
        if runtime:
            out["workers"] = self.workers
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError("Unknown config keys: {}.".format(", ".join(sorted(unknown))))
        try:
            if "model" in data:
                data["model"] = ModelSpec.from_dict(data["model"])
            if "policy" in data:
                data["policy"] = Policy(**data["policy"])
            if "context" in data:
                data["context"] = ContextProcess(**data["context"])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError("Invalid experiment config: {}".format(err))


def bundled_configs() -> List[str]:
    """Names of the configs shipped with the package."""
    return sorted(p.stem for p in CONFIG_DIR.glob("*.json"))


def load_config(path_or_name) -> ExperimentConfig:
    """
    Load a JSON config from a path or by bundled name (e.g. 'logistic_walk').

    Names in ``CONFIG_ALIASES`` resolve to their bundled config, whose
    ``name`` field is kept.
    """
    path = Path(path_or_name)
    if not path.is_file():
        name = CONFIG_ALIASES.get(str(path_or_name), path_or_name)
        bundled = CONFIG_DIR / "{}.json".format(name)
        if not bundled.is_file():
            raise ConfigError(
                "Config {} not found. Bundled configs: {}.".format(
                    path_or_name, ", ".join(bundled_configs())
                )
            )
        path = bundled
    try:
        data = json.loads(path.read_text())
    except ValueError as err:
        raise ConfigError("Config {} is not valid JSON: {}".format(path, err))
    if not isinstance(data, dict):
        raise ConfigError("Config {} must hold a JSON object.".format(path))
    return ExperimentConfig.from_dict(data)


@dataclass
class TrialRecord:
    """
    Outcome of one trial.

    ``cells`` holds one entry per (method, target, alpha) with the coverage
    indicator and the interval width; ``errors`` one entry per method with
    the standardized estimation and prediction errors.
    """

    trial_index: int
    failed: bool = False
    error: Optional[str] = None
    cells: List[dict] = field(default_factory=list)
    errors: List[dict] = field(default_factory=list)
    diagnostics: Dict[str, float] = field(default_factory=dict)
    pilot_error: float = np.nan
    policy_fallbacks: int = 0
    pilot_fallbacks: int = 0
    pilot_gated: int = 0


def _cell(method, target, alpha, hit, width):
    return {
        "method": method,
        "target": target,
        "alpha": alpha,
        "hit": bool(hit),
        "width": float(width),
    }


def _uniform_cells(method, estimate, spec, config, grid, truth, rng):
    halfwidths = uniform_halfwidths(estimate, config.alphas, config.M, grid, rng)
    sup_error = float(np.max(np.abs(estimate.predict(*grid) - truth)))
    return [
        _cell(method, "uniform", a, sup_error <= halfwidths[a] + COVER_SLACK, 2.0 * halfwidths[a])
        for a in config.alphas
    ]


def _error_row(method, errors, labels):
    row = {"method": method}
    for i, value in enumerate(errors.estimation):
        row["eps{}".format(i + 1)] = float(value)
    for label, value in zip(labels, errors.prediction):
        row["pred[{}]".format(label)] = float(value)
    return row


def _pilots_and_whitening(config, history, T):
    pilots = pilot_sequence(
        history,
        config.model,
        lam=config.pilot_ridge,
        refit_every=config.pilot_refit_every,
        min_curvature=config.pilot_min_curvature,
    )
    eta = default_eta(T, config.upsilon)
    w = whiten(history, pilots, config.model, eta, budget=config.whitening_budget)
    return pilots, w


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialRecord:
    """
    One replication: episode, pilots, whitening, debiasing, intervals.

    Estimator and factorization failures mark the trial as failed instead
    of raising.

    Parameters
    ----------
    config : ExperimentConfig
    trial_index : int
        Together with ``config.base_seed`` fixes every random draw.

    Returns
    -------
    record : TrialRecord
    """
    spec, theta0 = config.model, config.model.theta0
    episode_seed, debiased_seed, wald_seed = trial_seed(config.base_seed, trial_index).spawn(3)
    labels = [query_label(q) for q in config.queries]
    record = TrialRecord(trial_index)

    try:
        proc = ContextProcess(**config.context.to_dict())
        history = run_episode(spec, config.policy, proc, config.T, episode_seed)
        pilots, w = _pilots_and_whitening(config, history, config.T)
        estimate = debias(pilots.final, w, history, spec)
        diagnostics = whitening_diagnostics(w, history, pilots.final, spec, theta0)

        truth_at = [float(mean_demand(spec, theta0, p, x)) for p, x in config.queries]
        for (p, x), label, truth in zip(config.queries, labels, truth_at):
            for a in config.alphas:
                band = pointwise_ci(estimate, p, x, a)
                record.cells.append(_cell("debiased", label, a, band.contains(truth), band.width))
        record.errors.append(
            _error_row("debiased", normalized_errors(estimate, theta0, None, config.queries), labels)
        )

        if config.uniform:
            grid = uniform_grid(
                spec, config.price_points, config.context_points, config.context_bound
            )
            truth_grid = mean_demand(spec, theta0, *grid)
            record.cells += _uniform_cells(
                "debiased", estimate, spec, config, grid, truth_grid,
                np.random.default_rng(debiased_seed),
            )

        if config.wald:
            fit = wald_fit(history, spec)
            for (p, x), label, truth in zip(config.queries, labels, truth_at):
                for a in config.alphas:
                    band = wald_ci(history, spec, p, x, a, fit=fit)
                    record.cells.append(_cell("wald", label, a, band.contains(truth), band.width))
            record.errors.append(
                _error_row("wald", normalized_errors(fit, theta0, None, config.queries), labels)
            )
            if config.uniform:
                record.cells += _uniform_cells(
                    "wald", fit, spec, config, grid, truth_grid,
                    np.random.default_rng(wald_seed),
                )
    except (np.linalg.LinAlgError, ValueError) as err:
        logger.warning("Trial %d failed: %s", trial_index, err)
        return TrialRecord(trial_index, failed=True, error="{}: {}".format(type(err).__name__, err))

    record.diagnostics = diagnostics.to_dict()
    record.pilot_error = float(np.linalg.norm(pilots.final - theta0))
    record.policy_fallbacks = history.fallback_count
    record.pilot_fallbacks = pilots.fallback_count
    record.pilot_gated = pilots.gated_count
    logger.debug("Trial %d done.", trial_index)
    return record


def _map_trials(func, args_list, workers):
    """Run func(*args) for every args tuple, in order."""
    if workers == -1 or workers > 1:
        pool = multiprocessing.Pool(None if workers == -1 else workers)
        results = []

        for args in args_list:
            results.append(pool.apply_async(func, args))

        outputs = [result.get() for result in results]

        pool.close()
        pool.join()
    else:
        outputs = [func(*args) for args in args_list]
    return outputs


def _run_all(config, workers):
    workers = config.workers if workers is None else workers
    records = _map_trials(run_trial, [(config, i) for i in range(config.n_trials)], workers)
    records.sort(key=lambda r: r.trial_index)
    failed = [r for r in records if r.failed]
    if len(failed) > config.max_failure_rate * config.n_trials:
        raise ExperimentError(
            "{} of {} trials failed; first failure: {}".format(
                len(failed), config.n_trials, failed[0].error
            )
        )
    if failed:
        logger.warning("%d of %d trials failed and are excluded.", len(failed), config.n_trials)
    return records


def clopper_pearson(hits: int, trials: int, level: float = 0.95) -> Tuple[float, float]:
    """Exact binomial confidence interval for a coverage rate."""
    if trials == 0:
        return np.nan, np.nan
    tail = (1.0 - level) / 2.0
    lower = stats.beta.ppf(tail, hits, trials - hits + 1) if hits > 0 else 0.0
    upper = stats.beta.ppf(1.0 - tail, hits + 1, trials - hits) if hits < trials else 1.0
    return float(lower), float(upper)


def _metadata(config):
    return {"schema_version": SCHEMA_VERSION, "config": config.to_dict(runtime=False)}


@dataclass(eq=False)
class CoverageReport:
    """
    Aggregated coverage over the trials of an experiment.

    ``cells`` has one row per (method, target, alpha) with hits, misses,
    failures, trials, coverage rate, its exact binomial 95% interval and
    half-width, and the mean interval width.
    """

    config: ExperimentConfig
    cells: pd.DataFrame
    trials: pd.DataFrame
    diagnostics: Dict[str, float]
    failures: List[Tuple[int, str]]
    policy_fallbacks: int
    pilot_fallbacks: int
    pilot_gated: int = 0

    def coverage(self, method: str, target: str, alpha: float) -> float:
        row = self.cells[
            (self.cells.method == method)
            & (self.cells.target == target)
            & np.isclose(self.cells.alpha, alpha)
        ]
        if row.empty:
            raise KeyError((method, target, alpha))
        return float(row.coverage.iloc[0])

    def to_dict(self) -> dict:
        return {
            "metadata": _metadata(self.config),
            "cells": self.cells.to_dict(orient="records"),
            "diagnostics": self.diagnostics,
            "n_trials": self.config.n_trials,
            "n_failed": len(self.failures),
            "failures": [{"trial": i, "error": e} for i, e in self.failures],
            "policy_fallbacks": self.policy_fallbacks,
            "pilot_fallbacks": self.pilot_fallbacks,
            "pilot_gated": self.pilot_gated,
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def write(self, out_dir) -> Dict[str, Path]:
        """Write report.json, coverage.csv and trials.csv into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": out_dir / "report.json",
            "coverage": out_dir / "coverage.csv",
            "trials": out_dir / "trials.csv",
        }
        paths["report"].write_text(self.to_json())
        write_csv(self.cells, paths["coverage"], _metadata(self.config))
        write_csv(self.trials, paths["trials"], _metadata(self.config))
        return paths


def _aggregate_cells(config, records):
    rows = [dict(cell, trial=r.trial_index) for r in records if not r.failed for cell in r.cells]
    columns = ["trial", "method", "target", "alpha", "hit", "width"]
    trials = pd.DataFrame(rows, columns=columns)
    n_failed = sum(r.failed for r in records)

    cells = []
    for (method, target, alpha), group in trials.groupby(
        ["method", "target", "alpha"], sort=True
    ):
        hits, n = int(group.hit.sum()), len(group)
        lower, upper = clopper_pearson(hits, n)
        cells.append(
            {
                "method": method,
                "target": target,
                "alpha": float(alpha),
                "nominal": 1.0 - float(alpha),
                "hits": hits,
                "misses": n - hits,
                "failures": n_failed,
                "trials": n,
                "coverage": hits / n,
                "ci_lower": lower,
                "ci_upper": upper,
                "ci_half_width": 0.5 * (upper - lower),
                "mean_width": float(group.width.mean()),
            }
        )
    return pd.DataFrame(cells), trials


def _summarize_diagnostics(records):
    frame = pd.DataFrame([r.diagnostics for r in records if not r.failed])
    if frame.empty:
        return {}
    frame["pilot_error"] = [r.pilot_error for r in records if not r.failed]
    summary = {}
    for column in frame.columns:
        values = frame[column].astype(float).replace([np.inf, -np.inf], np.nan)
        summary[column] = {
            "median": float(values.median()),
            "mean": float(values.mean()),
            "max": float(values.max()),
        }
    return summary


def coverage_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> CoverageReport:
    """
    Coverage rates of debiased and Wald intervals over ``config.n_trials`` trials.

    Parameters
    ----------
    config : ExperimentConfig
    workers : int, optional
        Overrides ``config.workers``. Results do not depend on it.

    Raises
    ------
    ExperimentError
        If more than ``config.max_failure_rate`` of the trials fail.
    """
    records = _run_all(config, workers)
    cells, trials = _aggregate_cells(config, records)
    return CoverageReport(
        config=config,
        cells=cells,
        trials=trials,
        diagnostics=_summarize_diagnostics(records),
        failures=[(r.trial_index, r.error) for r in records if r.failed],
        policy_fallbacks=int(sum(r.policy_fallbacks for r in records)),
        pilot_fallbacks=int(sum(r.pilot_fallbacks for r in records)),
        pilot_gated=int(sum(r.pilot_gated for r in records)),
    )


@dataclass(eq=False)
class ErrorTable:
    """Per-trial standardized errors with a moment and KS summary per column."""

    config: ExperimentConfig
    frame: pd.DataFrame
    summary: dict

    @property
    def error_columns(self) -> List[str]:
        return [c for c in self.frame.columns if c not in ("trial", "method")]

    def values(self, method: str, column: str) -> np.ndarray:
        return self.frame.loc[self.frame.method == method, column].to_numpy(dtype=float)

    def to_dict(self) -> dict:
        return {"metadata": _metadata(self.config), "summary": self.summary}

    def write(self, out_dir) -> Dict[str, Path]:
        """Write errors.csv and errors_summary.json into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"errors": out_dir / "errors.csv", "summary": out_dir / "errors_summary.json"}
        write_csv(self.frame, paths["errors"], _metadata(self.config))
        write_json(self.to_dict(), paths["summary"])
        return paths


def _moment_summary(values):
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {"n": 0, "mean": np.nan, "var": np.nan, "ks_stat": np.nan, "ks_pvalue": np.nan}
    ks = stats.kstest(values, "norm") if values.size > 1 else None
    return {
        "n": int(values.size),
        "mean": float(values.mean()),
        "var": float(values.var(ddof=1)) if values.size > 1 else np.nan,
        "ks_stat": float(ks.statistic) if ks else np.nan,
        "ks_pvalue": float(ks.pvalue) if ks else np.nan,
    }


def error_distribution_experiment(
    config: ExperimentConfig, workers: Optional[int] = None
) -> ErrorTable:
    """
    Standardized estimation and prediction errors of both methods.

    Uniform bands are not needed here and are skipped. The summary gives
    the mean, variance and Kolmogorov-Smirnov statistic against N(0, 1)
    for every (method, error column).
    """
    records = _run_all(replace(config, uniform=False), workers)
    rows = [dict(row, trial=r.trial_index) for r in records if not r.failed for row in r.errors]
    frame = pd.DataFrame(rows)
    leading = ["trial", "method"]
    frame = frame[leading + [c for c in frame.columns if c not in leading]]

    summary = {}
    for method, group in frame.groupby("method", sort=True):
        summary[method] = {
            column: _moment_summary(group[column].to_numpy(dtype=float))
            for column in frame.columns
            if column not in leading
        }
    return ErrorTable(config, frame, summary)


@dataclass(eq=False)
class ScalingTable:
    """Pilot error and whitening diagnostics per (horizon, trial)."""

    config: ExperimentConfig
    frame: pd.DataFrame

    def summary(self) -> pd.DataFrame:
        """Medians per horizon."""
        return self.frame.groupby("T", sort=True).median(numeric_only=True).drop(columns="trial")

    def to_dict(self) -> dict:
        medians = self.summary()
        return {
            "metadata": _metadata(self.config),
            "medians": {int(T): row.to_dict() for T, row in medians.iterrows()},
        }

    def write(self, out_dir) -> Dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"scaling": out_dir / "scaling.csv", "summary": out_dir / "scaling_summary.json"}
        write_csv(self.frame, paths["scaling"], _metadata(self.config))
        write_json(self.to_dict(), paths["summary"])
        return paths


def _scaling_trial(config, T, trial_index):
    spec = config.model
    seed = trial_seed(config.base_seed, trial_index, T)
    try:
        proc = ContextProcess(**config.context.to_dict())
        history = run_episode(spec, config.policy, proc, T, seed)
        pilots, w = _pilots_and_whitening(config, history, T)
        diagnostics = whitening_diagnostics(w, history, pilots.final, spec, spec.theta0)
    except (np.linalg.LinAlgError, ValueError) as err:
        logger.warning("Scaling trial %d at T=%d failed: %s", trial_index, T, err)
        return None
    row = {"T": T, "trial": trial_index}
    row.update(diagnostics.to_dict())
    row["pilot_error"] = float(np.linalg.norm(pilots.final - spec.theta0))
    row["iwg_scaled"] = diagnostics.iwg_opnorm / (w.eta * np.sqrt(T))
    return row


def scaling_experiment(
    config: ExperimentConfig,
    horizons: Sequence[int],
    n_trials: Optional[int] = None,
    workers: Optional[int] = None,
) -> ScalingTable:
    """
    Pilot error and ||I - WG||_op / (eta sqrt(T)) across horizons.

    Parameters
    ----------
    config : ExperimentConfig
    horizons : sequence of int
    n_trials : int, optional
        Trials per horizon, ``config.n_trials`` by default.
    """
    if not horizons or min(horizons) < 1:
        raise ConfigError("Horizons must be positive integers.")
    n_trials = config.n_trials if n_trials is None else n_trials
    workers = config.workers if workers is None else workers
    args = [(config, int(T), i) for T in horizons for i in range(n_trials)]
    rows = [row for row in _map_trials(_scaling_trial, args, workers) if row is not None]
    failed = len(args) - len(rows)
    if failed > config.max_failure_rate * len(args):
        raise ExperimentError("{} of {} scaling trials failed.".format(failed, len(args)))
    frame = pd.DataFrame(rows).sort_values(["T", "trial"]).reset_index(drop=True)
    return ScalingTable(config, frame)
