"""Monte Carlo studies: replicate runner, metrics, rate curves, file emission.

Each replicate draws its own (observational, IV) dataset pair from streams
derived from ``(seed, replicate_index)``, fits the requested estimators, and
scores them against the closed-form effect on a fixed evaluation grid.
Replicates are independent, so they may run in a process pool; aggregation
always happens in replicate-index order, which makes parallel and serial
executions byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import RngStream
from .dgp import DgpSpec, gen_iv, gen_obs, highdim_dgp, oracle, scalar_dgp
from .errors import StudyError
from .estimators import (
    fit_iv_ratio_cate,
    fit_parametric_bias,
    fit_representation_bias,
    fit_tau_obs_tlearner,
)
from .features import FeatureMap
from .forest import ForestParams
from .linear import NoPenalty, Penalty
from .nnet import NetConfig

__all__ = [
    "ESTIMATOR_NAMES",
    "StudyConfig",
    "ReplicateReport",
    "MetricTable",
    "RateTable",
    "run_study",
    "run_rate_study",
    "emit_results",
    "emit_rate_results",
]

ESTIMATOR_NAMES = ("tau_obs", "tau_iv", "tau_param", "tau_shared")
FAIL_FRACTION_ABORT = 0.2
FLOAT_FMT = "%.17g"

# Simulated-data defaults: shallow, strongly regularized compliance forests
# and deeper outcome forests. The high-dimensional DGP needs considerably
# more outcome-forest capacity (deep trees, per-split feature subsampling)
# to track its 5+-dimensional outcome surface.
DEFAULT_COMPLIANCE_FOREST = ForestParams(n_trees=100, max_depth=3, min_samples_leaf=50)
DEFAULT_OUTCOME_FOREST = ForestParams(n_trees=100, max_depth=5, min_samples_leaf=5)
HIGHDIM_OUTCOME_FOREST = ForestParams(n_trees=100, max_depth=60, min_samples_leaf=1,
                                      max_features=3)


@dataclass(frozen=True)
class StudyConfig:
    """Everything needed to reproduce one Monte Carlo study."""

    dgp: str = "scalar"           # "scalar" | "highdim"
    dim: int = 1
    n_obs: int = 2000
    n_iv: int = 2000
    replicates: int = 20
    folds: int = 2
    seed: int = 0
    estimators: tuple = ("tau_obs", "tau_iv", "tau_param")
    outcome_forest: Optional[ForestParams] = None  # None = per-DGP default
    compliance_forest: ForestParams = DEFAULT_COMPLIANCE_FOREST
    net: NetConfig = NetConfig()
    pi_known: Optional[float] = 0.5  # None = estimate the instrument propensity
    clip: float = 0.1
    penalty: Penalty = NoPenalty()
    grid_lo: float = -2.5
    grid_hi: float = 2.5
    grid_points: int = 200
    highdim_grid_points: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.dgp not in ("scalar", "highdim"):
            raise ValueError(f"dgp must be 'scalar' or 'highdim', got {self.dgp!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.grid_points < 1 or self.highdim_grid_points < 1:
            raise ValueError("evaluation grid must be nonempty")
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}; "
                             f"choose from {ESTIMATOR_NAMES}")
        if not self.estimators:
            raise ValueError("estimator set must be nonempty")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ReplicateReport:
    """Per-replicate grid predictions and MSEs against the oracle effect."""

    index: int
    mse: dict
    predictions: dict
    seconds: float


@dataclass(frozen=True)
class MetricTable:
    """Aggregated study results: MSE summary plus pointwise curves."""

    estimators: tuple
    mean_mse: dict
    sd_mse: dict
    grid_x: np.ndarray
    curve_mean: dict
    curve_stderr: dict
    oracle_tau: np.ndarray
    n_replicates: int
    n_failed: int
    masked: Optional[np.ndarray] = None
    config: Optional[dict] = None


def study_spec(cfg: StudyConfig) -> DgpSpec:
    """The study-level DGP spec; high-dim coefficients are drawn once per seed."""
    if cfg.dgp == "scalar":
        return scalar_dgp()
    return highdim_dgp(cfg.dim, RngStream(cfg.seed).child("dgp-coefs"))


def outcome_forest_for(cfg: StudyConfig) -> ForestParams:
    """The configured outcome forest, or the per-DGP default."""
    if cfg.outcome_forest is not None:
        return cfg.outcome_forest
    return DEFAULT_OUTCOME_FOREST if cfg.dgp == "scalar" else HIGHDIM_OUTCOME_FOREST


def study_grid(cfg: StudyConfig, spec: DgpSpec) -> np.ndarray:
    """Fixed evaluation grid: even spacing for the scalar DGP, fixed normal
    draws (shared by every replicate) for the high-dimensional one."""
    if spec.kind == "scalar":
        return np.linspace(cfg.grid_lo, cfg.grid_hi, cfg.grid_points)[:, None]
    rng = RngStream(cfg.seed).child("grid").generator()
    return rng.standard_normal((cfg.highdim_grid_points, spec.dim))


def _fit_replicate(cfg: StudyConfig, spec: DgpSpec, grid: np.ndarray,
                   tau_true: np.ndarray, r: int) -> ReplicateReport:
    t0 = time.perf_counter()
    rep = RngStream(cfg.seed).child("rep", r)
    needs_obs = bool({"tau_obs", "tau_param", "tau_shared"} & set(cfg.estimators))
    o = gen_obs(spec, cfg.n_obs, rep.child("obs")) if needs_obs else None
    e = gen_iv(spec, cfg.n_iv, rep.child("iv"))

    pi_spec = cfg.pi_known if cfg.pi_known is not None else (
        cfg.compliance_forest.with_seed(rep.child("pi")))

    out_forest = outcome_forest_for(cfg)
    preds = {}
    tlearner = None
    if "tau_obs" in cfg.estimators or "tau_param" in cfg.estimators:
        tlearner = fit_tau_obs_tlearner(
            o, out_forest.with_seed(rep.child("tlearner")))
    if "tau_obs" in cfg.estimators:
        preds["tau_obs"] = tlearner(grid)
    if "tau_iv" in cfg.estimators:
        ratio = fit_iv_ratio_cate(
            e, out_forest.with_seed(rep.child("ivratio")), clip=cfg.clip)
        preds["tau_iv"] = ratio(grid)
    if "tau_param" in cfg.estimators:
        fitted = fit_parametric_bias(
            tlearner, e, FeatureMap.raw(spec.dim), k=cfg.folds,
            gamma=cfg.compliance_forest.with_seed(rep.child("gamma")),
            pi=pi_spec, penalty=cfg.penalty)
        preds["tau_param"] = fitted.cate.predict(grid)
    if "tau_shared" in cfg.estimators:
        shared = fit_representation_bias(
            o, e, k=cfg.folds,
            net_cfg=dataclasses.replace(cfg.net, seed=rep.child("net")),
            gamma=cfg.compliance_forest.with_seed(rep.child("shared-gamma")),
            pi=pi_spec, penalty=cfg.penalty)
        preds["tau_shared"] = shared.cate.predict(grid)

    mse = {name: float(np.mean((p - tau_true) ** 2)) for name, p in preds.items()}
    return ReplicateReport(index=r, mse=mse, predictions=preds,
                           seconds=time.perf_counter() - t0)


def _replicate_task(args):
    cfg, spec, grid, tau_true, r = args
    try:
        return _fit_replicate(cfg, spec, grid, tau_true, r)
    except Exception:  # collected by the caller; >20% failures abort the study
        return (r, traceback.format_exc())


def _aggregate(cfg: StudyConfig, grid: np.ndarray, tau_true: np.ndarray,
               results: list) -> MetricTable:
    reports = sorted((r for r in results if isinstance(r, ReplicateReport)),
                     key=lambda rep: rep.index)
    failures = sorted((r for r in results if not isinstance(r, ReplicateReport)),
                      key=lambda pair: pair[0])
    for idx, tb in failures:
        warnings.warn(f"replicate {idx} failed and was excluded:\n{tb}", RuntimeWarning)
    if len(failures) > FAIL_FRACTION_ABORT * cfg.replicates:
        raise StudyError(
            f"{len(failures)} of {cfg.replicates} replicates failed "
            f"(> {FAIL_FRACTION_ABORT:.0%}); aborting study"
        )

    mean_mse, sd_mse, curve_mean, curve_stderr = {}, {}, {}, {}
    n = len(reports)
    for name in cfg.estimators:
        mses = np.array([rep.mse[name] for rep in reports])
        stacked = np.vstack([rep.predictions[name] for rep in reports])
        mean_mse[name] = float(mses.mean())
        sd_mse[name] = float(mses.std(ddof=1)) if n > 1 else 0.0
        curve_mean[name] = stacked.mean(axis=0)
        if n > 1:
            curve_stderr[name] = stacked.std(axis=0, ddof=1) / np.sqrt(n)
        else:
            curve_stderr[name] = np.zeros(grid.shape[0])

    grid_x = grid[:, 0] if cfg.dgp == "scalar" else np.arange(grid.shape[0], dtype=float)
    return MetricTable(
        estimators=cfg.estimators, mean_mse=mean_mse, sd_mse=sd_mse,
        grid_x=grid_x, curve_mean=curve_mean, curve_stderr=curve_stderr,
        oracle_tau=tau_true, n_replicates=n, n_failed=len(failures),
        config=config_snapshot(cfg),
    )


def run_study(cfg: StudyConfig) -> MetricTable:
    """Run every replicate of a study and aggregate mean/SD MSEs and curves.

    Replicate failures are excluded with a warning; the study aborts with
    :class:`StudyError` if more than 20% fail.
    """
    spec = study_spec(cfg)
    grid = study_grid(cfg, spec)
    tau_true = oracle(spec).tau(grid)
    tasks = [(cfg, spec, grid, tau_true, r) for r in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_replicate_task, tasks))
    else:
        results = [_replicate_task(t) for t in tasks]
    return _aggregate(cfg, grid, tau_true, results)


# ---------------------------------------------------------------------------
# Coefficient-error rate study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateTable:
    """Median bias-coefficient error per IV sample size, plus log-log slopes."""

    n_list: tuple
    median_oracle: np.ndarray
    median_estimated: Optional[np.ndarray]
    slope_oracle: float
    slope_estimated: Optional[float]
    config: Optional[dict] = None


def _rate_replicate_task(args):
    cfg, spec, n, r, estimated = args
    try:
        rep = RngStream(cfg.seed).child("rate", n, r)
        e = gen_iv(spec, n, rep.child("iv"))
        truth = oracle(spec)
        phi = FeatureMap.raw(spec.dim)
        out = {}
        fitted = fit_parametric_bias(
            truth.tau_obs, e, phi, k=cfg.folds, gamma=truth.gamma,
            pi=cfg.pi_known if cfg.pi_known is not None else 0.5,
            penalty=cfg.penalty)
        out["oracle"] = float(np.linalg.norm(fitted.theta - truth.theta))
        if estimated:
            o = gen_obs(spec, n, rep.child("obs"))
            tlearner = fit_tau_obs_tlearner(
                o, outcome_forest_for(cfg).with_seed(rep.child("tlearner")))
            pi_spec = cfg.pi_known if cfg.pi_known is not None else (
                cfg.compliance_forest.with_seed(rep.child("pi")))
            fitted_hat = fit_parametric_bias(
                tlearner, e, phi, k=cfg.folds,
                gamma=cfg.compliance_forest.with_seed(rep.child("gamma")),
                pi=pi_spec, penalty=cfg.penalty)
            out["estimated"] = float(np.linalg.norm(fitted_hat.theta - truth.theta))
        return (n, r, out)
    except Exception:
        return (n, r, traceback.format_exc())


def _loglog_slope(n_list, medians) -> float:
    logs = np.log(np.asarray(n_list, dtype=float))
    vals = np.log(np.asarray(medians, dtype=float))
    design = np.column_stack([np.ones_like(logs), logs])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    return float(coef[1])


def run_rate_study(cfg: StudyConfig, n_list, with_estimated: bool = True) -> RateTable:
    """Median coefficient error across IV sample sizes.

    The oracle curve plugs the closed-form nuisances into the bias solve, so
    it isolates the finite-sample error of the weighted regression itself;
    the estimated curve uses the full pipeline. Requires a strictly
    increasing ``n_list`` of length >= 3.
    """
    n_list = tuple(int(n) for n in n_list)
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing with length >= 3")
    spec = study_spec(cfg)
    tasks = [(cfg, spec, n, r, with_estimated)
             for n in n_list for r in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_rate_replicate_task, tasks))
    else:
        results = [_rate_replicate_task(t) for t in tasks]

    by_n = {n: [] for n in n_list}
    failures = []
    for n, r, payload in results:
        if isinstance(payload, dict):
            by_n[n].append((r, payload))
        else:
            failures.append((n, r, payload))
    for n, r, tb in failures:
        warnings.warn(f"rate replicate (n={n}, r={r}) failed:\n{tb}", RuntimeWarning)
    if len(failures) > FAIL_FRACTION_ABORT * len(tasks):
        raise StudyError(f"{len(failures)} of {len(tasks)} rate replicates failed")

    med_oracle = np.array([
        np.median([p["oracle"] for _, p in sorted(by_n[n])]) for n in n_list
    ])
    med_est = None
    slope_est = None
    if with_estimated:
        med_est = np.array([
            np.median([p["estimated"] for _, p in sorted(by_n[n])]) for n in n_list
        ])
        slope_est = _loglog_slope(n_list, med_est)
    return RateTable(
        n_list=n_list, median_oracle=med_oracle, median_estimated=med_est,
        slope_oracle=_loglog_slope(n_list, med_oracle), slope_estimated=slope_est,
        config=config_snapshot(cfg),
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"_kind": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = _jsonable(getattr(obj, f.name))
        return out
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def config_snapshot(cfg) -> dict:
    """JSON-serializable snapshot of a study configuration."""
    return _jsonable(cfg)


def _fmt(v) -> str:
    return FLOAT_FMT % float(v)


def emit_results(table: MetricTable, out_dir: Union[str, Path]) -> list[Path]:
    """Write ``table.csv``, ``curves.csv``, and ``config.json``.

    ``table.csv`` header: estimator,mean_mse,sd_mse (one row per estimator).
    ``curves.csv`` header: x,estimator,mean,stderr,oracle,masked with one row
    per (estimator, grid point), estimator-major order. All floats use 17
    significant digits, so reruns with the same seed are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    table_path = out / "table.csv"
    with open(table_path, "w", newline="") as fh:
        fh.write("estimator,mean_mse,sd_mse\n")
        for name in table.estimators:
            fh.write(f"{name},{_fmt(table.mean_mse[name])},{_fmt(table.sd_mse[name])}\n")
    written.append(table_path)

    masked = table.masked if table.masked is not None else np.zeros(
        table.grid_x.shape[0], dtype=int)
    curves_path = out / "curves.csv"
    with open(curves_path, "w", newline="") as fh:
        fh.write("x,estimator,mean,stderr,oracle,masked\n")
        for name in table.estimators:
            mean = table.curve_mean[name]
            stderr = table.curve_stderr[name]
            for i in range(table.grid_x.shape[0]):
                fh.write(
                    f"{_fmt(table.grid_x[i])},{name},{_fmt(mean[i])},"
                    f"{_fmt(stderr[i])},{_fmt(table.oracle_tau[i])},{int(masked[i])}\n"
                )
    written.append(curves_path)

    config_path = out / "config.json"
    with open(config_path, "w") as fh:
        json.dump(table.config or {}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(config_path)
    return written


def emit_rate_results(table: RateTable, out_dir: Union[str, Path]) -> list[Path]:
    """Write ``rates.csv`` (+ ``rates_config.json``) for a rate study."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rates_path = out / "rates.csv"
    with open(rates_path, "w", newline="") as fh:
        if table.median_estimated is not None:
            fh.write("n,median_theta_err_oracle,median_theta_err_estimated\n")
            for n, mo, me in zip(table.n_list, table.median_oracle, table.median_estimated):
                fh.write(f"{n},{_fmt(mo)},{_fmt(me)}\n")
        else:
            fh.write("n,median_theta_err_oracle\n")
            for n, mo in zip(table.n_list, table.median_oracle):
                fh.write(f"{n},{_fmt(mo)}\n")
    config_path = out / "rates_config.json"
    with open(config_path, "w") as fh:
        json.dump(table.config or {}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [rates_path, config_path]
