"""Command-line entry point.

Subcommands:

* ``simulate``  -- Monte Carlo comparison of the estimators on a synthetic DGP
* ``rates``     -- bias-coefficient error versus IV sample size
* ``401k``      -- the survey pipeline (requires the external data file)
* ``dump-dgp``  -- write one generated dataset pair as CSV

Options may come from a JSON config file (``--config``); explicit flags
override file values, and unknown config keys are an error rather than a
silent typo. All randomness derives from the single ``--seed``. Exit codes:
0 success, 1 aborted study / runtime failure, 2 configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench, data401k
from .data import RngStream, write_dataset_csv
from .dgp import gen_iv, gen_obs, highdim_dgp, scalar_dgp
from .errors import IvcateError, LoadError, StudyError
from .nnet import NetConfig

__all__ = ["main"]

log = logging.getLogger("ivcate")

CONFIG_KEYS = {
    "dgp", "dim", "n_obs", "n_iv", "replicates", "folds", "seed", "estimators",
    "clip", "grid_lo", "grid_hi", "grid_points", "highdim_grid_points",
    "workers", "trees", "epochs", "hidden_width", "out_dir", "n_list",
    "oracle_only", "paper_scale", "l1_alpha", "data",
}

PAPER_SCALE = {"replicates": 100, "n_obs": 5000, "n_iv": 5000}


class CliError(Exception):
    """Configuration problem; maps to exit code 2."""


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _merged(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """Flag > config file > default."""
    flag_val = getattr(args, key, None)
    if flag_val is not None:
        return flag_val
    if key in file_cfg:
        return file_cfg[key]
    return default


def _estimator_tuple(value) -> tuple:
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    return tuple(value)


def _study_config(args: argparse.Namespace, file_cfg: dict) -> bench.StudyConfig:
    get = lambda key, default: _merged(args, file_cfg, key, default)
    n_default = 2000
    n_both = get("n", None)
    base = dict(
        dgp=get("dgp", "scalar"),
        dim=int(get("dim", 5 if get("dgp", "scalar") == "highdim" else 1)),
        n_obs=int(get("n_obs", n_both if n_both is not None else n_default)),
        n_iv=int(get("n_iv", n_both if n_both is not None else n_default)),
        replicates=int(get("replicates", 20)),
        folds=int(get("folds", 2)),
        seed=int(get("seed", 0)),
        estimators=_estimator_tuple(get("estimators", ("tau_obs", "tau_iv", "tau_param"))),
        clip=float(get("clip", 0.1)),
        grid_lo=float(get("grid_lo", -2.5)),
        grid_hi=float(get("grid_hi", 2.5)),
        grid_points=int(get("grid_points", 200)),
        highdim_grid_points=int(get("highdim_grid_points", 1000)),
        workers=int(get("workers", 1)),
    )
    if getattr(args, "paper_scale", False) or file_cfg.get("paper_scale"):
        base.update(PAPER_SCALE)
    trees = get("trees", None)
    if trees is not None:
        default_outcome = (bench.DEFAULT_OUTCOME_FOREST if base["dgp"] == "scalar"
                           else bench.HIGHDIM_OUTCOME_FOREST)
        base["outcome_forest"] = dataclasses.replace(default_outcome, n_trees=int(trees))
        base["compliance_forest"] = dataclasses.replace(
            bench.DEFAULT_COMPLIANCE_FOREST, n_trees=int(trees))
    net_kwargs = {}
    epochs = get("epochs", None)
    if epochs is not None:
        net_kwargs["epochs"] = int(epochs)
    hidden = get("hidden_width", None)
    if hidden is not None:
        net_kwargs["hidden_width"] = int(hidden)
    if net_kwargs:
        base["net"] = dataclasses.replace(NetConfig(), **net_kwargs)
    try:
        return bench.StudyConfig(**base)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _print_table(table: bench.MetricTable) -> None:
    print(f"replicates: {table.n_replicates} (failed: {table.n_failed})")
    print(f"{'estimator':<12} {'mean_mse':>14} {'sd_mse':>14}")
    for name in table.estimators:
        print(f"{name:<12} {table.mean_mse[name]:>14.6g} {table.sd_mse[name]:>14.6g}")


def _cmd_simulate(args: argparse.Namespace) -> int:
    file_cfg = _load_config(args.config)
    cfg = _study_config(args, file_cfg)
    out_dir = _merged(args, file_cfg, "out_dir", None)
    log.info("running study: dgp=%s replicates=%d n_obs=%d n_iv=%d",
             cfg.dgp, cfg.replicates, cfg.n_obs, cfg.n_iv)
    table = bench.run_study(cfg)
    _print_table(table)
    if out_dir is not None:
        paths = bench.emit_results(table, out_dir)
        for p in paths:
            log.info("wrote %s", p)
        print(f"results written to {out_dir}")
    return 0


def _cmd_rates(args: argparse.Namespace) -> int:
    file_cfg = _load_config(args.config)
    cfg = _study_config(args, file_cfg)
    n_list = _merged(args, file_cfg, "n_list", "500,2000,8000")
    if isinstance(n_list, str):
        n_list = [int(v) for v in n_list.split(",") if v.strip()]
    oracle_only = bool(getattr(args, "oracle_only", False) or file_cfg.get("oracle_only"))
    out_dir = _merged(args, file_cfg, "out_dir", None)
    try:
        table = bench.run_rate_study(cfg, n_list, with_estimated=not oracle_only)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    print(f"{'n':>8} {'median_err_oracle':>18}"
          + ("" if table.median_estimated is None else f" {'median_err_estimated':>21}"))
    for i, n in enumerate(table.n_list):
        line = f"{n:>8} {table.median_oracle[i]:>18.6g}"
        if table.median_estimated is not None:
            line += f" {table.median_estimated[i]:>21.6g}"
        print(line)
    print(f"log-log slope (oracle nuisances): {table.slope_oracle:.4f}")
    if table.slope_estimated is not None:
        print(f"log-log slope (estimated nuisances): {table.slope_estimated:.4f}")
    if out_dir is not None:
        bench.emit_rate_results(table, out_dir)
        print(f"results written to {out_dir}")
    return 0


def _cmd_401k(args: argparse.Namespace) -> int:
    file_cfg = _load_config(args.config)
    data_path = _merged(args, file_cfg, "data", None)
    if data_path is None:
        raise CliError("401k requires --data pointing at the survey file")
    if not Path(data_path).exists():
        raise CliError(f"data file not found: {data_path}")
    seed = int(_merged(args, file_cfg, "seed", 0))
    folds = int(_merged(args, file_cfg, "folds", 2))
    l1_alpha = float(_merged(args, file_cfg, "l1_alpha", data401k.DEFAULT_L1_ALPHA))
    clip = float(_merged(args, file_cfg, "clip", 0.1))
    out_dir = _merged(args, file_cfg, "out_dir", None)
    result = data401k.run_401k(data_path, seed=seed, folds=folds,
                               l1_alpha=l1_alpha, clip=clip)
    print(f"loaded {result.n_loaded} rows; {result.n_trimmed} after trimming")
    print(f"masked (no-compliance) fraction: {result.masked_fraction:.4f}")
    n_educ = result.educ.shape[0]
    for pi, label in enumerate(("single", "married")):
        rows = slice(pi * n_educ, (pi + 1) * n_educ)
        print(f"-- {label} (age/income/family size at medians, other binaries 0)")
        print(f"{'educ':>6} {'tau_obs':>12} {'tau_iv':>12} {'tau_param':>12} {'masked':>7}")
        for i in range(n_educ):
            print(
                f"{result.educ[i]:>6.0f} "
                f"{result.estimates['tau_obs'][rows][i]:>12.1f} "
                f"{result.estimates['tau_iv'][rows][i]:>12.1f} "
                f"{result.estimates['tau_param'][rows][i]:>12.1f} "
                f"{result.masked[rows][i]:>7d}"
            )
    if out_dir is not None:
        data401k.emit_401k_results(result, out_dir)
        print(f"results written to {out_dir}")
    return 0


def _cmd_dump_dgp(args: argparse.Namespace) -> int:
    file_cfg = _load_config(args.config)
    kind = _merged(args, file_cfg, "dgp", "scalar")
    dim = int(_merged(args, file_cfg, "dim", 5 if kind == "highdim" else 1))
    n = int(_merged(args, file_cfg, "n", 1000))
    seed = int(_merged(args, file_cfg, "seed", 0))
    out_dir = _merged(args, file_cfg, "out_dir", None)
    if out_dir is None:
        raise CliError("dump-dgp requires --out")
    if kind == "scalar":
        spec = scalar_dgp()
    elif kind == "highdim":
        spec = highdim_dgp(dim, RngStream(seed).child("dgp-coefs"))
    else:
        raise CliError(f"unknown dgp {kind!r}")
    stream = RngStream(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(gen_obs(spec, n, stream.child("obs")), out / "obs.csv")
    write_dataset_csv(gen_iv(spec, n, stream.child("iv")), out / "iv.csv")
    print(f"wrote {out / 'obs.csv'} and {out / 'iv.csv'}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivcate",
        description="Estimate unbiased CATEs by correcting confounded "
                    "observational estimates with compliance-weighted IV data.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--out", dest="out_dir", help="directory for emitted files")

    sim = sub.add_parser("simulate", help="run a Monte Carlo estimator comparison")
    common(sim)
    sim.add_argument("--dgp", choices=("scalar", "highdim"))
    sim.add_argument("--dim", type=int, help="covariate count for the high-dim DGP")
    sim.add_argument("--reps", dest="replicates", type=int)
    sim.add_argument("--n", type=int, help="rows for both datasets")
    sim.add_argument("--n-obs", dest="n_obs", type=int)
    sim.add_argument("--n-iv", dest="n_iv", type=int)
    sim.add_argument("--k", dest="folds", type=int, help="cross-fitting folds")
    sim.add_argument("--estimators",
                     help="comma list from tau_obs,tau_iv,tau_param,tau_shared")
    sim.add_argument("--clip", type=float, help="IV-ratio compliance clip")
    sim.add_argument("--trees", type=int, help="trees per forest")
    sim.add_argument("--epochs", type=int, help="network epochs (tau_shared)")
    sim.add_argument("--hidden-width", dest="hidden_width", type=int)
    sim.add_argument("--workers", type=int, help="parallel replicate workers")
    sim.add_argument("--paper-scale", action="store_true",
                     help="use the full-scale settings (100 reps, n=5000)")
    sim.set_defaults(func=_cmd_simulate)

    rates = sub.add_parser("rates", help="bias-coefficient error vs sample size")
    common(rates)
    rates.add_argument("--dgp", choices=("scalar", "highdim"))
    rates.add_argument("--dim", type=int)
    rates.add_argument("--reps", dest="replicates", type=int)
    rates.add_argument("--k", dest="folds", type=int)
    rates.add_argument("--n-list", dest="n_list",
                       help="comma list of IV sample sizes (default 500,2000,8000)")
    rates.add_argument("--oracle-only", dest="oracle_only", action="store_true",
                       help="skip the estimated-nuisance curve")
    rates.add_argument("--workers", type=int)
    rates.set_defaults(func=_cmd_rates)

    k401 = sub.add_parser("401k", help="run the 401(k) survey pipeline")
    common(k401)
    k401.add_argument("--data", help="path to the survey CSV")
    k401.add_argument("--k", dest="folds", type=int)
    k401.add_argument("--l1-alpha", dest="l1_alpha", type=float)
    k401.add_argument("--clip", type=float)
    k401.set_defaults(func=_cmd_401k)

    dump = sub.add_parser("dump-dgp", help="write one generated dataset pair as CSV")
    common(dump)
    dump.add_argument("--dgp", choices=("scalar", "highdim"))
    dump.add_argument("--dim", type=int)
    dump.add_argument("--n", type=int)
    dump.set_defaults(func=_cmd_dump_dgp)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StudyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IvcateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
