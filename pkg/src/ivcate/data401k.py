"""401(k) survey pipeline: ingestion, trimming, O/E splitting, masking.

The survey file is an external input (never vendored) with twelve required
columns: nine covariates (age, inc, educ, fsize continuous; marr, twoearn,
db, pira, hown binary), the eligibility instrument e401, the participation
treatment p401, and the net-financial-assets outcome net_tfa. Eligibility is
one-sided: participation without eligibility violates the schema.

The full pipeline trims outcome outliers, splits the rows into an
observational half (instrument column dropped) and an IV half, fits the
confounded T-learner and the compliance-weighted bias correction with the
46-feature interaction map, and evaluates all estimators on an education by
marital-status grid with the remaining covariates pinned (medians for the
continuous ones, zero for the binaries). An artificial no-compliance region
(education below 12 years) exercises the extrapolation behavior.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
import pandas as pd

from .data import IVDataset, ObsDataset, RngStream, as_stream
from .errors import LoadError
from .estimators import fit_iv_ratio_cate, fit_parametric_bias, fit_tau_obs_tlearner
from .features import FeatureMap
from .forest import ForestParams
from .linear import L1, Penalty

__all__ = [
    "COVARIATES",
    "Survey401k",
    "load_401k",
    "trim_outcome",
    "split_oe",
    "education_mask",
    "inject_noncompliance",
    "build_phi_interactions",
    "Result401k",
    "run_401k",
    "emit_401k_results",
]

COVARIATES = ("age", "inc", "educ", "fsize", "marr", "twoearn", "db", "pira", "hown")
BINARY_COVARIATES = ("marr", "twoearn", "db", "pira", "hown")
EDUC_INDEX = COVARIATES.index("educ")
MARR_INDEX = COVARIATES.index("marr")
REQUIRED_COLUMNS = COVARIATES + ("e401", "p401", "net_tfa")

# Forest settings used throughout the survey pipeline.
FOREST_401K = ForestParams(n_trees=100, max_depth=6, min_samples_leaf=10, max_features=3)
DEFAULT_L1_ALPHA = 0.07


@dataclass(frozen=True)
class Survey401k:
    """Validated survey rows; covariate columns follow ``COVARIATES`` order."""

    x: np.ndarray
    e401: np.ndarray
    p401: np.ndarray
    net_tfa: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != len(COVARIATES):
            raise LoadError(f"covariates must have {len(COVARIATES)} columns")
        n = x.shape[0]
        e = np.asarray(self.e401)
        p = np.asarray(self.p401)
        y = np.asarray(self.net_tfa, dtype=np.float64)
        if e.shape != (n,) or p.shape != (n,) or y.shape != (n,):
            raise LoadError("column lengths disagree")
        for name, v in (("e401", e), ("p401", p)):
            if not np.isin(v, (0, 1)).all():
                raise LoadError(f"{name} must be 0/1")
        for name in BINARY_COVARIATES:
            col = x[:, COVARIATES.index(name)]
            if not np.isin(col, (0.0, 1.0)).all():
                raise LoadError(f"covariate {name} must be 0/1")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise LoadError("non-finite values in survey data")
        bad = np.flatnonzero((p == 1) & (e == 0))
        if bad.size:
            raise LoadError(
                "participation without eligibility violates one-sided "
                f"compliance at rows {bad[:10].tolist()}"
                + ("..." if bad.size > 10 else "")
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "e401", e.astype(np.int8))
        object.__setattr__(self, "p401", p.astype(np.int8))
        object.__setattr__(self, "net_tfa", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def take(self, rows: np.ndarray) -> "Survey401k":
        return Survey401k(self.x[rows], self.e401[rows], self.p401[rows],
                          self.net_tfa[rows])


def load_401k(path: Union[str, Path]) -> Survey401k:
    """Load and validate the survey file (comma separated, header row).

    The twelve required columns must all be present (extra columns are
    ignored); numeric parse failures and schema violations are reported with
    the offending rows.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except Exception as exc:
        raise LoadError(f"cannot parse {path}: {exc}") from exc
    if frame.empty:
        raise LoadError(f"{path}: no data rows")
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise LoadError(f"{path}: missing required columns {missing}")
    numeric = frame[list(REQUIRED_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    bad_rows = numeric.index[numeric.isna().any(axis=1)]
    if len(bad_rows):
        raise LoadError(f"{path}: unparsable numerics at rows {bad_rows[:10].tolist()}")
    return Survey401k(
        x=numeric[list(COVARIATES)].to_numpy(),
        e401=numeric["e401"].to_numpy(),
        p401=numeric["p401"].to_numpy(),
        net_tfa=numeric["net_tfa"].to_numpy(),
    )


def trim_outcome(data: Survey401k, fraction: float = 0.025) -> Survey401k:
    """Drop rows strictly outside the [fraction, 1-fraction] outcome quantiles.

    Quantiles use linear interpolation (numpy's default); rows exactly equal
    to a boundary value are kept.
    """
    if not 0.0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    if fraction == 0.0:
        return data
    lo = np.quantile(data.net_tfa, fraction)
    hi = np.quantile(data.net_tfa, 1.0 - fraction)
    keep = (data.net_tfa >= lo) & (data.net_tfa <= hi)
    return data.take(np.flatnonzero(keep))


def split_oe(data: Survey401k, stream: Union[int, RngStream]) -> tuple[ObsDataset, IVDataset]:
    """Uniformly split into observational and IV halves.

    The observational half keeps (x, a=p401, y) and intentionally drops the
    instrument; the IV half keeps (x, z=e401, a=p401, y). On odd row counts
    the observational half receives the extra row. Deterministic per stream.
    """
    if data.n < 2:
        raise ValueError("need at least 2 rows to split")
    rng = as_stream(stream).generator()
    perm = rng.permutation(data.n)
    n_obs = data.n - data.n // 2
    obs_rows = np.sort(perm[:n_obs])
    iv_rows = np.sort(perm[n_obs:])
    obs_part = data.take(obs_rows)
    iv_part = data.take(iv_rows)
    o = ObsDataset(x=obs_part.x, a=obs_part.p401, y=obs_part.net_tfa)
    e = IVDataset(x=iv_part.x, z=iv_part.e401, a=iv_part.p401, y=iv_part.net_tfa)
    return o, e


@dataclass(frozen=True)
class _Scaled:
    """A predictor times a constant factor."""

    fn: Callable[[np.ndarray], np.ndarray]
    factor: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.factor * np.asarray(self.fn(x), dtype=np.float64)


def education_mask(threshold: float = 12.0) -> Callable[[np.ndarray], np.ndarray]:
    """Row mask for the artificial no-compliance region: educ < threshold."""

    def mask(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return x[:, EDUC_INDEX] < threshold

    return mask


def inject_noncompliance(gamma_predictor: Callable[[np.ndarray], np.ndarray],
                         mask: Callable[[np.ndarray], np.ndarray]):
    """Wrap a compliance predictor to return 0 wherever ``mask`` holds."""

    def wrapped(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.where(mask(x), 0.0, np.asarray(gamma_predictor(x), dtype=np.float64))

    return wrapped


def build_phi_interactions() -> FeatureMap:
    """Intercept + 9 covariates + all 36 pairwise products = 46 features."""
    return FeatureMap.pairwise_interactions(len(COVARIATES), names=COVARIATES)


def evaluation_grid(data: Survey401k) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Education-by-marital grid with the other covariates pinned.

    Continuous covariates sit at their medians, binaries at zero; education
    sweeps the observed integer range for marital status 0 and 1. Returns
    (grid matrix, education values, marital values) with panel-major rows.
    """
    medians = np.median(data.x, axis=0)
    educ_col = data.x[:, EDUC_INDEX]
    educ_values = np.arange(int(np.floor(educ_col.min())),
                            int(np.ceil(educ_col.max())) + 1, dtype=float)
    marr_values = np.array([0.0, 1.0])
    base = np.zeros(len(COVARIATES))
    for name in ("age", "inc", "fsize"):
        idx = COVARIATES.index(name)
        base[idx] = medians[idx]
    rows = []
    for marr in marr_values:
        for educ in educ_values:
            row = base.copy()
            row[EDUC_INDEX] = educ
            row[MARR_INDEX] = marr
            rows.append(row)
    return np.vstack(rows), educ_values, marr_values


@dataclass(frozen=True)
class Result401k:
    """Pipeline outputs on the evaluation grid (panel-major over marr)."""

    educ: np.ndarray
    marr: np.ndarray
    grid: np.ndarray
    estimates: dict           # estimator -> predictions over grid rows
    masked: np.ndarray        # 1 where the no-compliance rule holds
    masked_fraction: float    # share of survey rows in the masked region
    n_loaded: int
    n_trimmed: int
    theta: np.ndarray
    config: dict


def run_401k(
    data: Union[Survey401k, str, Path],
    seed: Union[int, RngStream] = 0,
    folds: int = 2,
    l1_alpha: float = DEFAULT_L1_ALPHA,
    clip: float = 0.1,
    forest: ForestParams = FOREST_401K,
    trim_fraction: float = 0.025,
    educ_threshold: float = 12.0,
) -> Result401k:
    """End-to-end survey pipeline.

    Steps: load (if a path) -> trim outcome tails -> random O/E split ->
    confounded T-learner on O -> compliance-weighted bias fit on E with the
    46-feature interaction map and an L1 penalty (intercept unpenalized),
    with compliance forced to zero below the education threshold -> evaluate
    the confounded, IV-ratio (unmasked reference), and corrected estimators
    on the education/marital grid.
    """
    if not isinstance(data, Survey401k):
        data = load_401k(data)
    n_loaded = data.n
    stream = as_stream(seed)
    trimmed = trim_outcome(data, trim_fraction)
    o, e = split_oe(trimmed, stream.child("split"))

    mask = education_mask(educ_threshold)
    masked_fraction = float(mask(trimmed.x).mean())

    tlearner = fit_tau_obs_tlearner(o, forest.with_seed(stream.child("tlearner")))
    ratio = fit_iv_ratio_cate(e, forest.with_seed(stream.child("ivratio")), clip=clip)

    # The bias solve runs on standardized features and a standardized
    # outcome so the L1 strength is unit-free: the raw columns span many
    # orders of magnitude (income products vs. binary flags) and the outcome
    # is in dollars, under which any single alpha would either regularize
    # nothing or only the smallest-scale coefficients. Coefficients and
    # predictions are mapped back to the original units afterwards.
    phi_raw = build_phi_interactions()
    scale = np.sqrt(np.mean(phi_raw.transform(e.x) ** 2, axis=0))
    scale[scale == 0.0] = 1.0
    phi = FeatureMap.custom(
        lambda q, _s=scale: phi_raw.transform(q) / _s,
        input_dim=phi_raw.input_dim, output_dim=phi_raw.output_dim,
        kind="pairwise_interactions_standardized",
    )
    y_scale = float(e.y.std()) or 1.0
    e_scaled = IVDataset(x=e.x, z=e.z, a=e.a, y=e.y / y_scale)
    tau_obs_scaled = _Scaled(tlearner, 1.0 / y_scale)
    penalty: Penalty = L1(l1_alpha, unpenalized=(0,))
    corrected = fit_parametric_bias(
        tau_obs_scaled, e_scaled, phi, k=folds,
        gamma=forest.with_seed(stream.child("gamma")),
        pi=forest.with_seed(stream.child("pi")),
        penalty=penalty, compliance_mask=mask,
    )

    grid, educ_values, marr_values = evaluation_grid(trimmed)
    estimates = {
        "tau_obs": tlearner(grid),
        "tau_iv": ratio(grid),
        "tau_param": y_scale * corrected.cate.predict(grid),
    }
    config = {
        "seed": stream.master_seed,
        "folds": folds,
        "l1_alpha": l1_alpha,
        "clip": clip,
        "trim_fraction": trim_fraction,
        "educ_threshold": educ_threshold,
        "forest": {
            "n_trees": forest.n_trees, "max_depth": forest.max_depth,
            "min_samples_leaf": forest.min_samples_leaf,
            "max_features": forest.max_features,
        },
        "n_loaded": n_loaded,
        "n_trimmed": trimmed.n,
    }
    return Result401k(
        educ=educ_values, marr=marr_values, grid=grid, estimates=estimates,
        masked=mask(grid).astype(int), masked_fraction=masked_fraction,
        n_loaded=n_loaded, n_trimmed=trimmed.n,
        theta=corrected.theta * y_scale / scale,  # back to raw units
        config=config,
    )


def emit_401k_results(result: Result401k, out_dir: Union[str, Path]) -> list[Path]:
    """Write per-panel curve files, a summary table, and the config snapshot.

    ``curves_single.csv`` / ``curves_married.csv`` follow the shared curve
    schema (x,estimator,mean,stderr,oracle,masked) with x = years of
    education and the unmasked IV-ratio estimate as the reference (oracle)
    column. ``summary.csv`` lists every grid estimate long-form.
    """
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = "%.17g"
    n_educ = result.educ.shape[0]
    written = []

    for pi, (marr, label) in enumerate(zip(result.marr, ("single", "married"))):
        rows = slice(pi * n_educ, (pi + 1) * n_educ)
        path = out / f"curves_{label}.csv"
        with open(path, "w", newline="") as fh:
            fh.write("x,estimator,mean,stderr,oracle,masked\n")
            reference = result.estimates["tau_iv"][rows]
            for name in ("tau_obs", "tau_iv", "tau_param"):
                vals = result.estimates[name][rows]
                for i in range(n_educ):
                    fh.write(
                        f"{fmt % result.educ[i]},{name},{fmt % vals[i]},"
                        f"{fmt % 0.0},{fmt % reference[i]},{result.masked[rows][i]}\n"
                    )
        written.append(path)

    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        fh.write("educ,marr,estimator,estimate,masked\n")
        for pi in range(result.marr.shape[0]):
            rows = slice(pi * n_educ, (pi + 1) * n_educ)
            for name in ("tau_obs", "tau_iv", "tau_param"):
                vals = result.estimates[name][rows]
                for i in range(n_educ):
                    fh.write(
                        f"{fmt % result.educ[i]},{int(result.marr[pi])},{name},"
                        f"{fmt % vals[i]},{result.masked[rows][i]}\n"
                    )
    written.append(summary)

    config_path = out / "config.json"
    with open(config_path, "w") as fh:
        json.dump(result.config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(config_path)
    return written
