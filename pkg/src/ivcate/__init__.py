"""Unbiased CATE estimation from confounded observational plus weak-IV data.

A two-stage approach: fit a (biased) effect estimate on the observational
sample, then learn a linear model of its confounding bias from an
instrumental-variable sample, weighting rows by compliance times instrument
variance so weak- and no-compliance regions are handled by extrapolation
instead of division. Includes the synthetic benchmarks, a Monte Carlo study
runner, and the 401(k) survey pipeline.
"""

from .data import (
    FoldPlan,
    IVDataset,
    ObsDataset,
    RngStream,
    fold_rows,
    make_folds,
    read_iv_csv,
    read_obs_csv,
    split_dataset,
    write_dataset_csv,
)
from .dgp import DgpSpec, OracleSet, gen_iv, gen_obs, highdim_dgp, oracle, scalar_dgp
from .errors import (
    DegenerateInstrumentError,
    IvcateError,
    LoadError,
    PositivityError,
    RankDeficiencyError,
    StudyError,
    TrainingDivergedError,
)
from .estimators import (
    BiasModel,
    CorrectedCate,
    NuisanceBundle,
    clip_compliance,
    compliance_weight,
    fit_compliance,
    fit_instrument_propensity,
    fit_iv_ratio_cate,
    fit_parametric_bias,
    fit_representation_bias,
    fit_tau_obs_tlearner,
    predict_cate,
    pseudo_outcome,
)
from .features import FeatureMap
from .forest import ForestModel, ForestParams, fit_forest
from .linear import L1, L2, LinearModel, NoPenalty, fit_linear
from .nnet import NetConfig, ReprNet, fit_repr_net
from .bench import (
    MetricTable,
    RateTable,
    ReplicateReport,
    StudyConfig,
    emit_rate_results,
    emit_results,
    run_rate_study,
    run_study,
)
from .data401k import (
    Survey401k,
    build_phi_interactions,
    education_mask,
    inject_noncompliance,
    load_401k,
    run_401k,
    split_oe,
    trim_outcome,
)

__version__ = "0.1.0"
