"""CATE estimation from observational plus instrumental-variable data.

The estimators here implement a two-stage correction: a confounded effect
estimate fitted on observational data, then a linear model of its bias fitted
on the IV sample. The bias regression uses the instrument pseudo-outcome

    ytilde = y * z * (1 - pi(x)) - y * (1 - z) * pi(x)

whose conditional mean equals ``gamma(x) * pi(x) * (1 - pi(x)) * tau(x)``,
so regressing ``ytilde - w(x) * tau_obs(x)`` on ``w(x) * phi(x)`` with
``w = gamma * pi * (1 - pi)`` recovers the bias coefficients while giving
zero weight to no-compliance rows. Compliance and instrument propensity are
cross-fitted over K folds so no row is scored by a model that saw it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .data import IVDataset, ObsDataset, FoldPlan, fold_rows, make_folds
from .errors import DegenerateInstrumentError, PositivityError, RankDeficiencyError
from .features import FeatureMap
from .forest import ForestModel, ForestParams, fit_forest
from .linear import NoPenalty, Penalty, fit_linear
from .nnet import NetConfig, ReprNet, fit_repr_net

__all__ = [
    "DEFAULT_PROPENSITY_EPS",
    "TLearnerCate",
    "IvRatioCate",
    "NuisanceBundle",
    "BiasModel",
    "CorrectedCate",
    "fit_tau_obs_tlearner",
    "fit_compliance",
    "fit_instrument_propensity",
    "pseudo_outcome",
    "compliance_weight",
    "clip_compliance",
    "fit_iv_ratio_cate",
    "fit_parametric_bias",
    "fit_representation_bias",
    "predict_cate",
]

DEFAULT_PROPENSITY_EPS = 0.01

Predictor = Callable[[np.ndarray], np.ndarray]
# Nuisance specs: hyperparameters to fit with, or a known function/constant.
GammaSpec = Union[ForestParams, Predictor]
PiSpec = Union[ForestParams, Predictor, float]


def _canonical_sort(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order independent of input shuffling: lexicographic by (x cols, y)."""
    keys = tuple(x[:, j] for j in range(x.shape[1] - 1, -1, -1))
    return np.lexsort((y,) + keys)


@dataclass(frozen=True)
class TLearnerCate:
    """Difference of arm-wise outcome regressions: mu1(x) - mu0(x)."""

    mu0: ForestModel
    mu1: ForestModel

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.mu1.predict(x) - self.mu0.predict(x)


def fit_tau_obs_tlearner(o: ObsDataset, params: ForestParams) -> TLearnerCate:
    """Fit the confounded effect estimate on observational data.

    Each treatment arm gets its own outcome forest. Arms are sorted by a
    canonical key first, so predictions do not depend on the row order of
    the input. Raises :class:`PositivityError` if an arm is empty.
    """
    counts = np.bincount(o.a, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise PositivityError(
            f"treatment arms must both be nonempty, got sizes {counts[0]}/{counts[1]}"
        )
    models = {}
    for arm in (0, 1):
        rows = np.flatnonzero(o.a == arm)
        xa, ya = o.x[rows], o.y[rows]
        order = _canonical_sort(xa, ya)
        models[arm] = fit_forest(xa[order], ya[order], params, mode="regression")
    return TLearnerCate(mu0=models[0], mu1=models[1])


@dataclass(frozen=True)
class _ArmDifference:
    """p(x | arm 1) - p(x | arm 0) for two per-arm models, clamped to [lo, hi]."""

    model0: ForestModel
    model1: ForestModel
    lo: float = -1.0
    hi: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self.model1.predict(x) - self.model0.predict(x), self.lo, self.hi)


def fit_compliance(e: IVDataset, params: ForestParams) -> _ArmDifference:
    """Estimate compliance gamma(x) = P(A=1 | Z=1, x) - P(A=1 | Z=0, x).

    One probability forest per instrument arm; the difference is clamped to
    [-1, 1]. Raises :class:`PositivityError` if an instrument arm is empty.
    """
    counts = np.bincount(e.z, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise PositivityError(
            f"instrument arms must both be nonempty, got sizes {counts[0]}/{counts[1]}"
        )
    models = {}
    for arm in (0, 1):
        rows = np.flatnonzero(e.z == arm)
        models[arm] = fit_forest(e.x[rows], e.a[rows].astype(float), params,
                                 mode="probability")
    return _ArmDifference(model0=models[0], model1=models[1])


@dataclass(frozen=True)
class _ClampedProbability:
    model: ForestModel
    eps: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self.model.predict(x), self.eps, 1.0 - self.eps)


@dataclass(frozen=True)
class _ConstantPropensity:
    value: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.full(x.shape[0], self.value)


def fit_instrument_propensity(e: IVDataset,
                              params_or_constant: Union[ForestParams, float],
                              eps: float = DEFAULT_PROPENSITY_EPS) -> Predictor:
    """Estimate pi(x) = P(Z=1 | x), or wrap a known randomization constant.

    Estimated propensities are clamped to [eps, 1 - eps]. A known constant
    (e.g. 0.5 under coin-flip assignment) is validated to lie in (0, 1) and
    returned as-is. A constant instrument with no known constant raises
    :class:`DegenerateInstrumentError`.
    """
    if isinstance(params_or_constant, (int, float)) and not isinstance(params_or_constant, bool):
        value = float(params_or_constant)
        if not 0.0 < value < 1.0:
            raise ValueError(f"known propensity must lie in (0, 1), got {value}")
        return _ConstantPropensity(value)
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    counts = np.bincount(e.z, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise DegenerateInstrumentError(
            "instrument is constant; supply the known assignment probability instead"
        )
    model = fit_forest(e.x, e.z.astype(float), params_or_constant, mode="probability")
    return _ClampedProbability(model=model, eps=eps)


def pseudo_outcome(y, z, pi):
    """y*z*(1-pi) - y*(1-z)*pi, the instrument-contrast pseudo-outcome."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z)
    pi = np.asarray(pi, dtype=np.float64)
    if not np.isin(z, (0, 1)).all():
        raise ValueError("z must contain only 0/1 values")
    if ((pi <= 0.0) | (pi >= 1.0)).any():
        raise ValueError("pi must lie strictly inside (0, 1)")
    return y * z * (1.0 - pi) - y * (1 - z) * pi


def compliance_weight(gamma, pi):
    """gamma * pi * (1 - pi): zero-compliance rows get zero weight."""
    gamma = np.asarray(gamma, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if ((gamma < -1.0) | (gamma > 1.0)).any():
        raise ValueError("gamma must lie in [-1, 1]")
    if ((pi < 0.0) | (pi > 1.0)).any():
        raise ValueError("pi must lie in [0, 1]")
    return gamma * pi * (1.0 - pi)


def clip_compliance(gamma, clip: float):
    """Sign-preserving clip: sign(gamma) * max(|gamma|, clip); 0 maps to +clip."""
    if clip <= 0:
        raise ValueError("clip must be positive")
    gamma = np.asarray(gamma, dtype=np.float64)
    sign = np.where(gamma >= 0.0, 1.0, -1.0)
    return sign * np.maximum(np.abs(gamma), clip)


@dataclass(frozen=True)
class IvRatioCate:
    """Ratio estimator: arm contrast of outcomes over clipped compliance."""

    delta_y0: ForestModel
    delta_y1: ForestModel
    gamma: _ArmDifference
    clip: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        delta = self.delta_y1.predict(x) - self.delta_y0.predict(x)
        return delta / clip_compliance(self.gamma(x), self.clip)


def fit_iv_ratio_cate(e: IVDataset, params: ForestParams, clip: float = 0.1) -> IvRatioCate:
    """CATE from IV data alone: delta_y(x) / gamma(x) with compliance clipping.

    ``delta_y`` is the difference of outcome regressions across instrument
    arms; the denominator keeps its sign but is floored in magnitude at
    ``clip``, which removes division hazards in weak-compliance regions at
    the cost of bias there.
    """
    if clip <= 0:
        raise ValueError("clip must be positive")
    counts = np.bincount(e.z, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise PositivityError(
            f"instrument arms must both be nonempty, got sizes {counts[0]}/{counts[1]}"
        )
    outcome = {}
    for arm in (0, 1):
        rows = np.flatnonzero(e.z == arm)
        outcome[arm] = fit_forest(e.x[rows], e.y[rows], params, mode="regression")
    gamma = fit_compliance(e, params)
    return IvRatioCate(delta_y0=outcome[0], delta_y1=outcome[1], gamma=gamma, clip=clip)


@dataclass(frozen=True)
class NuisanceBundle:
    """Cross-fitted nuisances: per-fold compliance/propensity plus the plan.

    ``train_rows[k-1]`` records which rows trained the fold-k models; by
    construction it is disjoint from fold k itself.
    """

    tau_obs: Predictor
    gamma_k: tuple
    pi_k: tuple
    plan: FoldPlan
    train_rows: tuple


@dataclass(frozen=True)
class BiasModel:
    """Linear bias model b(x) = theta @ phi(x)."""

    phi: FeatureMap
    theta: np.ndarray
    degenerate: bool = False  # every compliance weight was zero

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.phi.transform(x) @ self.theta

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.predict(x)


@dataclass(frozen=True)
class CorrectedCate:
    """Corrected effect estimate.

    In additive mode the prediction is exactly ``tau_obs(x) + bias(x)``. In
    combined mode (shared-representation estimates) it is exactly
    ``combined_coef @ phi(x)`` where ``combined_coef`` merges the fitted
    outcome contrast with the bias coefficients.
    """

    tau_obs: Optional[Predictor]
    bias: BiasModel
    combined_coef: Optional[np.ndarray] = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        if self.combined_coef is not None:
            return self.bias.phi.transform(x) @ self.combined_coef
        return np.asarray(self.tau_obs(x)) + self.bias.predict(x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.predict(x)


def predict_cate(model: CorrectedCate, x: np.ndarray) -> np.ndarray:
    """Evaluate a corrected CATE model on covariate rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.bias.phi.input_dim:
        raise ValueError(
            f"expected {model.bias.phi.input_dim} covariate columns, got {x.shape[1]}"
        )
    return model.predict(x)


@dataclass(frozen=True)
class ParametricBiasResult:
    theta: np.ndarray
    bias: BiasModel
    cate: CorrectedCate
    nuisances: NuisanceBundle


def _fold_gamma(spec: GammaSpec, train: IVDataset) -> Predictor:
    if isinstance(spec, ForestParams):
        return fit_compliance(train, spec)
    if callable(spec):
        return spec
    raise TypeError(f"gamma spec must be ForestParams or a callable, got {type(spec)!r}")


def _fold_pi(spec: PiSpec, train: IVDataset, eps: float) -> Predictor:
    if isinstance(spec, ForestParams) or (
        isinstance(spec, (int, float)) and not isinstance(spec, bool)
    ):
        return fit_instrument_propensity(train, spec, eps=eps)
    if callable(spec):
        return spec
    raise TypeError(
        f"pi spec must be ForestParams, a constant, or a callable, got {type(spec)!r}"
    )


def fit_parametric_bias(
    tau_obs: Predictor,
    e: IVDataset,
    phi: FeatureMap,
    k: int = 2,
    gamma: GammaSpec = ForestParams(max_depth=3, min_samples_leaf=50),
    pi: PiSpec = 0.5,
    penalty: Penalty = NoPenalty(),
    eps: float = DEFAULT_PROPENSITY_EPS,
    compliance_mask: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ParametricBiasResult:
    """Fit the compliance-weighted linear bias model by K-fold cross-fitting.

    For every fold the compliance and instrument-propensity models are
    trained on the complement, then each in-fold row i contributes the
    target ``ytilde_i - w_i * tau_obs(x_i)`` and the design row
    ``w_i * phi(x_i)`` with ``w_i = gamma(x_i) * pi(x_i) * (1 - pi(x_i))``.
    The pooled least-squares solve (optionally penalized) yields the bias
    coefficients; the returned corrected model predicts
    ``tau_obs(x) + theta @ phi(x)``.

    ``gamma`` and ``pi`` accept forest hyperparameters (fit per fold), a
    known callable, or for ``pi`` a known randomization constant.
    ``compliance_mask``, when given, zeroes the estimated compliance where
    the mask is true (used to model known no-compliance subgroups). If every
    weight is zero the bias model is identically zero and flagged degenerate
    rather than raising: the confounded estimate is then the only
    identifiable answer.
    """
    if k < 2:
        raise ValueError("fold count must be >= 2")
    if e.n < k:
        raise ValueError(f"need at least k={k} rows, got {e.n}")
    if phi.input_dim != e.dim:
        raise ValueError(
            f"feature map expects {phi.input_dim} columns, dataset has {e.dim}"
        )

    plan = make_folds(e.n, k)
    gamma_fns = []
    pi_fns = []
    train_sets = []
    gamma_hat = np.empty(e.n)
    pi_hat = np.empty(e.n)
    for fold in range(1, k + 1):
        test_rows = fold_rows(plan, fold)
        train_rows = np.flatnonzero(plan.assignment != fold)
        train = e.take(train_rows)
        gamma_fn = _fold_gamma(gamma, train)
        pi_fn = _fold_pi(pi, train, eps)
        x_test = e.x[test_rows]
        gamma_hat[test_rows] = np.clip(gamma_fn(x_test), -1.0, 1.0)
        pi_hat[test_rows] = np.clip(pi_fn(x_test), eps, 1.0 - eps)
        gamma_fns.append(gamma_fn)
        pi_fns.append(pi_fn)
        train_sets.append(train_rows)

    if compliance_mask is not None:
        gamma_hat = np.where(compliance_mask(e.x), 0.0, gamma_hat)

    weights = compliance_weight(gamma_hat, pi_hat)
    tau_obs_hat = np.asarray(tau_obs(e.x), dtype=np.float64)
    targets = pseudo_outcome(e.y, e.z, pi_hat) - weights * tau_obs_hat
    design = weights[:, None] * phi.transform(e.x)

    bundle = NuisanceBundle(
        tau_obs=tau_obs, gamma_k=tuple(gamma_fns), pi_k=tuple(pi_fns),
        plan=plan, train_rows=tuple(train_sets),
    )

    n_active = int(np.count_nonzero(weights != 0.0))
    if n_active == 0:
        warnings.warn(
            "every compliance weight is zero; returning a zero bias model",
            RuntimeWarning,
        )
        theta = np.zeros(phi.output_dim)
        bias = BiasModel(phi=phi, theta=theta, degenerate=True)
    else:
        if n_active < phi.output_dim and isinstance(penalty, NoPenalty):
            raise RankDeficiencyError(
                f"only {n_active} rows carry nonzero weight for "
                f"{phi.output_dim} bias features; consider a small L2 penalty"
            )
        model = fit_linear(design, targets, weights=None, penalty=penalty)
        theta = model.coef
        bias = BiasModel(phi=phi, theta=theta, degenerate=False)

    cate = CorrectedCate(tau_obs=tau_obs, bias=bias)
    return ParametricBiasResult(theta=theta, bias=bias, cate=cate, nuisances=bundle)


@dataclass(frozen=True)
class RepresentationBiasResult:
    nu: np.ndarray
    cate: CorrectedCate
    net: ReprNet
    inner: ParametricBiasResult


def fit_representation_bias(
    o: ObsDataset,
    e: IVDataset,
    k: int = 2,
    net_cfg: NetConfig = NetConfig(),
    gamma: GammaSpec = ForestParams(max_depth=3, min_samples_leaf=50),
    pi: PiSpec = 0.5,
    penalty: Penalty = NoPenalty(),
    eps: float = DEFAULT_PROPENSITY_EPS,
) -> RepresentationBiasResult:
    """Learn a shared representation on O, then fit the bias in that basis.

    A two-head network is trained on the observational outcomes; the head
    contrast applied to the learned (constant-augmented) representation is
    the confounded effect estimate, and the same representation serves as
    the feature map for the cross-fitted bias solve. The corrected estimate
    is exactly ``(head_contrast + nu) @ representation(x)``.
    """
    if not net_cfg.two_head:
        raise ValueError("representation bias fitting requires a two-head config")
    counts = np.bincount(o.a, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise PositivityError(
            f"treatment arms must both be nonempty, got sizes {counts[0]}/{counts[1]}"
        )
    net = fit_repr_net(o.x, o.a, o.y, net_cfg)
    phi = FeatureMap.custom(net.representation, input_dim=o.dim,
                            output_dim=net.representation_dim, kind="learned")
    inner = fit_parametric_bias(
        net.effect, e, phi, k=k, gamma=gamma, pi=pi, penalty=penalty, eps=eps
    )
    combined = net.head_contrast() + inner.theta
    cate = CorrectedCate(tau_obs=net.effect, bias=inner.bias, combined_coef=combined)
    return RepresentationBiasResult(nu=inner.theta, cate=cate, net=net, inner=inner)
