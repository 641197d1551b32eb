"""Synthetic confounded-observational and weak-instrument benchmark DGPs.

Scalar family: X ~ N(0,1), A ~ Bern(0.5), a confounder U | X, A drawn from
N(X*(A-0.5), 0.75) (0.75 is the variance), and

    Y = 1 + A + X + 2AX + 0.5X^2 + 0.75AX^2 + U + 0.5*eps,  eps ~ N(0,1).

The interventional effect is tau(x) = 0.75x^2 + 2x + 1 while the confounded
contrast is tau_obs(x) = 0.75x^2 + 3x + 1, so the confounding bias is
bias(x) = -x. The instrument variant randomizes Z ~ Bern(0.5) and draws a
compliance indicator C ~ Bern(sigmoid(2X)); compliers take A = Z with an
unconfounded U ~ N(0,1), non-compliers fall back to a coin-flip treatment
with the confounded U above.

High-dimensional family: d standard-normal covariates with coefficient
vectors beta, gamma_coef drawn once per study from U[-1, 1]^d, outcome

    Y = 1 + A + X_1 + 2A*(beta @ X) + 0.5X_1^2 + 0.75A*X_1^2 + U + 0.5*eps,
    U | X, A ~ N((gamma_coef @ X)*(A - 0.5), 0.75),

giving tau(x) = 1 + 2*(beta @ x) + 0.75x_1^2 and bias(x) = -gamma_coef @ x.
Compliance depends on the first coordinate: sigmoid(2*x_1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .data import IVDataset, ObsDataset, RngStream

__all__ = ["DgpSpec", "OracleSet", "scalar_dgp", "highdim_dgp", "gen_obs", "gen_iv", "oracle"]

U_SD = np.sqrt(0.75)  # the 0.75 in N(m, 0.75) is a variance
NOISE_SCALE = 0.5


@dataclass(frozen=True)
class DgpSpec:
    """Which synthetic family to draw from, plus high-dim coefficients."""

    kind: str  # "scalar" | "highdim"
    dim: int = 1
    beta: Optional[np.ndarray] = None
    gamma_coef: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("scalar", "highdim"):
            raise ValueError(f"kind must be 'scalar' or 'highdim', got {self.kind!r}")
        if self.kind == "scalar":
            if self.dim != 1:
                raise ValueError("scalar DGP has dim 1")
        else:
            if self.dim < 1:
                raise ValueError("dim must be >= 1")
            for name in ("beta", "gamma_coef"):
                v = getattr(self, name)
                if v is None:
                    raise ValueError(f"highdim DGP requires {name}")
                v = np.asarray(v, dtype=np.float64)
                if v.shape != (self.dim,):
                    raise ValueError(f"{name} must have shape ({self.dim},)")
                if (np.abs(v) > 1).any():
                    raise ValueError(f"{name} entries must lie in [-1, 1]")
                object.__setattr__(self, name, v)


def scalar_dgp() -> DgpSpec:
    return DgpSpec(kind="scalar", dim=1)


def highdim_dgp(dim: int, stream: RngStream) -> DgpSpec:
    """Draw the study-level coefficient vectors once from U[-1, 1]^dim."""
    rng = stream.generator()
    beta = rng.uniform(-1.0, 1.0, size=dim)
    gamma_coef = rng.uniform(-1.0, 1.0, size=dim)
    return DgpSpec(kind="highdim", dim=dim, beta=beta, gamma_coef=gamma_coef)


def _confounder_mean(spec: DgpSpec, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    shift = a - 0.5
    if spec.kind == "scalar":
        return x[:, 0] * shift
    return (x @ spec.gamma_coef) * shift


def _outcome(spec: DgpSpec, x: np.ndarray, a: np.ndarray, u: np.ndarray,
             eps: np.ndarray) -> np.ndarray:
    x1 = x[:, 0]
    if spec.kind == "scalar":
        slope = x1
    else:
        slope = x @ spec.beta
    return 1.0 + a + x1 + 2.0 * a * slope + 0.5 * x1**2 + 0.75 * a * x1**2 + u + NOISE_SCALE * eps


def gen_obs(spec: DgpSpec, n: int, stream: RngStream) -> ObsDataset:
    """Draw n observational rows (x, a, y); same (spec, n, stream) = same data."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream.generator()
    x = rng.standard_normal((n, spec.dim))
    a = (rng.random(n) < 0.5).astype(np.int8)
    u = _confounder_mean(spec, x, a) + U_SD * rng.standard_normal(n)
    eps = rng.standard_normal(n)
    y = _outcome(spec, x, a.astype(float), u, eps)
    return ObsDataset(x=x, a=a, y=y)


def _iv_parts(spec: DgpSpec, n: int, stream: RngStream) -> dict:
    """All structural pieces of one intent-to-treat draw (c is latent)."""
    rng = stream.generator()
    x = rng.standard_normal((n, spec.dim))
    z = (rng.random(n) < 0.5).astype(np.int8)
    a_star = (rng.random(n) < 0.5).astype(np.int8)
    comply_p = expit(2.0 * x[:, 0])
    c = (rng.random(n) < comply_p).astype(np.int8)
    a = c * z + (1 - c) * a_star
    u_complier = rng.standard_normal(n)
    u_confounded = _confounder_mean(spec, x, a) + U_SD * rng.standard_normal(n)
    u = np.where(c == 1, u_complier, u_confounded)
    eps = rng.standard_normal(n)
    y = _outcome(spec, x, a.astype(float), u, eps)
    return {"x": x, "z": z, "a_star": a_star, "c": c, "a": a, "u": u, "y": y}


def gen_iv(spec: DgpSpec, n: int, stream: RngStream) -> IVDataset:
    """Draw n intent-to-treat rows (x, z, a, y) with covariate-driven compliance."""
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = _iv_parts(spec, n, stream)
    return IVDataset(x=parts["x"], z=parts["z"], a=parts["a"], y=parts["y"])


@dataclass(frozen=True)
class OracleSet:
    """Closed-form truths bound to one DGP spec; tau - tau_obs == bias exactly."""

    tau: Callable[[np.ndarray], np.ndarray]
    tau_obs: Callable[[np.ndarray], np.ndarray]
    bias: Callable[[np.ndarray], np.ndarray]
    gamma: Callable[[np.ndarray], np.ndarray]
    theta: np.ndarray  # bias coefficients on the raw-coordinate feature map


def _as_matrix(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if dim == 1 else x.reshape(1, dim)
    if x.shape[1] != dim:
        raise ValueError(f"expected {dim} covariate columns, got shape {x.shape}")
    return x


def oracle(spec: DgpSpec) -> OracleSet:
    """Closed-form tau, tau_obs, bias, and compliance for a spec."""

    if spec.kind == "scalar":

        def tau(x):
            x1 = _as_matrix(x, 1)[:, 0]
            return 0.75 * x1**2 + 2.0 * x1 + 1.0

        def tau_obs(x):
            x1 = _as_matrix(x, 1)[:, 0]
            return 0.75 * x1**2 + 3.0 * x1 + 1.0

        def bias(x):
            return -_as_matrix(x, 1)[:, 0]

        def gamma(x):
            return expit(2.0 * _as_matrix(x, 1)[:, 0])

        theta = np.array([-1.0])
    else:
        beta = spec.beta
        gcoef = spec.gamma_coef
        d = spec.dim

        def tau(x):
            xm = _as_matrix(x, d)
            return 1.0 + 2.0 * (xm @ beta) + 0.75 * xm[:, 0] ** 2

        def bias(x):
            return -(_as_matrix(x, d) @ gcoef)

        def tau_obs(x):
            xm = _as_matrix(x, d)
            return tau(xm) - bias(xm)

        def gamma(x):
            return expit(2.0 * _as_matrix(x, d)[:, 0])

        theta = -gcoef.copy()

    return OracleSet(tau=tau, tau_obs=tau_obs, bias=bias, gamma=gamma, theta=theta)
