"""Two-head feed-forward network for a shared outcome representation.

The trunk maps covariates through ``depth`` ELU layers to an r-dimensional
representation; two linear heads (with bias) model the grouped outcomes, so
the head difference applied to the representation is the fitted effect
contrast. For downstream linear bias modelling the exposed representation is
the constant-augmented vector [1, trunk(x)] with matching head vectors
[bias, weights]: head outputs are then exactly linear in the exposed
features, including their intercepts.

Training is full mini-batch gradient descent with adaptive moments
(0.9 / 0.999, eps 1e-8) and decoupled weight decay applied to every
parameter. All gradients are computed by hand; ``loss_and_grads`` is exact
and is verified against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .data import RngStream, as_stream
from .errors import TrainingDivergedError

__all__ = ["NetConfig", "ReprNet", "fit_repr_net", "loss_and_grads"]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class NetConfig:
    """Architecture and training configuration for the representation net."""

    repr_dim: int = 2
    depth: int = 5            # number of ELU hidden layers
    hidden_width: int = 2
    learning_rate: float = 0.01
    weight_decay: float = 0.02
    batch_size: int = 2000
    epochs: int = 1000
    seed: Union[int, RngStream] = 0
    two_head: bool = True
    val_fraction: float = 0.0  # > 0 enables early stopping on a holdout
    patience: int = 50

    def __post_init__(self):
        if self.repr_dim < 1 or self.depth < 0 or self.hidden_width < 1:
            raise ValueError("invalid architecture sizes")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z: np.ndarray, activated: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, activated + 1.0)


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int):
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=fan_out)
    return w, b


class ReprNet:
    """Trunk weights plus one or two linear output heads.

    ``params`` is a flat list of arrays: trunk (W, b) pairs followed by the
    head (w, b) pairs. The forward pass is deterministic given the weights.
    """

    def __init__(self, cfg: NetConfig, input_dim: int, params: list[np.ndarray]):
        self.cfg = cfg
        self.input_dim = input_dim
        self.params = params

    @classmethod
    def initialize(cls, cfg: NetConfig, input_dim: int, rng: np.random.Generator) -> "ReprNet":
        sizes = [input_dim] + [cfg.hidden_width] * cfg.depth + [cfg.repr_dim]
        params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w, b = _init_layer(rng, fan_in, fan_out)
            params += [w, b]
        n_heads = 2 if cfg.two_head else 1
        for _ in range(n_heads):
            w, b = _init_layer(rng, cfg.repr_dim, 1)
            params += [w[:, 0], b]
        return cls(cfg, input_dim, params)

    # -- structure helpers ------------------------------------------------

    @property
    def n_trunk_layers(self) -> int:
        return self.cfg.depth + 1

    def _trunk(self):
        return [(self.params[2 * i], self.params[2 * i + 1])
                for i in range(self.n_trunk_layers)]

    def _head(self, which: int):
        base = 2 * self.n_trunk_layers
        return self.params[base + 2 * which], self.params[base + 2 * which + 1]

    # -- forward ----------------------------------------------------------

    def _forward_trunk(self, x: np.ndarray):
        """Returns (representation, cache of (z, activation) per layer)."""
        a = x
        cache = []
        layers = self._trunk()
        for li, (w, b) in enumerate(layers):
            z = a @ w + b
            if li < len(layers) - 1:
                a_next = _elu(z)
            else:
                a_next = z  # representation layer stays linear
            cache.append((a, z, a_next))
            a = a_next
        return a, cache

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} input columns, got {x.shape[1]}")
        return x

    def trunk_output(self, x: np.ndarray) -> np.ndarray:
        return self._forward_trunk(self._check_input(x))[0]

    def representation(self, x: np.ndarray) -> np.ndarray:
        """Constant-augmented features [1, trunk(x)], shape (n, repr_dim + 1)."""
        phi = self.trunk_output(x)
        return np.column_stack([np.ones(phi.shape[0]), phi])

    @property
    def representation_dim(self) -> int:
        return self.cfg.repr_dim + 1

    def head_vector(self, which: int) -> np.ndarray:
        """Head as a linear map on the augmented representation: [bias, weights]."""
        w, b = self._head(which)
        return np.concatenate([b, w])

    def head_contrast(self) -> np.ndarray:
        """head_1 - head_0 on the augmented representation (two-head mode)."""
        if not self.cfg.two_head:
            raise ValueError("head_contrast requires a two-head network")
        return self.head_vector(1) - self.head_vector(0)

    def predict(self, x: np.ndarray, group: np.ndarray) -> np.ndarray:
        """Per-row prediction through the head selected by ``group``."""
        x = self._check_input(x)
        phi, _ = self._forward_trunk(x)
        if not self.cfg.two_head:
            w, b = self._head(0)
            return phi @ w + b[0]
        group = np.asarray(group)
        out = np.empty(x.shape[0])
        for g in (0, 1):
            rows = group == g
            if rows.any():
                w, b = self._head(g)
                out[rows] = phi[rows] @ w + b[0]
        return out

    def effect(self, x: np.ndarray) -> np.ndarray:
        """Head-1 minus head-0 prediction: the fitted group contrast."""
        return self.representation(x) @ self.head_contrast()

    def copy(self) -> "ReprNet":
        return ReprNet(self.cfg, self.input_dim, [p.copy() for p in self.params])


def loss_and_grads(net: ReprNet, x: np.ndarray, group: np.ndarray, y: np.ndarray):
    """Mean squared error of the grouped heads and its exact gradient.

    Returns ``(loss, grads)`` with ``grads`` shaped like ``net.params``.
    """
    x = net._check_input(x)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    phi, cache = net._forward_trunk(x)

    if net.cfg.two_head:
        group = np.asarray(group)
        w_sel = np.empty((n, net.cfg.repr_dim))
        pred = np.empty(n)
        for g in (0, 1):
            rows = group == g
            w, b = net._head(g)
            w_sel[rows] = w
            pred[rows] = phi[rows] @ w + b[0]
    else:
        w, b = net._head(0)
        w_sel = np.broadcast_to(w, (n, net.cfg.repr_dim))
        pred = phi @ w + b[0]

    err = pred - y
    loss = float(np.dot(err, err) / n)
    dpred = 2.0 * err / n

    grads: list[Optional[np.ndarray]] = [None] * len(net.params)
    base = 2 * net.n_trunk_layers
    if net.cfg.two_head:
        for g in (0, 1):
            rows = group == g
            grads[base + 2 * g] = phi[rows].T @ dpred[rows]
            grads[base + 2 * g + 1] = np.array([dpred[rows].sum()])
    else:
        grads[base] = phi.T @ dpred
        grads[base + 1] = np.array([dpred.sum()])

    dphi = dpred[:, None] * w_sel
    layers = net._trunk()
    delta = dphi
    for li in range(len(layers) - 1, -1, -1):
        a_in, z, a_out = cache[li]
        if li < len(layers) - 1:
            delta = delta * _elu_grad(z, a_out)
        w, _ = layers[li]
        grads[2 * li] = a_in.T @ delta
        grads[2 * li + 1] = delta.sum(axis=0)
        if li > 0:
            delta = delta @ w.T
    return loss, grads


def _full_loss(net: ReprNet, x, group, y) -> float:
    pred = net.predict(x, group)
    err = pred - y
    return float(np.dot(err, err) / y.shape[0])


def fit_repr_net(x: np.ndarray, group: np.ndarray, y: np.ndarray,
                 cfg: NetConfig) -> ReprNet:
    """Train the representation network on grouped outcomes.

    ``group`` selects the output head per row (all-zeros is fine for a
    single-head config). With ``epochs=0`` the seeded initialization is
    returned unchanged. A non-finite epoch loss raises
    :class:`~ivcate.errors.TrainingDivergedError` carrying the epoch index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    group = np.asarray(group)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != group.shape[0] or x.shape[0] != y.shape[0]:
        raise ValueError("x, group, y must have matching row counts")
    if not np.isin(group, (0, 1)).all():
        raise ValueError("group must contain only 0/1 values")
    if cfg.two_head and (group == group[0]).all() and cfg.epochs > 0:
        # legal (the unused head keeps its initialization) but worth allowing
        pass

    stream = as_stream(cfg.seed)
    net = ReprNet.initialize(cfg, x.shape[1], stream.child("init").generator())
    if cfg.epochs == 0:
        return net

    if cfg.val_fraction > 0.0:
        val_rng = stream.child("val").generator()
        perm = val_rng.permutation(x.shape[0])
        n_val = max(1, int(round(cfg.val_fraction * x.shape[0])))
        val_rows, train_rows = perm[:n_val], perm[n_val:]
        if train_rows.size == 0:
            raise ValueError("val_fraction leaves no training rows")
    else:
        val_rows = None
        train_rows = np.arange(x.shape[0])

    xt, gt, yt = x[train_rows], group[train_rows], y[train_rows]
    n = xt.shape[0]
    batch_rng = stream.child("batches").generator()

    m = [np.zeros_like(p) for p in net.params]
    v = [np.zeros_like(p) for p in net.params]
    step = 0
    best_val = np.inf
    best_params = None
    stale = 0

    for epoch in range(cfg.epochs):
        order = batch_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(net, xt[rows], gt[rows], yt[rows])
            epoch_loss += loss * rows.shape[0]
            step += 1
            corr1 = 1.0 - ADAM_BETA1**step
            corr2 = 1.0 - ADAM_BETA2**step
            for i, g in enumerate(grads):
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g
                update = (m[i] / corr1) / (np.sqrt(v[i] / corr2) + ADAM_EPS)
                net.params[i] -= cfg.learning_rate * (
                    update + cfg.weight_decay * net.params[i]
                )
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"training loss became non-finite at epoch {epoch}", epoch=epoch
            )
        if val_rows is not None:
            val_loss = _full_loss(net, x[val_rows], group[val_rows], y[val_rows])
            if val_loss < best_val:
                best_val = val_loss
                best_params = [p.copy() for p in net.params]
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

    if val_rows is not None and best_params is not None:
        net.params = best_params
    return net
