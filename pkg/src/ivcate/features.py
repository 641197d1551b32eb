"""Deterministic feature maps for the linear bias model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["FeatureMap"]


@dataclass(frozen=True)
class FeatureMap:
    """A fixed map from covariate rows to design-matrix rows.

    Evaluation is deterministic and the output dimension is constant across
    inputs. Use the constructors (:meth:`raw`, :meth:`with_intercept`,
    :meth:`polynomial`, :meth:`pairwise_interactions`, :meth:`custom`) rather
    than building instances directly.
    """

    kind: str
    input_dim: int
    output_dim: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    feature_names: Optional[tuple] = None

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"feature map expects {self.input_dim} columns, got shape {x.shape}"
            )
        out = np.asarray(self.fn(x), dtype=np.float64)
        if out.shape != (x.shape[0], self.output_dim):
            raise ValueError(
                f"feature map produced shape {out.shape}, "
                f"expected ({x.shape[0]}, {self.output_dim})"
            )
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.transform(x)

    @classmethod
    def raw(cls, input_dim: int) -> "FeatureMap":
        """Identity map: the covariates themselves."""
        return cls(kind="raw", input_dim=input_dim, output_dim=input_dim,
                   fn=lambda x: x)

    @classmethod
    def with_intercept(cls, input_dim: int) -> "FeatureMap":
        """[1, x1, .., xd]."""
        return cls(
            kind="identity_with_intercept", input_dim=input_dim,
            output_dim=input_dim + 1,
            fn=lambda x: np.column_stack([np.ones(x.shape[0]), x]),
        )

    @classmethod
    def polynomial(cls, input_dim: int, degree: int, intercept: bool = False) -> "FeatureMap":
        """Per-coordinate powers [x_j^q for q=1..degree], optional intercept."""
        if degree < 1:
            raise ValueError("degree must be >= 1")

        def build(x):
            cols = [x**q for q in range(1, degree + 1)]
            if intercept:
                cols.insert(0, np.ones((x.shape[0], 1)))
            return np.hstack(cols)

        out_dim = input_dim * degree + (1 if intercept else 0)
        return cls(kind=f"polynomial_deg{degree}", input_dim=input_dim,
                   output_dim=out_dim, fn=build)

    @classmethod
    def pairwise_interactions(cls, input_dim: int,
                              names: Optional[tuple] = None) -> "FeatureMap":
        """[1, raw coordinates, all products x_i * x_j for i < j].

        Feature order is fixed and documented: intercept first, then the raw
        coordinates in input order, then pairs in lexicographic index order.
        """
        pairs = [(i, j) for i in range(input_dim) for j in range(i + 1, input_dim)]

        def build(x):
            prods = [x[:, i] * x[:, j] for i, j in pairs]
            return np.column_stack([np.ones(x.shape[0]), x] + prods)

        if names is not None:
            if len(names) != input_dim:
                raise ValueError("names must match input_dim")
            labels = ("1",) + tuple(names) + tuple(
                f"{names[i]}*{names[j]}" for i, j in pairs
            )
        else:
            labels = None
        return cls(kind="pairwise_interactions", input_dim=input_dim,
                   output_dim=1 + input_dim + len(pairs), fn=build,
                   feature_names=labels)

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], np.ndarray], input_dim: int,
               output_dim: int, kind: str = "custom") -> "FeatureMap":
        return cls(kind=kind, input_dim=input_dim, output_dim=output_dim, fn=fn)
