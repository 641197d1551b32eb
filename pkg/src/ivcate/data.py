"""Data containers, deterministic randomness, fold assignment, and CSV I/O.

Datasets are immutable column stores validated at construction time so that
downstream estimators never have to re-check for NaNs or out-of-range
treatment codes. Fold assignment follows the deterministic modular rule
used by the cross-fitted estimators: with 1-indexed rows, row ``i`` belongs
to fold ``f`` iff ``i = f - 1 (mod K)``.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TypeVar, Union

import numpy as np

from .errors import LoadError

__all__ = [
    "RngStream",
    "ObsDataset",
    "IVDataset",
    "FoldPlan",
    "make_folds",
    "fold_rows",
    "split_dataset",
    "write_dataset_csv",
    "read_obs_csv",
    "read_iv_csv",
]

FLOAT_FMT = "%.17g"


def _stream_part(part: Union[int, str]) -> int:
    """Coerce a stream-id component to a stable non-negative integer."""
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream id components must be int or str, got {type(part)!r}")


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream derived from one master seed.

    Two streams with the same ``(master_seed, key)`` produce identical draw
    sequences; distinct keys give statistically independent streams. Child
    streams extend the key, so every replicate / purpose combination owns
    its own generator without shared mutable state.
    """

    master_seed: int
    key: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "key", tuple(_stream_part(p) for p in self.key))

    def child(self, *parts: Union[int, str]) -> "RngStream":
        return RngStream(self.master_seed, self.key + tuple(parts))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.key)
        return np.random.default_rng(seq)


def as_stream(seed: Union[int, "RngStream"]) -> "RngStream":
    """Accept either a bare integer master seed or an existing stream."""
    if isinstance(seed, RngStream):
        return seed
    return RngStream(int(seed))


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


def _check_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"covariates must be a 2-D matrix, got ndim={x.ndim}")
    if not np.isfinite(x).all():
        raise ValueError("covariates contain non-finite entries")
    return x


def _check_binary(v, name: str, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.isin(v, (0.0, 1.0)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return v.astype(np.int8)


def _check_outcome(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError(f"outcome must have shape ({n},), got {y.shape}")
    if not np.isfinite(y).all():
        raise ValueError("outcome contains non-finite entries")
    return y


@dataclass(frozen=True)
class ObsDataset:
    """Rows (x, a, y) from a confounded observational study."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _check_matrix(self.x)
        a = _check_binary(self.a, "treatment", x.shape[0])
        y = _check_outcome(self.y, x.shape[0])
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "a", _freeze(a))
        object.__setattr__(self, "y", _freeze(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def take(self, rows: np.ndarray) -> "ObsDataset":
        return ObsDataset(self.x[rows], self.a[rows], self.y[rows])


@dataclass(frozen=True)
class IVDataset:
    """Rows (x, z, a, y) from an intent-to-treat study with instrument z."""

    x: np.ndarray
    z: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _check_matrix(self.x)
        z = _check_binary(self.z, "instrument", x.shape[0])
        a = _check_binary(self.a, "treatment", x.shape[0])
        y = _check_outcome(self.y, x.shape[0])
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "z", _freeze(z))
        object.__setattr__(self, "a", _freeze(a))
        object.__setattr__(self, "y", _freeze(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def take(self, rows: np.ndarray) -> "IVDataset":
        return IVDataset(self.x[rows], self.z[rows], self.a[rows], self.y[rows])


Dataset = TypeVar("Dataset", ObsDataset, IVDataset)


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic K-fold assignment. ``assignment`` holds fold ids 1..k."""

    k: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if self.k < 2:
            raise ValueError("fold count must be at least 2")
        if a.ndim != 1 or a.size < self.k:
            raise ValueError("assignment must be 1-D with at least k entries")
        if a.min() < 1 or a.max() > self.k:
            raise ValueError("fold ids must lie in 1..k")
        counts = np.bincount(a, minlength=self.k + 1)[1:]
        if (counts == 0).any():
            raise ValueError("every fold must be nonempty")
        object.__setattr__(self, "assignment", _freeze(a))

    @property
    def n(self) -> int:
        return self.assignment.shape[0]


def make_folds(n: int, k: int) -> FoldPlan:
    """Assign rows to folds by the modular rule: row i -> fold (i mod k) + 1.

    Rows are 1-indexed for the rule; the stored assignment is positionally
    aligned with 0-based row order. Deterministic, no randomness involved.
    """
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} rows, got {n}")
    rows_1idx = np.arange(1, n + 1, dtype=np.int64)
    return FoldPlan(k=k, assignment=(rows_1idx % k) + 1)


def fold_rows(plan: FoldPlan, k: int) -> np.ndarray:
    """0-based positions of the rows in fold ``k`` (order preserving)."""
    if not 1 <= k <= plan.k:
        raise ValueError(f"fold index must lie in 1..{plan.k}, got {k}")
    return np.flatnonzero(plan.assignment == k)


def split_dataset(data: Dataset, plan: FoldPlan, k: int) -> tuple[Dataset, Dataset]:
    """Split into (fold-k rows, complement rows), preserving row order.

    Both parts are fresh immutable datasets; mutating copies of one never
    affects the other.
    """
    if plan.n != data.n:
        raise ValueError(f"plan covers {plan.n} rows but dataset has {data.n}")
    inside = fold_rows(plan, k)
    outside = np.flatnonzero(plan.assignment != k)
    return data.take(inside), data.take(outside)


def _columns(data) -> list[tuple[str, np.ndarray, bool]]:
    cols = [(f"x{j + 1}", data.x[:, j], False) for j in range(data.dim)]
    if isinstance(data, IVDataset):
        cols.append(("z", data.z, True))
    cols.append(("a", data.a, True))
    cols.append(("y", data.y, False))
    return cols


def write_dataset_csv(data: Union[ObsDataset, IVDataset], path: Union[str, Path]) -> None:
    """Write a dataset as a header + comma-separated numeric rows.

    Floats are printed with 17 significant digits so a write/read round trip
    is exact.
    """
    cols = _columns(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _, _ in cols])
        for i in range(data.n):
            writer.writerow(
                [str(int(col[i])) if binary else FLOAT_FMT % col[i] for _, col, binary in cols]
            )


def _read_table(path: Union[str, Path]) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise LoadError(f"{path}: empty file")
    return rows[0], rows[1:]


def _parse_columns(path, header: Sequence[str], body: Iterable[Sequence[str]],
                   binary_cols: set[str]) -> dict[str, np.ndarray]:
    if not body:
        raise LoadError(f"{path}: no data rows")
    out: dict[str, list[float]] = {name: [] for name in header}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise LoadError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        for name, cell in zip(header, row):
            try:
                value = float(cell)
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: cannot parse {cell!r} in column {name}") from exc
            if name in binary_cols and value not in (0.0, 1.0):
                raise LoadError(f"{path}:{lineno}: column {name} must be exactly 0 or 1, got {cell}")
            out[name].append(value)
    return {name: np.asarray(vals) for name, vals in out.items()}


def _expect_header(path, header: Sequence[str], trailing: Sequence[str]) -> int:
    """Validate ``x1..xd`` followed by ``trailing`` names; return d."""
    d = len(header) - len(trailing)
    expected = [f"x{j + 1}" for j in range(d)] + list(trailing)
    if d < 1 or list(header) != expected:
        raise LoadError(f"{path}: header must be x1..xd,{','.join(trailing)}; got {list(header)}")
    return d


def read_obs_csv(path: Union[str, Path]) -> ObsDataset:
    """Read an observational dataset written by :func:`write_dataset_csv`."""
    header, body = _read_table(path)
    d = _expect_header(path, header, ("a", "y"))
    cols = _parse_columns(path, header, body, binary_cols={"a"})
    x = np.column_stack([cols[f"x{j + 1}"] for j in range(d)])
    return ObsDataset(x=x, a=cols["a"], y=cols["y"])


def read_iv_csv(path: Union[str, Path]) -> IVDataset:
    """Read an instrument dataset written by :func:`write_dataset_csv`."""
    header, body = _read_table(path)
    d = _expect_header(path, header, ("z", "a", "y"))
    cols = _parse_columns(path, header, body, binary_cols={"z", "a"})
    x = np.column_stack([cols[f"x{j + 1}"] for j in range(d)])
    return IVDataset(x=x, z=cols["z"], a=cols["a"], y=cols["y"])
