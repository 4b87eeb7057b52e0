"""Original dataset, CSV loading and bootstrapped subsamples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import DataError

WITH_REPLACEMENT = "with"
WITHOUT_REPLACEMENT = "without"


@dataclass(frozen=True)
class Dataset:
    """``d`` observations; ``x`` has shape ``(d, q)``, ``y`` shape ``(d,)``."""

    x: np.ndarray
    y: np.ndarray
    x_names: tuple[str, ...] = ()
    y_name: str = "y"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DataError(f"x of shape {x.shape} does not match y of shape {y.shape}")
        if y.shape[0] < 1:
            raise DataError("dataset needs at least one point")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if not self.x_names:
            names = ("x",) if x.shape[1] == 1 else tuple(f"x{j}" for j in range(x.shape[1]))
            object.__setattr__(self, "x_names", names)

    @property
    def d(self) -> int:
        return self.y.shape[0]

    def __len__(self) -> int:
        return self.d

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.x[idx], self.y[idx], self.x_names, self.y_name)


def _resolve_columns(spec, header: list[str]) -> list[int]:
    if isinstance(spec, (str, int)):
        spec = [spec]
    cols = []
    for item in spec:
        if isinstance(item, str) and item not in header and item.isdigit():
            item = int(item)
        if isinstance(item, int):
            if not 0 <= item < len(header):
                raise DataError(f"column index {item} out of range for {len(header)} columns")
            cols.append(item)
        elif item in header:
            cols.append(header.index(item))
        else:
            raise DataError(f"no column named {item!r}; header is {header}")
    return cols


def load_csv(path, x_columns: Sequence[str | int] | str | int = 0, y_column: str | int = 1) -> Dataset:
    """Read a comma-separated file with a header row.

    Columns may be given by name or zero-based index. Row numbers in errors
    are 1-based file lines, so the header is line 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"empty data file: {path}")
    header = [h.strip() for h in rows[0]]
    if len(rows) < 2:
        raise DataError(f"no data rows in {path}")
    xcols = _resolve_columns(x_columns, header)
    (ycol,) = _resolve_columns(y_column, header)

    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(row)}", row=i)
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell {cell!r}", row=i, column=header[j]) from None
            if not math.isfinite(values[i - 2, j]):
                raise DataError(f"non-finite cell {cell!r}", row=i, column=header[j])
    return Dataset(
        values[:, xcols],
        values[:, ycol],
        x_names=tuple(header[c] for c in xcols),
        y_name=header[ycol],
    )


@dataclass(frozen=True)
class SubsampleSet:
    """``K+1`` bootstrap draws stored as parent indices; the last is validation."""

    parent: Dataset
    indices: np.ndarray
    mode: str
    seed: int
    _cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.indices.setflags(write=False)
        self._cache.extend(self.parent.take(row) for row in self.indices)

    @property
    def m(self) -> int:
        return self.indices.shape[1]

    @property
    def n_experts(self) -> int:
        return self.indices.shape[0] - 1

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __getitem__(self, k: int) -> Dataset:
        return self._cache[k]

    @property
    def training(self) -> list[Dataset]:
        return self._cache[:-1]

    @property
    def validation(self) -> Dataset:
        return self._cache[-1]


def bootstrap(parent: Dataset, k_plus_1: int, m: int, mode: str = WITH_REPLACEMENT, seed: int = 0) -> SubsampleSet:
    if m < 1:
        raise DataError(f"subsample size must be positive, got {m}")
    if k_plus_1 < 1:
        raise DataError(f"need at least one subsample, got {k_plus_1}")
    gen = rng.stream(seed, rng.BOOTSTRAP)
    if mode == WITH_REPLACEMENT:
        indices = gen.integers(0, parent.d, size=(k_plus_1, m))
    elif mode == WITHOUT_REPLACEMENT:
        if m > parent.d:
            raise DataError(f"cannot draw {m} points without replacement from {parent.d}")
        indices = np.stack([gen.permutation(parent.d)[:m] for _ in range(k_plus_1)])
    else:
        raise DataError(f"unknown bootstrap mode {mode!r}")
    return SubsampleSet(parent, indices.astype(np.intp), mode, seed)


def synthetic_logistic(theta, t, noise_sd: float, seed: int) -> Dataset:
    """Observations of the logistic law at times ``t`` with Gaussian noise."""
    from .model import logistic_predict

    t = np.asarray(t, dtype=float)
    clean = logistic_predict(theta, t)
    noise = rng.stream(seed, rng.SYNTHETIC_DATA).normal(0.0, noise_sd, size=t.shape)
    return Dataset(t, clean + noise, x_names=("t",), y_name="N")
