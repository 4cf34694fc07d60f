"""Dataset ingestion, preprocessing, splitting and synthetic generation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Sample:
    """One covariate vector with its real label."""

    x: np.ndarray
    y: float


class Dataset:
    """Column-major view of a sample collection: X is (n, d), y is (n,)."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"X must be 2-dimensional, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"label shape {y.shape} does not match {X.shape[0]} rows")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("dataset contains non-finite values")
        self.X = X
        self.y = y

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def samples(self) -> list[Sample]:
        return [Sample(self.X[i].copy(), float(self.y[i])) for i in range(len(self))]

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise DataError("cannot build a dataset from zero samples")
        return cls(np.stack([s.x for s in samples]), np.array([s.y for s in samples]))

    @classmethod
    def coerce(cls, obj) -> "Dataset":
        if isinstance(obj, cls):
            return obj
        return cls.from_samples(obj)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for linear-model synthetic data: y = w_true.x + noise.

    feature_spectrum, when given, sets the eigenvalues of the feature
    covariance (features are rotated by a seeded random orthogonal matrix),
    so ill-conditioned Gramians can be produced on demand.
    """

    N: int
    d: int
    noise: float = 0.0
    w_scale: float = 1.0
    feature_spectrum: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.N < 2:
            raise DataError(f"synthetic N must be >= 2, got {self.N}")
        if self.d < 1:
            raise DataError(f"synthetic d must be >= 1, got {self.d}")
        if self.noise < 0:
            raise DataError("noise level must be non-negative")
        if self.feature_spectrum is not None:
            if len(self.feature_spectrum) != self.d:
                raise DataError("feature_spectrum must have d entries")
            if any(s <= 0 for s in self.feature_spectrum):
                raise DataError("feature_spectrum entries must be positive")


@dataclass
class TransformRecord:
    """Preprocessing parameters, recorded for reproducibility."""

    mode: str
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "shift": None if self.shift is None else self.shift.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }


def load_csv(
    path: str | Path,
    feature_cols: Sequence[int],
    label_col: int,
    has_header: bool = False,
) -> Dataset:
    """Parse a numeric CSV into a Dataset, with row/column diagnostics."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows_x: list[list[float]] = []
    rows_y: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row:
                continue
            needed = max(max(feature_cols), label_col)
            if len(row) <= needed:
                raise DataError(
                    f"{path}:{lineno}: expected at least {needed + 1} columns, got {len(row)}"
                )
            try:
                rows_x.append([float(row[c]) for c in feature_cols])
                rows_y.append(float(row[label_col]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric field ({exc})") from exc
    if not rows_x:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows_x), np.array(rows_y))


def export_csv(data: Dataset, path: str | Path) -> None:
    """Full-precision CSV export (features then label, no header)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for i in range(len(data)):
            writer.writerow([repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))])


def preprocess(
    data: Dataset, mode: str = "standardize", standardize_labels: bool = False
) -> tuple[Dataset, TransformRecord]:
    """Feature-column preprocessing; labels stay raw unless standardize_labels.

    standardize: zero mean, unit variance (population convention);
    minmax: scale into [0, 1]; none: identity.
    Constant columns map to zero instead of dividing by zero.
    """
    if len(data) == 0:
        raise DataError("cannot preprocess an empty dataset")
    y = data.y
    if standardize_labels:
        ystd = y.std()
        y = (y - y.mean()) / (ystd if ystd > 0 else 1.0)
    if mode == "none":
        return Dataset(data.X, y), TransformRecord(mode="none")
    X = data.X
    if mode == "standardize":
        mean = X.mean(axis=0)
        std = X.std(axis=0)  # ddof=0
        scale = np.where(std > 0, std, 1.0)
        Xt = (X - mean) / scale
        Xt[:, std == 0] = 0.0
        return Dataset(Xt, y), TransformRecord("standardize", mean, scale)
    if mode == "minmax":
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        scale = np.where(span > 0, span, 1.0)
        Xt = (X - lo) / scale
        Xt[:, span == 0] = 0.0
        return Dataset(Xt, y), TransformRecord("minmax", lo, scale)
    raise DataError(f"unknown preprocessing mode {mode!r}")


def split(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split: first floor(fraction*N) rows train."""
    if not 0 < fraction <= 1:
        raise DataError(f"split fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    cut = int(fraction * len(data))
    return data.subset(perm[:cut]), data.subset(perm[cut:])


def synthesize(spec: SyntheticSpec, seed: int) -> tuple[Dataset, np.ndarray]:
    """Gaussian-feature linear data; returns the dataset and w_true."""
    rng = np.random.default_rng(seed)
    w_true = spec.w_scale * rng.standard_normal(spec.d)
    X = rng.standard_normal((spec.N, spec.d))
    if spec.feature_spectrum is not None:
        Q, _ = np.linalg.qr(rng.standard_normal((spec.d, spec.d)))
        X = X * np.sqrt(np.asarray(spec.feature_spectrum)) @ Q.T
    y = X @ w_true + spec.noise * rng.standard_normal(spec.N)
    return Dataset(X, y), w_true
