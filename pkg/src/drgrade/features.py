"""Feature vectors, dataset interchange, scaling, and extractor backends.

The on-disk dataset format is a UTF-8 CSV with header
``id,f0,f1,...,f{d-1},label``; floats are written with shortest
round-trip precision (always at least 9 significant digits survive) and
labels are the 3-class codes {0, 1, 2}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .imgio import RgbImage

STD_FLOOR = 1e-12
DEFAULT_DIM = 1056
DEFAULT_SPLIT = 528  # per-network share of the combined vector


class ClassLabel(IntEnum):
    """Severity after the 5-to-3 collapse; order is clinical severity."""

    NO_DR = 0
    MILD_DR = 1
    SEVERE_DR = 2


class FeatureFormatError(ValueError):
    """Feature CSV is structurally invalid (ragged row, bad float, ...)."""


class UnknownLabelError(ValueError):
    """Feature CSV carries a label outside {0, 1, 2}."""


class SourceMismatchError(ValueError):
    """Two vectors from different source images cannot be concatenated."""


class MissingEntryError(KeyError):
    """The file backend holds no vector for the requested source id."""


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    source_id: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError(f"feature values must be 1-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite feature value for source {self.source_id!r}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def concat_features(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    """Join two extractor outputs for the same image, a-block then b-block."""
    if a.source_id != b.source_id:
        raise SourceMismatchError(
            f"cannot concatenate features of {a.source_id!r} and {b.source_id!r}"
        )
    return FeatureVector(np.concatenate([a.values, b.values]), a.source_id)


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Per-dimension standardization fitted on training rows only.

    Uses population statistics; the per-dimension std is floored at
    ``STD_FLOOR`` so constant dimensions map to zero instead of dividing
    by zero.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("scaler needs a 2-D matrix with at least 2 rows")
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.maximum(X.std(axis=0), STD_FLOOR)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X * self.scale_ + self.mean_


@dataclass
class FeatureDataset:
    """Feature matrix with 3-class labels and source identifiers."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int
    ids: list[str]
    scaler: FeatureScaler | None = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got {self.features.shape}")
        if len(self.labels) != self.features.shape[0] or len(self.ids) != self.features.shape[0]:
            raise ValueError("features, labels, and ids must have equal length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("feature matrix holds non-finite values")
        bad = ~np.isin(self.labels, [int(c) for c in ClassLabel])
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise UnknownLabelError(f"unknown label {self.labels[row]} in row {row}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def vector(self, i: int) -> FeatureVector:
        return FeatureVector(self.features[i].copy(), self.ids[i])


def fit_scaler(ds: FeatureDataset) -> FeatureScaler:
    """Fit per-dimension standardization on a training dataset."""
    if len(ds) == 0:
        raise ValueError("cannot fit a scaler on an empty dataset")
    return FeatureScaler().fit(ds.features)


def load_features(path) -> FeatureDataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureFormatError(f"{path}: empty feature file") from None
        if len(header) < 3 or header[0] != "id" or header[-1] != "label":
            raise FeatureFormatError(f"{path}: header must be id,f0,...,label")
        dim = len(header) - 2
        expected = ["id"] + [f"f{i}" for i in range(dim)] + ["label"]
        if header != expected:
            raise FeatureFormatError(f"{path}: malformed header columns")

        ids: list[str] = []
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 2:
                raise FeatureFormatError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {dim + 2}"
                )
            try:
                vals = [float(v) for v in row[1:-1]]
            except ValueError:
                raise FeatureFormatError(f"{path}: line {lineno} has a non-numeric feature") from None
            if not all(math.isfinite(v) for v in vals):
                raise FeatureFormatError(f"{path}: line {lineno} has a non-finite feature")
            try:
                label = int(row[-1])
            except ValueError:
                raise UnknownLabelError(f"{path}: line {lineno} label {row[-1]!r}") from None
            if label not in (0, 1, 2):
                raise UnknownLabelError(f"{path}: line {lineno} label {label} not in {{0,1,2}}")
            ids.append(row[0])
            rows.append(vals)
            labels.append(label)

    if not rows:
        return FeatureDataset(np.zeros((0, dim)), np.zeros(0, dtype=np.int64), [])
    return FeatureDataset(np.array(rows, dtype=np.float64), np.array(labels), ids)


def save_features(ds: FeatureDataset, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{i}" for i in range(ds.dim)] + ["label"])
        for i in range(len(ds)):
            writer.writerow(
                [ds.ids[i]] + [repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])]
            )


# ---------------------------------------------------------------------------
# Extractor backends
# ---------------------------------------------------------------------------

class FileBackend:
    """Serves precomputed vectors keyed by source id (from a feature CSV)."""

    def __init__(self, table: dict[str, np.ndarray]):
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    @classmethod
    def from_csv(cls, path) -> "FileBackend":
        ds = load_features(path)
        return cls({ds.ids[i]: ds.features[i] for i in range(len(ds))})

    def extract(self, img: RgbImage | None, source_id: str) -> FeatureVector:
        if source_id not in self._table:
            raise MissingEntryError(f"no precomputed features for source {source_id!r}")
        return FeatureVector(self._table[source_id].copy(), source_id)


class OnnxBackend:
    """Runs an exported network on the image pixels.

    The model must declare one image input (1x3xHxW or 3xHxW, float in
    [0, 1]) and one flat output vector. Images are nearest-neighbor
    resized to the declared spatial dims before inference.
    """

    def __init__(self, model):
        from .onnx_rt import OnnxModel

        if not isinstance(model, OnnxModel):
            raise TypeError("OnnxBackend requires an OnnxModel")
        self.model = model

    @classmethod
    def from_file(cls, path) -> "OnnxBackend":
        from .onnx_rt import load_model

        return cls(load_model(path))

    def extract(self, img: RgbImage, source_id: str) -> FeatureVector:
        from .onnx_rt import run_image_model

        values = run_image_model(self.model, img.data)
        return FeatureVector(values, source_id)


def extract_features(img: RgbImage | None, backend, source_id: str) -> FeatureVector:
    """Pull a feature vector for one image from the configured backend."""
    return backend.extract(img, source_id)


def channel_stats_features(img: RgbImage, grid: int = 2) -> np.ndarray:
    """Per-channel mean and std over a grid x grid tiling of the image.

    A cheap classical descriptor (2 * 3 * grid^2 values) used when no
    neural extractor is configured and by the preprocessing-impact
    experiment.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    data = img.data.astype(np.float64)
    h, w = data.shape[:2]
    ys = np.linspace(0, h, grid + 1).astype(int)
    xs = np.linspace(0, w, grid + 1).astype(int)
    out: list[float] = []
    for gy in range(grid):
        for gx in range(grid):
            tile = data[ys[gy] : ys[gy + 1], xs[gx] : xs[gx + 1]]
            out.extend(tile.mean(axis=(0, 1)))
            out.extend(tile.std(axis=(0, 1)))
    return np.array(out, dtype=np.float64)
