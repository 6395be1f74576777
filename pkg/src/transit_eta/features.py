"""Feature engineering: encodings, scaling, trip-time targets, and splits.

A feature vector is laid out as ``L`` one-hot line slots followed by five
scalars, in this order: distance to the next stop (m), day type (weekend=1),
rush-hour flag, per-line stop code, and far-status flag. With the full
production vocabulary of 232 lines the width is 237.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import UnknownLineError
from .ingest import CleanRecord

SCALAR_FEATURE_COUNT = 5
FAR_STATUS_THRESHOLD_M = 750.0
RUSH_HOUR_WINDOWS = ((6, 10), (15, 19))
UNKNOWN_STOP_CODE = -1
PREPROCESSOR_FORMAT_VERSION = 1

WORKDAY = "workday"
WEEKEND = "weekend"


def derive_day_type(t: datetime) -> str:
    """Classify a timestamp as ``workday`` (Mon-Fri) or ``weekend``."""
    return WEEKEND if t.weekday() >= 5 else WORKDAY


def derive_rush_hour(t: datetime) -> bool:
    """True when the local time of day falls in [06:00, 10:00) or [15:00, 19:00)."""
    hour = t.hour + t.minute / 60.0 + t.second / 3600.0
    return any(start <= hour < end for start, end in RUSH_HOUR_WINDOWS)


def derive_far_status(distance_m: float) -> bool:
    """True when the bus is less than the far threshold from the next stop."""
    if distance_m < 0:
        raise ValueError(f"distance must be non-negative, got {distance_m}")
    return distance_m < FAR_STATUS_THRESHOLD_M


def compute_trip_time(arrival: datetime, observed: datetime) -> int:
    """Trip time to the next stop: arrival minus observation time, in whole seconds."""
    if arrival < observed:
        raise ValueError(
            f"arrival {arrival} precedes observation {observed}; "
            "such records should have been dropped during cleaning"
        )
    return int(round((arrival - observed).total_seconds()))


class LineVocabulary:
    """Ordered set of bus-line names with dense indices."""

    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        self._index = {name: i for i, name in enumerate(self.names)}
        if len(self._index) != len(self.names):
            raise ValueError("line names must be unique")

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownLineError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, LineVocabulary) and self.names == other.names

    def to_dict(self) -> dict:
        return {"lines": self.names}

    @classmethod
    def from_dict(cls, data: dict) -> "LineVocabulary":
        return cls(data["lines"])


class StopVocabulary:
    """Per-line integer codes for stop names, dense from 0 in appearance order."""

    def __init__(self, stops_by_line: dict[str, Sequence[str]]):
        self.stops_by_line = {line: list(stops) for line, stops in stops_by_line.items()}
        self._codes = {
            line: {stop: i for i, stop in enumerate(stops)}
            for line, stops in self.stops_by_line.items()
        }

    def code(self, line: str, stop: str) -> int:
        """Stop code within its line, or UNKNOWN_STOP_CODE for unseen stops."""
        return self._codes.get(line, {}).get(stop, UNKNOWN_STOP_CODE)

    def __eq__(self, other) -> bool:
        return isinstance(other, StopVocabulary) and self.stops_by_line == other.stops_by_line

    def to_dict(self) -> dict:
        return {"stops_by_line": self.stops_by_line}

    @classmethod
    def from_dict(cls, data: dict) -> "StopVocabulary":
        return cls(data["stops_by_line"])


def fit_vocabularies(train: Sequence[CleanRecord]) -> tuple[LineVocabulary, StopVocabulary]:
    """Build line and stop vocabularies from the training records.

    Records are stable-sorted by line name first, so line indices follow
    lexicographic line order while stop codes within a line follow first
    appearance in the original input order.
    """
    if len(train) == 0:
        raise ValueError("cannot fit vocabularies on an empty training set")
    ordered = sorted(train, key=lambda r: r.published_line_name)
    line_names: list[str] = []
    stops_by_line: dict[str, list[str]] = {}
    for rec in ordered:
        line = rec.published_line_name
        if line not in stops_by_line:
            line_names.append(line)
            stops_by_line[line] = []
        stops = stops_by_line[line]
        if rec.next_stop_name not in stops:
            stops.append(rec.next_stop_name)
    return LineVocabulary(line_names), StopVocabulary(stops_by_line)


class MinMaxScaler(BaseEstimator, TransformerMixin):
    """Per-feature affine map to [0, 1] using training-set min and max.

    Constant features (max == min) map to 0. Values outside the fitted range
    scale outside [0, 1]; that is expected for validation data.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("scaler requires a non-empty 2-D array")
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        span = self.data_max_ - self.data_min_
        self.scale_ = np.where(span > 0, np.divide(1.0, span, where=span > 0), 0.0)
        return self

    def _check_fitted(self):
        if not hasattr(self, "data_min_"):
            raise NotFittedError("scaler is not fitted")

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        return (X - self.data_min_) * self.scale_

    def inverse_transform(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        span = self.data_max_ - self.data_min_
        return X * span + self.data_min_

    def to_dict(self) -> dict:
        self._check_fitted()
        return {"min": self.data_min_.tolist(), "max": self.data_max_.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MinMaxScaler":
        scaler = cls()
        scaler.data_min_ = np.asarray(data["min"], dtype=np.float64)
        scaler.data_max_ = np.asarray(data["max"], dtype=np.float64)
        span = scaler.data_max_ - scaler.data_min_
        scaler.scale_ = np.where(span > 0, np.divide(1.0, span, where=span > 0), 0.0)
        return scaler


def fit_scaler(rows) -> MinMaxScaler:
    """Fit a MinMaxScaler on unscaled feature rows (training data only)."""
    return MinMaxScaler().fit(rows)


@dataclass
class FeatureVector:
    """One scaled model input with its regression target."""

    values: np.ndarray
    target_trip_time: float
    line_index: int


@dataclass
class Dataset:
    """Matrix form of a feature-vector sequence."""

    X: np.ndarray
    y: np.ndarray
    line_index: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


def assemble_unscaled(
    records: Sequence[CleanRecord],
    line_vocab: LineVocabulary,
    stop_vocab: StopVocabulary,
    far_threshold_m: float = FAR_STATUS_THRESHOLD_M,
) -> Dataset:
    """Build the unscaled feature matrix, targets, and line indices.

    Raises UnknownLineError for a line not in the vocabulary; unseen stops
    get the reserved code (clamped to the fitted range at scaling time).
    Also fills in ``trip_time`` on the records.
    """
    n = len(records)
    width = line_vocab.size + SCALAR_FEATURE_COUNT
    X = np.zeros((n, width), dtype=np.float64)
    y = np.empty(n, dtype=np.float64)
    line_index = np.empty(n, dtype=np.int64)
    for k, rec in enumerate(records):
        li = line_vocab.index_of(rec.published_line_name)
        X[k, li] = 1.0
        X[k, -5] = rec.distance_from_stop
        X[k, -4] = 1.0 if derive_day_type(rec.recorded_at) == WEEKEND else 0.0
        X[k, -3] = 1.0 if derive_rush_hour(rec.recorded_at) else 0.0
        X[k, -2] = stop_vocab.code(rec.published_line_name, rec.next_stop_name)
        X[k, -1] = 1.0 if rec.distance_from_stop < far_threshold_m else 0.0
        trip = compute_trip_time(rec.arrival_time, rec.recorded_at)
        rec.trip_time = trip
        y[k] = trip
        line_index[k] = li
    return Dataset(X=X, y=y, line_index=line_index)


def build_matrix(
    records: Sequence[CleanRecord],
    line_vocab: LineVocabulary,
    stop_vocab: StopVocabulary,
    scaler: MinMaxScaler,
    far_threshold_m: float = FAR_STATUS_THRESHOLD_M,
) -> Dataset:
    """Assemble and scale the feature matrix for fitted vocabularies."""
    ds = assemble_unscaled(records, line_vocab, stop_vocab, far_threshold_m)
    # Unseen stops carry the reserved code; clamp to the fitted minimum so
    # they scale to 0 instead of a negative value.
    stop_col = ds.X.shape[1] - 2
    np.maximum(ds.X[:, stop_col], scaler.data_min_[stop_col], out=ds.X[:, stop_col])
    return Dataset(X=scaler.transform(ds.X), y=ds.y, line_index=ds.line_index)


def build_features(
    records: Sequence[CleanRecord],
    line_vocab: LineVocabulary,
    stop_vocab: StopVocabulary,
    scaler: MinMaxScaler,
    far_threshold_m: float = FAR_STATUS_THRESHOLD_M,
) -> list[FeatureVector]:
    """Per-record view of :func:`build_matrix`."""
    ds = build_matrix(records, line_vocab, stop_vocab, scaler, far_threshold_m)
    return [
        FeatureVector(values=ds.X[k], target_trip_time=float(ds.y[k]),
                      line_index=int(ds.line_index[k]))
        for k in range(len(ds))
    ]


def split(data, ratio: float, seed: int):
    """Deterministic shuffled split into (train, validation).

    ``len(train) == round(ratio * n)``; the two parts are disjoint and
    together cover the input.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(data)
    if n < 2:
        raise ValueError(f"need at least 2 items to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratio * n))
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    if isinstance(data, np.ndarray):
        return data[train_idx], data[val_idx]
    return [data[i] for i in train_idx], [data[i] for i in val_idx]


class FeaturePipeline(BaseEstimator, TransformerMixin):
    """Fitted feature preprocessor: vocabularies plus min-max scaler.

    ``fit`` learns vocabularies and scaling statistics from training records;
    ``transform`` maps records to the scaled feature matrix. Use
    :meth:`make_dataset` when targets and line indices are needed as well.
    """

    def __init__(self, far_threshold_m: float = FAR_STATUS_THRESHOLD_M):
        self.far_threshold_m = far_threshold_m

    def fit(self, records: Sequence[CleanRecord], y=None):
        self.line_vocab_, self.stop_vocab_ = fit_vocabularies(records)
        unscaled = assemble_unscaled(
            records, self.line_vocab_, self.stop_vocab_, self.far_threshold_m
        )
        self.scaler_ = fit_scaler(unscaled.X)
        self.n_features_ = self.line_vocab_.size + SCALAR_FEATURE_COUNT
        return self

    def _check_fitted(self):
        if not hasattr(self, "scaler_"):
            raise NotFittedError("feature pipeline is not fitted")

    def transform(self, records: Sequence[CleanRecord]) -> np.ndarray:
        return self.make_dataset(records).X

    def make_dataset(self, records: Sequence[CleanRecord]) -> Dataset:
        self._check_fitted()
        return build_matrix(
            records, self.line_vocab_, self.stop_vocab_, self.scaler_, self.far_threshold_m
        )

    def encode_request(
        self,
        line_name: str,
        next_stop_name: str,
        distance_from_stop: float,
        timestamp: datetime,
    ) -> np.ndarray:
        """Scaled feature vector for one inference request (no target needed)."""
        self._check_fitted()
        if distance_from_stop < 0:
            raise ValueError(
                f"distance must be non-negative, got {distance_from_stop}"
            )
        row = np.zeros(self.n_features_, dtype=np.float64)
        row[self.line_vocab_.index_of(line_name)] = 1.0
        row[-5] = distance_from_stop
        row[-4] = 1.0 if derive_day_type(timestamp) == WEEKEND else 0.0
        row[-3] = 1.0 if derive_rush_hour(timestamp) else 0.0
        code = self.stop_vocab_.code(line_name, next_stop_name)
        row[-2] = max(code, self.scaler_.data_min_[-2])
        row[-1] = 1.0 if distance_from_stop < self.far_threshold_m else 0.0
        return self.scaler_.transform(row.reshape(1, -1))[0]

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "format_version": PREPROCESSOR_FORMAT_VERSION,
            "far_threshold_m": self.far_threshold_m,
            "line_vocab": self.line_vocab_.to_dict(),
            "stop_vocab": self.stop_vocab_.to_dict(),
            "scaler": self.scaler_.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeaturePipeline":
        version = data.get("format_version")
        if version != PREPROCESSOR_FORMAT_VERSION:
            raise ValueError(
                f"unsupported preprocessor bundle version: "
                f"have={PREPROCESSOR_FORMAT_VERSION}, found={version}"
            )
        pipeline = cls(far_threshold_m=data["far_threshold_m"])
        pipeline.line_vocab_ = LineVocabulary.from_dict(data["line_vocab"])
        pipeline.stop_vocab_ = StopVocabulary.from_dict(data["stop_vocab"])
        pipeline.scaler_ = MinMaxScaler.from_dict(data["scaler"])
        pipeline.n_features_ = pipeline.line_vocab_.size + SCALAR_FEATURE_COUNT
        return pipeline

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load_json(cls, path) -> "FeaturePipeline":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
