"""Series, window and normalization primitives shared across the package."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

EPS_STD = 1e-4


class WindowLabel(str, enum.Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"
    UNKNOWN = "unknown"


class SeriesError(ValueError):
    """Raised for malformed series or incompatible windowing requests."""


@dataclass
class TimeSeries:
    """A (length x channels) matrix with optional per-timestep 0/1 labels."""

    entity_id: str
    values: np.ndarray
    labels: Optional[np.ndarray] = None
    split: str = "train"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise SeriesError(f"{self.entity_id}: values must be a non-empty (L, D) matrix")
        bad = ~np.isfinite(values)
        if bad.any():
            t, d = np.argwhere(bad)[0]
            raise SeriesError(f"{self.entity_id}: non-finite value at timestep {t}, channel {d}")
        self.values = values
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise SeriesError(
                    f"{self.entity_id}: labels length {labels.shape} does not match L={values.shape[0]}"
                )
            if not np.isin(labels, (0, 1)).all():
                raise SeriesError(f"{self.entity_id}: labels must be 0/1")
            self.labels = labels.astype(np.int8)
        if self.split not in ("train", "test"):
            raise SeriesError(f"unknown split tag {self.split!r}")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    @property
    def labelled(self) -> bool:
        return self.labels is not None


@dataclass
class Window:
    """A contiguous slice of a series. ``injection`` names the anomaly type if synthetic."""

    entity_id: str
    start: int
    values: np.ndarray
    label: WindowLabel
    injection: Optional[str] = None

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def provenance(self) -> str:
        return "original" if self.injection is None else f"injected({self.injection})"

    @property
    def injected(self) -> bool:
        return self.injection is not None

    def with_values(self, values: np.ndarray, injection: str) -> "Window":
        return replace(self, values=values, injection=injection, label=WindowLabel.ANOMALOUS)


@dataclass
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray
    eps: float = field(default=EPS_STD)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise SeriesError("mean and std must have the same length")
        if not (self.std >= self.eps).all() or self.eps <= 0:
            raise SeriesError(f"std must be floored at eps={self.eps}")

    @property
    def dims(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def identity(cls, dims: int) -> "ChannelStats":
        return cls(np.zeros(dims), np.ones(dims))


def label_window(covered_labels: Optional[np.ndarray]) -> WindowLabel:
    """Anomalous iff any covered timestep is labelled 1; unknown without labels."""
    if covered_labels is None:
        return WindowLabel.UNKNOWN
    return WindowLabel.ANOMALOUS if np.any(np.asarray(covered_labels) == 1) else WindowLabel.NORMAL


def window_count(length: int, ws: int, stride: int) -> int:
    if ws > length:
        return 0
    return (length - ws) // stride + 1


def make_windows(series: TimeSeries, ws: int, stride: int = 1) -> list[Window]:
    """Slice ``series`` into windows of ``ws`` timesteps, ordered by start index.

    Window values are views into ``series.values``; injection always copies.
    """
    if ws < 1 or stride < 1:
        raise SeriesError("window size and stride must be positive")
    if ws > series.length:
        raise SeriesError(f"series shorter than window ({series.length} < {ws})")
    starts = range(0, series.length - ws + 1, stride)
    if series.labels is None:
        labels = [WindowLabel.UNKNOWN] * len(starts)
    else:
        # anomalous count in [t0, t0 + ws) via prefix sums
        csum = np.concatenate([[0], np.cumsum(series.labels, dtype=np.int64)])
        hits = csum[np.asarray(starts) + ws] - csum[np.asarray(starts)]
        labels = [WindowLabel.ANOMALOUS if h > 0 else WindowLabel.NORMAL for h in hits]
    return [
        Window(series.entity_id, t0, series.values[t0 : t0 + ws], lab)
        for t0, lab in zip(starts, labels)
    ]


def stack_windows(windows: list[Window]) -> np.ndarray:
    """(N, WS, D) float32 array for the encoder."""
    if not windows:
        return np.zeros((0, 0, 0), dtype=np.float32)
    return np.stack([w.values for w in windows]).astype(np.float32)


def _check_dims(series: TimeSeries, stats: ChannelStats) -> None:
    if stats.dims != series.dims:
        raise SeriesError(
            f"{series.entity_id}: stats have {stats.dims} channels, series has {series.dims}"
        )


def standardize(series: TimeSeries, stats: ChannelStats) -> TimeSeries:
    _check_dims(series, stats)
    return replace(series, values=(series.values - stats.mean) / stats.std)


def destandardize(series: TimeSeries, stats: ChannelStats) -> TimeSeries:
    _check_dims(series, stats)
    return replace(series, values=series.values * stats.std + stats.mean)
