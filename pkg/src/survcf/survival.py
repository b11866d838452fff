"""Core survival-analysis containers: datasets, time grids and step survival functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatchError


@dataclass(frozen=True, eq=False)
class EventRecord:
    """One observation ``(x, delta, time)``."""

    x: np.ndarray
    delta: int
    time: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if self.delta not in (0, 1):
            raise ValueError(f"event indicator must be 0 or 1, got {self.delta!r}")
        if not (np.isfinite(self.time) and self.time > 0):
            raise ValueError(f"observed time must be positive, got {self.time!r}")

    def __eq__(self, other):
        if not isinstance(other, EventRecord):
            return NotImplemented
        return self.delta == other.delta and self.time == other.time and np.array_equal(self.x, other.x)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Right-censored survival data stored column-wise.

    Parameters
    ----------
    X : array of shape (n, d)
        Feature matrix.
    time : array of shape (n,)
        Observed times, all strictly positive.
    event : array of shape (n,)
        Event indicators (1 = event observed, 0 = censored).
    feature_names : tuple of str, optional
        Column names, used when writing CSV files.
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        time = np.array(self.time, dtype=float).reshape(-1)
        event = np.array(self.event).reshape(-1)
        n = X.shape[0]
        if time.shape[0] != n or event.shape[0] != n:
            raise ValueError("X, time and event must have the same number of rows")
        if n < 2:
            raise ValueError(f"a dataset needs at least 2 records, got {n}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            raise ValueError("observed times must be finite and positive")
        if not np.all((event == 0) | (event == 1)):
            raise ValueError("event indicators must be 0 or 1")
        event = event.astype(np.int64)
        if event.sum() == 0:
            raise ValueError("dataset contains no events")
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match the number of columns")
        for arr in (X, time, event):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_records(cls, records: Iterable[EventRecord], feature_names: Sequence[str] = ()) -> "Dataset":
        records = list(records)
        if not records:
            raise ValueError("empty dataset")
        dims = {r.x.shape[0] for r in records}
        if len(dims) != 1:
            raise DimensionMismatchError("records have differing feature dimensions")
        return cls(
            X=np.vstack([r.x for r in records]),
            time=np.array([r.time for r in records]),
            event=np.array([r.delta for r in records]),
            feature_names=tuple(feature_names),
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def records(self) -> list[EventRecord]:
        return list(iter(self))

    def __iter__(self) -> Iterator[EventRecord]:
        for i in range(self.n):
            yield EventRecord(self.X[i], int(self.event[i]), float(self.time[i]))

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.time[idx], self.event[idx], self.feature_names)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Knots ``0 = t_0 < t_1 < ... < t_q < t_{q+1}``.

    ``t_1 .. t_q`` are the distinct observed times and ``t_{q+1} = t_q + t_gamma``.
    """

    knots: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float).reshape(-1)
        if knots.size < 2:
            raise ValueError("a time grid needs at least two knots")
        if knots[0] != 0.0:
            raise ValueError("the first knot must be 0")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def gaps(self) -> np.ndarray:
        """Interval lengths ``mu_j = t_{j+1} - t_j`` for ``j = 0..q``."""
        return np.diff(self.knots)

    @property
    def q(self) -> int:
        return self.knots.size - 2

    @property
    def t_gamma(self) -> float:
        return float(self.knots[-1] - self.knots[-2])

    @property
    def t_first(self) -> float:
        return float(self.knots[1])

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    def index_of(self, times) -> np.ndarray:
        """Index ``j`` of the interval ``[t_j, t_{j+1})`` containing each time."""
        idx = np.searchsorted(self.knots, np.asarray(times, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.q)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.knots, other.knots)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StepSurvivalFunction:
    """Survival function that equals ``values[j]`` on ``[t_j, t_{j+1})``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.q + 1:
            raise ValueError(f"expected {self.grid.q + 1} values, got {values.size}")
        if values[0] != 1.0:
            raise ValueError("survival must equal 1 on the first interval")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("survival values must lie in [0, 1]")
        if np.any(np.diff(values) > 0):
            raise ValueError("survival values must be non-increasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.values[self.grid.index_of(t)]
        return np.where(t > self.grid.horizon, 0.0, out)


def default_t_gamma(distinct_times: np.ndarray) -> float:
    """Mean spacing of adjacent distinct times (``t_1`` itself when there is only one)."""
    distinct_times = np.asarray(distinct_times, dtype=float)
    if distinct_times.size == 1:
        return float(distinct_times[0])
    return float((distinct_times[-1] - distinct_times[0]) / (distinct_times.size - 1))


def build_time_grid(data, t_gamma: float | None = None) -> TimeGrid:
    """Build the event-time grid from a dataset (or a plain sequence of times).

    Duplicated times are merged by exact equality.
    """
    times = data.time if isinstance(data, Dataset) else np.asarray(data, dtype=float).reshape(-1)
    if times.size == 0:
        raise ValueError("cannot build a time grid from an empty dataset")
    distinct = np.unique(times)
    if distinct[-1] <= 0:
        raise ValueError("all observed times are zero")
    if distinct[0] <= 0:
        raise ValueError("observed times must be positive")
    if t_gamma is None:
        t_gamma = default_t_gamma(distinct)
    if not t_gamma > 0:
        raise ValueError(f"t_gamma must be positive, got {t_gamma!r}")
    return TimeGrid(np.concatenate(([0.0], distinct, [distinct[-1] + t_gamma])))


def restricted_mean(sf: StepSurvivalFunction) -> float:
    """Integral of the step survival function over ``[0, t_{q+1}]``."""
    return float(restricted_means(sf.grid, sf.values))


def restricted_means(grid: TimeGrid, values: np.ndarray) -> np.ndarray:
    """Vectorised :func:`restricted_mean` over the last axis.

    Row-wise reduction keeps each result independent of the batch it came in.
    """
    return np.sum(np.asarray(values, dtype=float) * grid.gaps, axis=-1)
