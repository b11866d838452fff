"""Synthetic Weibull-Cox survival data and CSV ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .survival import Dataset

logger = logging.getLogger(__name__)

MISSING = {"", "na", "nan", "null", "none", "."}


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    d: int
    b: tuple
    lambda_0: float = 1e-5
    v: float = 2.0
    censor_event_prob: float = 0.9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(c) for c in self.b))
        if self.n < 2 or self.d < 1:
            raise ValueError("need n >= 2 and d >= 1")
        if len(self.b) != self.d:
            raise ValueError(f"b has {len(self.b)} entries, expected {self.d}")
        if not self.lambda_0 > 0 or not self.v > 0:
            raise ValueError("lambda_0 and v must be positive")
        if not 0.0 <= self.censor_event_prob <= 1.0:
            raise ValueError("censor_event_prob must lie in [0, 1]")


def draw_coefficients(d: int, seed: int) -> np.ndarray:
    """Coefficients drawn from U([0, 1]^d) on a stream separate from the data."""
    return np.random.default_rng([seed, 1]).uniform(size=d)


def weibull_cox_time(xi, lin_pred, lambda_0: float = 1e-5, v: float = 2.0):
    """Inverse-transform Weibull-Cox time ``(-ln xi / (lambda_0 exp(x^T b)))^(1/v)``."""
    return (-np.log(xi) / (lambda_0 * np.exp(lin_pred))) ** (1.0 / v)


def generate_synthetic(config: GeneratorConfig) -> Dataset:
    """Features uniform on the unit cube, Weibull-Cox times, Bernoulli event flags.

    The event flag is independent of the time, and the observed time is the
    generated time whatever the flag.
    """
    rng = np.random.default_rng([config.seed, 0])
    X = rng.uniform(size=(config.n, config.d))
    xi = rng.uniform(size=config.n)
    while np.any(xi == 0.0):
        zero = xi == 0.0
        xi[zero] = rng.uniform(size=int(zero.sum()))
    time = weibull_cox_time(xi, X @ np.asarray(config.b), config.lambda_0, config.v)
    event = (rng.uniform(size=config.n) < config.censor_event_prob).astype(np.int64)
    if event.sum() == 0:
        raise ValueError("generated data has no events; raise censor_event_prob or n")
    return Dataset(X, time, event)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    ``features=None`` takes every column not named as time, event or ignored.
    ``where`` keeps only rows whose columns equal the given strings.
    """

    features: tuple | None = None
    time: str = "time"
    event: str = "event"
    ignore: tuple = ()
    where: dict = field(default_factory=dict)


STANFORD2 = CsvSchema(features=("age", "t5"), time="time", event="status", ignore=("id",))


def myeloid_schema(arm: str) -> CsvSchema:
    """Myeloid trial restricted to one treatment arm; ``sex`` is not a covariate."""
    return CsvSchema(time="futime", event="death", ignore=("id", "sex", "trt"), where={"trt": arm})


SCHEMAS = {
    "default": CsvSchema(),
    "stanford2": STANFORD2,
    "myeloid-a": myeloid_schema("A"),
    "myeloid-b": myeloid_schema("B"),
}


def _parse_float(cell: str, column: str, line: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ValueError(f"line {line}: cannot parse {cell!r} in column {column!r}") from None


def load_csv(path, schema: CsvSchema = CsvSchema()) -> tuple[Dataset, int]:
    """Read a dataset; returns ``(dataset, n_dropped)`` where dropped rows had
    a missing value in a mapped column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.time, schema.event, *schema.where):
            if col not in header:
                raise ValueError(f"column {col!r} not found in {path}")
        if schema.features is None:
            skip = {schema.time, schema.event, *schema.ignore}
            features = tuple(c for c in header if c not in skip)
        else:
            features = tuple(schema.features)
            missing = [c for c in features if c not in header]
            if missing:
                raise ValueError(f"feature columns {missing} not found in {path}")
        if not features:
            raise ValueError("no feature columns selected")

        rows, times, events, dropped = [], [], [], 0
        for line, rec in enumerate(reader, start=2):
            if any(rec.get(k) != v for k, v in schema.where.items()):
                continue
            cells = [rec[c] for c in (*features, schema.time, schema.event)]
            if any(c is None or c.strip().lower() in MISSING for c in cells):
                dropped += 1
                continue
            rows.append([_parse_float(rec[c], c, line) for c in features])
            times.append(_parse_float(rec[schema.time], schema.time, line))
            ev = _parse_float(rec[schema.event], schema.event, line)
            if ev not in (0.0, 1.0):
                raise ValueError(f"line {line}: event indicator must be 0 or 1, got {rec[schema.event]!r}")
            events.append(int(ev))
    if not rows:
        raise ValueError(f"no usable rows in {path}")
    if dropped:
        logger.info("dropped %d rows with missing values from %s", dropped, path)
    return Dataset(np.array(rows), np.array(times), np.array(events), features), dropped


def write_csv(dataset: Dataset, path) -> None:
    """Write features, ``time`` and ``event`` columns with round-trip float formatting."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.feature_names, "time", "event"])
        for x, t, e in zip(dataset.X, dataset.time, dataset.event):
            writer.writerow([*(repr(float(v)) for v in x), repr(float(t)), int(e)])
