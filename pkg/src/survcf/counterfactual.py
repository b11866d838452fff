"""Counterfactual problem definition: feasibility, penalised loss and search region."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import DimensionMismatchError
from .survival import Dataset, StepSurvivalFunction, TimeGrid

DEFAULT_C = 1e6


@runtime_checkable
class BlackBoxModel(Protocol):
    """Anything that predicts step survival functions on a fixed grid."""

    kind: str

    @property
    def dim(self) -> int: ...

    @property
    def grid(self) -> TimeGrid: ...

    def predict_values(self, X) -> np.ndarray: ...

    def predict_sf(self, x) -> StepSurvivalFunction: ...

    def mean(self, X) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class CounterfactualQuery:
    """Explain ``x``: find the closest ``z`` with ``theta * (m(z) - m(x)) >= r``."""

    x: np.ndarray
    theta: int
    r: float
    C: float = DEFAULT_C

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        if self.theta not in (-1, 1):
            raise ValueError(f"theta must be -1 or 1, got {self.theta!r}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r!r}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C!r}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", int(self.theta))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "C", float(self.C))

    def check_dim(self, d: int) -> np.ndarray:
        if self.x.size != d:
            raise DimensionMismatchError(f"query has {self.x.size} features, model expects {d}")
        return self.x

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "theta": self.theta, "r": self.r, "C": self.C}

    @classmethod
    def from_dict(cls, doc: dict) -> "CounterfactualQuery":
        return cls(np.array(doc["x"], dtype=float), int(doc["theta"]), float(doc["r"]), float(doc.get("C", DEFAULT_C)))


@dataclass(frozen=True, eq=False)
class SearchRegion:
    """Feature box, optionally intersected with the ball ``B(center, radius)``."""

    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionMismatchError("box bounds have different lengths")
        if np.any(lower > upper):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.radius is not None:
            if self.center is None:
                raise ValueError("a ball needs a center")
            if not self.radius >= 0:
                raise ValueError("radius must be non-negative")
            center = np.array(self.center, dtype=float).reshape(-1)
            if center.shape != lower.shape:
                raise DimensionMismatchError("ball center does not match box dimension")
            object.__setattr__(self, "center", center)
            object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.lower.size

    def with_ball(self, center, radius: float) -> "SearchRegion":
        return SearchRegion(self.lower, self.upper, center, radius)

    def contains(self, Z, atol: float = 1e-12) -> np.ndarray:
        """Membership test for each row of ``Z`` (box and, if present, ball)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        ok = np.all((Z >= self.lower - atol) & (Z <= self.upper + atol), axis=1)
        if self.radius is not None:
            ok &= np.linalg.norm(Z - self.center, axis=1) <= self.radius + atol * max(1.0, self.radius)
        return ok

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "center": None if self.center is None else self.center.tolist(),
            "radius": self.radius,
        }


def model_mean(model: BlackBoxModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.dim:
        raise DimensionMismatchError(f"expected {model.dim} features, got {X.shape[-1]}")
    return model.mean(X)


def psi_many(query: CounterfactualQuery, model: BlackBoxModel, Z, m_x: float | None = None) -> np.ndarray:
    """Vectorised feasibility function; ``m_x`` may be passed to skip recomputing it."""
    if m_x is None:
        m_x = float(model_mean(model, query.check_dim(model.dim)))
    return query.r - query.theta * (model_mean(model, np.atleast_2d(Z)) - m_x)


def psi(query: CounterfactualQuery, model: BlackBoxModel, z) -> float:
    """``r - theta * (m(z) - m(x))``; non-positive exactly for valid counterfactuals."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != model.dim:
        raise DimensionMismatchError(f"expected {model.dim} features, got {z.size}")
    return float(psi_many(query, model, z[None, :])[0])


def loss_many(query: CounterfactualQuery, model: BlackBoxModel, Z, m_x: float | None = None) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    hinge = np.maximum(0.0, query.C * psi_many(query, model, Z, m_x))
    return hinge + np.linalg.norm(Z - query.x, axis=1)


def loss(query: CounterfactualQuery, model: BlackBoxModel, z) -> float:
    """``max(0, C * psi(z)) + ||z - x||_2``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != model.dim:
        raise DimensionMismatchError(f"expected {model.dim} features, got {z.size}")
    return float(loss_many(query, model, z[None, :])[0])


def feature_bounds(data) -> SearchRegion:
    """Per-feature min/max box of a dataset (or a raw feature matrix)."""
    X = data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("cannot compute bounds of an empty dataset")
    return SearchRegion(X.min(axis=0), X.max(axis=0))


@dataclass(frozen=True, eq=False)
class ClosestTrain:
    z_ct: np.ndarray
    radius: float
    feasible_found: bool
    index: int
    loss: float


def closest_feasible_train(query: CounterfactualQuery, model: BlackBoxModel, dataset: Dataset) -> ClosestTrain:
    """Training point with the smallest loss; ties go to the lowest index."""
    query.check_dim(dataset.dim)
    losses = loss_many(query, model, dataset.X)
    j = int(np.argmin(losses))
    z_ct = dataset.X[j].copy()
    feasible = psi(query, model, z_ct) <= 0
    return ClosestTrain(
        z_ct=z_ct,
        radius=float(np.linalg.norm(query.x - z_ct)),
        feasible_found=bool(feasible),
        index=j,
        loss=float(losses[j]),
    )


def build_search_region(query: CounterfactualQuery, model: BlackBoxModel, dataset: Dataset):
    """Box from the training data, narrowed to the ball around ``x`` when a
    feasible training point exists. Returns ``(region, closest)``."""
    box = feature_bounds(dataset)
    closest = closest_feasible_train(query, model, dataset)
    if closest.feasible_found:
        return box.with_ball(query.x, closest.radius), closest
    return box, closest


def restrict_many(region: SearchRegion, Z) -> np.ndarray:
    """Restriction procedure applied row-wise: radial pull-back into the ball,
    then per-feature clamping into the box.

    The result is idempotent bit for bit.
    """
    Z = np.array(Z, dtype=float, ndmin=2)
    if region.radius is not None:
        diff = Z - region.center
        dist = np.linalg.norm(diff, axis=1)
        # slack keeps points already pulled back (up to rounding) from moving again
        over = dist > region.radius * (1.0 + 1e-12)
        if np.any(over):
            Z[over] = region.center + diff[over] * (region.radius / dist[over])[:, None]
    return np.clip(Z, region.lower, region.upper)


def restrict(region: SearchRegion, z) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != region.dim:
        raise DimensionMismatchError(f"expected {region.dim} features, got {z.size}")
    return restrict_many(region, z[None, :])[0]


def sample_ball(rng: np.random.Generator, center, radius: float, n: int, radius_rng=None) -> np.ndarray:
    """Uniform draws from the ball: normalised Gaussian direction, radius ``R * U**(1/d)``.

    Directions and radii come from separate streams when ``radius_rng`` is
    given, so a shorter draw is a prefix of a longer one.
    """
    center = np.asarray(center, dtype=float)
    d = center.size
    direction = rng.standard_normal((n, d))
    norms = np.linalg.norm(direction, axis=1)
    norms[norms == 0] = 1.0
    radii = radius * (radius_rng or rng).random(n) ** (1.0 / d)
    return center + direction * (radii / norms)[:, None]
