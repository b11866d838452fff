"""Cox proportional hazards model: partial-likelihood fitting and Breslow baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NumericalError
from .survival import Dataset, StepSurvivalFunction, TimeGrid, build_time_grid, restricted_means

logger = logging.getLogger(__name__)


def survival_power(values, u):
    """Compute ``values ** exp(u)`` in log space.

    ``values`` has shape (..., q+1) and ``u`` broadcasts against its leading
    axes. Zero survival stays zero and unit survival stays one.
    """
    values = np.asarray(values, dtype=float)
    u = np.asarray(u, dtype=float)[..., None]
    with np.errstate(divide="ignore"):
        log_s = np.log(values)
    # exp(u) * log(s) with log(1) = 0 exactly and log(0) = -inf
    expo = np.where(values == 1.0, 0.0, np.exp(u) * np.where(values > 0, log_s, -1.0))
    out = np.exp(expo)
    return np.where(values > 0, out, 0.0)


@dataclass(frozen=True)
class CoxFitReport:
    log_partial_likelihood: float
    iterations: int
    converged: bool
    gradient_norm: float


@dataclass(frozen=True, eq=False)
class CoxModel:
    """Fitted Cox model: coefficients plus baseline survival on the training grid."""

    b: np.ndarray
    baseline: StepSurvivalFunction
    meta: dict = field(default_factory=dict)

    kind = "cox"

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        if not np.all(np.isfinite(b)):
            raise ValueError("coefficients must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def grid(self) -> TimeGrid:
        return self.baseline.grid

    @property
    def dim(self) -> int:
        return self.b.size

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} features, got {X.shape[-1]}")
        return np.sum(X * self.b, axis=-1)

    def predict_values(self, X) -> np.ndarray:
        """Survival values on the grid, shape (n, q+1) for a 2-D input."""
        return survival_power(self.baseline.values, self.linear_predictor(X))

    def predict_sf(self, x) -> StepSurvivalFunction:
        return cox_predict_sf(self, x)

    def mean(self, X) -> np.ndarray:
        """Restricted mean time-to-event for each row of ``X``."""
        return restricted_means(self.grid, self.predict_values(X))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "b": self.b.tolist(),
            "grid_knots": self.grid.knots.tolist(),
            "baseline_values": self.baseline.values.tolist(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CoxModel":
        grid = TimeGrid(np.array(doc["grid_knots"], dtype=float))
        return cls(
            b=np.array(doc["b"], dtype=float),
            baseline=StepSurvivalFunction(grid, np.array(doc["baseline_values"], dtype=float)),
            meta=dict(doc.get("meta", {})),
        )


def _risk_sums(time_sorted, eta_sorted, X_sorted, with_hessian: bool):
    """Reverse cumulative risk-set sums evaluated at each record's tie group.

    Returns ``S0``, ``S1`` (and ``S2``) with the factor ``exp(-shift)`` applied,
    plus that shift.
    """
    shift = eta_sorted.max()
    w = np.exp(eta_sorted - shift)
    first = np.searchsorted(time_sorted, time_sorted, side="left")
    s0 = np.cumsum(w[::-1])[::-1][first]
    s1 = np.cumsum((w[:, None] * X_sorted)[::-1], axis=0)[::-1][first]
    s2 = None
    if with_hessian:
        outer = w[:, None, None] * X_sorted[:, :, None] * X_sorted[:, None, :]
        s2 = np.cumsum(outer[::-1], axis=0)[::-1][first]
    return s0, s1, s2, shift


def log_partial_likelihood(dataset: Dataset, b, l2_penalty: float = 0.0, derivatives: bool = True):
    """Breslow log partial likelihood, minus ``0.5 * l2_penalty * |b|^2``.

    Returns ``(value, gradient, hessian)``; the derivatives are ``None`` when
    ``derivatives`` is false.
    """
    b = np.asarray(b, dtype=float)
    order = np.argsort(dataset.time, kind="stable")
    t = dataset.time[order]
    X = dataset.X[order]
    ev = dataset.event[order].astype(bool)
    eta = X @ b
    s0, s1, s2, shift = _risk_sums(t, eta, X, with_hessian=derivatives)
    value = float(np.sum(eta[ev] - shift - np.log(s0[ev])) - 0.5 * l2_penalty * b @ b)
    if not derivatives:
        return value, None, None
    xbar = s1[ev] / s0[ev][:, None]
    grad = (X[ev] - xbar).sum(axis=0) - l2_penalty * b
    second = s2[ev] / s0[ev][:, None, None] - xbar[:, :, None] * xbar[:, None, :]
    hess = -second.sum(axis=0) - l2_penalty * np.eye(b.size)
    return value, grad, hess


def breslow_baseline(dataset: Dataset, b, grid: TimeGrid) -> StepSurvivalFunction:
    """Breslow estimate of the baseline survival on ``grid``.

    The cumulative hazard jumps by ``d_j / sum_{T_i >= t_j} exp(x_i^T b)`` at
    every knot carrying ``d_j`` events.
    """
    b = np.asarray(b, dtype=float)
    if dataset.dim != b.size:
        raise DimensionMismatchError(f"expected {dataset.dim} coefficients, got {b.size}")
    inner = grid.knots[1:-1]
    if not np.array_equal(inner, np.unique(dataset.time)):
        raise ValueError("time grid was not built from this dataset")
    risk = np.exp(dataset.X @ b)
    order = np.argsort(dataset.time, kind="stable")
    t_sorted = dataset.time[order]
    risk_tail = np.cumsum(risk[order][::-1])[::-1]
    at_risk = risk_tail[np.searchsorted(t_sorted, inner, side="left")]
    deaths = np.bincount(
        np.searchsorted(inner, dataset.time[dataset.event == 1]),
        minlength=inner.size,
    ).astype(float)
    if np.any(at_risk[deaths > 0] <= 0):
        raise NumericalError("empty risk set at an event time")
    cum_hazard = np.cumsum(deaths / at_risk)
    values = np.concatenate(([1.0], np.exp(-cum_hazard)))
    return StepSurvivalFunction(grid, values)


def fit_cox(
    dataset: Dataset,
    l2_penalty: float = 0.0,
    tolerance: float = 1e-8,
    max_iter: int = 100,
    t_gamma: float | None = None,
) -> tuple[CoxModel, CoxFitReport]:
    """Fit ``b`` by Newton-Raphson with step halving on the partial likelihood.

    Non-convergence is reported in the returned :class:`CoxFitReport`, not raised.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if l2_penalty < 0:
        raise ValueError("l2_penalty must be non-negative")
    b = np.zeros(dataset.dim)
    value, grad, hess = log_partial_likelihood(dataset, b, l2_penalty)
    converged = bool(np.linalg.norm(grad) <= tolerance)
    it = 0
    while not converged and it < max_iter:
        it += 1
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(60):
            cand = b + scale * step
            cand_value, _, _ = log_partial_likelihood(dataset, cand, l2_penalty, derivatives=False)
            if np.isfinite(cand_value) and cand_value >= value - 1e-12 * abs(value):
                break
            scale *= 0.5
        else:
            logger.warning("step halving failed at iteration %d", it)
            break
        b = cand
        value, grad, hess = log_partial_likelihood(dataset, b, l2_penalty)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient while fitting the Cox model")
        converged = bool(np.linalg.norm(grad) <= tolerance)
        logger.debug("newton iter %d: loglik=%.12g |grad|=%.3e", it, value, np.linalg.norm(grad))

    grid = build_time_grid(dataset, t_gamma)
    model = CoxModel(b=b, baseline=breslow_baseline(dataset, b, grid))
    report = CoxFitReport(
        log_partial_likelihood=value,
        iterations=it,
        converged=converged,
        gradient_norm=float(np.linalg.norm(grad)),
    )
    return model, report


def cox_predict_sf(model: CoxModel, x) -> StepSurvivalFunction:
    x = np.asarray(x, dtype=float).reshape(-1)
    return StepSurvivalFunction(model.grid, model.predict_values(x))


def cox_mean(model: CoxModel, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(model.mean(x))
