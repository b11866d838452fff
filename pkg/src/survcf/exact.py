"""Exact counterfactuals for a Cox black box.

For a Cox model the mean time-to-event depends on ``z`` only through
``u = z^T b`` and is non-increasing in ``u``. The nonlinear condition
``psi(z) <= 0`` therefore collapses to one halfspace, and the counterfactual
is the Euclidean projection of ``x`` onto that halfspace intersected with the
feature box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counterfactual import CounterfactualQuery, SearchRegion
from .cox import CoxModel, survival_power
from .errors import InadmissibleMarginError, InfeasibleQueryError, NumericalError
from .survival import TimeGrid


def pi_of_u(baseline, gaps, u):
    """Mean time-to-event as a function of the linear predictor ``u``."""
    return np.sum(survival_power(baseline, u) * np.asarray(gaps, dtype=float), axis=-1)


def r_admissible_range(theta: int, m_x: float, grid: TimeGrid) -> float:
    """Upper end ``r_max`` of the admissible interval ``(0, r_max]``."""
    _check_theta(theta)
    t1, horizon = grid.t_first, grid.horizon
    if not t1 < m_x < horizon:
        raise ValueError(f"mean {m_x!r} lies outside ({t1!r}, {horizon!r})")
    return 0.5 * ((1 + theta) * (horizon - m_x) + (1 - theta) * (m_x - t1))


def _check_theta(theta):
    if theta not in (-1, 1):
        raise ValueError(f"theta must be -1 or 1, got {theta!r}")


@dataclass(frozen=True, eq=False)
class ZetaProblem:
    """``zeta(u) = r - theta * (pi(u) - m_x)`` for a fixed baseline."""

    baseline: np.ndarray
    gaps: np.ndarray
    m_x: float
    theta: int
    r: float

    def __post_init__(self):
        _check_theta(self.theta)
        baseline = np.asarray(self.baseline, dtype=float)
        if baseline[0] != 1.0:
            raise ValueError("baseline survival must start at 1")
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "gaps", np.asarray(self.gaps, dtype=float))
        if not self.r > 0:
            raise InadmissibleMarginError(self.r, self.r_max)

    @property
    def horizon(self) -> float:
        return float(self.gaps.sum())

    @property
    def r_max(self) -> float:
        t1 = float(self.gaps[0])
        return 0.5 * ((1 + self.theta) * (self.horizon - self.m_x) + (1 - self.theta) * (self.m_x - t1))

    def __call__(self, u):
        return self.r - self.theta * (pi_of_u(self.baseline, self.gaps, u) - self.m_x)


def solve_zeta_root(problem: ZetaProblem, abs_tol: float | None = None, max_doublings: int = 200) -> float:
    """Root of ``zeta`` by bisection on an expanding bracket.

    The returned point always lies on the feasible side (``zeta <= 0``) of the
    root, within ``abs_tol`` of zero. ``abs_tol`` defaults to
    ``1e-10 * t_{q+1}``.
    """
    if abs_tol is None:
        abs_tol = 1e-10 * problem.horizon
    if problem.r > problem.r_max:
        raise InadmissibleMarginError(problem.r, problem.r_max)

    # f(v) = zeta(theta * v) is non-decreasing in v; feasible side is f <= 0
    def f(v):
        return float(problem(problem.theta * v))

    lo, hi = -1.0, 1.0
    f_lo, f_hi = f(lo), f(hi)
    for _ in range(max_doublings):
        if f_lo <= 0 < f_hi:
            break
        if f_lo > 0:
            lo, hi, f_hi = 2.0 * lo, lo, f_lo
            f_lo = f(lo)
        else:
            lo, hi, f_lo = hi, 2.0 * hi, f_hi
            f_hi = f(hi)
    else:
        raise NumericalError(
            f"no sign change of zeta after {max_doublings} doublings; r = {problem.r!r} "
            f"is at the open end of its range (r_max = {problem.r_max!r})"
        )

    while abs(f_lo) > abs_tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = f(mid)
        if f_mid <= 0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    if abs(f_lo) > abs_tol:
        raise NumericalError(f"bisection stalled with |zeta| = {abs(f_lo)!r} > {abs_tol!r}")
    return float(problem.theta * lo)


@dataclass(frozen=True, eq=False)
class LinearCounterfactualConstraint:
    """Halfspace ``theta * z^T b <= c``."""

    b: np.ndarray
    theta: int
    u_star: float

    def __post_init__(self):
        _check_theta(self.theta)
        if not np.isfinite(self.u_star):
            raise NumericalError("root value must be finite")
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    @property
    def normal(self) -> np.ndarray:
        return self.theta * self.b

    @property
    def offset(self) -> float:
        # 0.5 * ((1 + theta) u_+ - (1 - theta) u_-) with u_star in the active slot
        return self.theta * self.u_star

    def violation(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) @ self.normal - self.offset


def _project_halfspace(y, a, c, a_sq):
    excess = y @ a - c
    if excess <= 0:
        return y
    return y - (excess / a_sq) * a


def project_halfspace_box(
    x,
    constraint: LinearCounterfactualConstraint,
    lower,
    upper,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Euclidean projection of ``x`` onto halfspace ∩ box by Dykstra's algorithm.

    Raises :class:`InfeasibleQueryError` when the halfspace misses the box.
    """
    x = np.asarray(x, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    a, c = constraint.normal, constraint.offset
    best_corner = np.where(a > 0, lower, upper)
    if best_corner @ a - c > 1e-12 * max(1.0, abs(c)):
        raise InfeasibleQueryError(
            f"the counterfactual halfspace does not intersect the feature box "
            f"(min over box {float(best_corner @ a)!r} > {float(c)!r})"
        )
    a_sq = float(a @ a)
    if a_sq == 0.0:
        return np.clip(x, lower, upper)

    y = x.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        h = _project_halfspace(y + p, a, c, a_sq)
        p = y + p - h
        y_new = np.clip(h + q, lower, upper)
        q = h + q - y_new
        step = np.linalg.norm(y_new - y)
        y = y_new
        if step <= tol and np.linalg.norm(h - y) <= tol:
            break
    else:
        raise NumericalError("alternating projections did not converge")
    return y


def solve_exact(
    query: CounterfactualQuery,
    model: CoxModel,
    region: SearchRegion,
    abs_tol: float | None = None,
) -> tuple[np.ndarray, float]:
    """Counterfactual for a Cox model: returns ``(z_ver, r_ver)``."""
    x = query.check_dim(model.dim)
    gaps = model.grid.gaps
    m_x = float(model.mean(x))
    r_max = r_admissible_range(query.theta, m_x, model.grid)
    if query.r > r_max:
        raise InadmissibleMarginError(query.r, r_max)
    problem = ZetaProblem(model.baseline.values, gaps, m_x, query.theta, query.r)
    u_star = solve_zeta_root(problem, abs_tol)
    constraint = LinearCounterfactualConstraint(model.b, query.theta, u_star)
    z_ver = project_halfspace_box(x, constraint, region.lower, region.upper)
    r_ver = query.theta * (float(model.mean(z_ver)) - m_x)
    return z_ver, r_ver
