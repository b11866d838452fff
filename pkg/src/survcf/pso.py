"""Particle swarm optimisation and its use for survival counterfactuals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .counterfactual import (
    BlackBoxModel,
    ClosestTrain,
    CounterfactualQuery,
    SearchRegion,
    build_search_region,
    loss_many,
    model_mean,
    restrict_many,
    sample_ball,
)
from .errors import NumericalError
from .survival import Dataset


def derive_coefficients(phi_1: float = 2.05, phi_2: float = 2.05, kappa: float = 1.0) -> tuple[float, float, float]:
    """Constriction coefficients ``(w, c_1, c_2)`` from ``phi_1``, ``phi_2`` and ``kappa``."""
    phi = phi_1 + phi_2
    if not phi > 4:
        raise ValueError(f"phi_1 + phi_2 must exceed 4, got {phi!r}")
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa!r}")
    eta = 2.0 * kappa / abs(2.0 - phi - math.sqrt(phi * phi - 4.0 * phi))
    return eta, eta * phi_1, eta * phi_2


_W, _C1, _C2 = derive_coefficients()


@dataclass(frozen=True)
class SwarmConfig:
    n_particles: int = 2000
    n_iterations: int = 1000
    w: float = _W
    c1: float = _C1
    c2: float = _C2
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1 or self.n_iterations < 1:
            raise ValueError("n_particles and n_iterations must be at least 1")
        if min(self.w, self.c1, self.c2) < 0:
            raise ValueError("w, c1 and c2 must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "SwarmConfig":
        """Build from the JSON config keys ``n_particles, n_iterations, phi1, phi2, kappa, seed``."""
        w, c1, c2 = derive_coefficients(doc.get("phi1", 2.05), doc.get("phi2", 2.05), doc.get("kappa", 1.0))
        return cls(
            n_particles=int(doc.get("n_particles", 2000)),
            n_iterations=int(doc.get("n_iterations", 1000)),
            w=w,
            c1=c1,
            c2=c2,
            seed=int(doc.get("seed", 0)),
        )


@dataclass
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    pbest: np.ndarray
    pbest_values: np.ndarray
    gbest: np.ndarray
    gbest_value: float


@dataclass
class PSOResult:
    best_position: np.ndarray
    best_value: float
    gbest_history: np.ndarray = field(repr=False)
    state: SwarmState = field(repr=False)


def _evaluate(objective, positions: np.ndarray) -> np.ndarray:
    values = np.asarray(objective(positions), dtype=float).reshape(-1)
    if values.shape[0] != positions.shape[0]:
        raise ValueError("objective must return one value per particle")
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericalError(f"objective is not finite at particle {bad}: {positions[bad].tolist()}")
    return values


def pso_minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    init_positions,
    init_velocities=None,
    config: SwarmConfig = SwarmConfig(),
    position_filter: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    callback: Optional[Callable[[int, SwarmState], None]] = None,
) -> PSOResult:
    """Minimise ``objective`` with a global-best particle swarm.

    Parameters
    ----------
    objective : callable
        Vectorised: maps an ``(N, d)`` array of positions to ``N`` values.
    init_positions : array of shape (N, d)
        Starting positions; ``config.n_particles`` is ignored in favour of N.
    init_velocities : array of shape (N, d), optional
        Zero when omitted.
    position_filter : callable, optional
        Applied to every updated position array (e.g. a projection onto the
        feasible region).
    callback : callable, optional
        Called as ``callback(t, state)`` after iteration ``t`` (0 = initial swarm).

    Notes
    -----
    The random factors ``r_1, r_2`` are scalars per particle and iteration,
    drawn from a generator seeded with ``(config.seed, t)``.
    """
    u = np.array(init_positions, dtype=float, ndmin=2)
    if u.shape[0] < 1:
        raise ValueError("at least one initial position is required")
    v = np.zeros_like(u) if init_velocities is None else np.array(init_velocities, dtype=float, ndmin=2)
    if v.shape != u.shape:
        raise ValueError("init_velocities must match init_positions")

    values = _evaluate(objective, u)
    g = int(np.argmin(values))
    state = SwarmState(u, v, u.copy(), values.copy(), u[g].copy(), float(values[g]))
    history = np.empty(config.n_iterations + 1)
    history[0] = state.gbest_value
    if callback is not None:
        callback(0, state)

    n = u.shape[0]
    for t in range(1, config.n_iterations + 1):
        rand = np.random.default_rng([config.seed, t]).random((n, 2))
        state.velocities = (
            config.w * state.velocities
            + (rand[:, :1] * config.c1) * (state.pbest - state.positions)
            + (rand[:, 1:] * config.c2) * (state.gbest - state.positions)
        )
        moved = state.positions + state.velocities
        state.positions = moved if position_filter is None else position_filter(moved)
        values = _evaluate(objective, state.positions)

        better = values < state.pbest_values
        state.pbest[better] = state.positions[better]
        state.pbest_values[better] = values[better]
        k = int(np.argmin(state.pbest_values))
        if state.pbest_values[k] < state.gbest_value:
            state.gbest = state.pbest[k].copy()
            state.gbest_value = float(state.pbest_values[k])
        history[t] = state.gbest_value
        if callback is not None:
            callback(t, state)

    return PSOResult(state.gbest.copy(), state.gbest_value, history, state)


@dataclass
class CounterfactualResult:
    z_opt: np.ndarray
    r: float
    r_opt: float
    loss_opt: float
    m_x: float
    region: SearchRegion
    closest: ClosestTrain
    gbest_history: np.ndarray = field(repr=False)

    @property
    def feasible(self) -> bool:
        return self.r_opt >= self.r


def solve_counterfactual_pso(
    query: CounterfactualQuery,
    model: BlackBoxModel,
    dataset: Dataset,
    config: SwarmConfig = SwarmConfig(),
    callback: Optional[Callable[[int, SwarmState], None]] = None,
) -> CounterfactualResult:
    """Counterfactual for any black box by PSO restricted to the search region.

    Particle 0 starts at the best training point ``z_ct``; the others are drawn
    uniformly from the ball around ``x`` (from the box when no training point
    is feasible) and pulled back by the restriction procedure. Velocities start
    at zero.
    """
    x = query.check_dim(model.dim)
    m_x = float(model_mean(model, x))
    region, closest = build_search_region(query, model, dataset)

    rng = np.random.default_rng([config.seed, 0])
    n_rest = config.n_particles - 1
    if region.radius is not None:
        others = sample_ball(rng, x, region.radius, n_rest)
    else:
        others = rng.uniform(region.lower, region.upper, size=(n_rest, x.size))
    init = np.vstack([closest.z_ct[None, :], restrict_many(region, others)])

    def objective(Z):
        return loss_many(query, model, Z, m_x)

    result = pso_minimize(
        objective,
        init,
        np.zeros_like(init),
        config,
        position_filter=lambda Z: restrict_many(region, Z),
        callback=callback,
    )
    z_opt = result.best_position
    r_opt = query.theta * (float(model_mean(model, z_opt)) - m_x)
    return CounterfactualResult(
        z_opt=z_opt,
        r=query.r,
        r_opt=r_opt,
        loss_opt=result.best_value,
        m_x=m_x,
        region=region,
        closest=closest,
        gbest_history=result.gbest_history,
    )
