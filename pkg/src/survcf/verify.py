"""Brute-force verification by uniform sampling in the search region."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .counterfactual import (
    BlackBoxModel,
    CounterfactualQuery,
    SearchRegion,
    model_mean,
    psi_many,
    restrict_many,
    sample_ball,
)
from .errors import NoFeasibleSampleError

THREADS_ENV = "SURVCF_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class SampleResult:
    z_ver: np.ndarray
    distance: float
    n_samples: int
    n_feasible: int
    seed: int


def _scan_chunk(query, model, region, m_x, seed, chunk_index, size):
    dir_rng = np.random.default_rng([seed, chunk_index, 0])
    rad_rng = np.random.default_rng([seed, chunk_index, 1])
    Z = restrict_many(region, sample_ball(dir_rng, query.x, region.radius, size, radius_rng=rad_rng))
    ok = psi_many(query, model, Z, m_x) <= 0
    n_ok = int(ok.sum())
    if n_ok == 0:
        return None, np.inf, 0
    dist = np.where(ok, np.linalg.norm(Z - query.x, axis=1), np.inf)
    j = int(np.argmin(dist))
    return Z[j], float(dist[j]), n_ok


def sample_verify(
    query: CounterfactualQuery,
    model: BlackBoxModel,
    region: SearchRegion,
    n_samples: int = 1_000_000,
    seed: int = 0,
    chunk_size: int = 10_000,
    threads: int | None = None,
) -> SampleResult:
    """Closest feasible point among ``n_samples`` uniform draws from the ball,
    each passed through the restriction procedure.

    Chunk ``i`` uses generators seeded with ``(seed, i, 0)`` (directions) and
    ``(seed, i, 1)`` (radii), so results do not depend on ``threads`` and a
    smaller sample is a prefix of a larger one. Ties go to the lowest sample index.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if region.radius is None:
        raise ValueError("verification sampling needs a region with a ball")
    x = query.check_dim(model.dim)
    m_x = float(model_mean(model, x))
    sizes = [min(chunk_size, n_samples - s) for s in range(0, n_samples, chunk_size)]
    threads = default_threads() if threads is None else threads

    def run(i):
        return _scan_chunk(query, model, region, m_x, seed, i, sizes[i])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(len(sizes))))
    else:
        results = [run(i) for i in range(len(sizes))]

    best_z, best_d, n_feasible = None, np.inf, 0
    for z, dist, n_ok in results:
        n_feasible += n_ok
        if dist < best_d:
            best_z, best_d = z, dist
    if best_z is None:
        raise NoFeasibleSampleError(n_samples)
    return SampleResult(best_z, best_d, n_samples, n_feasible, seed)


@dataclass(frozen=True)
class VerificationReport:
    theta: int
    r: float
    r_ver: float
    r_opt: float
    dist_ver: float
    dist_opt: float
    z_ver_z_opt: float
    A: float
    z_ver: list
    z_opt: list
    x: list
    n_samples: int | None
    n_feasible: int | None
    seed: int | None
    model_kind: str

    TABLE_COLUMNS = ("theta", "r", "r_ver", "r_opt", "dist_ver", "dist_opt")

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_header(self) -> list[str]:
        last = "z_ver_z_opt" if self.model_kind == "cox" else "A"
        return list(self.TABLE_COLUMNS) + [last]

    def csv_row(self) -> list:
        """Table row: theta, r, r_ver, r_opt, both distances, then
        ``||z_ver - z_opt||`` for Cox models or ``A`` otherwise."""
        last = self.z_ver_z_opt if self.model_kind == "cox" else self.A
        return [self.theta, self.r, self.r_ver, self.r_opt, self.dist_ver, self.dist_opt, last]


def build_report(
    query: CounterfactualQuery,
    model: BlackBoxModel,
    z_ver,
    z_opt,
    n_samples: int | None = None,
    n_feasible: int | None = None,
    seed: int | None = None,
) -> VerificationReport:
    x = query.check_dim(model.dim)
    z_ver = np.asarray(z_ver, dtype=float)
    z_opt = np.asarray(z_opt, dtype=float)
    m = model_mean(model, np.vstack([x, z_ver, z_opt]))
    dist_ver = float(np.linalg.norm(z_ver - x))
    dist_opt = float(np.linalg.norm(z_opt - x))
    return VerificationReport(
        theta=query.theta,
        r=query.r,
        r_ver=float(query.theta * (m[1] - m[0])),
        r_opt=float(query.theta * (m[2] - m[0])),
        dist_ver=dist_ver,
        dist_opt=dist_opt,
        z_ver_z_opt=float(np.linalg.norm(z_ver - z_opt)),
        A=dist_ver - dist_opt,
        z_ver=z_ver.tolist(),
        z_opt=z_opt.tolist(),
        x=x.tolist(),
        n_samples=n_samples,
        n_feasible=n_feasible,
        seed=seed,
        model_kind=getattr(model, "kind", "unknown"),
    )
