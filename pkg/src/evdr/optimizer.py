"""Upper layer: box-constrained particle swarm search over the price vector.

Objectives are minimized; profits reported are the negated objective values.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from evdr.domain import PriceSchedule

Objective = Callable[[np.ndarray], float]
IterationCallback = Callable[[int, np.ndarray, np.ndarray], None]

GRID_SEARCH_BUDGET = 10**7


class InvalidBounds(ValueError):
    pass


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class SwarmConfig:
    """PSO hyperparameters.

    Defaults are the Clerc-Kennedy constriction values, with velocities
    clamped to the full width of the box.
    """

    swarm_size: int = 30
    iterations: int = 100
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    velocity_clamp: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.swarm_size < 1 or self.iterations < 1:
            raise ValueError("swarm_size and iterations must be >= 1")
        if min(self.inertia, self.cognitive, self.social) <= 0:
            raise ValueError("inertia, cognitive and social weights must be > 0")
        if not 0 < self.velocity_clamp <= 1:
            raise ValueError("velocity_clamp must be within (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class OptimizationRun:
    best_position: tuple[float, ...]
    best_value: float
    bounds: tuple[float, float]
    history: tuple[float, ...]
    mean_history: tuple[float, ...]
    evaluations: int
    bound_violations: int = 0

    def __post_init__(self) -> None:
        if any(b < a for a, b in zip(self.history, self.history[1:])):
            raise ValueError("best-so-far history must be non-decreasing")

    @property
    def best_profit(self) -> float:
        return -self.best_value

    @property
    def best_schedule(self) -> PriceSchedule:
        return PriceSchedule(self.best_position, *self.bounds)

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("iteration", "best_profit", "mean_profit"))
        for i, (best, mean) in enumerate(zip(self.history, self.mean_history), start=1):
            w.writerow((i, repr(best), repr(mean)))
        return buf.getvalue()


def _check_bounds(bounds: Sequence[float], dims: int) -> tuple[float, float]:
    if len(bounds) != 2:
        raise InvalidBounds("bounds must be a pair (lower, upper)")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise InvalidBounds(f"need finite lower < upper, got ({lo!r}, {hi!r})")
    if dims < 1:
        raise InvalidBounds("dimension must be >= 1")
    return lo, hi


def _evaluator(objective: Objective, jobs: int):
    if jobs <= 1:
        return lambda xs: np.array([objective(x) for x in xs], dtype=float), None
    pool = ThreadPoolExecutor(max_workers=jobs)
    return lambda xs: np.array(list(pool.map(objective, xs)), dtype=float), pool


def pso_optimize(
    objective: Objective,
    bounds: Sequence[float],
    dims: int,
    config: SwarmConfig = SwarmConfig(),
    *,
    jobs: int = 1,
    callback: IterationCallback | None = None,
) -> OptimizationRun:
    """Global-best PSO inside the box ``[lower, upper] ** dims``.

    Iteration 1 evaluates the initial swarm; each later iteration applies

        v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)

    with ``v`` clamped to ``velocity_clamp * (upper - lower)``, moves the
    particles, clips them into the box (zeroing velocity on clipped
    components) and re-evaluates. Personal and global bests are updated
    synchronously after each full evaluation, so results do not depend on
    evaluation order and are reproducible per ``config.seed``.

    ``callback(iteration, positions, values)`` sees every evaluated swarm.

    Raises:
        InvalidBounds: if ``lower >= upper`` or a bound is not finite.
    """
    lo, hi = _check_bounds(bounds, dims)
    rng = np.random.default_rng(config.seed)
    s = config.swarm_size
    vmax = config.velocity_clamp * (hi - lo)
    evaluate, pool = _evaluator(objective, jobs)
    try:
        x = rng.uniform(lo, hi, size=(s, dims))
        v = rng.uniform(-vmax, vmax, size=(s, dims))
        history, means = [], []
        violations = 0
        evaluations = 0
        pbest = pbest_f = gbest = None
        gbest_f = math.inf
        for it in range(1, config.iterations + 1):
            if it > 1:
                r1 = rng.random((s, dims))
                r2 = rng.random((s, dims))
                v = config.inertia * v + config.cognitive * r1 * (pbest - x) + config.social * r2 * (gbest - x)
                np.clip(v, -vmax, vmax, out=v)
                x = x + v
                clipped = (x < lo) | (x > hi)
                x = np.clip(x, lo, hi)
                v[clipped] = 0.0
            outside = int(np.count_nonzero((x < lo) | (x > hi)))
            violations += outside
            assert outside == 0, "particle left the price box"
            f = evaluate(x)
            evaluations += s
            if callback is not None:
                callback(it, x.copy(), f.copy())
            if pbest is None:
                pbest, pbest_f = x.copy(), f.copy()
            else:
                better = f < pbest_f
                pbest[better] = x[better]
                pbest_f[better] = f[better]
            k = int(np.argmin(pbest_f))
            if pbest_f[k] < gbest_f:
                gbest_f = float(pbest_f[k])
                gbest = pbest[k].copy()
            history.append(-gbest_f)
            means.append(-float(np.mean(f)))
    finally:
        if pool is not None:
            pool.shutdown()
    return OptimizationRun(
        best_position=tuple(float(p) for p in gbest),
        best_value=gbest_f,
        bounds=(lo, hi),
        history=tuple(history),
        mean_history=tuple(means),
        evaluations=evaluations,
        bound_violations=violations,
    )


@dataclass(frozen=True)
class GridSearchResult:
    best_position: tuple[float, ...]
    best_value: float
    bounds: tuple[float, float]
    evaluations: int

    @property
    def best_profit(self) -> float:
        return -self.best_value

    @property
    def best_schedule(self) -> PriceSchedule:
        return PriceSchedule(self.best_position, *self.bounds)


def grid_search(
    objective: Objective,
    bounds: Sequence[float],
    dims: int,
    steps_per_dim: int,
    budget: int = GRID_SEARCH_BUDGET,
) -> GridSearchResult:
    """Exhaustive search over an evenly spaced lattice including both endpoints.

    Points are visited in lexicographic order and only a strictly better value
    replaces the incumbent, so ties go to the lexicographically smallest point.

    Raises:
        BudgetExceeded: if ``steps_per_dim ** dims`` exceeds ``budget``.
    """
    lo, hi = _check_bounds(bounds, dims)
    if steps_per_dim < 2:
        raise ValueError("steps_per_dim must be >= 2 to include both endpoints")
    if steps_per_dim**dims > budget:
        raise BudgetExceeded(f"{steps_per_dim}^{dims} lattice points exceed the budget of {budget}")
    axis = np.linspace(lo, hi, steps_per_dim)
    best, best_f, count = None, math.inf, 0
    for point in itertools.product(axis, repeat=dims):
        x = np.array(point)
        f = objective(x)
        count += 1
        if f < best_f:
            best, best_f = x, f
    return GridSearchResult(tuple(float(p) for p in best), float(best_f), (lo, hi), count)
