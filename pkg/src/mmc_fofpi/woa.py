"""Whale Optimization Algorithm on a bounded box (minimization).

Each iteration draws every random number serially from one seeded
generator, then evaluates the whole population. Fitness evaluation may be
parallel without changing results.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class WoaParams:
    bounds: np.ndarray
    pop_size: int = 30
    max_iter: int = 100
    spiral_b: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2 or self.bounds.shape[0] < 1:
            raise ConfigurationError("bounds must be a (dim, 2) array of (lo, hi)")
        if not np.all(np.isfinite(self.bounds)) or np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ConfigurationError("bounds must be finite with lo < hi")
        if self.pop_size < 2 or self.max_iter < 1 or not self.spiral_b > 0:
            raise ConfigurationError("need pop_size >= 2, max_iter >= 1, spiral_b > 0")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def lower(self):
        return self.bounds[:, 0]

    @property
    def upper(self):
        return self.bounds[:, 1]


@dataclass
class Swarm:
    positions: np.ndarray
    fitness: np.ndarray
    leader: np.ndarray
    leader_fitness: float
    rng: np.random.Generator
    iter: int = 0


@dataclass
class WoaResult:
    best_x: np.ndarray
    best_f: float
    log: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.best_x, self.best_f, self.log))


def _sanitize(values):
    f = np.asarray(values, dtype=float)
    return np.where(np.isfinite(f), f, np.inf)


def _evaluate(objective, positions, n_workers=1):
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            return _sanitize(list(pool.map(objective, positions)))
    return _sanitize([objective(x) for x in positions])


def init_swarm(params: WoaParams, objective, n_workers=1) -> Swarm:
    rng = np.random.default_rng(params.seed)
    pos = params.lower + rng.random((params.pop_size, params.dim)) * (params.upper - params.lower)
    fit = _evaluate(objective, pos, n_workers)
    if not np.any(np.isfinite(fit)):
        raise RuntimeError("objective is non-finite on every initial position")
    best = int(np.argmin(fit))
    return Swarm(pos, fit, pos[best].copy(), float(fit[best]), rng)


def move(whale, leader, a, p, r1, r2, l, x_rand=None, spiral_b=1.0):
    """Position update for given random draws (no clamping)."""
    if p >= 0.5:
        d = np.abs(leader - whale)
        return d * np.exp(spiral_b * l) * np.cos(2 * np.pi * l) + leader
    big_a = 2 * a * r1 - a
    c = 2 * r2
    target = leader if abs(big_a) < 1 or x_rand is None else x_rand
    d = np.abs(c * target - whale)
    return target - big_a * d


def update_position(whale, leader, a, rng, population=None, spiral_b=1.0, bounds=None):
    """Draw ``p, r1, r2, l`` (and a random agent when exploring) and move."""
    p, r1, r2 = rng.random(3)
    l = rng.uniform(-1.0, 1.0)
    x_rand = None
    if p < 0.5 and abs(2 * a * r1 - a) >= 1 and population is not None:
        x_rand = population[rng.integers(len(population))]
    x = move(np.asarray(whale, float), np.asarray(leader, float), a, p, r1, r2, l,
             x_rand, spiral_b)
    if bounds is not None:
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
    return x


def optimize(objective, params: WoaParams, progress_sink=None, n_workers=1) -> WoaResult:
    """Minimize ``objective`` over the box; non-finite values count as +inf.

    ``progress_sink(iter, best_f, mean_f, elapsed_s)`` is called after the
    initial population (iter 0) and after every iteration. The returned log
    holds the same tuples.
    """
    t0 = time.perf_counter()
    swarm = init_swarm(params, objective, n_workers)
    log = []

    def record():
        finite = swarm.fitness[np.isfinite(swarm.fitness)]
        mean_f = float(finite.mean()) if finite.size else float("inf")
        row = (swarm.iter, swarm.leader_fitness, mean_f, time.perf_counter() - t0)
        log.append(row)
        if progress_sink is not None:
            progress_sink(*row)

    record()
    for it in range(1, params.max_iter + 1):
        a = 2.0 * (1.0 - it / params.max_iter)
        snapshot = swarm.positions.copy()
        swarm.positions = np.array([
            update_position(w, swarm.leader, a, swarm.rng, snapshot, params.spiral_b, params.bounds)
            for w in snapshot])
        swarm.fitness = _evaluate(objective, swarm.positions, n_workers)
        best = int(np.argmin(swarm.fitness))
        if swarm.fitness[best] < swarm.leader_fitness:
            swarm.leader = swarm.positions[best].copy()
            swarm.leader_fitness = float(swarm.fitness[best])
        swarm.iter = it
        record()
    return WoaResult(swarm.leader.copy(), swarm.leader_fitness, log)
