"""Genetic-algorithm field optimizer.

Each fitness evaluation is one forward propagation followed by a projection
onto the target, so with the semiclassical backend it costs O(N) coherent
state pairs instead of the O(N^2) per field point of a ZBR sweep.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import oct as oc


@dataclass
class GAParams:
    population: int = 40
    generations: int = 50
    mutation_sigma: float = 0.1  # fraction of each parameter's range
    mutation_rate: float = 0.2
    crossover_rate: float = 0.9
    tournament: int = 3
    elitism: int = 2
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError(f"population must be >= 2, got {self.population}")
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must lie in [0, population)")
        if self.tournament < 1:
            raise ValueError("tournament size must be >= 1")


class SumOfGaussians:
    """K Gaussian-envelope carriers: A exp(-(t - tc)^2 / (2 s^2)) cos(w (t - tc) + phase)."""

    name = "sum_of_gaussians"

    def __init__(self, k, horizon, amplitude, omega, width=None):
        if k < 1:
            raise ValueError("need at least one component")
        self.k = int(k)
        self.horizon = float(horizon)
        w_lo, w_hi = omega
        s_lo, s_hi = width if width is not None else (0.05 * horizon, 0.5 * horizon)
        one = [(-amplitude, amplitude), (0.0, horizon), (s_lo, s_hi), (w_lo, w_hi), (-np.pi, np.pi)]
        self.bounds = np.array(one * self.k, dtype=float)

    def field(self, params, times):
        t = np.asarray(times, dtype=float)[:, None]
        a, tc, s, w, ph = np.asarray(params, dtype=float).reshape(self.k, 5).T
        return np.sum(a * np.exp(-0.5 * ((t - tc) / s) ** 2) * np.cos(w * (t - tc) + ph), axis=1)


class SplineKnots:
    """Cubic spline through K interior knots on a uniform grid, zero at both ends."""

    name = "spline_knots"

    def __init__(self, k, horizon, amplitude):
        if k < 1:
            raise ValueError("need at least one knot")
        self.k = int(k)
        self.horizon = float(horizon)
        self.knots = np.linspace(0.0, horizon, self.k + 2)
        self.bounds = np.tile([-amplitude, amplitude], (self.k, 1)).astype(float)

    def field(self, params, times):
        y = np.concatenate([[0.0], np.asarray(params, dtype=float), [0.0]])
        return CubicSpline(self.knots, y, bc_type="natural")(np.asarray(times, dtype=float))


@dataclass
class GAResult:
    best_params: np.ndarray
    best_field: np.ndarray  # on problem.times (interval midpoints sampled)
    best_fitness: float
    best_fidelity: float
    history: np.ndarray  # (generation, best-so-far, mean)
    evaluations: int
    pair_cost: int  # coherent-state pairs over all evaluations

    def to_csv(self, path):
        np.savetxt(path, self.history, fmt=["%d", "%.12e", "%.12e"], delimiter=",",
                   header="generation,best,mean", comments="")


def field_samples(problem, parameterization, params):
    return parameterization.field(params, problem.times + 0.5 * problem.dt_field)


def fitness(problem, parameterization, params):
    """(fitness, fidelity, pair cost) for one individual."""
    eps = field_samples(problem, parameterization, params)
    fid, _, b = oc.forward(problem, eps)
    return fid - problem.alpha * oc.fluence(eps, problem.dt_field), fid, b.counter.pairs


def _evaluate_all(problem, parameterization, pop, pool):
    if pool is None:
        res = [fitness(problem, parameterization, ind) for ind in pop]
    else:
        # map keeps submission order, so results do not depend on the worker count
        res = list(pool.map(fitness, [problem] * len(pop), [parameterization] * len(pop), list(pop)))
    return np.array([r[0] for r in res]), np.array([r[1] for r in res]), sum(r[2] for r in res)


def ga_optimize(problem, parameterization, params: GAParams | None = None) -> GAResult:
    """Maximize fidelity - alpha * fluence over the parameterization's box."""
    gp = params or GAParams()
    rng = np.random.default_rng(gp.seed)
    lo, hi = parameterization.bounds.T
    span = hi - lo
    n_par = lo.size
    pop = lo + rng.random((gp.population, n_par)) * span
    pool = ProcessPoolExecutor(gp.workers) if gp.workers > 1 else None
    try:
        fit, fid, cost = _evaluate_all(problem, parameterization, pop, pool)
        n_eval = gp.population
        hist = []
        best = int(np.argmax(fit))
        best_x, best_f, best_fid = pop[best].copy(), fit[best], fid[best]
        hist.append((0, best_f, fit.mean()))
        for gen in range(1, gp.generations + 1):
            order = np.argsort(-fit, kind="stable")
            children = [pop[i].copy() for i in order[:gp.elitism]]
            while len(children) < gp.population:
                a = _tournament(rng, fit, gp.tournament)
                b = _tournament(rng, fit, gp.tournament)
                x, y = pop[a].copy(), pop[b].copy()
                if rng.random() < gp.crossover_rate:
                    u = rng.random(n_par)
                    x, y = u * x + (1 - u) * y, u * y + (1 - u) * x
                for c in (x, y):
                    mask = rng.random(n_par) < gp.mutation_rate
                    c[mask] += gp.mutation_sigma * span[mask] * rng.standard_normal(mask.sum())
                    np.clip(c, lo, hi, out=c)
                    if len(children) < gp.population:
                        children.append(c)
            pop = np.array(children)
            fit_new, fid_new, c_new = _evaluate_all(problem, parameterization, pop[gp.elitism:], pool)
            fit = np.concatenate([fit[order[:gp.elitism]], fit_new])
            fid = np.concatenate([fid[order[:gp.elitism]], fid_new])
            cost += c_new
            n_eval += pop.shape[0] - gp.elitism
            k = int(np.argmax(fit))
            if fit[k] > best_f:
                best_x, best_f, best_fid = pop[k].copy(), fit[k], fid[k]
            hist.append((gen, best_f, fit.mean()))
    finally:
        if pool is not None:
            pool.shutdown()
    return GAResult(best_x, field_samples(problem, parameterization, best_x), float(best_f), float(best_fid),
                    np.array(hist), n_eval, int(cost))


def _tournament(rng, fit, size):
    idx = rng.integers(0, fit.size, size)
    return int(idx[np.argmax(fit[idx])])
