"""Comparison optimizers and the full-season ground-truth harness.

NSGA-II (non-dominated sorting, crowding, simulated-binary crossover,
polynomial mutation) and quasi-random search provide fair-budget baselines
for the Bayesian loop, aligned on total evaluator calls.  The sample-average
benchmark dispatches every day of a season at weight one to estimate the
true annual objectives, and the error metrics compare estimator quality —
mean relative deviation of the posterior-mean and raw typical-scenario
values from the benchmark.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .dispatch import (
    CapacityScheme,
    ObjectivePair,
    SystemConfig,
    TypicalDay,
    investment_cost,
    simulate_day,
)
from .moo import (
    IterationRecord,
    ParetoFront,
    adaptive_reference,
    hypervolume,
    pareto_filter,
    standardize,
)

__all__ = [
    "ErrorReport",
    "Nsga2Config",
    "error_metrics",
    "nsga2_run",
    "random_search",
    "random_search_run",
    "saa_benchmark",
]


def _penalty_pair(Y: np.ndarray) -> np.ndarray:
    # Same policy as the Bayesian loop: worst seen plus ten spans plus one.
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    span = Y.max(axis=0) - Y.min(axis=0)
    return Y.max(axis=0) + 10.0 * span + 1.0


def _evaluate(evaluator, x: np.ndarray, Y_prior: list[list[float]]) -> tuple[list[float], bool]:
    try:
        y = [float(v) for v in evaluator(np.asarray(x, dtype=float))]
    except Exception:
        if not Y_prior:
            raise
        return list(_penalty_pair(np.array(Y_prior))), True
    if len(y) != 2:
        raise ValueError("evaluator must return two objective values")
    return y, False


def _record(iteration: int, x, y, Y_all: np.ndarray, penalized: bool) -> IterationRecord:
    Yh, _, _ = standardize(Y_all)
    reference = adaptive_reference(Yh)
    return IterationRecord(
        iteration=iteration,
        x=[float(v) for v in x],
        objectives=[float(v) for v in y],
        sigma_n=[0.0, 0.0],
        reference=[float(v) for v in reference],
        hypervolume=float(hypervolume(Yh, reference)),
        acquisition_value=0.0,
        fallback=False,
        penalized=penalized,
        front_size=len(pareto_filter(Y_all)),
    )


def _front(X: np.ndarray, Y: np.ndarray) -> ParetoFront:
    idx = pareto_filter(Y)
    return ParetoFront(X=X[idx], F=Y[idx], indices=idx, provenance="raw-observation")


# ---------------------------------------------------------------------------
# NSGA-II


@dataclasses.dataclass
class Nsga2Config:
    """Operator settings; defaults follow common practice, population 12."""

    population: int = 12
    generations: int = 40
    crossover_prob: float = 0.9
    crossover_eta: float = 15.0
    mutation_prob: float | None = None  # None -> 1/dimension
    mutation_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2 != 0:
            raise ValueError("population must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.crossover_eta <= 0 or self.mutation_eta <= 0:
            raise ValueError("distribution indices must be positive")


def _dominates(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b) and np.any(a < b))


def _nondominated_sort(F: np.ndarray) -> list[list[int]]:
    n = len(F)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            if _dominates(F[i], F[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif _dominates(F[j], F[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = [[i for i in range(n) if counts[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        fronts.append(nxt)
    return fronts[:-1]


def _crowding(F: np.ndarray, members: Sequence[int]) -> np.ndarray:
    m = len(members)
    dist = np.zeros(m)
    if m <= 2:
        return np.full(m, np.inf)
    sub = F[list(members)]
    for k in range(sub.shape[1]):
        order = np.argsort(sub[:, k], kind="stable")
        span = sub[order[-1], k] - sub[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        for pos in range(1, m - 1):
            dist[order[pos]] += (sub[order[pos + 1], k] - sub[order[pos - 1], k]) / span
    return dist


def _rank_and_crowding(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = np.empty(len(F), dtype=int)
    crowd = np.empty(len(F))
    for r, members in enumerate(_nondominated_sort(F)):
        rank[members] = r
        crowd[members] = _crowding(F, members)
    return rank, crowd


def _tournament(rng, rank, crowd) -> int:
    i, j = rng.integers(len(rank)), rng.integers(len(rank))
    if rank[i] != rank[j]:
        return int(i if rank[i] < rank[j] else j)
    if crowd[i] != crowd[j]:
        return int(i if crowd[i] > crowd[j] else j)
    return int(i)


def _sbx(rng, p1, p2, lo, hi, prob, eta):
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > prob:
        return c1, c2
    for k in range(len(p1)):
        if rng.random() > 0.5 or abs(p1[k] - p2[k]) < 1e-14:
            continue
        u = rng.random()
        beta = (2.0 * u) ** (1.0 / (eta + 1.0)) if u <= 0.5 else (
            1.0 / (2.0 * (1.0 - u))
        ) ** (1.0 / (eta + 1.0))
        c1[k] = 0.5 * ((1 + beta) * p1[k] + (1 - beta) * p2[k])
        c2[k] = 0.5 * ((1 - beta) * p1[k] + (1 + beta) * p2[k])
    return np.clip(c1, lo, hi), np.clip(c2, lo, hi)


def _polynomial_mutation(rng, x, lo, hi, prob, eta):
    y = x.copy()
    for k in range(len(x)):
        if rng.random() > prob or hi[k] <= lo[k]:
            continue
        u = rng.random()
        if u < 0.5:
            delta = (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0
        else:
            delta = 1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0))
        y[k] = x[k] + delta * (hi[k] - lo[k])
    return np.clip(y, lo, hi)


def nsga2_run(
    evaluator: Callable,
    bounds,
    config: Nsga2Config | None = None,
    capture_populations: list | None = None,
) -> tuple[ParetoFront, int, list[IterationRecord]]:
    """Standard NSGA-II over box bounds; both objectives minimized.

    Returns the non-dominated set of all evaluated points, the total
    evaluator-call count (population x generations, the fair-budget
    currency), and one log record per evaluation.  Pass a list as
    capture_populations to collect per-generation (X, F) snapshots.
    """
    config = config or Nsga2Config()
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if bounds.shape[1] != 2 or np.any(bounds[:, 1] < bounds[:, 0]):
        raise ValueError("bounds must be (d, 2) with upper >= lower")
    lo, hi = bounds[:, 0], bounds[:, 1]
    d = len(lo)
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / d
    rng = np.random.default_rng(config.seed)

    X_all: list[np.ndarray] = []
    Y_all: list[list[float]] = []
    records: list[IterationRecord] = []

    # evaluate a batch sequentially, logging one record per call
    def evaluate_batch(batch: np.ndarray) -> np.ndarray:
        out = np.empty((len(batch), 2))
        for i, x in enumerate(batch):
            y, penalized = _evaluate(evaluator, x, Y_all)
            X_all.append(np.asarray(x, dtype=float))
            Y_all.append(y)
            out[i] = y
            records.append(
                _record(len(Y_all) - 1, x, y, np.array(Y_all), penalized)
            )
        return out

    pop_X = rng.uniform(lo, hi, size=(config.population, d))
    pop_F = evaluate_batch(pop_X)
    if capture_populations is not None:
        capture_populations.append((pop_X.copy(), pop_F.copy()))

    for _ in range(config.generations - 1):
        rank, crowd = _rank_and_crowding(pop_F)
        children = []
        while len(children) < config.population:
            a = _tournament(rng, rank, crowd)
            b = _tournament(rng, rank, crowd)
            c1, c2 = _sbx(rng, pop_X[a], pop_X[b], lo, hi, config.crossover_prob, config.crossover_eta)
            children.append(_polynomial_mutation(rng, c1, lo, hi, pm, config.mutation_eta))
            if len(children) < config.population:
                children.append(_polynomial_mutation(rng, c2, lo, hi, pm, config.mutation_eta))
        child_X = np.array(children)
        child_F = evaluate_batch(child_X)

        comb_X = np.vstack([pop_X, child_X])
        comb_F = np.vstack([pop_F, child_F])
        chosen: list[int] = []
        for members in _nondominated_sort(comb_F):
            if len(chosen) + len(members) <= config.population:
                chosen.extend(members)
            else:
                dist = _crowding(comb_F, members)
                order = np.argsort(-dist, kind="stable")
                chosen.extend(members[i] for i in order[: config.population - len(chosen)])
                break
        pop_X, pop_F = comb_X[chosen], comb_F[chosen]
        if capture_populations is not None:
            capture_populations.append((pop_X.copy(), pop_F.copy()))

    X_arr, Y_arr = np.array(X_all), np.array(Y_all)
    return _front(X_arr, Y_arr), len(Y_all), records


# ---------------------------------------------------------------------------
# Random search


def random_search_run(
    evaluator: Callable, bounds, budget: int, seed: int = 0
) -> tuple[ParetoFront, list[IterationRecord]]:
    """Scrambled low-discrepancy sampling; returns front and per-call log."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if bounds.shape[1] != 2 or np.any(bounds[:, 1] < bounds[:, 0]):
        raise ValueError("bounds must be (d, 2) with upper >= lower")
    lo, hi = bounds[:, 0], bounds[:, 1]
    sobol = qmc.Sobol(len(lo), scramble=True, seed=np.random.default_rng(seed))
    n_batch = 1 << (budget - 1).bit_length()
    U = sobol.random(n_batch)[:budget]
    X = lo + U * (hi - lo)

    Y_all: list[list[float]] = []
    records: list[IterationRecord] = []
    for i, x in enumerate(X):
        y, penalized = _evaluate(evaluator, x, Y_all)
        Y_all.append(y)
        records.append(_record(i, x, y, np.array(Y_all), penalized))
    Y = np.array(Y_all)
    return _front(X, Y), records


def random_search(evaluator: Callable, bounds, budget: int, seed: int = 0) -> ParetoFront:
    """Quasi-random baseline: sample, evaluate, keep the non-dominated set."""
    front, _ = random_search_run(evaluator, bounds, budget, seed)
    return front


# ---------------------------------------------------------------------------
# Season benchmark and estimator errors


def saa_benchmark(
    cfg: SystemConfig, scheme: CapacityScheme, season, settings=None
) -> ObjectivePair:
    """Sample-average objectives over every day of a season at weight one.

    Feasible day costs and renewable totals are averaged and scaled to the
    season length, then the investment cost is added.  Infeasible days are
    excluded; more than 5% of them voids the benchmark.
    """
    days = list(season.days) if hasattr(season, "days") else list(season)
    if not days:
        raise ValueError("season has no days")
    costs, res = [], []
    n_infeasible = 0
    for day in days:
        if not isinstance(day, TypicalDay):
            # season records carry named hourly series
            day = TypicalDay(day.electric_load, day.heat_load, day.wind_max, day.pv_max)
        result = simulate_day(cfg, scheme, day, settings=settings)
        if result.feasible:
            costs.append(result.cost)
            res.append(result.res_consumed)
        else:
            n_infeasible += 1
    if n_infeasible > 0.05 * len(days):
        raise ValueError(
            f"benchmark void: {n_infeasible} of {len(days)} days infeasible (> 5%)"
        )
    scale = float(len(days))
    annual_cost = investment_cost(scheme, cfg) + scale * float(np.mean(costs))
    annual_res = scale * float(np.mean(res))
    return ObjectivePair(annual_cost=annual_cost, neg_res_consumed=-annual_res)


@dataclasses.dataclass(frozen=True)
class ErrorReport:
    """Mean relative estimator errors against the season benchmark."""

    e_ann_posterior: float
    e_res_posterior: float
    e_ann_raw: float
    e_res_raw: float
    n_schemes: int
    n_excluded: int = 0

    def __post_init__(self):
        for name in ("e_ann_posterior", "e_res_posterior", "e_ann_raw", "e_res_raw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def error_metrics(posterior_means, raw_observations, saa_values) -> ErrorReport:
    """Mean |estimate - benchmark| / |benchmark| per objective and estimator.

    Rows align one scheme each; rows whose benchmark value is zero in either
    objective are excluded (and counted).
    """
    mu = np.atleast_2d(np.asarray(posterior_means, dtype=float))
    raw = np.atleast_2d(np.asarray(raw_observations, dtype=float))
    saa = np.atleast_2d(np.asarray(saa_values, dtype=float))
    if not (mu.shape == raw.shape == saa.shape) or mu.shape[1] != 2:
        raise ValueError("estimator and benchmark arrays must share shape (n, 2)")
    keep = np.all(saa != 0.0, axis=1)
    n_excluded = int((~keep).sum())
    if not np.any(keep):
        raise ValueError("no scheme has a nonzero benchmark value")
    mu, raw, saa = mu[keep], raw[keep], saa[keep]
    denom = np.abs(saa)
    err_mu = np.mean(np.abs(mu - saa) / denom, axis=0)
    err_raw = np.mean(np.abs(raw - saa) / denom, axis=0)
    return ErrorReport(
        e_ann_posterior=float(err_mu[0]),
        e_res_posterior=float(err_mu[1]),
        e_ann_raw=float(err_raw[0]),
        e_res_raw=float(err_raw[1]),
        n_schemes=int(keep.sum()),
        n_excluded=n_excluded,
    )
