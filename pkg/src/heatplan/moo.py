"""Noise-aware multi-objective Bayesian optimization over two objectives.

Builds one GP per objective on standardized data, steers sampling with a
noisy expected hypervolume improvement acquisition under an adaptive
reference point, and extracts the final front from posterior means rather
than raw noisy observations. All randomness flows from explicit seeds, so
repeated runs reproduce bitwise.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import scipy.linalg as sla
from scipy.stats import qmc

from .gp import (
    GpModel,
    _chol_with_jitter,
    estimate_noise_std,
    fit_hyperparameters,
    matern_kernel,
)

__all__ = [
    "AmboConfig",
    "AmboResult",
    "IterationRecord",
    "NehviSampler",
    "ParetoFront",
    "adaptive_reference",
    "ambo_run",
    "hypervolume",
    "hypervolume_trace",
    "nehvi",
    "optimize_acquisition",
    "pareto_filter",
    "standardize",
]

logger = logging.getLogger(__name__)


def pareto_filter(points) -> list[int]:
    """Indices of the non-dominated subset of 2-D points (minimization).

    Exact duplicates collapse to the lowest index. Returned indices are in
    ascending order.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of objective pairs")
    n = pts.shape[0]
    if n == 0:
        return []
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    keep = []
    best_f2 = np.inf
    i = 0
    while i < n:
        j = i
        f1 = pts[order[i], 0]
        group = []
        while j < n and pts[order[j], 0] == f1:
            group.append(order[j])
            j += 1
        f2_vals = pts[group, 1]
        f2_min = f2_vals.min()
        if f2_min < best_f2:
            keep.append(min(g for g, v in zip(group, f2_vals) if v == f2_min))
            best_f2 = f2_min
        i = j
    return sorted(keep)


def hypervolume(points, reference) -> float:
    """Dominated 2-D hypervolume by an exact sweep.

    Points not strictly dominating the reference contribute zero; they are
    clipped out with a log notice rather than raising.
    """
    pts = np.asarray(points, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if pts.size == 0:
        return 0.0
    pts = np.atleast_2d(pts)
    inside = np.all(pts < ref, axis=1)
    if not np.all(inside):
        logger.debug("hypervolume: %d point(s) clipped at the reference", int((~inside).sum()))
    pts = pts[inside]
    if pts.shape[0] == 0:
        return 0.0
    front = pts[pareto_filter(pts)]
    order = np.argsort(-front[:, 0])
    hv = 0.0
    bound = ref[0]
    for f1, f2 in front[order]:
        hv += (bound - f1) * (ref[1] - f2)
        bound = f1
    return float(hv)


def hypervolume_trace(Y, reference) -> np.ndarray:
    """Hypervolume of the growing observation front after each evaluation."""
    Y = np.asarray(Y, dtype=float)
    return np.array([hypervolume(Y[: k + 1], reference) for k in range(Y.shape[0])])


def adaptive_reference(Y_std) -> np.ndarray:
    """Reference point from the spread of (standardized) observations.

    r_i = max_i - 0.1 * min_i; when that is not strictly worse than every
    observation, fall back to max_i + 0.1 * (max_i - min_i) + 1e-6.
    """
    Y = np.atleast_2d(np.asarray(Y_std, dtype=float))
    ymax = Y.max(axis=0)
    ymin = Y.min(axis=0)
    r = ymax - 0.1 * ymin
    fallback = ~(r > ymax)
    if np.any(fallback):
        logger.debug("adaptive_reference: literal formula not strictly worse in %s", fallback)
    r[fallback] = ymax[fallback] + 0.1 * (ymax[fallback] - ymin[fallback]) + 1e-6
    return r


def standardize(Y):
    """Z-scores per column; zero spread maps to unchanged (mean-centered)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    mean = Y.mean(axis=0)
    std = Y.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return (Y - mean) / std, mean, std


def _sorted_front(points, reference):
    """Front arrays (f1 ascending, f2 descending) clipped at the reference."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pts = pts[np.all(pts < reference, axis=1)]
    if pts.shape[0] == 0:
        return np.empty(0), np.empty(0)
    front = pts[pareto_filter(pts)]
    order = np.argsort(front[:, 0])
    return front[order, 0], front[order, 1]


def _hvi_against_sorted(f1, f2, point, reference):
    """Exclusive hypervolume of one extra point against a sorted front."""
    a, b = point
    r1, r2 = reference
    if a >= r1 or b >= r2:
        return 0.0
    i = int(np.searchsorted(f1, a, side="right"))
    cap = f2[i - 1] if i > 0 else r2
    if b >= cap:
        return 0.0
    area = 0.0
    x = a
    height = cap - b
    j = i
    k = f1.size
    while j < k and f1[j] < r1:
        area += (f1[j] - x) * height
        x = f1[j]
        height = max(f2[j], b) - b
        if height <= 0.0:
            return area
        j += 1
    area += (r1 - x) * height
    return area


class NehviSampler:
    """Joint-posterior sampler for noisy expected hypervolume improvement.

    Draws the posterior at the observed inputs once (common random numbers),
    builds one Pareto front per sample, and evaluates candidates through the
    conditional Gaussian given those base draws. Every candidate therefore
    sees the same sampled futures, which makes acquisition comparisons
    deterministic for a fixed seed.
    """

    def __init__(self, models, X_obs, reference, n_samples: int = 128, seed=0):
        self.models = list(models)
        self.X_obs = np.atleast_2d(np.asarray(X_obs, dtype=float))
        self.reference = np.asarray(reference, dtype=float)
        self.n_samples = int(n_samples)
        rng = np.random.default_rng(seed)
        n_obs = self.X_obs.shape[0]

        self._means = []
        self._V_obs = []
        self._L_nn = []
        self._U = []
        self._zeta = []
        sampled = []
        for model in self.models:
            mean, V = model.latent_cross(self.X_obs)
            cov = matern_kernel(self.X_obs, self.X_obs, model.params) - V.T @ V
            cov = 0.5 * (cov + cov.T)
            Z = rng.standard_normal((self.n_samples, n_obs))
            zeta = rng.standard_normal(self.n_samples)
            if cov.any():
                L, _ = _chol_with_jitter(cov)
                sampled.append(mean[None, :] + Z @ L.T)
                U = sla.solve_triangular(L.T, Z.T, lower=False)
            else:
                # point-mass posterior: draws collapse to the mean and the
                # whitened correction operator vanishes with the factor
                L = np.zeros_like(cov)
                U = np.zeros((n_obs, self.n_samples))
                sampled.append(np.tile(mean, (self.n_samples, 1)))
            self._means.append(mean)
            self._V_obs.append(V)
            self._L_nn.append(L)
            self._U.append(U)
            self._zeta.append(zeta)

        self._fronts = []
        for t in range(self.n_samples):
            pts = np.column_stack([s[t] for s in sampled])
            self._fronts.append(_sorted_front(pts, self.reference))

    def posterior_variance(self, X) -> np.ndarray:
        """Summed per-objective posterior variance at candidate points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for model in self.models:
            _, var = model.posterior(X)
            total += var
        return total

    def evaluate(self, x) -> float:
        """Acquisition value at one candidate point."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        values = []
        for m, model in enumerate(self.models):
            mean_x, V_x = model.latent_cross(x)
            k_obs_x = matern_kernel(self.X_obs, x, model.params)[:, 0]
            sigma_nx = k_obs_x - self._V_obs[m].T @ V_x[:, 0]
            sigma_xx = model.params.signal_std**2 - V_x[:, 0] @ V_x[:, 0]
            cond_mean = mean_x[0] + sigma_nx @ self._U[m]
            if self._L_nn[m].any():
                w = sla.solve_triangular(self._L_nn[m], sigma_nx, lower=True)
                cond_var = max(sigma_xx - w @ w, 0.0)
            else:
                cond_var = max(sigma_xx, 0.0)
            values.append(cond_mean + np.sqrt(cond_var) * self._zeta[m])
        y1, y2 = values
        total = 0.0
        for t in range(self.n_samples):
            f1, f2 = self._fronts[t]
            total += _hvi_against_sorted(f1, f2, (y1[t], y2[t]), self.reference)
        return total / self.n_samples


def nehvi(x, models, X_obs, reference, n_samples: int = 128, seed=0) -> float:
    """One-shot acquisition value; see NehviSampler for the batched path."""
    return NehviSampler(models, X_obs, reference, n_samples, seed).evaluate(x)


@dataclasses.dataclass
class AcquisitionReport:
    x: np.ndarray
    value: float
    fallback: bool
    n_evaluations: int


def _pattern_search(fun, x0, step0=0.25, min_step=1e-3, max_evals=None):
    """Derivative-free compass search on the unit box."""
    d = x0.size
    if max_evals is None:
        max_evals = 120 * d
    x = np.clip(x0, 0.0, 1.0)
    best = fun(x)
    evals = 1
    step = step0
    while step >= min_step and evals < max_evals:
        improved = False
        for k in range(d):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[k] = np.clip(cand[k] + sign * step, 0.0, 1.0)
                if cand[k] == x[k]:
                    continue
                val = fun(cand)
                evals += 1
                if val > best:
                    best, x = val, cand
                    improved = True
                if evals >= max_evals:
                    break
            if evals >= max_evals:
                break
        if not improved:
            step *= 0.5
    return x, best, evals


def optimize_acquisition(
    models,
    X_obs,
    Y_std,
    reference,
    n_restarts: int = 8,
    seed=0,
    n_samples: int = 128,
) -> AcquisitionReport:
    """Maximizes the acquisition over the unit box by multi-start search.

    Start points mix scrambled quasi-random draws with perturbations of the
    currently non-dominated inputs. The sampler is constructed once with the
    given seed, so every candidate comparison shares the same posterior
    draws. An all-zero landscape falls back to the point of largest summed
    posterior variance, flagged in the report.
    """
    X_obs = np.atleast_2d(np.asarray(X_obs, dtype=float))
    d = X_obs.shape[1]
    sampler = NehviSampler(models, X_obs, reference, n_samples, seed)
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    child_sobol, child_perturb = ss.spawn(2)

    # starts form one fixed sequence so a larger restart budget is a strict
    # superset of a smaller one: even slots quasi-random, odd slots jitter
    # around currently non-dominated inputs
    sobol = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(child_sobol))
    front_idx = pareto_filter(np.atleast_2d(Y_std))
    rng = np.random.default_rng(child_perturb)
    starts = []
    for i in range(n_restarts):
        if i % 2 == 0 or not front_idx:
            starts.append(np.asarray(sobol.random(1)[0]))
        else:
            base = X_obs[front_idx[(i // 2) % len(front_idx)]]
            starts.append(np.clip(base + 0.05 * rng.standard_normal(d), 0.0, 1.0))

    best_x = starts[0]
    best_val = -np.inf
    total_evals = 0
    for x0 in starts:
        x, val, used = _pattern_search(sampler.evaluate, x0)
        total_evals += used
        if val > best_val:
            best_val, best_x = val, x

    if best_val <= 0.0:
        probe = sobol.random(256)
        cand = np.vstack([probe, np.vstack(starts)])
        variances = sampler.posterior_variance(cand)
        pick = int(np.argmax(variances))
        return AcquisitionReport(
            x=np.asarray(cand[pick]), value=0.0, fallback=True, n_evaluations=total_evals
        )
    return AcquisitionReport(x=best_x, value=best_val, fallback=False, n_evaluations=total_evals)


@dataclasses.dataclass
class ParetoFront:
    """A non-dominated set of schemes with its objective coordinates."""

    X: np.ndarray
    F: np.ndarray
    indices: list[int]
    provenance: str  # "raw-observation" | "posterior-mean"

    def hypervolume(self, reference) -> float:
        return hypervolume(self.F, reference)


@dataclasses.dataclass
class IterationRecord:
    iteration: int
    x: list[float]
    objectives: list[float]
    sigma_n: list[float]
    reference: list[float]
    hypervolume: float
    acquisition_value: float
    fallback: bool
    penalized: bool
    front_size: int


@dataclasses.dataclass
class AmboConfig:
    """Settings for one optimization run."""

    n_initial: int | None = None
    n_iterations: int = 30
    n_samples: int = 128
    n_restarts: int = 8
    seed: int = 0
    noise_init: float = 0.1

    def __post_init__(self):
        if self.n_iterations < 0 or self.n_samples < 1 or self.n_restarts < 1:
            raise ValueError("counts must be positive")
        if self.n_initial is not None and self.n_initial < 1:
            raise ValueError("n_initial must be at least 1")


@dataclasses.dataclass
class AmboResult:
    X: np.ndarray
    Y: np.ndarray
    posterior_means: np.ndarray
    posterior_stds: np.ndarray
    front: ParetoFront
    observed_front: ParetoFront
    records: list[IterationRecord]
    sigma_n: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray


def _penalty_pair(Y) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    span = Y.max(axis=0) - Y.min(axis=0)
    return Y.max(axis=0) + 10.0 * span + 1.0


def ambo_run(evaluator, bounds, config: AmboConfig | None = None) -> AmboResult:
    """Runs the adaptive loop and returns the posterior-mean front.

    The evaluator maps a raw scheme vector to its two objective values and
    may be noisy; evaluator exceptions after the initial design convert to
    penalty pairs so the loop continues. bounds is a (d, 2) array of
    [lower, upper] per decision dimension in raw units; zero-width
    dimensions are frozen at their lower bound and excluded from the search
    space. Deterministic for a fixed config.
    """
    config = config or AmboConfig()
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if bounds.shape[1] != 2 or np.any(bounds[:, 1] < bounds[:, 0]):
        raise ValueError("bounds must be (d, 2) with upper >= lower")
    lo, hi = bounds[:, 0], bounds[:, 1]
    active = (hi - lo) > 1e-12
    d_act = int(active.sum())
    if d_act == 0:
        raise ValueError("all decision dimensions are frozen")
    n_init = config.n_initial if config.n_initial is not None else 2 * d_act + 2

    ss = np.random.SeedSequence(config.seed)
    child_init, child_loop = ss.spawn(2)
    iter_seeds = child_loop.spawn(max(config.n_iterations, 1))

    def to_raw(U):
        U = np.atleast_2d(U)
        full = np.tile(lo, (U.shape[0], 1))
        full[:, active] = lo[active] + U * (hi[active] - lo[active])
        return full

    sobol = qmc.Sobol(d_act, scramble=True, seed=np.random.default_rng(child_init))
    # draw a power-of-two batch and slice to keep the generator warning-free
    n_batch = 1 << (n_init - 1).bit_length()
    X_unit = sobol.random(n_batch)[:n_init]
    X_raw = to_raw(X_unit)
    Y = np.array([[float(v) for v in evaluator(x)] for x in X_raw])
    if Y.shape[1] != 2:
        raise ValueError("evaluator must return two objective values")

    records: list[IterationRecord] = []
    sigma_n = np.full(2, config.noise_init)

    def fit_models(X, Yh, sigma_prev, seed_pair):
        models = []
        sig_out = np.empty(2)
        for m in range(2):
            params = fit_hyperparameters(X, Yh[:, m], noise_std=sigma_prev[m], seed=seed_pair[m])
            est = estimate_noise_std(X, Yh[:, m], params, init=sigma_prev[m])
            sig_out[m] = est.sigma_n
            models.append(GpModel(X, Yh[:, m], params, est.sigma_n))
        return models, sig_out

    for j in range(config.n_iterations):
        seeds = iter_seeds[j].spawn(3)
        Yh, _, _ = standardize(Y)
        models, sigma_n = fit_models(
            X_unit, Yh, sigma_n, seed_pair=[seeds[0], seeds[1]]
        )
        reference = adaptive_reference(Yh)
        hv_now = hypervolume(Yh, reference)
        report = optimize_acquisition(
            models,
            X_unit,
            Yh,
            reference,
            n_restarts=config.n_restarts,
            seed=seeds[2],
            n_samples=config.n_samples,
        )
        x_raw = to_raw(report.x)[0]
        penalized = False
        try:
            y_new = np.array([float(v) for v in evaluator(x_raw)])
        except Exception:
            y_new = _penalty_pair(Y)
            penalized = True
        X_unit = np.vstack([X_unit, report.x])
        X_raw = np.vstack([X_raw, x_raw])
        Y = np.vstack([Y, y_new])
        records.append(
            IterationRecord(
                iteration=j,
                x=[float(v) for v in x_raw],
                objectives=[float(v) for v in y_new],
                sigma_n=[float(s) for s in sigma_n],
                reference=[float(v) for v in reference],
                hypervolume=float(hv_now),
                acquisition_value=float(report.value),
                fallback=report.fallback,
                penalized=penalized,
                front_size=len(pareto_filter(Y)),
            )
        )

    final_seeds = np.random.SeedSequence(entropy=ss.entropy, spawn_key=(999,)).spawn(2)
    Yh, y_mean, y_std = standardize(Y)
    models, sigma_n = fit_models(X_unit, Yh, sigma_n, seed_pair=final_seeds)
    post = [models[m].posterior(X_unit) for m in range(2)]
    mu = np.column_stack([p[0] for p in post])
    sd = np.column_stack([np.sqrt(np.maximum(p[1], 0.0)) for p in post])
    mu_raw = mu * y_std + y_mean
    sd_raw = sd * y_std

    post_idx = pareto_filter(mu_raw)
    obs_idx = pareto_filter(Y)
    front = ParetoFront(
        X=X_raw[post_idx], F=mu_raw[post_idx], indices=post_idx, provenance="posterior-mean"
    )
    observed = ParetoFront(
        X=X_raw[obs_idx], F=Y[obs_idx], indices=obs_idx, provenance="raw-observation"
    )
    return AmboResult(
        X=X_raw,
        Y=Y,
        posterior_means=mu_raw,
        posterior_stds=sd_raw,
        front=front,
        observed_front=observed,
        records=records,
        sigma_n=sigma_n,
        y_mean=y_mean,
        y_std=y_std,
    )
