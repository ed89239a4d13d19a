"""Gaussian process regression with Matern kernels and noise estimation.

Closed-form Matern covariances (nu in {1/2, 3/2, 5/2}) with per-dimension
lengthscales, exact inference through a Cholesky factorization, kernel
hyperparameters by multi-start ascent of the log marginal likelihood, and a
separate gradient-ascent estimator for the observation noise level.

Callers are expected to feed inputs normalized to the unit box and targets
standardized to zero mean and unit variance; nothing here enforces that,
but the default search ranges assume it.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt

__all__ = [
    "KernelParams",
    "GpModel",
    "NoiseEstimate",
    "matern_kernel",
    "log_marginal_likelihood",
    "fit_hyperparameters",
    "estimate_noise_std",
    "sample_posterior",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
_SUPPORTED_NU = (0.5, 1.5, 2.5)


@dataclasses.dataclass
class KernelParams:
    """Matern kernel hyperparameters.

    Attributes:
        nu: smoothness, one of 0.5, 1.5, 2.5.
        signal_std: prior standard deviation of the latent function.
        lengthscales: per-dimension lengthscales, shape (d,).
    """

    nu: float
    signal_std: float
    lengthscales: np.ndarray

    def __post_init__(self):
        if self.nu not in _SUPPORTED_NU:
            raise ValueError(f"nu must be one of {_SUPPORTED_NU}, got {self.nu}")
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.signal_std <= 0 or np.any(self.lengthscales <= 0):
            raise ValueError("signal_std and lengthscales must be positive")


def _scaled_sq_dists(X1, X2, lengthscales):
    """Per-dimension squared scaled differences, shape (d, n1, n2)."""
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    diff = X1[:, None, :] - X2[None, :, :]
    return np.moveaxis((diff / lengthscales) ** 2, -1, 0)


def _matern_profile(nu, r, with_derivative=False):
    """Correlation profile f(r) and optionally df/dr."""
    if nu == 0.5:
        f = np.exp(-r)
        fp = -f
    elif nu == 1.5:
        c = np.sqrt(3.0)
        e = np.exp(-c * r)
        f = (1.0 + c * r) * e
        fp = -3.0 * r * e
    else:
        c = np.sqrt(5.0)
        e = np.exp(-c * r)
        f = (1.0 + c * r + 5.0 * r * r / 3.0) * e
        fp = -(5.0 / 3.0) * r * (1.0 + c * r) * e
    return (f, fp) if with_derivative else f


def matern_kernel(X1, X2, params: KernelParams) -> np.ndarray:
    """Covariance matrix between two point sets, shape (n1, n2)."""
    s = _scaled_sq_dists(X1, X2, params.lengthscales)
    r = np.sqrt(s.sum(axis=0))
    return params.signal_std**2 * _matern_profile(params.nu, r)


def _chol_with_jitter(K):
    """Cholesky with an escalating diagonal jitter; raises after the ladder."""
    n = K.shape[0]
    for jitter in (0.0,) + _JITTER_LADDER:
        try:
            return sla.cholesky(K + jitter * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("covariance not factorizable within jitter ladder")


def log_marginal_likelihood(X, y, params: KernelParams, noise_std: float) -> float:
    """Exact Gaussian log marginal likelihood of the targets."""
    y = np.asarray(y, dtype=float).ravel()
    K = matern_kernel(X, X, params)
    Kn = K + noise_std**2 * np.eye(len(y))
    L, _ = _chol_with_jitter(Kn)
    alpha = sla.cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * _LOG_2PI)


def _mll_value_and_grad(X, y, nu, theta, noise_var):
    """MLL and gradient in theta = (log signal_std, log lengthscales)."""
    d = X.shape[1]
    sig = np.exp(theta[0])
    ls = np.exp(theta[1:])
    s = _scaled_sq_dists(X, X, ls)
    r = np.sqrt(s.sum(axis=0))
    f, fp = _matern_profile(nu, r, with_derivative=True)
    K = sig**2 * f
    n = len(y)
    L, _ = _chol_with_jitter(K + noise_var * np.eye(n))
    alpha = sla.cho_solve((L, True), y)
    Kinv = sla.cho_solve((L, True), np.eye(n))
    mll = float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI)
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty(1 + d)
    grad[0] = float(np.sum(W * K))  # dK/dlog sigma = 2K, with the 1/2 factor applied
    with np.errstate(invalid="ignore", divide="ignore"):
        fp_over_r = np.where(r > 0, fp / np.where(r > 0, r, 1.0), 0.0)
    for k in range(d):
        dK = -(sig**2) * fp_over_r * s[k]
        grad[1 + k] = 0.5 * float(np.sum(W * dK))
    return mll, grad


def fit_hyperparameters(
    X,
    y,
    noise_std: float,
    seed: int = 0,
    n_starts: int = 4,
) -> KernelParams:
    """Maximum-likelihood kernel hyperparameters over all supported nu.

    Runs a gradient ascent (L-BFGS) from one fixed and several seeded start
    points per smoothness value and returns the overall best. The returned
    parameters never score below the best start point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    d = X.shape[1]
    rng = np.random.default_rng(seed)
    starts = [np.concatenate([[0.0], np.full(d, np.log(0.5))])]
    for _ in range(max(0, n_starts - 1)):
        log_sig = rng.uniform(np.log(0.3), np.log(2.0))
        log_ls = rng.uniform(np.log(0.05), np.log(2.0), size=d)
        starts.append(np.concatenate([[log_sig], log_ls]))
    bounds = [(np.log(1e-3), np.log(1e3))] + [(np.log(1e-2), np.log(1e2))] * d
    noise_var = noise_std**2

    best_mll = -np.inf
    best = None
    for nu in _SUPPORTED_NU:

        def neg(theta, nu=nu):
            mll, grad = _mll_value_and_grad(X, y, nu, theta, noise_var)
            return -mll, -grad

        for theta0 in starts:
            res = sopt.minimize(neg, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
            for cand in (res.x, theta0):
                mll, _ = _mll_value_and_grad(X, y, nu, cand, noise_var)
                if mll > best_mll:
                    best_mll = mll
                    best = (nu, cand)
    nu, theta = best
    return KernelParams(nu=nu, signal_std=float(np.exp(theta[0])), lengthscales=np.exp(theta[1:]))


@dataclasses.dataclass
class NoiseEstimate:
    sigma_n: float
    mll: float
    steps: int
    diverged: bool


def estimate_noise_std(
    X,
    y,
    params: KernelParams,
    init: float = 0.1,
    learning_rate: float = 1e-2,
    tol: float = 1e-6,
    floor: float = 1e-6,
    max_steps: int = 500,
) -> NoiseEstimate:
    """Observation noise level by gradient ascent of the MLL.

    Ascends log sigma_n^2 with dMLL/dsigma_n^2 = 1/2 (alpha' alpha -
    tr(K_n^{-1})), alpha = K_n^{-1} y, halving the step while it would
    decrease the MLL. Stops when the gradient or the MLL change falls below
    tol. Ten consecutive non-improving steps abort with the best iterate
    seen and the diverged flag set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    K = matern_kernel(X, X, params)
    eye = np.eye(n)
    floor_logv = 2.0 * np.log(floor)

    def mll_of(logv):
        L, _ = _chol_with_jitter(K + np.exp(logv) * eye)
        alpha = sla.cho_solve((L, True), y)
        return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI), L, alpha

    logv = max(2.0 * np.log(max(init, floor)), floor_logv)
    mll, L, alpha = mll_of(logv)
    best_mll, best_logv = mll, logv
    bad_streak = 0
    steps = 0
    diverged = False
    while steps < max_steps:
        steps += 1
        Kinv = sla.cho_solve((L, True), eye)
        grad_var = 0.5 * (alpha @ alpha - np.trace(Kinv))
        grad_log = np.exp(logv) * grad_var
        if abs(grad_log) < tol:
            break
        step = learning_rate
        accepted = False
        for _ in range(30):
            cand = max(logv + step * grad_log, floor_logv)
            cand_mll, cand_L, cand_alpha = mll_of(cand)
            if cand_mll >= mll - 1e-15:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # take the raw step anyway; repeated failures signal divergence
            cand = max(logv + learning_rate * grad_log, floor_logv)
            cand_mll, cand_L, cand_alpha = mll_of(cand)
            bad_streak += 1
            if bad_streak >= 10:
                diverged = True
                logv = best_logv
                break
        else:
            bad_streak = 0
        delta = abs(cand_mll - mll)
        logv, mll, L, alpha = cand, cand_mll, cand_L, cand_alpha
        if mll > best_mll:
            best_mll, best_logv = mll, logv
        if delta < tol:
            break
    sigma_n = max(float(np.exp(0.5 * logv)), floor)
    return NoiseEstimate(sigma_n=sigma_n, mll=best_mll, steps=steps, diverged=diverged)


class GpModel:
    """Frozen GP posterior over one scalar target."""

    def __init__(self, X, y, params: KernelParams, noise_std: float):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise ValueError("X and y disagree on the number of observations")
        self.params = params
        self.noise_std = float(noise_std)
        Kn = matern_kernel(self.X, self.X, params) + self.noise_std**2 * np.eye(self.y.size)
        self._L, self._jitter = _chol_with_jitter(Kn)
        self._alpha = sla.cho_solve((self._L, True), self.y)

    def log_marginal_likelihood(self) -> float:
        n = self.y.size
        return float(
            -0.5 * self.y @ self._alpha
            - np.log(np.diag(self._L)).sum()
            - 0.5 * n * _LOG_2PI
        )

    def latent_cross(self, X_star):
        """Posterior mean and whitened cross term L^{-1} k(X_train, X_star).

        Posterior covariance between point sets A and B follows as
        k(A, B) - V_A' V_B, which lets callers assemble joint posteriors
        without refactorizing.
        """
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        Ks = matern_kernel(self.X, X_star, self.params)
        V = sla.solve_triangular(self._L, Ks, lower=True)
        return Ks.T @ self._alpha, V

    def posterior(self, X_star, full_cov: bool = False):
        """Posterior mean and variance (or full covariance) at new points."""
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        Ks = matern_kernel(self.X, X_star, self.params)
        mean = Ks.T @ self._alpha
        V = sla.solve_triangular(self._L, Ks, lower=True)
        if full_cov:
            cov = matern_kernel(X_star, X_star, self.params) - V.T @ V
            return mean, cov
        prior_var = self.params.signal_std**2
        var = np.maximum(prior_var - np.einsum("ij,ij->j", V, V), 0.0)
        return mean, var


def sample_posterior(model: GpModel, X_star, n_samples: int, seed: int) -> np.ndarray:
    """Joint posterior draws at X_star, shape (n_samples, n_points).

    Fixed seeds reproduce bitwise; the covariance factorization reuses the
    jitter ladder when the posterior is near-degenerate.
    """
    mean, cov = model.posterior(X_star, full_cov=True)
    cov = 0.5 * (cov + cov.T)
    L, _ = _chol_with_jitter(cov)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, mean.size))
    return mean[None, :] + z @ L.T
