"""Exact Gaussian-process regression with an age-dependent noise term.

The training covariance is ``K + sigma2 * I + D`` where ``D`` is an optional
non-negative diagonal. With forgetting weights ``(kappa, lam)`` the diagonal
entry of a sample observed at time ``t_i`` is ``kappa * (now - t_i) ** lam``,
so old samples carry more noise and less weight.

All targets are centred on their sample mean before inference; the mean is
added back to predictions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize

from .errors import InputError, NumericalError, TrainingError
from .kernels import Kernel, as_grid

logger = logging.getLogger(__name__)

LOG_BOUND = 8.0
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise InputError(f"noise variance must be >= 0, got {self.sigma2}")


@dataclass(frozen=True)
class ForgettingWeights:
    kappa: float = 1.0
    lambda_ff: float = 1.0

    def __post_init__(self):
        if self.kappa < 0 or self.lambda_ff < 0:
            raise InputError("forgetting gain and exponent must be >= 0")


@dataclass(frozen=True)
class Hyperparameters:
    kernel: Kernel
    noise: NoiseModel


@dataclass(frozen=True)
class GPDataset:
    """Training inputs ``(n, d)``, targets ``(n,)`` and observation times ``(n,)``."""

    inputs: np.ndarray
    targets: np.ndarray
    input_times: np.ndarray

    def __post_init__(self):
        X = as_grid(self.inputs)
        y = np.asarray(self.targets, dtype=float).ravel()
        t = np.asarray(self.input_times, dtype=float).ravel()
        if len(y) < 1 or not (X.shape[0] == len(y) == len(t)):
            raise InputError(
                f"inputs, targets and times need equal length >= 1, got "
                f"{X.shape[0]}, {len(y)}, {len(t)}"
            )
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "input_times", t)

    @classmethod
    def from_series(cls, times, values) -> "GPDataset":
        """Time-indexed data: the inputs are the times themselves."""
        t = np.asarray(times, dtype=float)
        return cls(t[:, None], values, t)

    def __len__(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class Posterior:
    """Latent predictive distribution at ``query_points``.

    ``excess_var`` is optional per-point variance the model attributes to
    unexplained variation beyond measurement noise; envelopes may add it.
    """

    mean: np.ndarray
    cov: np.ndarray
    query_points: np.ndarray
    excess_var: Optional[np.ndarray] = None

    @property
    def variance(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)

    @property
    def predictive_variance(self) -> np.ndarray:
        if self.excess_var is None:
            return self.variance
        return self.variance + np.clip(self.excess_var, 0.0, None)

    def __len__(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class TrainingResult:
    hyperparameters: Hyperparameters
    log_marginal: float
    restarts_used: int
    converged: bool
    start_values: tuple = field(default=(), repr=False)


def forgetting_diag(input_times, now: float, weights: ForgettingWeights) -> np.ndarray:
    t = np.asarray(input_times, dtype=float)
    age = now - t
    if np.any(age < 0):
        raise InputError("observation times must not lie after 'now'")
    if weights.kappa == 0:
        return np.zeros_like(t)
    return weights.kappa * age**weights.lambda_ff


def cholesky_jitter(A: np.ndarray, retries: int = 3) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, adding diagonal jitter on failure.

    Jitter starts at ``1e-10 * trace / n`` and grows tenfold per retry.
    Returns the factor and the jitter used.
    """
    if not np.all(np.isfinite(A)):
        raise NumericalError("covariance matrix has non-finite entries")
    try:
        return linalg.cholesky(A, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    n = A.shape[0]
    jitter = 1e-10 * max(np.trace(A) / n, 1e-300)
    for _ in range(retries + 1):
        try:
            L = linalg.cholesky(A + jitter * np.eye(n), lower=True, check_finite=False)
            logger.debug("cholesky needed jitter %.3g", jitter)
            return L, jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    try:
        cond = float(np.linalg.cond(A))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise NumericalError(
        f"covariance not positive definite after jitter {jitter / 10:.3g} "
        f"(condition number {cond:.3g})",
        condition=cond,
    )


def _training_cov(kernel, noise, data, extra_diag):
    A = kernel(data.inputs)
    A[np.diag_indices_from(A)] += noise.sigma2
    if extra_diag is not None and len(extra_diag):
        d = np.asarray(extra_diag, dtype=float)
        if d.shape != (len(data),) or np.any(d < 0):
            raise InputError("extra_diag must be a non-negative vector matching the data")
        A[np.diag_indices_from(A)] += d
    return A


def posterior(
    kernel: Kernel,
    noise: NoiseModel,
    data: GPDataset,
    query,
    prior_mean: Optional[float] = None,
    extra_diag=None,
) -> Posterior:
    """Predictive mean and covariance of the latent function at ``query``.

    ``prior_mean`` defaults to the sample mean of the targets. ``extra_diag``
    is added to the training covariance (forgetting diagonal).
    """
    Xq = as_grid(query)
    if Xq.shape[1] != data.inputs.shape[1]:
        raise InputError("query and training inputs differ in dimension")
    mu = float(np.mean(data.targets)) if prior_mean is None else float(prior_mean)
    A = _training_cov(kernel, noise, data, extra_diag)
    L, _ = cholesky_jitter(A)
    Ks = kernel(data.inputs, Xq)
    alpha = linalg.cho_solve((L, True), data.targets - mu, check_finite=False)
    V = linalg.solve_triangular(L, Ks, lower=True, check_finite=False)
    mean = mu + Ks.T @ alpha
    cov = kernel(Xq) - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return Posterior(mean, cov, Xq)


def log_marginal_likelihood(
    kernel: Kernel,
    noise: NoiseModel,
    data: GPDataset,
    forgetting: Optional[ForgettingWeights] = None,
    now: Optional[float] = None,
) -> float:
    """Gaussian log evidence of the centred targets, constant term included."""
    D = None
    if forgetting is not None:
        now = float(np.max(data.input_times)) if now is None else now
        D = forgetting_diag(data.input_times, now, forgetting)
    y = data.targets - np.mean(data.targets)
    A = _training_cov(kernel, noise, data, D)
    L, _ = cholesky_jitter(A)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    return float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(y) * _LOG_2PI
    )


class _Objective:
    """Negative log evidence and gradient over log-hyperparameters.

    The parameter vector is ``kernel.theta`` followed by ``log(sigma2)`` when
    the noise is trained.
    """

    def __init__(self, template, noise, data, extra_diag, train_noise):
        self.template = template
        self.noise = noise
        self.data = data
        self.y = data.targets - np.mean(data.targets)
        self.extra = np.zeros(len(data)) if extra_diag is None else np.asarray(extra_diag)
        self.train_noise = train_noise
        self.n_kernel = template.n_params
        self.evals = 0

    def unpack(self, theta) -> Hyperparameters:
        kernel = self.template.with_theta(theta[: self.n_kernel])
        if self.train_noise:
            return Hyperparameters(kernel, NoiseModel(float(np.exp(theta[-1]))))
        return Hyperparameters(kernel, self.noise)

    def pack(self, hp: Hyperparameters) -> np.ndarray:
        theta = hp.kernel.theta
        if self.train_noise:
            theta = np.append(theta, np.log(max(hp.noise.sigma2, np.exp(-LOG_BOUND))))
        return theta

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        self.evals += 1
        hp = self.unpack(theta)
        X = self.data.inputs
        n = len(self.y)
        K, dKs = hp.kernel.gram_and_gradients(X)
        A = K.copy()
        A[np.diag_indices(n)] += hp.noise.sigma2 + self.extra
        L, _ = cholesky_jitter(A)
        alpha = linalg.cho_solve((L, True), self.y, check_finite=False)
        lml = -0.5 * self.y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI
        Ainv, info = linalg.lapack.dpotri(L, lower=1)
        if info != 0:
            raise NumericalError("inverse from the Cholesky factor failed", float("inf"))
        Ainv = np.tril(Ainv) + np.tril(Ainv, -1).T
        W = np.outer(alpha, alpha) - Ainv
        grads = [0.5 * np.vdot(W, dK) for dK in dKs]
        if self.train_noise:
            grads.append(0.5 * hp.noise.sigma2 * np.trace(W))
        return float(lml), np.asarray(grads)

    def __call__(self, theta):
        try:
            lml, g = self.value_and_grad(theta)
        except (NumericalError, FloatingPointError):
            return 1e20, np.zeros_like(theta)
        if not np.isfinite(lml) or not np.all(np.isfinite(g)):
            return 1e20, np.zeros_like(theta)
        return -lml, -g


def log_uniform_starts(width: float = 2.0) -> Callable:
    """Sampler drawing each log-parameter uniformly in ``template +/- width``."""

    def sample(rng: np.random.Generator, theta0: np.ndarray) -> np.ndarray:
        return theta0 + rng.uniform(-width, width, size=theta0.shape)

    return sample


def train(
    kernel_template: Kernel,
    data: GPDataset,
    forgetting: Optional[ForgettingWeights] = None,
    restarts: int = 3,
    warm_start: Optional[Hyperparameters] = None,
    *,
    noise: NoiseModel = NoiseModel(1.0),
    now: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    sampler: Optional[Callable] = None,
    maxiter: int = 200,
    train_noise: bool = True,
    bounds=None,
) -> TrainingResult:
    """Maximize the log evidence from several starting points.

    The warm start (if any) is tried first, then random starts drawn by
    ``sampler(rng, template_theta)`` until ``restarts`` starts have been used.
    The best finite outcome wins, including the start points themselves.
    ``bounds`` optionally narrows the default ``[-8, 8]`` log-parameter box,
    one ``(lo, hi)`` pair per parameter (noise last).
    """
    if restarts < 1:
        raise InputError("restarts must be >= 1")
    if len(data) < 3:
        raise InputError("training needs at least 3 points")
    kernel_template.validate()
    rng = np.random.default_rng() if rng is None else rng
    sampler = log_uniform_starts() if sampler is None else sampler

    D = None
    if forgetting is not None:
        now = float(np.max(data.input_times)) if now is None else now
        D = forgetting_diag(data.input_times, now, forgetting)
    obj = _Objective(kernel_template, noise, data, D, train_noise)
    theta0 = obj.pack(Hyperparameters(kernel_template, noise))
    if bounds is None:
        bounds = [(-LOG_BOUND, LOG_BOUND)] * len(theta0)
    if len(bounds) != len(theta0):
        raise InputError("one bound pair per hyperparameter required")
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)

    starts = []
    if warm_start is not None:
        starts.append(obj.pack(warm_start))
    while len(starts) < restarts:
        starts.append(sampler(rng, theta0))

    best_theta, best_f, converged = None, np.inf, False
    start_values = []
    for x0 in starts:
        x0 = np.clip(x0, lo, hi)
        f0, _ = obj(x0)
        start_values.append(-f0 if f0 < 1e20 else -np.inf)
        if f0 < best_f:
            best_theta, best_f = x0, f0
        try:
            res = optimize.minimize(
                obj, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                options={"maxiter": maxiter},
            )
        except (ValueError, ArithmeticError) as exc:
            logger.debug("restart failed: %s", exc)
            continue
        if np.isfinite(res.fun) and res.fun < 1e20:
            converged = converged or bool(res.success)
            if res.fun < best_f:
                best_theta, best_f = res.x, float(res.fun)

    if best_theta is None or best_f >= 1e20:
        raise TrainingError("every likelihood evaluation was non-finite")
    return TrainingResult(
        obj.unpack(best_theta), -best_f, len(starts), converged, tuple(start_values)
    )
