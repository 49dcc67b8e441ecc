"""Covariance functions and their additive compositions.

Every kernel is an immutable dataclass. Positive parameters are exposed to
optimizers through ``theta``, the vector of their natural logarithms, and
``gradients`` returns the Gram-matrix derivatives with respect to ``theta``.

Input grids are ``(n, d)`` arrays; one-dimensional inputs are promoted to a
single column.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


def as_grid(x) -> np.ndarray:
    """Return ``x`` as a float ``(n, d)`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim != 2:
        raise ValueError(f"input grid must be 1-D or 2-D, got shape {x.shape}")
    return x


def _check_dims(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"input dimension mismatch: {X.shape[1]} vs {Y.shape[1]}"
        )


def _sqdist(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if X.shape[1] == 1:
        return (X[:, 0][:, None] - Y[:, 0][None, :]) ** 2
    d = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


class Kernel:
    """Base class; subclasses are frozen dataclasses."""

    param_names: tuple[str, ...] = ()

    def __call__(self, X, Y=None) -> np.ndarray:
        X = as_grid(X)
        Y = X if Y is None else as_grid(Y)
        _check_dims(X, Y)
        return self._gram(X, Y)

    def diag(self, X) -> np.ndarray:
        X = as_grid(X)
        return np.diag(self._gram(X, X)).copy()

    @property
    def theta(self) -> np.ndarray:
        return np.log([getattr(self, n) for n in self.param_names])

    def with_theta(self, theta) -> "Kernel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.param_names),):
            raise ValueError("wrong number of hyperparameters")
        return replace(self, **{n: float(np.exp(v)) for n, v in zip(self.param_names, theta)})

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def gradients(self, X) -> list[np.ndarray]:
        """dK(X, X)/dtheta_j for each log-parameter."""
        return self._gram_grads(as_grid(X))[1]

    def gram_and_gradients(self, X) -> tuple[np.ndarray, list[np.ndarray]]:
        """``K(X, X)`` together with its log-parameter derivatives."""
        return self._gram_grads(as_grid(X))

    def _gram(self, X, Y):  # pragma: no cover - abstract
        raise NotImplementedError

    def _gram_grads(self, X):  # pragma: no cover - abstract
        raise NotImplementedError

    def validate(self) -> None:
        for n in self.param_names:
            v = getattr(self, n)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{type(self).__name__}.{n} must be positive, got {v}")

    def __add__(self, other: "Kernel") -> "Sum":
        left = self.children if isinstance(self, Sum) else (self,)
        right = other.children if isinstance(other, Sum) else (other,)
        return Sum(tuple(left) + tuple(right))


@dataclass(frozen=True)
class RBF(Kernel):
    """Squared exponential, ``scale**2 * exp(-|x - y|**2 / (2 * length**2))``."""

    scale: float = 1.0
    length: float = 1.0
    param_names = ("scale", "length")

    def _gram(self, X, Y):
        return self.scale**2 * np.exp(-0.5 * _sqdist(X, Y) / self.length**2)

    def _gram_grads(self, X):
        r2 = _sqdist(X, X) / self.length**2
        K = self.scale**2 * np.exp(-0.5 * r2)
        return K, [2.0 * K, K * r2]


@dataclass(frozen=True)
class Linear(Kernel):
    """Dot-product kernel ``x . y / scale**2``."""

    scale: float = 1.0
    param_names = ("scale",)

    def _gram(self, X, Y):
        return (X @ Y.T) / self.scale**2

    def _gram_grads(self, X):
        K = (X @ X.T) / self.scale**2
        return K, [-2.0 * K]


@dataclass(frozen=True)
class Periodic(Kernel):
    """Exp-sine-squared kernel with output scale, period and roughness."""

    scale: float = 1.0
    period: float = 1.0
    roughness: float = 1.0
    param_names = ("scale", "period", "roughness")

    def _phase(self, X, Y):
        if X.shape[1] != 1:
            raise ValueError("Periodic kernel needs one-dimensional inputs")
        return np.pi * (X[:, 0][:, None] - Y[:, 0][None, :]) / self.period

    def _gram(self, X, Y):
        s = np.sin(self._phase(X, Y))
        return self.scale**2 * np.exp(-2.0 * s**2 / self.roughness**2)

    def _gram_grads(self, X):
        a = self._phase(X, X)
        s = np.sin(a)
        K = self.scale**2 * np.exp(-2.0 * s**2 / self.roughness**2)
        # d(sin^2 a)/d log(period) = -2 sin a cos a * a
        d_period = K * (4.0 / self.roughness**2) * s * np.cos(a) * a
        d_rough = K * 4.0 * s**2 / self.roughness**2
        return K, [2.0 * K, d_period, d_rough]


@dataclass(frozen=True)
class Constant(Kernel):
    """Constant covariance ``level`` (may be zero)."""

    level: float = 1.0
    param_names = ("level",)

    def _gram(self, X, Y):
        return np.full((X.shape[0], Y.shape[0]), float(self.level))

    def _gram_grads(self, X):
        n = X.shape[0]
        K = np.full((n, n), float(self.level))
        return K, [K]

    def validate(self) -> None:
        if not np.isfinite(self.level) or self.level < 0:
            raise ValueError(f"Constant.level must be >= 0, got {self.level}")


@dataclass(frozen=True)
class Sum(Kernel):
    """Sum of atomic kernels."""

    children: tuple[Kernel, ...] = ()

    def __post_init__(self):
        children = tuple(self.children)
        if not children:
            raise ValueError("Sum needs at least one child kernel")
        if any(isinstance(c, Sum) for c in children):
            raise ValueError("nested sums are not supported; flatten the children")
        object.__setattr__(self, "children", children)

    @property
    def param_names(self) -> tuple[str, ...]:  # type: ignore[override]
        return tuple(
            f"{i}.{type(c).__name__}.{n}"
            for i, c in enumerate(self.children)
            for n in c.param_names
        )

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([c.theta for c in self.children])

    def with_theta(self, theta) -> "Sum":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError("wrong number of hyperparameters")
        out, i = [], 0
        for c in self.children:
            out.append(c.with_theta(theta[i : i + c.n_params]))
            i += c.n_params
        return Sum(tuple(out))

    def _gram(self, X, Y):
        K = self.children[0]._gram(X, Y)
        for c in self.children[1:]:
            K = K + c._gram(X, Y)
        return K

    def _gram_grads(self, X):
        K, grads = self.children[0]._gram_grads(X)
        K = K.copy()
        grads = list(grads)
        for c in self.children[1:]:
            Kc, gc = c._gram_grads(X)
            K += Kc
            grads.extend(gc)
        return K, grads

    def validate(self) -> None:
        for c in self.children:
            c.validate()


def kernel_eval(kernel: Kernel, x, y) -> float:
    """Evaluate ``kernel`` at a single pair of input points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"input dimension mismatch: {x.shape} vs {y.shape}")
    return float(kernel(x[None, :], y[None, :])[0, 0])


def gram_matrix(kernel: Kernel, X, Y=None) -> np.ndarray:
    X = as_grid(X)
    if X.shape[0] == 0 or (Y is not None and as_grid(Y).shape[0] == 0):
        raise ValueError("input grids must be non-empty")
    return kernel(X, Y)


def composite_kc(
    linear_scale: float = 10.0,
    periodic_scale: float = 10.0,
    period: float = 50.0,
    roughness: float = 1.0,
    level: float = 1.0,
) -> Sum:
    """Linear + Periodic + Constant, the trend/season/level composition."""
    return Sum(
        (
            Linear(linear_scale),
            Periodic(periodic_scale, period, roughness),
            Constant(level),
        )
    )


def flatten(kernels: Sequence[Kernel]) -> Sum:
    out: list[Kernel] = []
    for k in kernels:
        out.extend(k.children if isinstance(k, Sum) else (k,))
    return Sum(tuple(out))
