"""Loss models: penalized least squares and the squared (smoothed) hinge.

Samples are ``(x, y)`` pairs; batches are ``(X, y)`` with ``X`` of shape
``(K, d)``. Per-sample methods are what the SGD loop calls, batch methods are
used for sample-average gradients, test losses and cross-validation scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, special


def _check(w: np.ndarray, x: np.ndarray, d: int) -> None:
    if w.shape[-1] != d or x.shape[-1] != d:
        raise ValueError(f"dimension mismatch: model d={d}, w has {w.shape[-1]}, x has {x.shape[-1]}")


@dataclass(frozen=True)
class QuadraticRegressionLoss:
    """``0.5 (y - x.w)^2 + 0.5 lam |w|^2`` with features of variance ``sigma_x2``."""

    lam: float
    sigma_x2: float
    d: int

    def __post_init__(self):
        if self.lam < 0 or self.sigma_x2 <= 0 or self.d < 1:
            raise ValueError("need lam >= 0, sigma_x2 > 0, d >= 1")

    @property
    def strong_convexity(self) -> float:
        return self.sigma_x2 + self.lam

    def with_lambda(self, lam: float) -> "QuadraticRegressionLoss":
        return replace(self, lam=lam)

    def value(self, w, x, y) -> float:
        w = np.asarray(w, float)
        x = np.asarray(x, float)
        _check(w, x, self.d)
        r = float(y) - float(x @ w)
        return 0.5 * r * r + 0.5 * self.lam * float(w @ w)

    def grad(self, w, x, y) -> np.ndarray:
        w = np.asarray(w, float)
        x = np.asarray(x, float)
        _check(w, x, self.d)
        return x * (float(x @ w) - float(y)) + self.lam * w

    def values(self, w, X, y) -> np.ndarray:
        _check(w, X, self.d)
        r = y - X @ w
        return 0.5 * r * r + 0.5 * self.lam * float(w @ w)

    def mean_grad(self, w, X, y) -> np.ndarray:
        _check(w, X, self.d)
        return X.T @ (X @ w - y) / len(y) + self.lam * w


@dataclass(frozen=True)
class SmoothedHingeLoss:
    """``0.5 (1 - y x.w)_+^2 + 0.5 lam |w|^2`` for labels in {-1, +1}."""

    lam: float
    d: int

    def __post_init__(self):
        if self.lam < 0 or self.d < 1:
            raise ValueError("need lam >= 0, d >= 1")

    @property
    def strong_convexity(self) -> float:
        # only the ridge term is guaranteed
        return self.lam

    def with_lambda(self, lam: float) -> "SmoothedHingeLoss":
        return replace(self, lam=lam)

    def value(self, w, x, y) -> float:
        w = np.asarray(w, float)
        x = np.asarray(x, float)
        _check(w, x, self.d)
        slack = max(1.0 - float(y) * float(x @ w), 0.0)
        return 0.5 * slack * slack + 0.5 * self.lam * float(w @ w)

    def grad(self, w, x, y) -> np.ndarray:
        w = np.asarray(w, float)
        x = np.asarray(x, float)
        _check(w, x, self.d)
        slack = max(1.0 - float(y) * float(x @ w), 0.0)
        return -float(y) * slack * x + self.lam * w

    def values(self, w, X, y) -> np.ndarray:
        _check(w, X, self.d)
        slack = np.maximum(1.0 - y * (X @ w), 0.0)
        return 0.5 * slack * slack + 0.5 * self.lam * float(w @ w)

    def mean_grad(self, w, X, y) -> np.ndarray:
        _check(w, X, self.d)
        slack = np.maximum(1.0 - y * (X @ w), 0.0)
        return -(X.T @ (y * slack)) / len(y) + self.lam * w


def loss_value(model, w, z) -> float:
    x, y = z
    return model.value(w, x, y)


def loss_gradient(model, w, z) -> np.ndarray:
    x, y = z
    return model.grad(w, x, y)


def exact_minimizer_quadratic(sigma_x2: float, lam: float, r_xy) -> np.ndarray:
    denom = sigma_x2 + lam
    if denom <= 0:
        raise ValueError("sigma_x2 + lambda must be positive")
    return np.asarray(r_xy, float) / denom


def _check_covariance(sigma_x2: float, sigma_y2: float, r_xy: np.ndarray) -> None:
    if sigma_x2 <= 0:
        raise ValueError("sigma_x2 must be positive")
    need = float(r_xy @ r_xy) / sigma_x2
    if sigma_y2 < need * (1.0 - 1e-12) - 1e-15:
        raise ValueError(f"covariance not PSD: sigma_y2={sigma_y2} < |r|^2/sigma_x2={need}")


def exact_risk_quadratic(w, sigma_x2: float, sigma_y2: float, r_xy, lam: float = 0.0) -> float:
    """Population risk of the penalized squared loss under the joint Gaussian law."""
    w = np.asarray(w, float)
    r_xy = np.asarray(r_xy, float)
    _check_covariance(sigma_x2, sigma_y2, r_xy)
    ww = float(w @ w)
    return 0.5 * (sigma_x2 * ww - 2.0 * float(r_xy @ w) + sigma_y2) + 0.5 * lam * ww


def excess_risk_quadratic(w, sigma_x2: float, sigma_y2: float, r_xy, lam: float = 0.0) -> float:
    w_star = exact_minimizer_quadratic(sigma_x2, lam, r_xy)
    # closed form of f(w) - f(w*) avoids cancellation
    diff = np.asarray(w, float) - w_star
    _check_covariance(sigma_x2, sigma_y2, np.asarray(r_xy, float))
    return 0.5 * (sigma_x2 + lam) * float(diff @ diff)


def _expected_sq_shortfall(a: np.ndarray, s: float) -> np.ndarray:
    """E[(a - s G)_+^2] for standard normal G."""
    if s <= 0:
        return np.maximum(a, 0.0) ** 2
    c = a / s
    return (a * a + s * s) * special.ndtr(c) + a * s * np.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)


def hinge_risk_gaussian(w, means, sigma2: float, priors=(0.5, 0.5), lam: float = 0.0) -> float:
    """Population smoothed-hinge risk when x | class i ~ N(means[i], sigma2 I).

    Class 0 carries label +1 and class 1 label -1. For a linear scorer the
    margin is Gaussian, so the risk reduces to two expected squared shortfalls.
    """
    w = np.asarray(w, float)
    mu = np.asarray(means, float)
    s = math.sqrt(sigma2) * float(np.linalg.norm(w))
    margin_means = np.array([mu[0] @ w, -(mu[1] @ w)])
    parts = _expected_sq_shortfall(1.0 - margin_means, s)
    return 0.5 * float(priors[0] * parts[0] + priors[1] * parts[1]) + 0.5 * lam * float(w @ w)


def hinge_minimizer_gaussian(means, sigma2: float, priors=(0.5, 0.5), lam: float = 0.0, w0=None) -> np.ndarray:
    mu = np.asarray(means, float)
    start = (mu[0] - mu[1]) * 0.5 if w0 is None else np.asarray(w0, float)
    res = optimize.minimize(
        hinge_risk_gaussian, start, args=(mu, sigma2, priors, lam), method="BFGS",
        options={"gtol": 1e-11, "maxiter": 1000},
    )
    return res.x


def monte_carlo_risk(loss, w, X, y) -> tuple[float, float]:
    """Sample-average risk and its standard error."""
    vals = loss.values(np.asarray(w, float), X, y)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))
