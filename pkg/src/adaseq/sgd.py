"""One-pass projected SGD, warm-started at the previous iterate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from adaseq.core.types import NumericalError, project_to_domain
from adaseq.losses import QuadraticRegressionLoss, SmoothedHingeLoss


@dataclass(frozen=True)
class SgdConfig:
    """Step sizes ``c / (k + k0)``; ``c=None`` means ``1/m`` of the loss."""

    c: Optional[float] = None
    k0: float = 1.0

    def __post_init__(self):
        if self.c is not None and self.c <= 0:
            raise ValueError("step constant c must be positive")
        if self.k0 < 0:
            raise ValueError("k0 must be non-negative")

    def step_constant(self, loss) -> float:
        return self.c if self.c is not None else 1.0 / loss.strong_convexity


def optimize(w_start, samples, loss, cfg: SgdConfig, radius: float) -> np.ndarray:
    """Run one projected SGD pass over ``samples = (X, y)``.

    Iteration k uses the k-th sample with step ``c/(k+k0)``. With no samples
    the start point is returned unchanged.
    """
    w = np.array(w_start, dtype=float)
    X, y = samples
    K = len(y)
    if K == 0:
        return w
    c = cfg.step_constant(loss)
    lam = loss.lam
    r2 = radius * radius
    hinge = isinstance(loss, SmoothedHingeLoss)
    if not hinge and not isinstance(loss, QuadraticRegressionLoss):
        return _optimize_generic(w, X, y, loss, c, cfg.k0, radius)
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    # overflow is caught by the finiteness check
    with np.errstate(all="ignore"):
        for k in range(K):
            x = X[k]
            eta = c / (k + 1 + cfg.k0)
            pred = float(x @ w)
            if hinge:
                coef = -y[k] * max(1.0 - y[k] * pred, 0.0)
            else:
                coef = pred - y[k]
            # w - eta*(coef*x + lam*w)
            w = (1.0 - eta * lam) * w - (eta * coef) * x
            nrm2 = float(w @ w)
            if not math.isfinite(nrm2):
                raise NumericalError(f"non-finite iterate at SGD step {k + 1}")
            if nrm2 > r2:
                w *= radius / math.sqrt(nrm2)
    return w


def _optimize_generic(w, X, y, loss, c, k0, radius):
    for k in range(len(y)):
        g = loss.grad(w, X[k], y[k])
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at SGD step {k + 1}")
        w = project_to_domain(w - c / (k + 1 + k0) * g, radius)
    return w
