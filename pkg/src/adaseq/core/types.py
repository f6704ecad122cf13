from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from adaseq.core.rng import Stream


class NumericalError(ArithmeticError):
    """Raised when an iterate or gradient stops being finite."""


class Scenario(Protocol):
    dimension: int

    def draw(self, n: int, count: int, seed: int, stream: int = Stream.TRAIN) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True)
class ConvexityConstants:
    """Curvature and gradient constants of the per-step risks.

    ``m``/``M`` are the strong-convexity and gradient-Lipschitz moduli, ``G``
    bounds stochastic gradient norms, ``A``/``B`` are the second-moment growth
    constants and ``sigma`` the gradient-noise level. ``Mnoise`` is the
    stochastic-gradient Lipschitz constant.
    """

    m: float
    M: float
    G: float = 1.0
    A: float = 0.0
    B: float = 0.0
    sigma: float = 0.0
    Mnoise: float = 0.0

    def __post_init__(self):
        vals = (self.m, self.M, self.G, self.A, self.B, self.sigma, self.Mnoise)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("convexity constants must be finite")
        if self.m <= 0:
            raise ValueError(f"strong convexity modulus must be positive, got m={self.m}")
        if self.M < self.m:
            raise ValueError(f"need M >= m, got M={self.M}, m={self.m}")
        if self.G <= 0:
            raise ValueError("G must be positive")
        if min(self.A, self.B, self.sigma, self.Mnoise) < 0:
            raise ValueError("A, B, sigma, Mnoise must be non-negative")


@dataclass(frozen=True)
class ProblemSequence:
    """A drifting problem on the centered ball of radius ``domain_radius``."""

    scenario: Scenario
    domain_radius: float
    horizon: int

    def __post_init__(self):
        if not (self.domain_radius > 0 and math.isfinite(self.domain_radius)):
            raise ValueError("domain_radius must be a positive finite number")
        if self.horizon < 1:
            raise ValueError("horizon must be a positive integer")

    @property
    def dimension(self) -> int:
        return self.scenario.dimension

    @property
    def diameter(self) -> float:
        return 2.0 * self.domain_radius

    def draw(self, n: int, count: int, seed: int, stream: int = Stream.TRAIN):
        return self.scenario.draw(n, count, seed, stream)


@dataclass
class RunRecord:
    n: int
    samples_taken: int
    w: np.ndarray
    rho_hat: float
    t_n: float
    eps_hat: float
    xi: float
    excess_risk_exact: Optional[float] = None
    test_loss: float = float("nan")
    auc: Optional[float] = None
    cum_cost: float = 0.0
    saturated: bool = False
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "K_n": self.samples_taken,
            "rho_hat": self.rho_hat,
            "t_n": self.t_n,
            "eps_hat": self.eps_hat,
            "xi": self.xi,
            "excess_exact": self.excess_risk_exact,
            "test_loss": self.test_loss,
            "auc": self.auc,
            "cum_cost": self.cum_cost,
        }


def project_to_domain(w, radius: float) -> np.ndarray:
    """Euclidean projection onto the closed ball ``{v : |v| <= radius}``."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite iterate")
    norm = float(np.linalg.norm(w))
    if norm <= radius:
        return w.copy()
    return w * (radius / norm)
