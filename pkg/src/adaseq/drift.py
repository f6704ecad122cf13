"""Estimating how far the minimizers move per step.

A one-step estimate combines the iterate gap with the sample-average
gradient norms at both iterates (each divided by ``m``). Estimates are then
combined either by plain averaging (constant-size changes) or by averaging a
windowed statistic (changes bounded but random). ``rho_hat + t_n`` is what
the policies plug in for the unknown drift.

Slack schedule note: with ``t_n = c_t / sqrt(n-1)`` the exponents in the
summability condition of the coverage theorems are constant in ``n``, so the
series as written does not converge; the schedule nonetheless sits at the
``1/sqrt(n-1)`` level that is recommended for it. Use
:func:`coverage_series_terms` to inspect the terms for a given schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from adaseq.core.types import ConvexityConstants

CONSTANT = "constant-change"
BOUNDED = "bounded-change"


@dataclass(frozen=True)
class OneStepEstimate:
    step: int
    rho_tilde: float
    grad_norm_i: float
    grad_norm_prev: float
    iterate_gap: float


def one_step_estimate(w_i, w_prev, samples_i, samples_prev, loss, m: float, diameter: float,
                      step: int = 0) -> Optional[OneStepEstimate]:
    """Direct estimate of ``|w*_i - w*_{i-1}|``; ``None`` if either step has no samples."""
    Xi, yi = samples_i
    Xp, yp = samples_prev
    if len(yi) == 0 or len(yp) == 0:
        return None
    w_i = np.asarray(w_i, float)
    w_prev = np.asarray(w_prev, float)
    gap = float(np.linalg.norm(w_i - w_prev))
    gi = float(np.linalg.norm(loss.mean_grad(w_i, Xi, yi)))
    gp = float(np.linalg.norm(loss.mean_grad(w_prev, Xp, yp)))
    raw = gap + (gi + gp) / m
    return OneStepEstimate(step, min(raw, diameter), gi, gp, gap)


def combine_average(history: Sequence[float]) -> float:
    if len(history) == 0:
        raise ValueError("no one-step estimates to combine")
    return float(np.mean(history))


def window_estimator_uniform(values: Sequence[float]) -> float:
    """``(W+1)/W * max`` -- unbiased-from-above for i.i.d. Unif[0, rho] changes."""
    W = len(values)
    if W == 0:
        raise ValueError("empty window")
    return (W + 1) / W * float(max(values))


def window_lipschitz(W: int) -> list[float]:
    """Coefficients ``b_j`` with ``|h(p) - h(q)| <= sum_j b_j |p_j - q_j|``."""
    return [(W + 1) / W] * W


def combine_windowed(history: Sequence[float], W: int) -> float:
    """Average of the windowed statistic, windows truncated at the start."""
    if len(history) == 0:
        raise ValueError("no one-step estimates to combine")
    if W < 1:
        raise ValueError("window must be >= 1")
    h = list(history)
    total = 0.0
    for j in range(len(h)):
        total += window_estimator_uniform(h[max(0, j - W + 1): j + 1])
    return total / len(h)


def combine_running_max(history: Sequence[float]) -> float:
    """The naive max combiner; kept only for comparison, it drifts up to diam(X)."""
    if len(history) == 0:
        raise ValueError("no one-step estimates to combine")
    return float(max(history))


def slack(n: int, c_t: float) -> float:
    if n < 2:
        raise ValueError(f"slack is defined for n >= 2, got {n}")
    return c_t / math.sqrt(n - 1)


def dispersion_C(K: int, c_C: float) -> float:
    """``C(K) = sqrt(c_C / K)`` bounding the spread of two independent optimizer outputs."""
    return math.sqrt(c_C / K)


def correction_Dn(C_history: Sequence[float], K_history: Sequence[int], constants: ConvexityConstants) -> float:
    n = len(C_history)
    if n != len(K_history):
        raise ValueError("C and K histories must be aligned")
    if n < 2:
        raise ValueError("D_n needs at least two sampled steps")
    if any(K < 1 for K in K_history):
        raise ValueError("zero-sample steps must be dropped before computing D_n")
    ratio = 1.0 + constants.M / constants.m
    terms = [ratio * C + math.sqrt(constants.sigma / K) for C, K in zip(C_history, K_history)]
    return (terms[0] + 2.0 * sum(terms[1:-1]) + terms[-1]) / (n - 1)


def overshoot_bound(eps: float, constants: ConvexityConstants, K_tilde: float, c_C: float) -> float:
    """Margin by which ``limsup E[rho_hat]`` may exceed ``rho``.

    Uses ``2 sqrt(2) M / m^{3/2}`` on the excess-risk term, the constant the
    derivation arrives at.
    """
    if eps < 0 or K_tilde < 1:
        raise ValueError("need eps >= 0 and K_tilde >= 1")
    m, M = constants.m, constants.M
    G = 2.0 * M / m * dispersion_C(K_tilde, c_C) + math.sqrt(constants.sigma / K_tilde) / m
    return 2.0 * math.sqrt(2.0) * M / m**1.5 * eps + G


def coverage_series_terms(n: int, t_n: float, diameter: float, constants: ConvexityConstants,
                          W: int = 1, b_sum: float = 1.0) -> float:
    """n-th summand of the summability condition on ``{t_n}`` (W=1, b_sum=1 is the averaging case)."""
    scale = (n - W) ** 2 / ((n - 1) * b_sum**2) if W > 1 else (n - 1)
    m, G = constants.m, constants.G
    return (math.exp(-scale * t_n**2 / (18.0 * diameter**2))
            + 2.0 * math.exp(-m * m * scale * t_n**2 / (72.0 * G * G)))


@dataclass(frozen=True)
class DriftConfig:
    mode: str = CONSTANT
    window: int = 5
    c_t: float = 1.0
    c_C: float = 0.0
    use_dn: bool = False

    def __post_init__(self):
        if self.mode not in (CONSTANT, BOUNDED):
            raise ValueError(f"unknown drift mode {self.mode!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.c_t < 0 or self.c_C < 0:
            raise ValueError("c_t and c_C must be non-negative")


@dataclass
class DriftState:
    """Running drift estimate owned by one run."""

    config: DriftConfig
    diameter: float
    constants: ConvexityConstants
    estimates: list = field(default_factory=list)
    sampled_K: list = field(default_factory=list)

    def add(self, est: Optional[OneStepEstimate]) -> None:
        if est is not None:
            self.estimates.append(est)

    def note_samples(self, K: int) -> None:
        if K > 0:
            self.sampled_K.append(K)

    @property
    def history(self) -> list[float]:
        return [e.rho_tilde for e in self.estimates]

    @property
    def has_estimate(self) -> bool:
        return bool(self.estimates)

    def rho_hat(self) -> float:
        if self.config.mode == CONSTANT:
            return combine_average(self.history)
        return combine_windowed(self.history, self.config.window)

    def correction(self) -> float:
        if len(self.sampled_K) < 2:
            return 0.0
        C = [dispersion_C(K, self.config.c_C) for K in self.sampled_K]
        D = correction_Dn(C, self.sampled_K, self.constants)
        if self.config.mode == BOUNDED:
            W = self.config.window
            nm1 = len(self.sampled_K) - 1
            if nm1 + 1 > W:
                D *= nm1 / (nm1 + 1 - W) * sum(window_lipschitz(W))
        return D

    def upper(self, n: int) -> float:
        """``rho_hat + t_n`` (plus ``D_n`` if configured) after step ``n``."""
        val = self.rho_hat() + slack(n, self.config.c_t)
        if self.config.use_dn:
            val += self.correction()
        return min(val, self.diameter)


def calibrate_dispersion(scenario, loss, sgd, radius: float, Ks, reps: int = 200, seed: int = 0,
                         n: int = 1, start=None) -> float:
    """``c_C`` such that ``C(K)^2 = c_C / K`` covers ``E|w_a - w_b|^2``.

    ``w_a`` and ``w_b`` are optimizer outputs from a common start on two
    independent draws of ``K`` samples; the largest ``K E|w_a - w_b|^2`` over
    ``Ks`` is returned.
    """
    from adaseq.core.rng import Stream
    from adaseq.sgd import optimize

    w0 = np.zeros(scenario.dimension) if start is None else np.asarray(start, float)
    best = 0.0
    for K in Ks:
        acc = 0.0
        for r in range(reps):
            a = optimize(w0, scenario.draw(n, int(K), seed + 2 * r, Stream.TRAIN), loss, sgd, radius)
            b = optimize(w0, scenario.draw(n, int(K), seed + 2 * r + 1, Stream.TRAIN), loss, sgd, radius)
            acc += float(np.sum((a - b) ** 2))
        best = max(best, K * acc / reps)
    return best
