"""Excess-risk bounds for the optimizer and their bookkeeping over a run.

The optimizer bound is ``b(d0, K) = c_alpha d0^2 / K^2 + c_beta / K`` for
``K >= 1``; with no samples the descent-lemma bound ``e(d0^2) = M d0^2 / 2``
applies. Distances passed as ``d0`` are never squared by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from adaseq.core.types import ConvexityConstants


@dataclass(frozen=True)
class BoundModel:
    c_alpha: float
    c_beta: float
    constants: ConvexityConstants
    diameter: float
    k_cap: int = 10**6

    def __post_init__(self):
        if self.c_alpha < 0 or self.c_beta <= 0:
            raise ValueError("need c_alpha >= 0 and c_beta > 0")
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")
        if self.k_cap < 1:
            raise ValueError("k_cap must be >= 1")

    @property
    def m(self) -> float:
        return self.constants.m

    def with_constants(self, **kw) -> "BoundModel":
        return replace(self, constants=replace(self.constants, **kw))


def descent_bound_e(constants: ConvexityConstants, dist2: float) -> float:
    if dist2 < 0:
        raise ValueError("dist2 must be non-negative")
    return 0.5 * constants.M * dist2


def bound_eval(bm: BoundModel, d0: float, K: int) -> float:
    if d0 < 0:
        raise ValueError("d0 must be non-negative")
    if K <= 0:
        return descent_bound_e(bm.constants, d0 * d0)
    return bm.c_alpha * d0 * d0 / (K * K) + bm.c_beta / K


def invert_bound(bm: BoundModel, d0: float, eps_target: float) -> int:
    """Smallest ``K`` in ``[1, k_cap]`` with ``b(d0, K) <= eps_target``.

    Returns ``k_cap`` when the target is out of reach; callers detect that by
    re-evaluating the bound (see :func:`is_saturated`).
    """
    if not eps_target > 0:
        raise ValueError(f"eps_target must be positive, got {eps_target}")
    a = bm.c_alpha * d0 * d0
    c = bm.c_beta
    # root of eps K^2 - c K - a = 0
    root = (c + math.sqrt(c * c + 4.0 * eps_target * a)) / (2.0 * eps_target)
    if not math.isfinite(root) or root >= bm.k_cap:
        K = bm.k_cap
    else:
        K = max(1, math.ceil(root))
    # guard the float rounding of the root
    while K > 1 and bound_eval(bm, d0, K - 1) <= eps_target:
        K -= 1
    while K < bm.k_cap and bound_eval(bm, d0, K) > eps_target:
        K += 1
    return K


def is_saturated(bm: BoundModel, d0: float, eps_target: float, K: int) -> bool:
    return K >= bm.k_cap and bound_eval(bm, d0, K) > eps_target


def epsilon_recursion(bm: BoundModel, eps_prev: float, rho: float, K: int) -> float:
    if eps_prev < 0 or rho < 0:
        raise ValueError("eps_prev and rho must be non-negative")
    return bound_eval(bm, math.sqrt(2.0 * eps_prev / bm.m) + rho, K)


@dataclass(frozen=True)
class RiskTracker:
    """State of the four-case bound recursion used when steps may be skipped.

    ``last_sampled`` is ``None`` until the first sampling step.
    """

    last_sampled: Optional[int] = None
    eps_at_last_sample: float = 0.0
    current: float = 0.0

    @property
    def ever_sampled(self) -> bool:
        return self.last_sampled is not None


def tracker_advance(rt: RiskTracker, bm: BoundModel, rho_plus_slack: float, K_n: int, n: int) -> RiskTracker:
    if n < 1:
        raise ValueError("n must be >= 1")
    if rho_plus_slack < 0:
        raise ValueError("rho_plus_slack must be non-negative")
    diam = bm.diameter
    if not rt.ever_sampled:
        if K_n <= 0:
            return RiskTracker(None, 0.0, descent_bound_e(bm.constants, diam * diam))
        val = bound_eval(bm, diam, K_n)
        return RiskTracker(n, val, val)
    gap = n - rt.last_sampled
    drift = gap * rho_plus_slack
    if K_n <= 0:
        d = math.sqrt(2.0 * rt.eps_at_last_sample / bm.m) + drift
        return RiskTracker(rt.last_sampled, rt.eps_at_last_sample, descent_bound_e(bm.constants, d * d))
    d0 = math.sqrt(4.0 / bm.m * rt.eps_at_last_sample + 2.0 * drift * drift)
    val = bound_eval(bm, d0, K_n)
    return RiskTracker(n, val, val)


def tracker_path(bm: BoundModel, rho_plus_slack: float, Ks, start: RiskTracker = RiskTracker(), n0: int = 1) -> list[float]:
    """Tracker values for the schedule ``Ks`` applied from step ``n0``."""
    rt = start
    out = []
    for j, K in enumerate(Ks):
        rt = tracker_advance(rt, bm, rho_plus_slack, int(K), n0 + j)
        out.append(rt.current)
    return out


def chain_advance(rt: RiskTracker, bm: BoundModel, rho_plus_slack: float, K_n: int, n: int,
                  init_steps: int = 2) -> RiskTracker:
    """Bound bookkeeping for run records.

    Same as :func:`tracker_advance` except that the first ``init_steps``
    sampled steps use ``b(diam, K)`` and a sampled step directly following
    another sampled step uses the one-step recursion
    ``b(sqrt(2 eps/m) + rho, K)``, which is what the adaptive policies target.
    """
    if K_n > 0 and n <= init_steps:
        val = bound_eval(bm, bm.diameter, K_n)
        return RiskTracker(n, val, val)
    if K_n > 0 and rt.ever_sampled and rt.last_sampled == n - 1:
        val = epsilon_recursion(bm, rt.eps_at_last_sample, rho_plus_slack, K_n)
        return RiskTracker(n, val, val)
    return tracker_advance(rt, bm, rho_plus_slack, K_n, n)


def quadratic_sgd_moments(K_max: int, d: int, sigma_x2: float, noise_var: float, c: float, k0: float = 1.0):
    """Exact second moments of unprojected SGD on Gaussian least squares.

    For ``x ~ N(0, sigma_x2 I)`` and additive response noise of variance
    ``noise_var`` the error ``e_k = w_k - w*`` satisfies
    ``E|e_k|^2 = a_k |e_0|^2 + v_k`` whatever the direction of ``e_0``.
    Returns the arrays ``(a_k, v_k)`` for ``k = 1..K_max``.
    """
    a = np.empty(K_max)
    v = np.empty(K_max)
    ak, vk = 1.0, 0.0
    s = sigma_x2
    for k in range(1, K_max + 1):
        eta = c / (k + k0)
        # E|(I - eta x x^T) e|^2 = (1 - 2 eta s + eta^2 (d+2) s^2) |e|^2 for isotropic Gaussian x
        f = 1.0 - 2.0 * eta * s + eta * eta * (d + 2) * s * s
        ak = f * ak
        vk = f * vk + eta * eta * d * s * noise_var
        a[k - 1] = ak
        v[k - 1] = vk
    return a, v


def calibrate_quadratic_bound(d: int, sigma_x2: float, noise_var: float, c: float, k0: float = 1.0,
                              K_max: int = 20000, safety: float = 1.0) -> tuple[float, float]:
    """Envelope constants ``(c_alpha, c_beta)`` from the exact SGD moments.

    Excess risk is ``sigma_x2/2 * E|e_K|^2``; the constants are the suprema of
    ``K^2 * alpha_K`` and ``K * beta_K`` over ``K <= K_max``, times ``safety``.
    """
    a, v = quadratic_sgd_moments(K_max, d, sigma_x2, noise_var, c, k0)
    k = np.arange(1, K_max + 1, dtype=float)
    c_alpha = 0.5 * sigma_x2 * float(np.max(a * k * k))
    c_beta = 0.5 * sigma_x2 * float(np.max(v * k))
    return safety * c_alpha, safety * c_beta


def calibrate_bound_monte_carlo(scenario, loss, sgd, radius: float, d0: float, Ks, reps: int = 200,
                                seed: int = 0, safety: float = 1.0, n: int = 1) -> tuple[float, float]:
    """Fit ``(c_alpha, c_beta)`` from simulated SGD runs against exact excess risk.

    ``c_beta`` is the largest ``K * E[excess]`` when starting at the minimizer;
    ``c_alpha`` the largest ``K^2 (E[excess] - c_beta/K)_+ / d0^2`` when starting
    ``d0`` away in a random direction (kept inside the domain). Both are
    multiplied by ``safety``.
    """
    from adaseq.core.rng import Stream, keyed_generator
    from adaseq.core.types import project_to_domain
    from adaseq.sgd import optimize

    w_star = np.asarray(scenario.minimizer(n), float)
    d = w_star.shape[0]
    near, far = [], []
    for K in Ks:
        ex0 = ex1 = 0.0
        for r in range(reps):
            samples = scenario.draw(n, int(K), seed + r, Stream.TRAIN)
            u = keyed_generator(seed + r, Stream.SHUFFLE, n).standard_normal(d)
            start = project_to_domain(w_star + d0 * u / np.linalg.norm(u), radius)
            ex0 += scenario.excess_risk(n, optimize(w_star, samples, loss, sgd, radius))
            ex1 += scenario.excess_risk(n, optimize(start, samples, loss, sgd, radius))
        near.append(ex0 / reps)
        far.append(ex1 / reps)
    Ks = np.asarray(Ks, float)
    c_beta = float(np.max(Ks * np.asarray(near)))
    c_alpha = float(np.max(Ks * Ks * np.maximum(np.asarray(far) - c_beta / Ks, 0.0))) / (d0 * d0)
    return safety * c_alpha, safety * c_beta
