"""Rules that pick the number of samples ``K_n`` for step ``n``.

A policy only ever sees a :class:`StepContext`, which is built from steps
strictly before ``n``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from adaseq.bound import BoundModel, bound_eval, epsilon_recursion, invert_bound, is_saturated

log = logging.getLogger(__name__)

KINDS = ("known-rho", "update-past", "no-update", "up-front", "periodic")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    eps: float
    rho_known: Optional[float] = None
    delta_T: Optional[int] = None
    total: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if (self.kind == "known-rho") != (self.rho_known is not None):
            raise ValueError("rho_known is required for, and only for, kind='known-rho'")
        if (self.kind == "periodic") != (self.delta_T is not None):
            raise ValueError("delta_T is required for, and only for, kind='periodic'")


@dataclass(frozen=True)
class StepContext:
    """What is known when ``K_n`` is chosen."""

    n: int
    K_history: tuple = ()
    upper_prev: Optional[float] = None  # rho_hat_{n-1} + t_{n-1}
    rho_hat_prev: Optional[float] = None
    t_prev: Optional[float] = None
    cost_spent: float = 0.0


class PolicyBoundsError(RuntimeError):
    pass


def initial_k(bm: BoundModel, eps: float) -> int:
    """Sample count for the first steps, where only ``diam(X)`` bounds the start distance."""
    return invert_bound(bm, bm.diameter, eps)


def k_star(bm: BoundModel, rho: float, eps: float) -> int:
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return invert_bound(bm, math.sqrt(2.0 * eps / bm.m) + rho, eps)


def choose_k_no_update(bm: BoundModel, eps: float, rho_hat_prev: float, t_prev: float) -> int:
    if rho_hat_prev < 0 or t_prev < 0:
        raise ValueError("rho_hat and t must be non-negative")
    return invert_bound(bm, math.sqrt(2.0 * eps / bm.m) + rho_hat_prev + t_prev, eps)


def refresh_past_bounds(bm: BoundModel, upper: float, K_history: Sequence[int], init_steps: int = 2) -> list[float]:
    """Recompute every past excess-risk bound with the current drift estimate."""
    out: list[float] = []
    for i, K in enumerate(K_history, start=1):
        if K < 1:
            raise ValueError("update-past bookkeeping needs K_i >= 1 at every step")
        if i <= init_steps or not out:
            out.append(bound_eval(bm, bm.diameter, K))
        else:
            out.append(epsilon_recursion(bm, out[-1], upper, K))
    return out


def choose_k_update_past(eps_hats: Sequence[float], bm: BoundModel, eps: float, rho_hat_prev: float,
                         t_prev: float, K_history: Sequence[int]) -> tuple[int, list[float]]:
    if len(eps_hats) != len(K_history):
        raise ValueError(f"misaligned histories: {len(eps_hats)} bounds vs {len(K_history)} sample counts")
    upper = rho_hat_prev + t_prev
    refreshed = refresh_past_bounds(bm, upper, K_history)
    last = refreshed[-1] if refreshed else eps
    d0 = math.sqrt(2.0 / bm.m * max(last, eps)) + upper
    return invert_bound(bm, d0, eps), refreshed


def baseline_schedule(kind: str, total: int, T: int, delta_T: Optional[int] = None) -> list[int]:
    """Sample-count baselines with a fixed total: all up front, or equal periodic batches."""
    if total < 0 or T < 1:
        raise ValueError("need total >= 0 and T >= 1")
    if kind == "up-front":
        return [int(total)] + [0] * (T - 1)
    if kind == "periodic":
        if delta_T is None or delta_T < 1 or delta_T > T:
            raise ValueError(f"delta_T must be in [1, T={T}], got {delta_T}")
        times = [n for n in range(1, T + 1) if (n - 1) % delta_T == 0]
        batch = int(total) // len(times)
        return [batch if (n - 1) % delta_T == 0 else 0 for n in range(1, T + 1)]
    raise ValueError(f"unknown baseline kind {kind!r}")


class SamplePolicy:
    """Base class: subclasses implement :meth:`_choose`."""

    name = "policy"
    init_steps = 2

    def __init__(self, bm: BoundModel, eps: float):
        self.bm = bm
        self.eps = eps
        self.saturated = False

    def bounds(self, n: int) -> tuple[int, int]:
        return 1, self.bm.k_cap

    def choose(self, ctx: StepContext) -> int:
        if ctx.n <= self.init_steps:
            K = initial_k(self.bm, self.eps)
            d0 = self.bm.diameter
        else:
            K, d0 = self._choose(ctx)
        self.saturated = d0 is not None and is_saturated(self.bm, d0, self.eps, K)
        if self.saturated:
            log.warning("step %d: target %.3g unreachable below k_cap=%d", ctx.n, self.eps, self.bm.k_cap)
        return K

    def _choose(self, ctx: StepContext) -> tuple[int, Optional[float]]:
        raise NotImplementedError


def _upper(ctx: StepContext, bm: BoundModel) -> float:
    # without any drift estimate only the trivial bound is available
    return bm.diameter if ctx.upper_prev is None else ctx.upper_prev


class KnownRhoPolicy(SamplePolicy):
    name = "known-rho"

    def __init__(self, bm, eps, rho: float):
        super().__init__(bm, eps)
        self.rho = rho
        self.k = k_star(bm, rho, eps)

    def _choose(self, ctx):
        return self.k, math.sqrt(2.0 * self.eps / self.bm.m) + self.rho


class NoUpdatePolicy(SamplePolicy):
    name = "no-update"

    def _choose(self, ctx):
        upper = _upper(ctx, self.bm)
        d0 = math.sqrt(2.0 * self.eps / self.bm.m) + upper
        return invert_bound(self.bm, d0, self.eps), d0


class UpdatePastPolicy(SamplePolicy):
    name = "update-past"

    def __init__(self, bm, eps):
        super().__init__(bm, eps)
        self.eps_hats: list[float] = []

    def _choose(self, ctx):
        if ctx.upper_prev is None:
            rho_hat, t = self.bm.diameter, 0.0
        else:
            rho_hat, t = ctx.upper_prev, 0.0
        prev = self.eps_hats + [self.eps] * (len(ctx.K_history) - len(self.eps_hats))
        K, refreshed = choose_k_update_past(prev, self.bm, self.eps, rho_hat, t, ctx.K_history)
        self.eps_hats = refreshed
        d0 = math.sqrt(2.0 / self.bm.m * max(refreshed[-1], self.eps)) + rho_hat + t
        return K, d0


class ScheduledPolicy(SamplePolicy):
    """Replays a fixed schedule (baselines, forced runs)."""

    init_steps = 0

    def __init__(self, bm, eps, schedule: Sequence[int], name: str = "scheduled"):
        super().__init__(bm, eps)
        if any(K < 0 for K in schedule):
            raise ValueError("schedule entries must be non-negative")
        self.schedule = [int(K) for K in schedule]
        self.name = name

    def bounds(self, n):
        return 0, max(self.bm.k_cap, max(self.schedule, default=0))

    def _choose(self, ctx):
        if ctx.n > len(self.schedule):
            raise IndexError(f"schedule has {len(self.schedule)} steps, asked for step {ctx.n}")
        return self.schedule[ctx.n - 1], None


def make_policy(cfg: PolicyConfig, bm: BoundModel, horizon: int) -> SamplePolicy:
    if cfg.kind == "known-rho":
        return KnownRhoPolicy(bm, cfg.eps, cfg.rho_known)
    if cfg.kind == "no-update":
        return NoUpdatePolicy(bm, cfg.eps)
    if cfg.kind == "update-past":
        return UpdatePastPolicy(bm, cfg.eps)
    if cfg.total is None:
        raise ValueError(f"baseline kind {cfg.kind!r} needs a total sample count")
    sched = baseline_schedule(cfg.kind, cfg.total, horizon, cfg.delta_T)
    return ScheduledPolicy(bm, cfg.eps, sched, name=cfg.kind)
