"""Budgeted sample planning over a finite horizon.

Sampling ``K`` points costs ``p(K) = P0 [K > 0] + P1 K``. The planner
minimizes an aggregate ``phi`` of the excess-risk gaps
``xi_n = (b~_n - eps)_+`` subject to the budget, where ``b~_n`` is the
four-case tracker from :mod:`adaseq.bound`. The integer program is relaxed:
``K`` becomes real, ``p`` is replaced by the continuous ``p_hat`` and the
consecutive-sampling indicators become ``K_1 <= K_2``,
``K_n <= K_{n-1} + K_{n+1}``, ``K_{T-1} <= K_T``. The relaxed problem is
solved by projected gradient descent on a softplus-smoothed objective with
a few restarts; with unknown drift it is re-solved at every step and only
the first coordinate is committed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from adaseq.bound import BoundModel, RiskTracker, tracker_advance, tracker_path

log = logging.getLogger(__name__)

PHI_KINDS = ("mean", "max", "max-increasing-run")


@dataclass(frozen=True)
class CostModel:
    P0: float = 0.0
    P1: float = 1.0
    K0: float = 0.5

    def __post_init__(self):
        if self.P0 < 0 or self.P1 <= 0:
            raise ValueError("need P0 >= 0 and P1 > 0")
        if not 0 < self.K0 < 1:
            raise ValueError("K0 must lie in (0, 1)")

    def p(self, K: float) -> float:
        return (self.P0 if K > 0 else 0.0) + self.P1 * K

    def p_hat(self, K: float) -> float:
        if K <= self.K0:
            return self.p(self.K0) * K / self.K0
        return self.p(K)

    def max_affordable(self, budget: float) -> int:
        """Largest ``K >= 0`` with ``p(K) <= budget``."""
        if budget < self.P0 + self.P1:
            return 0
        K = int(math.floor((budget - self.P0) / self.P1))
        while K > 0 and self.p(K) > budget:
            K -= 1
        return K


def phi_loss(kind: str, xi: Sequence[float]) -> float:
    xi = [float(v) for v in xi]
    if any(v < 0 for v in xi):
        raise ValueError("excess-risk gaps must be non-negative")
    if not xi:
        return 0.0
    if kind == "mean":
        return sum(xi) / len(xi)
    if kind == "max":
        return max(xi)
    if kind == "max-increasing-run":
        return _max_increasing_run(np.asarray(xi, float))
    raise ValueError(f"unknown phi kind {kind!r}; expected one of {PHI_KINDS}")


@njit(cache=True)
def _max_increasing_run(xi):
    # runs need at least two entries; xi >= 0 so a maximal run dominates its sub-runs
    best = 0.0
    run_sum = xi[0]
    run_len = 1
    for i in range(1, xi.shape[0]):
        if xi[i] >= xi[i - 1]:
            run_sum += xi[i]
            run_len += 1
        else:
            run_sum = xi[i]
            run_len = 1
        if run_len >= 2 and run_sum > best:
            best = run_sum
    return best


@dataclass(frozen=True)
class PlanProblem:
    """Planning window ``[start, horizon]`` with what is known before ``start``."""

    start: int
    horizon: int
    budget: float
    phi: str
    rho: float
    eps: float
    tracker: RiskTracker = RiskTracker()
    prev_K: Optional[int] = None

    def __post_init__(self):
        if not 1 <= self.start <= self.horizon:
            raise ValueError("window must be non-empty")
        if self.budget < 0:
            raise ValueError("remaining budget must be non-negative")
        if self.phi not in PHI_KINDS:
            raise ValueError(f"unknown phi kind {self.phi!r}")
        if self.rho < 0 or self.eps <= 0:
            raise ValueError("need rho >= 0 and eps > 0")

    @property
    def length(self) -> int:
        return self.horizon - self.start + 1


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 2000
    temperature: float = 1e-3
    # the two baseline starts make the plan never worse than the (projected) baselines
    restarts: tuple = ("uniform", "front-loaded", "periodic", "up-front-baseline", "periodic-baseline")
    delta_T: int = 5
    fd_step: float = 1e-4


@dataclass
class Plan:
    K: np.ndarray
    objective: float
    xi: np.ndarray
    diagnostic: str = ""
    restart_objectives: dict = field(default_factory=dict)


# -- relaxed tracker -------------------------------------------------------

@njit(cache=True)
def _softplus(x, tau):
    z = x / tau
    if z > 30.0:
        return x
    return tau * math.log1p(math.exp(z))


@njit(cache=True)
def _relaxed_bt(K, u0, B0, g0, ca, cb, M, m, diam, rho, out):
    """Tracker values for real-valued K; exact whenever every K is 0 or >= 1.

    The state mixes 'never sampled' (weight u) with 'sampled before'; a step
    with 0 < K < 1 counts as sampled with weight K at the K=1 bound.
    """
    u = u0
    B = B0
    g = g0
    never_skip = 0.5 * M * diam * diam
    for j in range(K.shape[0]):
        k = K[j]
        w = k if k < 1.0 else 1.0
        if w < 0.0:
            w = 0.0
        keff = k if k > 1.0 else 1.0
        gap = g + 1.0
        drift = gap * rho
        never_samp = ca * diam * diam / (keff * keff) + cb / keff
        d3 = math.sqrt(2.0 * B / m) + drift
        skip = 0.5 * M * d3 * d3
        d4sq = 4.0 * B / m + 2.0 * drift * drift
        samp = ca * d4sq / (keff * keff) + cb / keff
        out[j] = u * (w * never_samp + (1.0 - w) * never_skip) + (1.0 - u) * (w * samp + (1.0 - w) * skip)
        mass = (1.0 - u) + u * w
        if mass > 0.0:
            B = ((1.0 - u) * (w * samp + (1.0 - w) * B) + u * w * never_samp) / mass
            g = (1.0 - u) * (1.0 - w) * gap / mass
        u = u * (1.0 - w)
    return out


@njit(cache=True)
def _phi(kind, xi):
    if kind == 0:
        return xi.mean()
    if kind == 1:
        return xi.max()
    return _max_increasing_run(xi)


@njit(cache=True)
def _objective(K, u0, B0, g0, ca, cb, M, m, diam, rho, eps, tau, kind, buf):
    _relaxed_bt(K, u0, B0, g0, ca, cb, M, m, diam, rho, buf)
    for j in range(buf.shape[0]):
        if tau > 0.0:
            buf[j] = _softplus(buf[j] - eps, tau)
        else:
            buf[j] = max(buf[j] - eps, 0.0)
    return _phi(kind, buf)


@njit(cache=True)
def _p_hat(k, P0, P1, K0):
    if k <= K0:
        return (P0 + P1 * K0) * k / K0
    return P0 + P1 * k


@njit(cache=True)
def _total_cost(x, P0, P1, K0):
    s = 0.0
    for j in range(x.shape[0]):
        s += _p_hat(x[j], P0, P1, K0)
    return s


@njit(cache=True)
def _upper_limit(x, j, prev_K, first_is_one):
    """Tightest 'left side' constraint on x[j] given its neighbours (inf if none)."""
    L = x.shape[0]
    ub = np.inf
    if L >= 2:
        if j == 0:
            if first_is_one:
                ub = x[1]
            else:
                ub = prev_K + x[1]
        elif j <= L - 2:
            ub = x[j - 1] + x[j + 1]
        if j == L - 2:
            ub = min(ub, x[L - 1])
    return ub


@njit(cache=True)
def _shift_cost(x, lam, P0, P1, K0):
    s = 0.0
    for j in range(x.shape[0]):
        s += _p_hat(max(x[j] - lam, 0.0), P0, P1, K0)
    return s


@njit(cache=True)
def _project(x, prev_K, first_is_one, budget, P0, P1, K0, kcap, sweeps):
    L = x.shape[0]
    for j in range(L):
        x[j] = min(max(x[j], 0.0), kcap)
    # budget first: subtract a common amount (Euclidean projection on the linear cost piece)
    if _total_cost(x, P0, P1, K0) > budget:
        lo = 0.0
        hi = x.max()
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _shift_cost(x, mid, P0, P1, K0) <= budget:
                hi = mid
            else:
                lo = mid
        for j in range(L):
            x[j] = max(x[j] - hi, 0.0)
    _order(x, prev_K, first_is_one, kcap, sweeps)
    # the ordering constraints are cones, so shrinking keeps them
    if _total_cost(x, P0, P1, K0) > budget:
        lo = 0.0
        hi = 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _total_cost(mid * x, P0, P1, K0) <= budget:
                lo = mid
            else:
                hi = mid
        for j in range(L):
            x[j] *= lo
    return x


@njit(cache=True)
def _order(x, prev_K, first_is_one, kcap, sweeps):
    L = x.shape[0]
    if L >= 2:
        # cyclic projections onto the ordering half-spaces
        for _ in range(sweeps):
            v = x[0] - x[1] - (0.0 if first_is_one else prev_K)
            if v > 0.0:
                x[0] -= 0.5 * v
                x[1] += 0.5 * v
            for j in range(1, L - 1):
                v = x[j] - x[j - 1] - x[j + 1]
                if v > 0.0:
                    x[j] -= v / 3.0
                    x[j - 1] += v / 3.0
                    x[j + 1] += v / 3.0
            v = x[L - 2] - x[L - 1]
            if v > 0.0:
                x[L - 2] -= 0.5 * v
                x[L - 1] += 0.5 * v
            for j in range(L):
                x[j] = min(max(x[j], 0.0), kcap)
        # exact repair by lowering left sides until no constraint binds
        for _ in range(50 * L):
            changed = False
            for j in range(L):
                ub = _upper_limit(x, j, prev_K, first_is_one)
                if x[j] > ub:
                    x[j] = max(ub, 0.0)
                    changed = True
            if not changed:
                break
    return x


@njit(cache=True)
def _solve(x0, u0, B0, g0, ca, cb, M, m, diam, rho, eps, tau, kind,
           prev_K, first_is_one, budget, P0, P1, K0, kcap, iters, h_rel):
    L = x0.shape[0]
    buf = np.empty(L)
    x = _project(x0.copy(), prev_K, first_is_one, budget, P0, P1, K0, kcap, 20)
    f = _objective(x, u0, B0, g0, ca, cb, M, m, diam, rho, eps, tau, kind, buf)
    scale = 1.0
    for j in range(L):
        scale = max(scale, x[j])
    step = 0.25 * scale
    g = np.empty(L)
    xp = np.empty(L)
    for _ in range(iters):
        gmax = 0.0
        for j in range(L):
            h = h_rel * max(1.0, abs(x[j]))
            xp[:] = x
            xp[j] = x[j] + h
            fp = _objective(xp, u0, B0, g0, ca, cb, M, m, diam, rho, eps, tau, kind, buf)
            xp[j] = max(x[j] - h, 0.0)
            fm = _objective(xp, u0, B0, g0, ca, cb, M, m, diam, rho, eps, tau, kind, buf)
            g[j] = (fp - fm) / (x[j] + h - xp[j])
            if x[j] <= 0.0 and g[j] > 0.0:
                g[j] = 0.0  # blocked by K >= 0
            gmax = max(gmax, abs(g[j]))
        if gmax == 0.0:
            break
        accepted = False
        while step > 1e-9 * scale:
            xn = _project(x - (step / gmax) * g, prev_K, first_is_one, budget, P0, P1, K0, kcap, 20)
            fn = _objective(xn, u0, B0, g0, ca, cb, M, m, diam, rho, eps, tau, kind, buf)
            if fn < f:
                x = xn
                f = fn
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return x, f


def _initial_points(prob: PlanProblem, cm: CostModel, solver: SolverConfig) -> dict[str, np.ndarray]:
    L = prob.length
    B = prob.budget

    def fill(mask):
        mask = np.asarray(mask, bool)
        cnt = int(mask.sum())
        if cnt == 0:
            return np.zeros(L)
        per = max((B / cnt - cm.P0) / cm.P1, 0.0)
        return np.where(mask, per, 0.0)

    idx = np.arange(L)
    out = {}
    for name in solver.restarts:
        if name == "uniform":
            out[name] = fill(np.ones(L, bool))
        elif name == "front-loaded":
            out[name] = fill(idx < min(2, L))
        elif name == "periodic":
            # phase fixed to absolute time so successive windows agree
            phase = (idx + prob.start - 1) % solver.delta_T
            out[name] = fill((phase == 0) | (phase == 1))
        elif name == "up-front-baseline":
            out[name] = np.asarray(cost_baseline("up-front", cm, B, L), float)
        elif name == "periodic-baseline":
            batch = (idx + prob.start - 1) % solver.delta_T == 0
            out[name] = np.where(batch, cm.max_affordable(math.floor(B / max(int(batch.sum()), 1))), 0.0)
        else:
            raise ValueError(f"unknown restart {name!r}")
    return out


def _tracker_state(prob: PlanProblem) -> tuple[float, float, float]:
    rt = prob.tracker
    if not rt.ever_sampled:
        return 1.0, 0.0, 0.0
    return 0.0, rt.eps_at_last_sample, float(prob.start - 1 - rt.last_sampled)


def relaxed_tracker(prob: PlanProblem, bm: BoundModel, K) -> np.ndarray:
    """Tracker values of the relaxed plan (equal to the exact tracker on {0} U [1, inf))."""
    u0, B0, g0 = _tracker_state(prob)
    c = bm.constants
    out = np.empty(prob.length)
    return _relaxed_bt(np.asarray(K, float), u0, B0, g0, bm.c_alpha, bm.c_beta, c.M, c.m, bm.diameter,
                       prob.rho, out)


def plan_relaxed(prob: PlanProblem, bm: BoundModel, cm: CostModel, solver: SolverConfig = SolverConfig()) -> Plan:
    """Real-valued plan for the window; feasible for the relaxed constraints."""
    L = prob.length
    if prob.budget <= 0:
        xi = np.maximum(np.array(tracker_path(bm, prob.rho, [0] * L, prob.tracker, prob.start)) - prob.eps, 0.0)
        return Plan(np.zeros(L), phi_loss(prob.phi, xi), xi, diagnostic="no budget: nothing can be sampled")
    u0, B0, g0 = _tracker_state(prob)
    c = bm.constants
    kind = PHI_KINDS.index(prob.phi)
    first_is_one = prob.start == 1 or prob.prev_K is None
    prev_K = float(prob.prev_K or 0)
    best = None
    objectives = {}
    for name, x0 in _initial_points(prob, cm, solver).items():
        x, _ = _solve(x0, u0, B0, g0, bm.c_alpha, bm.c_beta, c.M, c.m, bm.diameter, prob.rho, prob.eps,
                      solver.temperature, kind, prev_K, first_is_one, prob.budget, cm.P0, cm.P1, cm.K0,
                      float(bm.k_cap), solver.iterations, solver.fd_step)
        # restarts are ranked by the exact objective, not the smoothed one
        xi = np.maximum(relaxed_tracker(prob, bm, x) - prob.eps, 0.0)
        f = phi_loss(prob.phi, xi)
        objectives[name] = f
        if best is None or f < best[1]:
            best = (x, f, xi)
    x, f, xi = best
    return Plan(x, f, xi, restart_objectives=objectives)


def constraint_violation(x, prev_K: Optional[float], budget: float, cm: CostModel) -> float:
    """Largest violation of the relaxed constraints (0 when feasible)."""
    x = np.asarray(x, float)
    L = len(x)
    viol = [max(-float(x.min()), 0.0), max(sum(cm.p_hat(v) for v in x) - budget, 0.0)]
    if L >= 2:
        viol.append(x[0] - x[1] - (prev_K or 0.0))
        viol.extend(x[j] - x[j - 1] - x[j + 1] for j in range(1, L - 1))
        viol.append(x[L - 2] - x[L - 1])
    return max(0.0, max(viol))


def round_plan(x, cm: CostModel, budget: float) -> list[int]:
    """Round half up, then lower the largest entries until ``sum p(K) <= budget``."""
    K = [int(math.floor(v + 0.5)) for v in np.asarray(x, float)]
    while sum(cm.p(k) for k in K) > budget:
        j = max(range(len(K)), key=lambda i: (K[i], -i))
        if K[j] == 0:
            break
        over = sum(cm.p(k) for k in K) - budget
        K[j] = max(K[j] - max(1, int(math.ceil(over / cm.P1)) if K[j] > 1 else 1), 0)
    return K


def commit_first(x0: float, cm: CostModel, remaining: float) -> int:
    K = int(math.floor(x0 + 0.5))
    if K > 0 and cm.p(K) > remaining:
        K = cm.max_affordable(remaining)
    return max(K, 0)


def replan_receding(prob: PlanProblem, bm: BoundModel, cm: CostModel, solver: SolverConfig = SolverConfig()) -> int:
    """Solve the window problem and commit only its first coordinate, rounded."""
    plan = plan_relaxed(prob, bm, cm, solver)
    return commit_first(float(plan.K[0]), cm, prob.budget)


def cost_baseline(kind: str, cm: CostModel, budget: float, T: int, delta_T: int = 5) -> list[int]:
    """Budget-matched baselines: everything at n=1, or equal batches every ``delta_T`` steps."""
    if kind == "up-front":
        return [cm.max_affordable(budget)] + [0] * (T - 1)
    if kind == "periodic":
        if not 1 <= delta_T <= T:
            raise ValueError("delta_T must be in [1, T]")
        times = [n for n in range(1, T + 1) if (n - 1) % delta_T == 0]
        per = math.floor(budget / len(times))
        K = cm.max_affordable(per)
        return [K if (n - 1) % delta_T == 0 else 0 for n in range(1, T + 1)]
    raise ValueError(f"unknown baseline kind {kind!r}")


def schedule_objective(K: Sequence[int], bm: BoundModel, rho: float, eps: float, phi: str) -> float:
    """``phi`` of the exact tracker gaps of an integer schedule from step 1."""
    bt = tracker_path(bm, rho, [int(k) for k in K])
    return phi_loss(phi, [max(v - eps, 0.0) for v in bt])


class RecedingPlannerPolicy:
    """Sample policy that re-solves the budgeted plan at every step.

    Uses ``rho_hat_{n-1} + t_{n-1}`` once an estimate exists and
    ``rho_prior`` (or ``diam(X)``) before that.
    """

    name = "cost-planned"
    init_steps = 0

    def __init__(self, bm: BoundModel, cm: CostModel, budget: float, horizon: int, eps: float,
                 phi: str = "max-increasing-run", solver: SolverConfig = SolverConfig(),
                 rho_prior: Optional[float] = None):
        self.bm = bm
        self.cm = cm
        self.budget = budget
        self.horizon = horizon
        self.eps = eps
        self.phi = phi
        self.solver = solver
        self.rho_prior = rho_prior
        self.saturated = False
        self.last_plan: Optional[Plan] = None

    def bounds(self, n: int) -> tuple[int, int]:
        return 0, self.bm.k_cap

    def choose(self, ctx) -> int:
        if ctx.upper_prev is not None:
            rho = ctx.upper_prev
        else:
            rho = self.bm.diameter if self.rho_prior is None else self.rho_prior
        rt = RiskTracker()
        for i, K in enumerate(ctx.K_history, start=1):
            rt = tracker_advance(rt, self.bm, rho, K, i)
        remaining = max(self.budget - ctx.cost_spent, 0.0)
        prob = PlanProblem(ctx.n, self.horizon, remaining, self.phi, rho, self.eps, rt,
                           ctx.K_history[-1] if ctx.K_history else None)
        plan = plan_relaxed(prob, self.bm, self.cm, self.solver)
        self.last_plan = plan
        return commit_first(float(plan.K[0]), self.cm, remaining)
