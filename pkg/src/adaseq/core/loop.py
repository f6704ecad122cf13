"""The per-run loop: choose K_n, draw, optimize, estimate drift, record."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from adaseq.bound import BoundModel, RiskTracker, chain_advance
from adaseq.core.rng import Stream
from adaseq.core.types import ProblemSequence, RunRecord
from adaseq.drift import DriftConfig, DriftState, one_step_estimate, slack
from adaseq.metrics import roc_auc
from adaseq.policy import PolicyBoundsError, StepContext
from adaseq.sgd import SgdConfig, optimize


@dataclass(frozen=True)
class EvalConfig:
    """Held-out evaluation per step; ``test_size=0`` disables it."""

    test_size: int = 500
    auc: bool = False
    exact: bool = True


def run_sequence(seq: ProblemSequence, policy, drift_cfg: DriftConfig, bound: BoundModel, seed: int, *,
                 loss, eps_target: float, sgd: SgdConfig = SgdConfig(),
                 evaluation: EvalConfig = EvalConfig(), cost_model=None,
                 w0: Optional[np.ndarray] = None) -> list[RunRecord]:
    """Simulate one run of ``seq.horizon`` steps.

    ``policy.choose`` receives a :class:`StepContext` assembled from steps
    before ``n`` only. ``eps_hat`` follows the bound chain driven by the
    known drift (if the policy has one) or by ``rho_hat_{n-1} + t_{n-1}``.
    """
    if eps_target <= 0:
        raise ValueError("eps_target must be positive")
    T = seq.horizon
    diam = seq.diameter
    m = bound.m
    w = np.zeros(seq.dimension) if w0 is None else np.asarray(w0, float).copy()
    drift = DriftState(drift_cfg, diam, bound.constants)
    chain = RiskTracker()
    known_rho = getattr(policy, "rho", None)

    Ks: list[int] = []
    prev_samples = None
    upper_prev = rho_prev = t_prev = None
    cum_cost = 0.0
    records: list[RunRecord] = []
    scenario = seq.scenario

    for n in range(1, T + 1):
        ctx = StepContext(n, tuple(Ks), upper_prev, rho_prev, t_prev, cum_cost)
        K = policy.choose(ctx)
        lo, hi = policy.bounds(n)
        if not isinstance(K, (int, np.integer)) or not lo <= K <= hi:
            raise PolicyBoundsError(f"{getattr(policy, 'name', policy)} chose K={K!r} outside [{lo}, {hi}] at step {n}")
        K = int(K)

        samples = seq.draw(n, K, seed, Stream.TRAIN)
        w_new = optimize(w, samples, loss, sgd, seq.domain_radius)
        if n >= 2 and K > 0 and Ks[-1] > 0:
            drift.add(one_step_estimate(w_new, w, samples, prev_samples, loss, m, diam, step=n))
        drift.note_samples(K)

        if known_rho is not None:
            rho_in = known_rho
        else:
            rho_in = diam if upper_prev is None else upper_prev
        chain = chain_advance(chain, bound, rho_in, K, n)

        if drift.has_estimate:
            rho_hat = drift.rho_hat()
            t_n = slack(n, drift_cfg.c_t)
            upper = drift.upper(n)
        else:
            rho_hat = t_n = upper = float("nan")

        if cost_model is not None:
            cum_cost += cost_model.p(K)

        rec = RunRecord(
            n=n, samples_taken=K, w=w_new.copy(), rho_hat=rho_hat, t_n=t_n,
            eps_hat=chain.current, xi=max(chain.current - eps_target, 0.0),
            cum_cost=cum_cost, saturated=bool(getattr(policy, "saturated", False)),
        )
        rec.extra["D_n"] = drift.correction()
        if evaluation.exact and hasattr(scenario, "excess_risk"):
            rec.excess_risk_exact = float(scenario.excess_risk(n, w_new))
        if evaluation.test_size > 0:
            X, y = seq.draw(n, evaluation.test_size, seed, Stream.TEST)
            rec.test_loss = float(loss.values(w_new, X, y).mean())
            if evaluation.auc:
                try:
                    rec.auc = roc_auc(X @ w_new, y)
                except ValueError:
                    rec.auc = None
        records.append(rec)

        Ks.append(K)
        prev_samples = samples
        w = w_new
        if not math.isnan(upper):
            upper_prev, rho_prev, t_prev = upper, rho_hat, t_n
    return records
