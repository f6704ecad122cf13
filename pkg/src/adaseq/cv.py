"""Cross-validated choice of the penalty ``lam`` across parallel tracks.

Every track owns an iterate, a drift estimator and a sample-size policy.
At step ``n`` the tracks propose sample counts, the largest proposal is
drawn once and shared, a ``P``-fold split scores each track with the
unpenalized loss, and the best track's full-data iterate is reported.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from adaseq.bound import BoundModel, RiskTracker, chain_advance
from adaseq.core.rng import Stream, keyed_generator
from adaseq.core.types import ProblemSequence, RunRecord
from adaseq.drift import DriftConfig, DriftState, one_step_estimate, slack
from adaseq.policy import NoUpdatePolicy, StepContext
from adaseq.sgd import SgdConfig, optimize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CvConfig:
    lambdas: tuple
    folds: int = 5

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lams)
        if not lams:
            raise ValueError("need at least one lambda")
        if any(v < 0 or not math.isfinite(v) for v in lams):
            raise ValueError("lambdas must be finite and non-negative")
        if len(set(lams)) != len(lams):
            log.warning("duplicate lambdas %s: ties go to the smaller index", lams)
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass
class Track:
    lam: float
    loss: object
    bound: BoundModel
    policy: object
    drift: DriftState
    w: np.ndarray
    chain: RiskTracker = RiskTracker()
    Ks: list = field(default_factory=list)
    prev_samples: Optional[tuple] = None
    upper_prev: Optional[float] = None
    rho_prev: Optional[float] = None
    t_prev: Optional[float] = None


def fold_indices(K: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random partition of ``range(K)`` into ``min(folds, K)`` near-equal pieces."""
    if K < 1:
        raise ValueError("need at least one sample to split")
    P = folds
    if K < folds:
        log.warning("K=%d < %d folds: falling back to leave-one-out", K, folds)
        P = K
    return [np.sort(p) for p in np.array_split(rng.permutation(K), P)]


def cv_scores(w_starts: Sequence[np.ndarray], X, y, losses, loss0, pieces, sgd: SgdConfig,
              radius: float) -> np.ndarray:
    """Mean held-out ``loss0`` per track, every sample held out exactly once."""
    K = len(y)
    totals = np.zeros(len(losses))
    for hold in pieces:
        keep = np.ones(K, bool)
        keep[hold] = False
        for i, (w0, loss) in enumerate(zip(w_starts, losses)):
            w = optimize(w0, (X[keep], y[keep]), loss, sgd, radius)
            totals[i] += loss0.values(w, X[hold], y[hold]).sum()
    return totals / K


@dataclass(frozen=True)
class CvStep:
    i_star: int
    w: np.ndarray
    track_w: list
    scores: np.ndarray


def cv_step(tracks: Sequence[Track], samples, loss0, folds: int, sgd: SgdConfig, radius: float,
            rng: np.random.Generator) -> CvStep:
    """Select a track on shared samples and advance every track on all of them.

    ``scores`` is empty when there is a single track or no samples; the
    caller then keeps index 0 (or its previous choice).
    """
    X, y = samples
    K = len(y)
    new_w = [optimize(t.w, samples, t.loss, sgd, radius) for t in tracks]
    if len(tracks) == 1 or K == 0:
        scores = np.empty(0)
        i_star = 0
    else:
        pieces = fold_indices(K, folds, rng)
        scores = cv_scores([t.w for t in tracks], X, y, [t.loss for t in tracks], loss0, pieces, sgd, radius)
        i_star = int(np.argmin(scores))  # first minimum: smallest index wins ties
    return CvStep(i_star, new_w[i_star], new_w, scores)


def make_tracks(cfg: CvConfig, base_loss, base_bound: BoundModel, drift_cfg: DriftConfig, eps: float,
                dimension: int, policy_factory: Optional[Callable] = None) -> list[Track]:
    tracks = []
    base_lam = getattr(base_loss, "lam", 0.0)
    for lam in cfg.lambdas:
        loss = base_loss.with_lambda(lam)
        shift = lam - base_lam
        c = base_bound.constants
        bm = base_bound.with_constants(m=c.m + shift, M=c.M + shift)
        pol = policy_factory(bm) if policy_factory else NoUpdatePolicy(bm, eps)
        tracks.append(Track(lam, loss, bm, pol, DriftState(drift_cfg, bm.diameter, bm.constants),
                            np.zeros(dimension)))
    return tracks


def run_cv(seq: ProblemSequence, cfg: CvConfig, base_loss, base_bound: BoundModel, drift_cfg: DriftConfig,
           seed: int, *, eps_target: float, sgd: SgdConfig = SgdConfig(), test_size: int = 500,
           policy_factory: Optional[Callable] = None) -> list[RunRecord]:
    """One run of the cross-validated pipeline; records follow the selected track."""
    tracks = make_tracks(cfg, base_loss, base_bound, drift_cfg, eps_target, seq.dimension, policy_factory)
    loss0 = base_loss.with_lambda(0.0)
    scenario = seq.scenario
    diam = seq.diameter
    records: list[RunRecord] = []
    i_star = 0
    for n in range(1, seq.horizon + 1):
        proposals = []
        for t in tracks:
            ctx = StepContext(n, tuple(t.Ks), t.upper_prev, t.rho_prev, t.t_prev)
            proposals.append(int(t.policy.choose(ctx)))
        K = max(proposals)
        samples = seq.draw(n, K, seed, Stream.TRAIN)
        rng = keyed_generator(seed, Stream.FOLDS, n)
        step = cv_step(tracks, samples, loss0, cfg.folds, sgd, seq.domain_radius, rng)
        scores = step.scores
        if len(scores):
            i_star = step.i_star
        for t, w_new in zip(tracks, step.track_w):
            if n >= 2 and K > 0 and t.Ks[-1] > 0:
                t.drift.add(one_step_estimate(w_new, t.w, samples, t.prev_samples, t.loss, t.bound.m, diam, step=n))
            t.drift.note_samples(K)
            rho_in = diam if t.upper_prev is None else t.upper_prev
            t.chain = chain_advance(t.chain, t.bound, rho_in, K, n)
            if t.drift.has_estimate:
                t.upper_prev = t.drift.upper(n)
                t.rho_prev = t.drift.rho_hat()
                t.t_prev = slack(n, drift_cfg.c_t)
            t.Ks.append(K)
            t.prev_samples = samples
            t.w = w_new
        best = tracks[i_star]
        rec = RunRecord(
            n=n, samples_taken=K, w=best.w.copy(),
            rho_hat=best.rho_prev if best.rho_prev is not None else float("nan"),
            t_n=best.t_prev if best.t_prev is not None else float("nan"),
            eps_hat=best.chain.current, xi=max(best.chain.current - eps_target, 0.0),
        )
        rec.extra.update(lam=best.lam, index=i_star, proposals=tuple(proposals),
                         scores=tuple(float(s) for s in scores), shared_samples=True)
        if hasattr(scenario, "excess_risk"):
            try:
                rec.excess_risk_exact = float(scenario.excess_risk(n, best.w, lam=0.0))
            except TypeError:
                rec.excess_risk_exact = float(scenario.excess_risk(n, best.w))
        if test_size > 0:
            Xt, yt = seq.draw(n, test_size, seed, Stream.TEST)
            rec.test_loss = float(loss0.values(best.w, Xt, yt).mean())
        records.append(rec)
    return records
