"""Seeded multi-run experiments and their CSV/JSON outputs."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from adaseq.bound import BoundModel, calibrate_quadratic_bound
from adaseq.config import ConfigError, ExperimentConfig
from adaseq.core.loop import EvalConfig, run_sequence
from adaseq.core.types import ConvexityConstants, ProblemSequence, RunRecord
from adaseq.cv import CvConfig, run_cv
from adaseq.drift import DriftConfig
from adaseq.losses import QuadraticRegressionLoss, SmoothedHingeLoss
from adaseq.planner import (
    CostModel,
    RecedingPlannerPolicy,
    SolverConfig,
    cost_baseline,
    schedule_objective,
)
from adaseq.policy import KnownRhoPolicy, NoUpdatePolicy, ScheduledPolicy, UpdatePastPolicy, baseline_schedule
from adaseq.scenarios import ClassificationDrift, CsvStream, RegressionDrift, theta_for_drift
from adaseq.sgd import SgdConfig

log = logging.getLogger(__name__)

COLUMNS = ("run", "n", "K_n", "rho_hat", "t_n", "eps_hat", "xi", "excess_exact", "test_loss", "auc", "cum_cost")
METRICS = COLUMNS[2:]
MATCHED = ("up-front-matched", "periodic-matched")
COST = ("cost-planned", "cost-up-front", "cost-periodic")


@dataclass
class Setup:
    seq: ProblemSequence
    loss: object
    bound: BoundModel
    drift: DriftConfig
    sgd: SgdConfig
    evaluation: EvalConfig
    cost: Optional[CostModel]
    true_rho: Optional[float]
    derived: dict


def build(cfg: ExperimentConfig) -> Setup:
    s, b = cfg.scenario, cfg.bound
    derived: dict = {}
    if s.kind == "regression":
        scen = RegressionDrift(rho=s.rho, sigma_x2=s.sigma_x2, lam=s.lam, circle_radius=s.circle_radius,
                               noise_var=s.noise_var, dimension=s.dimension)
        horizon = s.horizon
        true_rho = s.rho
    elif s.kind == "classification":
        theta = s.theta if s.theta is not None else theta_for_drift(s.rho, s.sigma2, s.lam, s.dimension)
        scen = ClassificationDrift(theta=theta, sigma2=s.sigma2, lam=s.lam, dimension=s.dimension)
        derived["theta"] = theta
        horizon = s.horizon
        true_rho = scen.minimizer_drift
    else:
        scen = CsvStream(s.path, s.test_fraction)
        horizon = min(s.horizon, scen.horizon)
        true_rho = None
    d = scen.dimension
    if s.loss == "hinge" or s.kind == "classification":
        loss = SmoothedHingeLoss(s.lam, d)
    else:
        loss = QuadraticRegressionLoss(s.lam, s.sigma_x2, d)
    seq = ProblemSequence(scen, s.domain_radius, horizon)

    m = b.m if b.m is not None else loss.strong_convexity
    if m <= 0:
        raise ConfigError("bound.m: strong convexity must be positive (set lam > 0 or bound.m)")
    if b.M is not None:
        M = b.M
    elif isinstance(loss, QuadraticRegressionLoss):
        M = m
    else:
        M = 1.0 + s.sigma2 + s.lam
    try:
        constants = ConvexityConstants(m=m, M=M, G=b.G, A=b.A, B=b.B, sigma=b.sigma)
    except ValueError as exc:
        raise ConfigError(f"bound: {exc}") from None
    sgd = SgdConfig(cfg.sgd.c, cfg.sgd.k0)
    if b.calibrate == "exact-moments":
        c_alpha, c_beta = calibrate_quadratic_bound(d, s.sigma_x2, s.noise_var, sgd.step_constant(loss), sgd.k0,
                                                    safety=b.safety)
    else:
        c_alpha, c_beta = b.c_alpha, b.c_beta
    derived.update(c_alpha=c_alpha, c_beta=c_beta, m=m, M=M, diameter=seq.diameter, horizon=horizon)
    bound = BoundModel(c_alpha, c_beta, constants, seq.diameter, b.k_cap)
    dc = cfg.drift
    drift = DriftConfig(dc.mode, dc.window, dc.c_t, dc.c_C, dc.use_dn)
    ev = EvalConfig(cfg.run.test_size, cfg.run.auc, cfg.run.exact)
    uses_cost = any(a in COST for a in cfg.policy.approaches)
    cost = CostModel(cfg.cost.P0, cfg.cost.P1, cfg.cost.K0) if uses_cost else None
    return Setup(seq, loss, bound, drift, sgd, ev, cost, true_rho, derived)


def _policy(cfg: ExperimentConfig, st: Setup, approach: str, reference_K: Optional[list]):
    eps = cfg.policy.eps
    bm, T = st.bound, st.seq.horizon
    if approach == "no-update":
        return NoUpdatePolicy(bm, eps)
    if approach == "update-past":
        return UpdatePastPolicy(bm, eps)
    if approach == "known-rho":
        return KnownRhoPolicy(bm, eps, cfg.policy.rho_known)
    if approach in MATCHED:
        total = sum(reference_K)
        kind = "up-front" if approach == "up-front-matched" else "periodic"
        return ScheduledPolicy(bm, eps, baseline_schedule(kind, total, T, cfg.policy.delta_T), approach)
    c = cfg.cost
    if approach == "cost-planned":
        solver = SolverConfig(iterations=c.iterations, temperature=c.temperature, delta_T=c.delta_T)
        return RecedingPlannerPolicy(bm, st.cost, c.budget, T, eps, c.phi, solver, c.rho_prior)
    if approach in ("cost-up-front", "cost-periodic"):
        sched = cost_baseline(approach[5:], st.cost, c.budget, T, c.delta_T)
        return ScheduledPolicy(bm, eps, sched, approach)
    raise ConfigError(f"policy.approaches: unknown approach {approach!r}")


def run_one(cfg: ExperimentConfig, run_index: int, st: Optional[Setup] = None) -> dict[str, list[RunRecord]]:
    """All configured approaches on one seed; matched baselines copy the first approach's total."""
    st = st or build(cfg)
    seed = cfg.run.seed + run_index
    out: dict[str, list[RunRecord]] = {}
    first_K: Optional[list] = None
    for approach in cfg.policy.approaches:
        if approach == "cv":
            recs = run_cv(st.seq, CvConfig(tuple(cfg.cv.lambdas), cfg.cv.folds), st.loss, st.bound, st.drift, seed,
                          eps_target=cfg.policy.eps, sgd=st.sgd, test_size=cfg.run.test_size)
        else:
            if approach in MATCHED and first_K is None:
                raise ConfigError(f"policy.approaches: {approach!r} needs an adaptive approach before it")
            pol = _policy(cfg, st, approach, first_K)
            recs = run_sequence(st.seq, pol, st.drift, st.bound, seed, loss=st.loss, eps_target=cfg.policy.eps,
                                sgd=st.sgd, evaluation=st.evaluation, cost_model=st.cost)
        out[approach] = recs
        if first_K is None and approach not in MATCHED:
            first_K = [r.samples_taken for r in recs]
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def records_to_csv(run: int, records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        row = r.as_row()
        w.writerow([str(run)] + [_fmt(row[c]) for c in COLUMNS[1:]])
    return buf.getvalue()


def _parse(cell: str) -> float:
    return float("nan") if cell == "" else float(cell)


def aggregate_rows(per_run: dict[int, list[dict]]) -> list[dict]:
    """Per-step mean and sample SD over runs, ignoring missing and NaN cells."""
    runs = sorted(per_run)
    steps = sorted({int(row["n"]) for r in runs for row in per_run[r]})
    out = []
    for n in steps:
        row = {"n": n}
        for col in METRICS:
            vals = [_parse(x[col]) for r in runs for x in per_run[r] if int(x["n"]) == n]
            vals = [v for v in vals if not math.isnan(v)]
            row[f"{col}_mean"] = float(np.mean(vals)) if vals else float("nan")
            row[f"{col}_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else float("nan")
        out.append(row)
    return out


def _headline(cfg: ExperimentConfig, st: Setup, approach: str, runs: list[list[RunRecord]]) -> dict:
    h: dict = {}
    ex = [[r.excess_risk_exact for r in recs if r.excess_risk_exact is not None] for recs in runs]
    if all(ex):
        per_run = [float(np.mean(e)) for e in ex]
        h["mean_excess_risk"] = float(np.mean(np.concatenate(ex)))
        h["sd_excess_risk_run_means"] = float(np.std(per_run, ddof=1)) if len(per_run) > 1 else float("nan")
    tl = [r.test_loss for recs in runs for r in recs if not math.isnan(r.test_loss)]
    if tl:
        h["mean_test_loss"] = float(np.mean(tl))
    h["mean_total_samples"] = float(np.mean([sum(r.samples_taken for r in recs) for recs in runs]))
    finals = [recs[-1].auc for recs in runs if recs[-1].auc is not None]
    if finals:
        h["mean_final_auc"] = float(np.mean(finals))
    if st.true_rho is not None and approach != "cv":
        late = [[r for r in recs if r.n >= 5 and not math.isnan(r.rho_hat)] for recs in runs]
        if all(late):
            h["coverage_fraction"] = float(np.mean([all(r.rho_hat + r.t_n >= st.true_rho for r in rs)
                                                    for rs in late]))
    if st.cost is not None:
        spent = [recs[-1].cum_cost for recs in runs]
        h["max_cost_spent"] = float(max(spent))
        h["budget_respected"] = bool(max(spent) <= cfg.cost.budget)
        if st.true_rho is not None:
            objs = [schedule_objective([r.samples_taken for r in recs], st.bound, st.true_rho, cfg.policy.eps,
                                       cfg.cost.phi) for recs in runs]
            h["mean_phi_objective"] = float(np.mean(objs))
    if approach == "cv":
        h["lambda_choices"] = [recs[-1].extra["lam"] for recs in runs]
        h["shared_samples"] = True
    if cfg.drift.c_C > 0 and approach != "cv":
        h["mean_final_D_n"] = float(np.mean([recs[-1].extra["D_n"] for recs in runs]))
    h["saturated_steps"] = int(sum(r.saturated for recs in runs for r in recs))
    return h


def _worker(args):
    cfg, i = args
    return i, run_one(cfg, i)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, force: bool = False, jobs: int = 1) -> dict:
    """Run ``cfg.run.runs`` seeds and write CSVs plus ``summary.json`` under ``out_dir``."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise FileExistsError(f"{out} exists and is not empty (use --force to overwrite)")
        shutil.rmtree(out)
    st = build(cfg)
    n_runs = cfg.run.runs
    if jobs > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_worker, [(cfg, i) for i in range(n_runs)]))
    else:
        results = {i: run_one(cfg, i, st) for i in range(n_runs)}

    out.mkdir(parents=True, exist_ok=True)
    agg_lines = []
    headline = {}
    for approach in cfg.policy.approaches:
        adir = out / approach
        adir.mkdir()
        per_run = {}
        for i in range(n_runs):
            text = records_to_csv(i, results[i][approach])
            (adir / f"run_{i:03d}.csv").write_text(text, encoding="utf-8")
            per_run[i] = list(csv.DictReader(io.StringIO(text)))
        for row in aggregate_rows(per_run):
            agg_lines.append({"approach": approach, **row})
        headline[approach] = _headline(cfg, st, approach, [results[i][approach] for i in range(n_runs)])

    cols = ["approach", "n"] + [f"{c}_{s}" for c in METRICS for s in ("mean", "sd")]
    with (out / "aggregate.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in agg_lines:
            w.writerow([row["approach"], str(row["n"])] + [_fmt(row[c]) for c in cols[2:]])

    summary = {
        "config": cfg.to_dict(),
        "derived": st.derived,
        "seeds": [cfg.run.seed + i for i in range(n_runs)],
        "headline": headline,
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
