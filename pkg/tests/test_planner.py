import itertools
import math

import numpy as np
import pytest

from adaseq.bound import BoundModel, RiskTracker, tracker_advance, tracker_path
from adaseq.core.loop import EvalConfig, run_sequence
from adaseq.core.types import ConvexityConstants, ProblemSequence
from adaseq.drift import DriftConfig
from adaseq.losses import QuadraticRegressionLoss
from adaseq.planner import (
    PHI_KINDS,
    CostModel,
    PlanProblem,
    RecedingPlannerPolicy,
    SolverConfig,
    _project,
    commit_first,
    constraint_violation,
    cost_baseline,
    phi_loss,
    plan_relaxed,
    relaxed_tracker,
    replan_receding,
    round_plan,
    schedule_objective,
)
from adaseq.scenarios import RegressionDrift

CM = CostModel(P0=20.0, P1=1.0, K0=0.5)


def brute_increasing_run(xi):
    best = 0.0
    for a in range(len(xi)):
        for b in range(a + 1, len(xi)):
            if all(xi[i] <= xi[i + 1] for i in range(a, b)):
                best = max(best, sum(xi[a: b + 1]))
    return best


def test_cost_model_relaxation():
    assert CM.p(0) == 0 and CM.p(3) == 23
    assert CM.p_hat(0) == 0
    assert CM.p_hat(CM.K0) == pytest.approx(CM.p(CM.K0))
    assert CM.p_hat(CM.K0 - 1e-9) == pytest.approx(CM.p(CM.K0), abs=1e-6)
    for K in range(1, 50):
        assert CM.p_hat(K) == CM.p(K)
    assert CM.max_affordable(20.5) == 0 and CM.max_affordable(21) == 1 and CM.max_affordable(120) == 100
    with pytest.raises(ValueError):
        CostModel(K0=1.0)
    with pytest.raises(ValueError):
        CostModel(P1=0.0)


def test_phi_examples():
    for kind in PHI_KINDS:
        assert phi_loss(kind, [0, 0, 0]) == 0
    assert phi_loss("mean", [0.1, 0.3]) == pytest.approx(0.2)
    assert phi_loss("max", [0.1, 0.3]) == 0.3
    assert phi_loss("max-increasing-run", [1, 2, 3, 1, 5]) == 6
    assert phi_loss("max-increasing-run", [3, 2, 1]) == 0
    with pytest.raises(ValueError):
        phi_loss("mean", [-1.0])
    with pytest.raises(ValueError):
        phi_loss("median", [1.0])


def test_increasing_run_matches_brute_force():
    for L in range(1, 9):
        for xi in itertools.product((0, 1, 2), repeat=L):
            assert phi_loss("max-increasing-run", xi) == brute_increasing_run(xi)


def test_relaxed_tracker_exact_on_integers(reg_bound):
    rng = np.random.default_rng(0)
    for _ in range(200):
        L = int(rng.integers(1, 10))
        K = [int(k) if rng.uniform() < 0.6 else 0 for k in rng.integers(1, 500, size=L)]
        start = int(rng.integers(1, 6))
        rho = float(rng.uniform(0, 2))
        rt = RiskTracker()
        for n, k in enumerate([int(v) for v in rng.integers(0, 300, size=start - 1)], start=1):
            rt = tracker_advance(rt, reg_bound, rho, k, n)
        prob = PlanProblem(start, start + L - 1, 100.0, "mean", rho, 0.1, rt)
        expect = tracker_path(reg_bound, rho, K, rt, start)
        assert np.allclose(relaxed_tracker(prob, reg_bound, K), expect, rtol=1e-12)


def test_zero_budget_gives_empty_plan(reg_bound):
    prob = PlanProblem(1, 6, 0.0, "mean", 1.0, 0.1)
    plan = plan_relaxed(prob, reg_bound, CM)
    assert np.all(plan.K == 0) and plan.diagnostic
    xi = [max(v - 0.1, 0) for v in tracker_path(reg_bound, 1.0, [0] * 6)]
    assert plan.objective == pytest.approx(phi_loss("mean", xi))


def test_large_budget_meets_target(reg_bound):
    for phi in PHI_KINDS:
        plan = plan_relaxed(PlanProblem(1, 6, 10**6, phi, 1.0, 0.1), reg_bound, CM)
        assert plan.objective == pytest.approx(0.0, abs=1e-9)


def instances(n=20, seed=0):
    rng = np.random.default_rng(seed)
    for i in range(n):
        T = int(rng.integers(4, 16))
        yield T, float(rng.uniform(100, 1500)), float(rng.uniform(0.2, 2.0)), PHI_KINDS[i % 3]


def test_plans_are_feasible(reg_bound):
    for T, B, rho, phi in instances(seed=1):
        plan = plan_relaxed(PlanProblem(1, T, B, phi, rho, 0.1), reg_bound, CM)
        assert constraint_violation(plan.K, None, B, CM) <= 1e-6
        assert np.allclose(plan.xi, np.maximum(relaxed_tracker(PlanProblem(1, T, B, phi, rho, 0.1), reg_bound, plan.K) - 0.1, 0))


def test_plan_never_worse_than_projected_baselines(reg_bound):
    def projected_objective(K, prob):
        x = _project(np.asarray(K, float), 0.0, True, prob.budget, CM.P0, CM.P1, CM.K0, float(reg_bound.k_cap), 20)
        assert constraint_violation(x, None, prob.budget, CM) <= 1e-6
        return phi_loss(prob.phi, np.maximum(relaxed_tracker(prob, reg_bound, x) - prob.eps, 0))

    for T, B, rho, phi in instances():
        prob = PlanProblem(1, T, B, phi, rho, 0.1)
        plan = plan_relaxed(prob, reg_bound, CM)
        base = min(projected_objective(cost_baseline("up-front", CM, B, T), prob),
                   projected_objective(cost_baseline("periodic", CM, B, T, min(5, T)), prob))
        assert plan.objective <= base + 1e-9


def test_rounding_respects_budget():
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.uniform(0, 80, size=int(rng.integers(1, 10)))
        B = float(rng.uniform(0, 400))
        K = round_plan(x, CM, B)
        assert sum(CM.p(k) for k in K) <= B and all(k >= 0 for k in K)
    assert round_plan([1.5, 2.49], CostModel(), 100) == [2, 2]


def test_commit_first_half_up_and_clamped():
    assert commit_first(2.5, CostModel(), 100) == 3
    assert commit_first(2.49, CostModel(), 100) == 2
    assert commit_first(50.0, CM, 40.0) == 20
    assert commit_first(50.0, CM, 10.0) == 0


def test_last_step_spends_at_most_remaining(reg_bound):
    rt = RiskTracker(4, 0.3, 0.3)
    for B in (5.0, 30.0, 500.0):
        K = replan_receding(PlanProblem(5, 5, B, "mean", 1.0, 0.1, rt, 100), reg_bound, CM)
        assert CM.p(K) <= B


def test_receding_plans_stay_within_budget(reg_bound):
    seq = ProblemSequence(RegressionDrift(rho=1.0), 5.0, 10)
    budget = 300.0
    for seed in range(20):
        pol = RecedingPlannerPolicy(reg_bound, CM, budget, 10, 0.1, solver=SolverConfig(iterations=200), rho_prior=1.0)
        recs = run_sequence(seq, pol, DriftConfig(c_C=25.2), reg_bound, seed, loss=QuadraticRegressionLoss(0, 1, 3),
                            eps_target=0.1, evaluation=EvalConfig(test_size=0), cost_model=CM)
        spent = sum(CM.p(r.samples_taken) for r in recs)
        assert spent == recs[-1].cum_cost <= budget


def test_schedule_objective_matches_tracker(reg_bound):
    K = [40, 40, 0, 0, 30, 30]
    xi = [max(v - 0.1, 0) for v in tracker_path(reg_bound, 0.5, K)]
    assert schedule_objective(K, reg_bound, 0.5, 0.1, "max") == max(xi)


def test_cost_baselines():
    assert cost_baseline("up-front", CM, 700, 5) == [680, 0, 0, 0, 0]
    assert cost_baseline("periodic", CM, 700, 10, 5) == [330, 0, 0, 0, 0, 330, 0, 0, 0, 0]
    with pytest.raises(ValueError):
        cost_baseline("periodic", CM, 700, 3, 5)


def test_problem_validation():
    with pytest.raises(ValueError):
        PlanProblem(3, 2, 10, "mean", 1, 0.1)
    with pytest.raises(ValueError):
        PlanProblem(1, 2, -1, "mean", 1, 0.1)
    with pytest.raises(ValueError):
        PlanProblem(1, 2, 1, "mean", 1, 0.0)
