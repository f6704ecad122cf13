import logging
import math

import numpy as np
import pytest

from adaseq.bound import BoundModel, invert_bound
from adaseq.core.types import ConvexityConstants
from adaseq.policy import (
    KnownRhoPolicy,
    NoUpdatePolicy,
    PolicyConfig,
    ScheduledPolicy,
    StepContext,
    UpdatePastPolicy,
    baseline_schedule,
    choose_k_no_update,
    choose_k_update_past,
    initial_k,
    k_star,
    make_policy,
    refresh_past_bounds,
)

from conftest import run_regression

C = ConvexityConstants(m=1.0, M=1.0)


def beta_only():
    return BoundModel(0.0, 1.0, C, 10.0)


def test_k_star_examples():
    assert k_star(beta_only(), 0.0, 0.1) == 10
    assert k_star(BoundModel(40.0, 5.0, C, 10.0), 0.0, 0.1) >= 1


def test_k_star_monotone(reg_bound):
    rhos = np.linspace(0, 5, 30)
    ks = [k_star(reg_bound, r, 0.1) for r in rhos]
    assert ks == sorted(ks)
    epss = np.linspace(0.01, 1, 30)
    ks = [k_star(reg_bound, 1.0, e) for e in epss]
    assert ks == sorted(ks, reverse=True)
    with pytest.raises(ValueError):
        k_star(reg_bound, -1.0, 0.1)


def test_no_update_matches_k_star(reg_bound):
    for rho in (0.0, 0.4, 1.0, 3.0):
        assert choose_k_no_update(reg_bound, 0.1, rho - 0.25 if rho >= 0.25 else 0.0,
                                  0.25 if rho >= 0.25 else rho) == k_star(reg_bound, rho, 0.1)
    ks = [choose_k_no_update(reg_bound, 0.1, r, 0.1) for r in np.linspace(0, 4, 40)]
    assert ks == sorted(ks)


def test_update_past_collapses_to_no_update(reg_bound):
    Ks = [5000, 5000, 5000]
    K, refreshed = choose_k_update_past([0, 0, 0], reg_bound, 0.1, 0.8, 0.2, Ks)
    assert refreshed[-1] <= 0.1
    assert K == choose_k_no_update(reg_bound, 0.1, 0.8, 0.2)


def test_refresh_monotone_in_drift(reg_bound):
    Ks = [900, 900, 300, 200, 500, 100]
    lo = refresh_past_bounds(reg_bound, 0.5, Ks)
    hi = refresh_past_bounds(reg_bound, 1.5, Ks)
    assert all(a <= b for a, b in zip(lo, hi))
    with pytest.raises(ValueError):
        refresh_past_bounds(reg_bound, 0.5, [10, 0])
    with pytest.raises(ValueError):
        choose_k_update_past([0.1], reg_bound, 0.1, 1.0, 0.1, [10, 10])


def test_update_past_never_below_no_update_on_shared_trajectory(reg_bound):
    recs = run_regression(NoUpdatePolicy(reg_bound, 0.1), 3, bound=reg_bound)
    up, nu = UpdatePastPolicy(reg_bound, 0.1), NoUpdatePolicy(reg_bound, 0.1)
    for n in range(1, 26):
        prev = recs[n - 2] if n >= 2 else None
        ctx = StepContext(n, tuple(r.samples_taken for r in recs[: n - 1]),
                          None if prev is None or math.isnan(prev.rho_hat) else prev.rho_hat + prev.t_n)
        assert up.choose(ctx) >= nu.choose(ctx)


def test_adaptive_policies_meet_k_star_when_estimate_covers(reg_bound):
    rho = 1.0
    ks = k_star(reg_bound, rho, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(50):
        upper = rho + rng.uniform(0, 2)
        hist = tuple(int(k) for k in rng.integers(ks, 3 * ks, size=int(rng.integers(2, 10))))
        ctx = StepContext(len(hist) + 1, hist, upper)
        assert NoUpdatePolicy(reg_bound, 0.1).choose(ctx) >= ks
        assert UpdatePastPolicy(reg_bound, 0.1).choose(ctx) >= ks


def test_no_update_settles(reg_bound):
    for seed in range(5):
        Ks = [r.samples_taken for r in run_regression(NoUpdatePolicy(reg_bound, 0.1), seed, bound=reg_bound)]
        tail = Ks[19:]
        assert (max(tail) - min(tail)) <= 0.1 * np.mean(tail)
        assert min(Ks) >= 1


def test_initial_steps_use_diameter(reg_bound):
    pol = NoUpdatePolicy(reg_bound, 0.1)
    assert pol.choose(StepContext(1)) == initial_k(reg_bound, 0.1) == invert_bound(reg_bound, 10.0, 0.1)


def test_known_rho_constant(reg_bound):
    pol = KnownRhoPolicy(reg_bound, 0.1, 0.0)
    assert pol.choose(StepContext(5, (1, 1, 1, 1))) == k_star(reg_bound, 0.0, 0.1) >= 1


def test_baseline_examples():
    assert baseline_schedule("up-front", 100, 4) == [100, 0, 0, 0]
    assert baseline_schedule("periodic", 100, 10, 5) == [50, 0, 0, 0, 0, 50, 0, 0, 0, 0]
    assert sum(baseline_schedule("periodic", 101, 10, 3)) == 100
    with pytest.raises(ValueError):
        baseline_schedule("periodic", 100, 4, 5)
    with pytest.raises(ValueError):
        baseline_schedule("other", 1, 1)


def test_up_front_loses_late(reg_bound):
    wins = 0
    for seed in range(5):
        ad = run_regression(NoUpdatePolicy(reg_bound, 0.1), seed, bound=reg_bound, test_size=2000)
        total = sum(r.samples_taken for r in ad)
        uf = run_regression(ScheduledPolicy(reg_bound, 0.1, baseline_schedule("up-front", total, 25)), seed,
                            bound=reg_bound, test_size=2000)
        wins += np.mean([r.test_loss for r in uf[-8:]]) > np.mean([r.test_loss for r in ad[-8:]])
    assert wins == 5


def test_scheduled_policy_bounds_and_overrun(reg_bound):
    pol = ScheduledPolicy(reg_bound, 0.1, [3, 0])
    assert pol.bounds(1)[0] == 0
    assert [pol.choose(StepContext(n)) for n in (1, 2)] == [3, 0]
    with pytest.raises(IndexError):
        pol.choose(StepContext(3))
    with pytest.raises(ValueError):
        ScheduledPolicy(reg_bound, 0.1, [-1])


def test_saturation_is_logged(caplog):
    bm = BoundModel(1.0, 1.0, C, 10.0, k_cap=50)
    pol = NoUpdatePolicy(bm, 1e-3)
    with caplog.at_level(logging.WARNING):
        assert pol.choose(StepContext(1)) == 50
    assert pol.saturated and "unreachable" in caplog.text


def test_policy_config_and_factory(reg_bound):
    with pytest.raises(ValueError):
        PolicyConfig("known-rho", 0.1)
    with pytest.raises(ValueError):
        PolicyConfig("no-update", 0.1, rho_known=1.0)
    with pytest.raises(ValueError):
        PolicyConfig("periodic", 0.1)
    with pytest.raises(ValueError):
        PolicyConfig("no-update", 0.0)
    with pytest.raises(ValueError):
        make_policy(PolicyConfig("up-front", 0.1), reg_bound, 5)
    assert isinstance(make_policy(PolicyConfig("update-past", 0.1), reg_bound, 5), UpdatePastPolicy)
    pol = make_policy(PolicyConfig("periodic", 0.1, delta_T=2, total=9), reg_bound, 5)
    assert pol.schedule == [3, 0, 3, 0, 3] and pol.name == "periodic"
