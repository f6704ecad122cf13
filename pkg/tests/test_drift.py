import math

import numpy as np
import pytest

from adaseq.core.types import ConvexityConstants
from adaseq.drift import (
    BOUNDED,
    DriftConfig,
    DriftState,
    OneStepEstimate,
    calibrate_dispersion,
    combine_average,
    combine_running_max,
    combine_windowed,
    correction_Dn,
    coverage_series_terms,
    dispersion_C,
    one_step_estimate,
    overshoot_bound,
    slack,
    window_estimator_uniform,
    window_lipschitz,
)
from adaseq.losses import QuadraticRegressionLoss
from adaseq.policy import NoUpdatePolicy
from adaseq.scenarios import RegressionDrift
from adaseq.sgd import SgdConfig, optimize

from conftest import REG_CONSTANTS, run_regression

LOSS = QuadraticRegressionLoss(0.0, 1.0, 3)


def test_one_step_zero_at_population_minimizer():
    sc = RegressionDrift(rho=0.0)
    ws = sc.minimizer(1)
    # noiseless data generated exactly by w*: every per-sample gradient vanishes
    X = np.random.default_rng(0).normal(size=(50, 3))
    est = one_step_estimate(ws, ws, (X, X @ ws), (X, X @ ws), LOSS, 1.0, 10.0)
    assert est.rho_tilde == pytest.approx(0.0, abs=1e-12)


def test_one_step_terms_and_clip():
    X = np.array([[1.0, 0.0, 0.0]])
    est = one_step_estimate(np.array([3.0, 0, 0]), np.zeros(3), (X, np.array([0.0])), (X, np.array([1.0])), LOSS, 0.5, 100.0)
    assert est.iterate_gap == 3.0 and est.grad_norm_i == 3.0 and est.grad_norm_prev == 1.0
    assert est.rho_tilde == pytest.approx(3.0 + 4.0 / 0.5)
    clipped = one_step_estimate(np.array([3.0, 0, 0]), np.zeros(3), (X, np.array([0.0])), (X, np.array([1.0])), LOSS, 0.5, 5.0)
    assert clipped.rho_tilde == 5.0


def test_one_step_skipped_without_samples():
    empty = (np.empty((0, 3)), np.empty(0))
    full = (np.ones((2, 3)), np.ones(2))
    assert one_step_estimate(np.zeros(3), np.zeros(3), empty, full, LOSS, 1.0, 10.0) is None
    assert one_step_estimate(np.zeros(3), np.zeros(3), full, empty, LOSS, 1.0, 10.0) is None


def test_one_step_small_on_static_problem():
    sc = RegressionDrift(rho=0.0)
    vals = []
    for seed in range(20):
        s1 = sc.draw(1, 10**4, seed)
        s2 = sc.draw(2, 10**4, seed)
        w1 = optimize(np.zeros(3), s1, LOSS, SgdConfig(), 5.0)
        w2 = optimize(w1, s2, LOSS, SgdConfig(), 5.0)
        vals.append(one_step_estimate(w2, w1, s2, s1, LOSS, 1.0, 10.0).rho_tilde)
    assert np.mean(vals) <= 0.2


def test_one_step_never_exceeds_diameter():
    rng = np.random.default_rng(1)
    for _ in range(50):
        X = rng.normal(size=(5, 3)) * 10
        s = (X, rng.normal(size=5) * 10)
        est = one_step_estimate(rng.normal(size=3) * 5, rng.normal(size=3) * 5, s, s, LOSS, 0.1, 10.0)
        assert 0 <= est.rho_tilde <= 10.0


def test_combiner_examples():
    assert combine_average([0.7]) == 0.7
    assert combine_average([1, 2, 3]) == 2
    assert window_estimator_uniform([0.5]) == 1.0
    assert window_estimator_uniform([0.1, 0.2, 0.3, 0.4]) == pytest.approx(0.5)
    h = [0.3, 1.2, 0.5, 0.9]
    assert combine_windowed(h, 1) == pytest.approx(2 * np.mean(h))
    # windows are truncated at the start, so only full windows carry (W+1)/W
    coef = [(min(j, 4) + 1) / min(j, 4) for j in range(1, 10)]
    assert combine_windowed([0.37] * 9, 4) == pytest.approx(np.mean(coef) * 0.37, rel=1e-15)
    assert window_lipschitz(4) == [1.25] * 4
    for f in (combine_average, combine_running_max, window_estimator_uniform):
        with pytest.raises(ValueError):
            f([])
    with pytest.raises(ValueError):
        combine_windowed([], 3)


def test_windowed_truncates_at_start():
    h = [1.0, 3.0, 2.0]
    expect = (2.0 * 1.0 + 1.5 * 3.0 + 4 / 3 * 3.0) / 3
    assert combine_windowed(h, 3) == pytest.approx(expect)


def test_window_statistic_is_unbiased_from_above():
    rng = np.random.default_rng(7)
    W, rho = 4, 1.3
    vals = (W + 1) / W * rng.uniform(0, rho, size=(10**5, W)).max(axis=1)
    assert vals.mean() >= rho - 3 * vals.std() / math.sqrt(len(vals))


def test_windowed_covers_bounded_change_while_running_max_drifts_up():
    # one-step estimates = true change + heavy-tailed estimation error, clipped at the diameter
    diam, rho, W, T = 20.0, 1.0, 5, 200
    covered = 0
    early_max, late_max, windowed = [], [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        est = np.minimum(rng.uniform(0, rho, T) + 0.05 * np.abs(rng.standard_cauchy(T)), diam)
        covered += all(combine_windowed(est[:n], W) + slack(n + 1, 1.0) >= rho for n in range(20, T + 1))
        early_max.append(combine_running_max(est[: T // 10]))
        late_max.append(combine_running_max(est))
        windowed.append(combine_windowed(est, W))
    assert covered >= 18
    assert np.mean(late_max) > 1.5 * np.mean(early_max)
    assert np.mean(late_max) > 3 * np.mean(windowed)


def test_slack_examples():
    assert slack(2, 1.0) == 1.0
    assert slack(101, 1.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        slack(1, 1.0)


def test_series_terms_do_not_vanish_with_inverse_sqrt_slack():
    # t_n^2 (n-1) is constant, so the summands are constant rather than summable
    terms = [coverage_series_terms(n, slack(n, 1.0), 10.0, REG_CONSTANTS) for n in (2, 10, 1000)]
    assert terms[0] == pytest.approx(terms[1]) == pytest.approx(terms[2])


def test_dn_examples():
    c = ConvexityConstants(m=1.0, M=3.0, sigma=4.0)
    C, K = [0.2, 0.5], [4, 16]
    assert correction_Dn(C, K, c) == pytest.approx(4 * 0.7 + 1.0 + 0.5)
    assert correction_Dn([dispersion_C(10**12, 1.0)] * 3, [10**12] * 3, c) < 1e-4


def test_dn_decreasing_in_every_K():
    c = ConvexityConstants(m=1.0, M=2.0, sigma=1.0)
    rng = np.random.default_rng(3)
    for _ in range(100):
        K = list(rng.integers(1, 1000, size=5))
        base = correction_Dn([dispersion_C(k, 2.0) for k in K], K, c)
        j = int(rng.integers(5))
        K2 = list(K)
        K2[j] += int(rng.integers(1, 100))
        assert correction_Dn([dispersion_C(k, 2.0) for k in K2], K2, c) < base


def test_dn_input_checks():
    c = ConvexityConstants(m=1.0, M=1.0)
    with pytest.raises(ValueError):
        correction_Dn([0.1], [1, 2], c)
    with pytest.raises(ValueError):
        correction_Dn([0.1, 0.1], [1, 0], c)


def test_overshoot_examples():
    c = ConvexityConstants(m=1.0, M=1.0, sigma=0.0)
    assert overshoot_bound(0.1, c, 10, 0.0) == pytest.approx(0.2 * math.sqrt(2))
    assert overshoot_bound(1e-9, REG_CONSTANTS, 1e14, 25.2) < 1e-5


def test_mean_rho_hat_within_overshoot_margin(reg_bound):
    eps, rho = 0.1, 1.0
    rho20, Kmin = [], []
    for seed in range(20):
        recs = run_regression(NoUpdatePolicy(reg_bound, eps), seed, bound=reg_bound, eps=eps, rho=rho)
        rho20.append(recs[19].rho_hat)
        Kmin.append(min(r.samples_taken for r in recs[2:]))
    margin = overshoot_bound(eps, REG_CONSTANTS, min(Kmin), 25.2)
    assert np.mean(rho20) <= rho + margin


def test_average_combiner_covers_constant_drift(reg_bound):
    hits = 0
    for seed in range(20):
        recs = run_regression(NoUpdatePolicy(reg_bound, 0.1), seed, bound=reg_bound)
        hits += all(r.rho_hat >= 1.0 for r in recs[4:])
    assert hits >= 18


def test_drift_state_modes():
    st = DriftState(DriftConfig(), 10.0, REG_CONSTANTS)
    assert not st.has_estimate and st.correction() == 0.0
    st.add(None)
    for i, r in enumerate([0.5, 1.0, 1.5]):
        st.add(OneStepEstimate(i + 2, r, 0, 0, r))
        st.note_samples(100)
    st.note_samples(0)
    assert st.rho_hat() == 1.0 and st.sampled_K == [100] * 3
    assert st.upper(4) == pytest.approx(1.0 + 1 / math.sqrt(3))
    wb = DriftState(DriftConfig(mode=BOUNDED, window=2), 10.0, REG_CONSTANTS, list(st.estimates))
    assert wb.rho_hat() == combine_windowed([0.5, 1.0, 1.5], 2)
    with_dn = DriftState(DriftConfig(c_C=1.0, use_dn=True), 10.0, REG_CONSTANTS, list(st.estimates), [100] * 3)
    assert with_dn.upper(4) == pytest.approx(st.upper(4) + with_dn.correction())
    with pytest.raises(ValueError):
        DriftConfig(mode="other")


def test_calibrated_dispersion_is_consistent():
    sc = RegressionDrift(rho=0.0)
    cC = calibrate_dispersion(sc, LOSS, SgdConfig(), 5.0, [10, 40, 160], reps=100)
    assert 10 < cC < 40
    # two fresh runs at K=80 stay within the calibrated spread on average
    gaps = []
    for s in range(200):
        a = optimize(np.zeros(3), sc.draw(1, 80, 10**4 + 2 * s), LOSS, SgdConfig(), 5.0)
        b = optimize(np.zeros(3), sc.draw(1, 80, 10**4 + 2 * s + 1), LOSS, SgdConfig(), 5.0)
        gaps.append(np.sum((a - b) ** 2))
    assert np.mean(gaps) <= 1.5 * dispersion_C(80, cC) ** 2
