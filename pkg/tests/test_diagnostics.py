import numpy as np
import pytest

from purifynet import (
    BackdoorSpec, CnnParams, DiagnosticsError, TrainTrace, accuracy, asr_on_clean,
    attack_success_rate, check_trajectory, err_W, err_beta, estimate_conditions,
    r_beta_bound, r_w_bound, validate_config,
)


def test_err_identical_is_zero():
    W = np.random.default_rng(0).standard_normal((4, 6))
    assert err_W(W, W) == 0.0
    assert err_beta(W, W) == 0.0


def test_err_beta_all_ones_displacement():
    p = 17
    beta = np.zeros((p, 1))
    assert err_beta(beta + 1.0, beta) == pytest.approx(1.0)


def test_err_w_unit_coordinate_shift():
    rng = np.random.default_rng(1)
    W = rng.standard_normal((5, 9))
    W2 = W.copy()
    W2[0, :] += 1.0          # every kernel moved by e_1
    assert err_W(W2, W) == pytest.approx(1.0)


def test_err_shape_guard():
    with pytest.raises(DiagnosticsError):
        err_W(np.zeros((2, 2)), np.zeros((2, 3)))


def test_err_beta_multiclass_average():
    p = 10
    beta = np.zeros((p, 2))
    tilde = beta.copy()
    tilde[:, 0] += 2.0      # column errs: 4.0 and 0.0 -> mean 2.0
    assert err_beta(tilde, beta) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# classification metrics


def _constant_class_model(target, C=3):
    cfg = validate_config(4, 1, 4)
    W = np.ones((4, 2))
    beta = np.zeros((2, C))
    beta[:, target] = 1.0
    return CnnParams(W=W, beta=beta, W0=W.copy(), beta0=beta.copy(), cfg=cfg)


def test_always_target_model_has_asr_one():
    model = _constant_class_model(target=0)
    X = np.abs(np.random.default_rng(2).standard_normal((4, 50))) + 0.1
    assert attack_success_rate(model, X, target_class=0) == 1.0


def test_random_labels_accuracy_near_chance():
    model = _constant_class_model(target=1)
    rng = np.random.default_rng(3)
    X = np.abs(rng.standard_normal((4, 1000))) + 0.1
    labels = rng.integers(0, 3, 1000)
    assert abs(accuracy(model, X, labels) - 1.0 / 3.0) < 0.1


def test_empty_test_set_guard():
    model = _constant_class_model(target=0)
    with pytest.raises(DiagnosticsError):
        accuracy(model, np.zeros((4, 0)), np.zeros(0, dtype=int))
    with pytest.raises(DiagnosticsError):
        attack_success_rate(model, np.zeros((4, 0)), 0)


def test_asr_on_clean_filters_target_class():
    model = _constant_class_model(target=0)
    X = np.abs(np.random.default_rng(4).standard_normal((4, 20))) + 0.1
    labels = np.array([0, 1, 2, 1] * 5)
    spec = BackdoorSpec(trigger_len=2, trigger_value=0.0, target_class=0)
    assert asr_on_clean(model, X, labels, spec) == 1.0


# ---------------------------------------------------------------------------
# deviation radii


def test_radius_formulas_match_hand_evaluation():
    # independently recomputed: 32 sqrt(25^2 ln(1000) / 1000) and
    # 100 * 25 * ln(1000) / sqrt(1000 * 100)
    assert r_beta_bound(5, 5, 1000) == pytest.approx(66.4905, abs=5e-4)
    assert r_w_bound(5, 5, 1000, 100) == pytest.approx(54.6105, abs=5e-4)


def test_radius_decreases_in_p():
    vals = [r_beta_bound(5, 5, p) for p in (10, 100, 1000, 10000, 100000)]
    assert all(a > b for a, b in zip(vals[1:], vals[2:]))  # decreasing for p >= 3


def test_radius_guards():
    with pytest.raises(DiagnosticsError):
        r_beta_bound(0, 5, 100)
    with pytest.raises(DiagnosticsError):
        r_w_bound(5, 5, 1, 100)


def test_check_trajectory_flags_violations():
    trace = TrainTrace()
    trace.beta_dev = [0.1, 0.2]
    trace.w_dev = [0.01, 0.02]
    trace.resid_sq = [9.0, 8.0]
    out = check_trajectory(trace, resid0_sq=10.0, m=5, n=5, p=1000, k=100, gamma=0.004)
    assert out["all_ok"]
    trace.resid_sq = [11.0, 8.0]   # above the contraction envelope at t = 1
    out = check_trajectory(trace, resid0_sq=10.0, m=5, n=5, p=1000, k=100, gamma=0.004)
    assert not out["resid_ok"] and not out["all_ok"]


# ---------------------------------------------------------------------------
# design-condition estimates


def test_identity_design_estimates():
    q = 8
    est = estimate_conditions(np.eye(q), num_directions=4000, seed=0)
    # per direction: mean |delta_i| / ... = ||Delta||_1 / q >= 1/q; RMS = 1/sqrt(q)
    assert est.lambda_lower_hat >= 1.0 / q - 1e-12
    assert est.lambda_upper_hat == pytest.approx(1.0 / np.sqrt(q), abs=1e-12)
    assert est.lambda_lower_hat <= est.lambda_upper_hat


def test_gaussian_design_lower_bound():
    rng = np.random.default_rng(5)
    for seed in range(10):
        A = np.random.default_rng(seed).standard_normal((500, 25))
        est = estimate_conditions(A, num_directions=200, seed=seed)
        assert est.lambda_lower_hat >= 0.5
        assert est.lambda_upper_hat <= 3.0


def test_estimates_monotone_in_directions():
    A = np.random.default_rng(7).standard_normal((300, 20))
    small = estimate_conditions(A, num_directions=100, seed=11)
    large = estimate_conditions(A, num_directions=400, seed=11)
    assert large.lambda_lower_hat <= small.lambda_lower_hat
    assert large.lambda_upper_hat >= small.lambda_upper_hat


def test_estimates_deterministic():
    A = np.random.default_rng(9).standard_normal((100, 10))
    a = estimate_conditions(A, num_directions=150, seed=2)
    b = estimate_conditions(A, num_directions=150, seed=2)
    assert (a.lambda_lower_hat, a.lambda_upper_hat, a.sigma2_hat) == \
        (b.lambda_lower_hat, b.lambda_upper_hat, b.sigma2_hat)


def test_estimates_direction_count_guard():
    with pytest.raises(DiagnosticsError):
        estimate_conditions(np.eye(3), num_directions=10)


def test_sigma2_positive():
    A = np.random.default_rng(13).standard_normal((200, 10))
    est = estimate_conditions(A, num_directions=120, seed=0)
    assert est.sigma2_hat > 0.0


def test_metrics_permutation_invariant():
    model = _constant_class_model(target=1)
    rng = np.random.default_rng(21)
    X = np.abs(rng.standard_normal((4, 60))) + 0.1
    labels = rng.integers(0, 3, 60)
    perm = rng.permutation(60)
    assert accuracy(model, X, labels) == accuracy(model, X[:, perm], labels[perm])
    assert attack_success_rate(model, X, 1) == attack_success_rate(model, X[:, perm], 1)
