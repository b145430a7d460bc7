"""Acceptance criteria A1-A9, one test per criterion.

Each test prints a `[A#] ... PASS` line (visible with `pytest -s` or on
failure).  A5/A6 use real MNIST files when PURIFYNET_MNIST_DIR points at
them and otherwise fall back to synthetic class clusters, where only the
before/after attack-success ordering is asserted (the stricter MNIST
thresholds are still printed).

Known red: the joint-regime half of A2's output-layer check.  The output
displacement accumulates along the training trajectory whose activation
span drifts away from any fixed design, so its zero-noise recovery is
approximate (observed ~3e-6 averaged squared error at this scale, vs the
1e-10 required).  The frozen-hidden half, where the guarantee is exact, passes
at machine precision.  See the repository notes for the analysis.
"""
import os
import time

import numpy as np
import pytest

from helpers import fd_grad, rel_err
from purifynet import (
    LadProblem, LossKind, NoiseSpec, Normal, Regime, RepairSet, TrainConfig,
    TrainTrace, contaminate, err_W, err_beta, estimate_conditions, gradients,
    gradients_multilayer, init_multilayer, init_params, loss, predict,
    predict_multilayer, purify, solve, solve_oracle, synth_gaussian, train,
    train_two_phase, validate_config,
)
from purifynet.diagnostics import check_trajectory
from purifynet.harness import (
    BackdoorRunConfig, build_recovery_grid, read_csv, run_backdoor,
    run_recovery_sweep,
)
from purifynet.model import loss_from_outputs
from purifynet.patching import patches_of


def report(tag, ok, detail):
    line = f"[{tag}] {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------


def test_a1_lad_oracle_equivalence():
    rng = np.random.default_rng(20240811)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(200):
        q = int(rng.integers(1, 4))
        D = int(rng.integers(q + 1, 13))
        A = rng.standard_normal((D, q))
        u_star = rng.standard_normal(q)
        r = A @ u_star
        n_corrupt = int(rng.integers(0, D // 3 + 1))
        idx = rng.choice(D, size=n_corrupt, replace=False)
        r[idx] += rng.normal(1.0, 1.0, size=n_corrupt)
        prob = LadProblem(A=A, r=r)
        worst = max(worst, abs(solve(prob).objective - solve_oracle(prob).objective))
    elapsed = time.monotonic() - t0
    report("A1", worst <= 1e-8 and elapsed < 10.0,
           f"200 problems, max objective gap {worst:.2e} (tol 1e-8), {elapsed:.1f}s (< 10s)")


def test_a2_zero_noise_exactness():
    n, m, k, p = 5, 5, 100, 500
    cfg = validate_config(m * k, m, k)
    gamma, t_max = 0.004, 400
    t0 = time.monotonic()
    worst = {("joint", "W"): 0.0, ("joint", "beta"): 0.0,
             ("frozen", "W"): 0.0, ("frozen", "beta"): 0.0}
    for seed in range(20):
        ds = synth_gaussian(cfg.d, n, seed=seed)
        teacher = init_params(cfg, p=p, seed=1000 + seed)
        y = np.sign(predict(teacher, ds.X)[0])
        for regime, label in [(Regime.JOINT, "joint"), (Regime.FROZEN_HIDDEN, "frozen")]:
            params = init_params(cfg, p=p, seed=2000 + seed)
            tc = TrainConfig(gamma=gamma, t_max=t_max, regime=regime)
            trained = (train_two_phase if regime == Regime.FROZEN_HIDDEN else train)(
                params, ds.X, y, tc)
            contaminated, _ = contaminate(trained, NoiseSpec(epsilon=0.0, seed=seed))
            rep = purify(contaminated, RepairSet(X=ds.X), regime)
            worst[(label, "W")] = max(worst[(label, "W")], err_W(rep.W_tilde, trained.W))
            worst[(label, "beta")] = max(worst[(label, "beta")],
                                         err_beta(rep.beta_tilde, trained.beta))
    elapsed = time.monotonic() - t0
    lines = (f"err_W joint {worst[('joint','W')]:.2e} / frozen {worst[('frozen','W')]:.2e} "
             f"(tol 1e-6); err_beta joint {worst[('joint','beta')]:.2e} / "
             f"frozen {worst[('frozen','beta')]:.2e} (tol 1e-10); {elapsed:.0f}s (< 120s)")
    ok = (worst[("joint", "W")] <= 1e-6 and worst[("frozen", "W")] <= 1e-6
          and worst[("joint", "beta")] <= 1e-10 and worst[("frozen", "beta")] <= 1e-10
          and elapsed < 120.0)
    report("A2", ok, lines)


def _medians(rows, key_fields, value):
    cells = {}
    for r in rows:
        if r["error"]:
            continue
        key = tuple(r[f] for f in key_fields)
        cells.setdefault(key, []).append(float(r[value]))
    return {k: float(np.median(v)) for k, v in cells.items()}


def _threshold(medians, k_val, p_val, floor=1e-3):
    eps_grid = sorted({float(e) for (kk, pp, e) in medians if kk == k_val and pp == p_val})
    for e in eps_grid:
        if medians[(k_val, p_val, repr(e))] > floor:
            return e
    return 1.0


def test_a3_synthetic_phase_transition(tmp_path):
    eps = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    t0 = time.monotonic()
    cells = build_recovery_grid(n=5, m=5, k=[50, 100, 150], p=1000, epsilon=eps,
                                regime=Regime.FROZEN_HIDDEN, t_max=400)
    cells += build_recovery_grid(n=5, m=5, k=100, p=[500, 2000], epsilon=eps,
                                 regime=Regime.FROZEN_HIDDEN, t_max=400)
    results = run_recovery_sweep(cells, trials=20, master_seed=0,
                                 experiment="a3", out_dir=tmp_path)
    elapsed = time.monotonic() - t0
    rows = read_csv(tmp_path / "results.csv")

    med_w = _medians(rows, ["k", "p", "epsilon"], "err_W")
    med_b = _medians(rows, ["k", "p", "epsilon"], "err_beta")

    base = {e: med_w[("100", "1000", repr(e))] for e in eps}
    small_ok = all(base[e] <= 1e-6 for e in (0.0, 0.1, 0.2))
    ratio = base[0.6] / max(base[0.2], 1e-300)
    jump_ok = ratio >= 1e3 and base[0.6] >= 1e-3

    thr_w = {kk: _threshold(med_w, kk, "1000") for kk in ("50", "100", "150")}
    k_mono = thr_w["50"] <= thr_w["100"] <= thr_w["150"]
    thr_b = {pp: _threshold(med_b, "100", pp) for pp in ("500", "1000", "2000")}
    p_mono = thr_b["500"] <= thr_b["1000"] <= thr_b["2000"]

    ok = small_ok and jump_ok and k_mono and p_mono and elapsed < 1800.0
    report("A3", ok,
           f"median err_W(eps<=0.2) max {max(base[e] for e in (0.0,0.1,0.2)):.2e} "
           f"(tol 1e-6); err_W(0.6)/err_W(0.2) = {ratio:.1e} (>= 1e3); "
           f"k-thresholds {thr_w} non-decreasing={k_mono}; "
           f"p-thresholds {thr_b} non-decreasing={p_mono}; "
           f"{elapsed:.0f}s (< 1800s)")


def test_a4_trajectory_bounds():
    n, m, k, p = 5, 5, 200, 2000
    gamma = 0.05 / (m * n)          # m n gamma = 0.05
    cfg = validate_config(m * k, m, k)
    t0 = time.monotonic()
    all_ok, details = True, []
    for seed in range(10):
        ds = synth_gaussian(cfg.d, n, seed=seed)
        teacher = init_params(cfg, p=p, seed=role_seed(seed, 1))
        y = np.sign(predict(teacher, ds.X)[0])
        params = init_params(cfg, p=p, seed=role_seed(seed, 2))
        resid0 = float(np.sum((y - predict(params, ds.X)[0]) ** 2))
        trace = TrainTrace()
        train(params, ds.X, y, TrainConfig(gamma=gamma, t_max=500), trace=trace)
        chk = check_trajectory(trace, resid0, m=m, n=n, p=p, k=k, gamma=gamma, slack=1.1)
        all_ok &= chk["all_ok"]
        details.append((max(trace.beta_dev), max(trace.w_dev)))
    elapsed = time.monotonic() - t0
    rb, rw = chk["r_beta"], chk["r_w"]
    report("A4", all_ok and elapsed < 600.0,
           f"10 seeds x 500 iterations: max beta dev {max(d[0] for d in details):.3f} "
           f"<= {rb:.1f}, max W dev {max(d[1] for d in details):.4f} <= {rw:.1f}, "
           f"residual contraction within 1.1 x (1 - gamma/8)^t; {elapsed:.0f}s (< 600s)")


def role_seed(seed, role):
    return 10_000 * (role + 1) + seed


def _mnist_available():
    root = os.environ.get("PURIFYNET_MNIST_DIR")
    if not root:
        return None
    needed = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
    if all(os.path.exists(os.path.join(root, f)) for f in needed):
        return root
    return None


@pytest.fixture(scope="module")
def backdoor_rows():
    mnist = _mnist_available()
    cfg = BackdoorRunConfig(
        dataset="mnist" if mnist else "synthetic", mnist_dir=mnist,
        n_train=99, poison_ratio=[0.3], n_repair=[99],
        repair_origin=["training", "external"], trials=5,
        gamma=2.0, t_max=800, synth_center_span=(0.4, 0.6))
    t0 = time.monotonic()
    rows = run_backdoor(cfg, master_seed=0, experiment="a5")
    return rows, bool(mnist), time.monotonic() - t0


def test_a5_backdoor_mitigation(backdoor_rows):
    rows, have_mnist, elapsed = backdoor_rows
    mine = [r for r in rows if r.repair_origin == "training"]
    assert len(mine) == 5 and all(r.error == "" for r in mine)
    asr_b = float(np.mean([r.asr_before for r in mine]))
    asr_a = float(np.mean([r.asr_after for r in mine]))
    acc_b = float(np.mean([r.acc_clean_before for r in mine]))
    acc_a = float(np.mean([r.acc_clean_after for r in mine]))
    detail = (f"{'mnist' if have_mnist else 'synthetic fallback'}: "
              f"mean asr {asr_b:.3f} -> {asr_a:.3f}, mean acc {acc_b:.3f} -> {acc_a:.3f}, "
              f"{elapsed:.0f}s (< 900s); mnist thresholds "
              f"(asr_before >= 0.9: {asr_b >= 0.9}, asr_after <= 0.45: {asr_a <= 0.45}, "
              f"acc drop <= 0.10: {acc_a >= acc_b - 0.10})")
    if have_mnist:
        ok = asr_b >= 0.9 and asr_a <= 0.45 and acc_a >= acc_b - 0.10 and elapsed < 900
    else:
        # fallback: only the before/after ordering is asserted
        ok = asr_a < asr_b and elapsed < 900
    report("A5", ok, detail)


def test_a6_non_training_repair(backdoor_rows):
    rows, have_mnist, _ = backdoor_rows
    mine = [r for r in rows if r.repair_origin == "external"]
    assert len(mine) == 5 and all(r.error == "" for r in mine)
    asr_b = float(np.mean([r.asr_before for r in mine]))
    asr_a = float(np.mean([r.asr_after for r in mine]))
    detail = (f"{'mnist' if have_mnist else 'synthetic fallback'} external repair: "
              f"mean asr {asr_b:.3f} -> {asr_a:.3f} (mnist threshold <= 0.5: {asr_a <= 0.5})")
    ok = (asr_a <= 0.5) if have_mnist else (asr_a < asr_b)
    report("A6", ok, detail)


def test_a7_gradient_correctness():
    rng = np.random.default_rng(90207)
    t0 = time.monotonic()
    worst = 0.0
    for i in range(50):
        depth = int(rng.integers(1, 4))
        kind = LossKind.SQUARED_ERROR if i % 2 == 0 else LossKind.SOFTMAX_CE
        m = int(rng.integers(1, 4))
        k = int(rng.integers(2, 5))
        cfg = validate_config(m * k, m, k)
        C = 1 if kind == LossKind.SQUARED_ERROR else int(rng.integers(2, 4))
        nsamp = int(rng.integers(2, 6))
        X = rng.standard_normal((cfg.d, nsamp))
        y = (rng.integers(0, C, nsamp) if kind == LossKind.SOFTMAX_CE
             else rng.standard_normal(nsamp))
        if depth == 1:
            params = init_params(cfg, p=int(rng.integers(2, 7)), C=C,
                                 seed=int(rng.integers(0, 2**31)))
            gb, gw, _ = gradients(params.W, params.beta,
                                  patches_of(cfg, X), y, kind, params.p)
            worst = max(worst, rel_err(gb, fd_grad(
                lambda: loss(params, X, y, kind), params.beta)))
            worst = max(worst, rel_err(gw, fd_grad(
                lambda: loss(params, X, y, kind), params.W)))
        else:
            widths = [int(rng.integers(3, 7)) for _ in range(depth)]
            ml = init_multilayer(cfg, widths, C=C, seed=int(rng.integers(0, 2**31)))

            def L():
                return loss_from_outputs(predict_multilayer(ml, X), y, kind)

            gb, gh, gw, _ = gradients_multilayer(ml, X, y, kind)
            worst = max(worst, rel_err(gb, fd_grad(L, ml.beta)))
            worst = max(worst, rel_err(gw, fd_grad(L, ml.W)))
            for li in range(len(ml.hidden)):
                worst = max(worst, rel_err(gh[li], fd_grad(L, ml.hidden[li])))
    elapsed = time.monotonic() - t0
    report("A7", worst < 1e-5 and elapsed < 60.0,
           f"50 configs, depths 1-3, both losses: max rel err {worst:.2e} "
           f"(tol 1e-5), {elapsed:.1f}s (< 60s)")


def test_a8_design_condition_sanity():
    los, his = [], []
    for seed in range(10):
        A = np.random.default_rng(seed).standard_normal((500, 25))
        est = estimate_conditions(A, num_directions=200, seed=seed)
        assert est.lambda_lower_hat <= est.lambda_upper_hat
        los.append(est.lambda_lower_hat)
        his.append(est.lambda_upper_hat)
    ok = min(los) >= 0.5 and max(his) <= 3.0
    report("A8", ok,
           f"10 seeds, Gaussian 500x25: lambda_lower in [{min(los):.3f}, {max(los):.3f}] "
           f"(>= 0.5), lambda_upper in [{min(his):.3f}, {max(his):.3f}] (<= 3)")


def test_a9_determinism(tmp_path):
    eps = [0.0, 0.3, 0.7]
    cells = build_recovery_grid(n=4, m=2, k=32, p=40, epsilon=eps,
                                regime=[Regime.JOINT, Regime.FROZEN_HIDDEN],
                                gamma=0.0125, t_max=60)
    outputs = []
    for threads, sub in [(1, "t1"), (8, "t8")]:
        run_recovery_sweep(cells, trials=3, master_seed=42, threads=threads,
                           out_dir=tmp_path / sub)
        rows = read_csv(tmp_path / sub / "results.csv")
        for r in rows:
            r.pop("wallclock_ms")
        outputs.append(rows)
    ok = outputs[0] == outputs[1]
    report("A9", ok, f"{len(outputs[0])} rows bit-identical at 1 and 8 worker threads "
                     "(wallclock_ms excluded)")
