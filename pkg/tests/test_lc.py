"""Tests for the compression drivers, penalty bookkeeping, and stats."""

import numpy as np
import pytest

import lcquant.lc as lc
from lcquant.datasets import gen_synthetic_classes
from lcquant.errors import DivergenceError
from lcquant.lc import (
    PenaltySchedule,
    QuantScheme,
    Trace,
    clipped_lr,
    compression_stats,
    dc_run,
    idc_run,
    lc_run,
)
from lcquant.models import LinearRegressionModel, MlpModel, SgdConfig


def make_linreg(seed=0, n=80, d_in=6, d_out=4, noise=0.3):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d_in))
    w = rng.standard_normal((d_out, d_in))
    b = rng.standard_normal(d_out)
    y = x @ w.T + b + noise * rng.standard_normal((n, d_out))
    m = LinearRegressionModel(x, y)
    m.train_reference()
    return m


def make_mlp(seed=0, sizes=(8, 12, 5), n=400, train=True):
    data = gen_synthetic_classes(sizes[-1], sizes[0], n, seed=seed,
                                 separation=2.5)
    m = MlpModel(list(sizes), data.images, data.labels, seed=seed)
    if train:
        m.train_reference(cfg=SgdConfig(lr0=0.1, epochs=10, seed=seed),
                          rng=np.random.default_rng(seed))
    return m


# ---------------------------------------------------------------------------
# compression stats and learning-rate clip
# ---------------------------------------------------------------------------

def test_compression_stats_formula():
    s = compression_stats(266200, 410, 2, 32)
    assert s.bits_reference == 266610 * 32
    assert s.bits_quantized == 266200 * 1 + (410 + 2) * 32
    assert round(s.rho, 1) == 30.5


def test_compression_stats_k1_costs_zero_bits_per_weight():
    s = compression_stats(1000, 10, 1, 32)
    assert s.bits_quantized == (10 + 1) * 32


def test_compression_stats_approaches_b_over_log2k():
    s = compression_stats(10**9, 0, 16, 32)
    assert s.rho == pytest.approx(32 / 4, rel=1e-3)


def test_compression_stats_validation():
    with pytest.raises(ValueError):
        compression_stats(-1, 0, 2)
    with pytest.raises(ValueError):
        compression_stats(10, 0, 0)
    with pytest.raises(ValueError):
        compression_stats(10, 0, 2, b=0)


def test_clipped_lr_examples():
    assert clipped_lr(0, 0.1, 5.0) == pytest.approx(0.1)
    assert clipped_lr(0, 0.1, 100.0) == pytest.approx(0.01)
    assert clipped_lr(3, lambda t: 0.1 * 0.5**t, 2.0) == pytest.approx(0.0125)
    assert clipped_lr(0, 0.1, 1e12) == pytest.approx(1e-12)
    with pytest.raises(ValueError):
        clipped_lr(0, 0.1, 0.0)


# ---------------------------------------------------------------------------
# scheme validation
# ---------------------------------------------------------------------------

def test_scheme_validation():
    with pytest.raises(ValueError):
        QuantScheme(kind="adaptive")  # k missing
    with pytest.raises(ValueError):
        QuantScheme(kind="fixed")  # codebook missing
    with pytest.raises(ValueError):
        QuantScheme(kind="pow2")  # c_exp missing
    with pytest.raises(ValueError):
        QuantScheme(kind="adaptive", k=2, scope="per_row")
    assert QuantScheme(kind="adaptive", k=4).codebook_size == 4
    assert QuantScheme(kind="binary").codebook_size == 2
    assert QuantScheme(kind="ternary_scale").codebook_size == 3
    assert QuantScheme(kind="pow2", c_exp=2).codebook_size == 7
    assert QuantScheme(kind="fixed", codebook=(-1.0, 0.5)).codebook_size == 2


def test_penalty_schedule_validation_and_growth():
    sched = PenaltySchedule(mu0=2.0, growth=1.5, max_outer_iters=5)
    assert sched.mu(0) == 2.0
    assert sched.mu(3) == pytest.approx(2.0 * 1.5**3)
    with pytest.raises(ValueError):
        PenaltySchedule(mu0=0.0, growth=1.5)
    with pytest.raises(ValueError):
        PenaltySchedule(mu0=1.0, growth=1.0)
    with pytest.raises(ValueError):
        PenaltySchedule(mu0=1.0, growth=1.1, method="exact_penalty")


# ---------------------------------------------------------------------------
# direct compression
# ---------------------------------------------------------------------------

def test_dc_adaptive_distortion_matches_kmeans():
    from lcquant.quantizers import kmeans_1d

    m = make_linreg()
    wbar = m.weight_vector()
    result = dc_run(m, QuantScheme(kind="adaptive", k=3, scope="global"), seed=5)
    res = kmeans_1d(wbar, 3, rng=np.random.default_rng(5))
    assert float(np.sum((wbar - result.weights) ** 2)) == pytest.approx(
        res.distortion, rel=1e-10)


def test_dc_binary_values_are_signs():
    m = make_linreg()
    result = dc_run(m, QuantScheme(kind="binary"), seed=0)
    assert set(np.unique(result.weights)) <= {-1.0, 1.0}


def test_dc_leaves_model_at_reference():
    m = make_linreg()
    wbar = m.weight_vector()
    dc_run(m, QuantScheme(kind="adaptive", k=2), seed=0)
    assert np.array_equal(m.weight_vector(), wbar)


# ---------------------------------------------------------------------------
# LC driver
# ---------------------------------------------------------------------------

def test_lc_iteration_zero_equals_dc_bit_for_bit(monkeypatch):
    m = make_linreg()
    ref = m.param_vector()
    scheme = QuantScheme(kind="adaptive", k=3)
    dc = dc_run(m, scheme, seed=11)
    m.set_param_vector(ref)

    captured = []
    real_c_step = lc._c_step

    def spy(w, slices, sch, warm, rng):
        out = real_c_step(w, slices, sch, warm, rng)
        captured.append(out)
        return out

    monkeypatch.setattr(lc, "_c_step", spy)
    run = lc_run(m, scheme,
                 PenaltySchedule(mu0=1.0, growth=1.1, max_outer_iters=1),
                 seed=11)
    params0, w_q0, _ = captured[0]
    assert np.array_equal(w_q0, dc.weights)
    for a, b in zip(dc.params, params0):
        assert np.array_equal(a.codebook.entries, b.codebook.entries)
        assert np.array_equal(a.assignments.kappa, b.assignments.kappa)
    assert run.trace[0].loss_train == dc.trace[0].loss_train
    assert run.trace[0].constraint_violation == dc.trace[0].constraint_violation


def test_lc_feasible_when_constraint_satisfiable_exactly():
    # K = number of distinct weights: the feasible set contains the
    # reference, so LC converges with the reference loss.
    rng = np.random.default_rng(4)
    x = rng.standard_normal((50, 2))
    y = (x @ np.array([[1.5, -0.5]]).T) + 0.2 * rng.standard_normal((50, 1))
    m = LinearRegressionModel(x, y)
    m.train_reference()
    ref_loss = m.loss_train()
    run = lc_run(m, QuantScheme(kind="adaptive", k=2),
                 PenaltySchedule(mu0=1.0, growth=1.5, max_outer_iters=30),
                 seed=0)
    assert run.converged
    assert run.trace[-1].loss_train == pytest.approx(ref_loss, rel=1e-9)
    assert run.trace[-1].constraint_violation < 1e-6


def test_lc_small_mlp_k2_beats_dc_and_has_two_values_per_layer():
    m = make_mlp(seed=1)
    ref = m.param_vector()
    scheme = QuantScheme(kind="adaptive", k=2)
    dc = dc_run(m, scheme, seed=1)
    m.set_param_vector(ref)
    run = lc_run(m, scheme,
                 PenaltySchedule(mu0=1e-3, growth=1.2, max_outer_iters=30),
                 lstep_cfg=SgdConfig(lr0=0.1, epochs=3, seed=1), seed=1)
    assert m.loss_train() < dc.trace[0].loss_train  # model left at result
    for s in run.slices:
        assert len(np.unique(run.weights[s])) <= 2


def test_lc_final_model_weights_are_quantized():
    m = make_mlp(seed=2)
    run = lc_run(m, QuantScheme(kind="adaptive", k=4),
                 PenaltySchedule(mu0=1e-3, growth=1.2, max_outer_iters=10),
                 lstep_cfg=SgdConfig(lr0=0.1, epochs=2, seed=2), seed=2)
    assert np.array_equal(m.weight_vector(), run.weights)
    for s in run.slices:
        assert len(np.unique(run.weights[s])) <= 4


def test_lc_mu_schedule_ratio_is_exact():
    m = make_mlp(seed=3)
    run = lc_run(m, QuantScheme(kind="adaptive", k=2),
                 PenaltySchedule(mu0=1e-3, growth=1.25, max_outer_iters=8),
                 lstep_cfg=SgdConfig(lr0=0.05, epochs=1, seed=3), seed=3)
    mus = run.trace.column("mu")[1:]
    for a, b in zip(mus, mus[1:]):
        assert b / a == pytest.approx(1.25, rel=1e-12)


def test_lc_c_step_quantizes_w_minus_lambda_over_mu(monkeypatch):
    """The compression step must see w - lam/mu (not w itself), and the
    multipliers must follow lam <- lam - mu (w - w_q)."""
    m = make_linreg(noise=0.5)
    calls = []
    real_c_step = lc._c_step

    def spy(w, slices, scheme, warm, rng):
        params, w_q, iters = real_c_step(w, slices, scheme, warm, rng)
        calls.append((w.copy(), m.weight_vector(), w_q.copy()))
        return params, w_q, iters

    monkeypatch.setattr(lc, "_c_step", spy)
    schedule = PenaltySchedule(mu0=0.5, growth=1.3, max_outer_iters=6)
    lc_run(m, QuantScheme(kind="adaptive", k=2), schedule, seed=0)

    lam = np.zeros(m.n_weights)
    nonzero_lambda_seen = False
    # calls[0] is the initial C step on the reference weights
    assert np.array_equal(calls[0][0], calls[0][1])
    for k, (arg, w_model, w_q) in enumerate(calls[1:]):
        mu = schedule.mu(k)
        assert np.allclose(arg, w_model - lam / mu, atol=1e-12)
        if np.any(lam != 0):
            nonzero_lambda_seen = True
            assert not np.allclose(arg, w_model)  # it is NOT w itself
        lam = lam - mu * (w_model - w_q)
    assert nonzero_lambda_seen


def test_lc_quadratic_penalty_equals_al_with_multipliers_disabled(monkeypatch):
    m = make_mlp(seed=4)
    ref = m.param_vector()
    scheme = QuantScheme(kind="adaptive", k=2)
    schedule_al = PenaltySchedule(mu0=1e-3, growth=1.2, max_outer_iters=6,
                                  method="augmented_lagrangian")
    schedule_qp = PenaltySchedule(mu0=1e-3, growth=1.2, max_outer_iters=6,
                                  method="quadratic_penalty")
    cfg = SgdConfig(lr0=0.05, epochs=2, seed=4)

    qp = lc_run(m, scheme, schedule_qp, lstep_cfg=cfg, seed=4)
    m.set_param_vector(ref)
    al = lc_run(m, scheme, schedule_al, lstep_cfg=cfg, seed=4)
    m.set_param_vector(ref)
    monkeypatch.setattr(lc, "_update_multipliers",
                        lambda lam, mu, w, w_q: lam)
    al_disabled = lc_run(m, scheme, schedule_al, lstep_cfg=cfg, seed=4)

    qp_losses = qp.trace.column("loss_train")
    assert qp_losses == al_disabled.trace.column("loss_train")
    assert not np.array_equal(al.weights, qp.weights)  # multipliers matter
    assert np.array_equal(al_disabled.weights, qp.weights)


def test_lc_divergence_aborts_with_trace():
    m = make_mlp(seed=5)
    with pytest.raises(DivergenceError) as info:
        lc_run(m, QuantScheme(kind="adaptive", k=2),
               PenaltySchedule(mu0=1e-6, growth=1.1, max_outer_iters=10),
               lstep_cfg=SgdConfig(lr0=1e9, lr_decay=1.0, epochs=3, seed=5),
               seed=5)
    assert info.value.trace is not None
    assert len(info.value.trace) >= 1  # the DC point was recorded


def test_lc_global_scope_shares_one_codebook():
    m = make_mlp(seed=6)
    run = dc_run(m, QuantScheme(kind="adaptive", k=2, scope="global"), seed=6)
    assert len(run.params) == 1
    assert len(np.unique(run.weights)) <= 2


def test_lc_fixed_scheme_runs():
    m = make_linreg()
    run = dc_run(m, QuantScheme(kind="fixed", codebook=(-0.5, 0.0, 0.5)), seed=0)
    assert set(np.unique(run.weights)) <= {-0.5, 0.0, 0.5}


# ---------------------------------------------------------------------------
# iterated direct compression
# ---------------------------------------------------------------------------

def test_idc_exact_l_step_never_moves():
    m = make_linreg(noise=0.4)
    scheme = QuantScheme(kind="adaptive", k=2)
    run = idc_run(m, scheme, outer_iters=5, seed=0)
    losses = run.trace.column("loss_train")
    for loss in losses[1:]:
        assert loss == pytest.approx(losses[1], rel=1e-12)


def test_idc_one_iteration_is_dc_after_one_retraining():
    m = make_linreg(noise=0.4)
    ref = m.param_vector()
    scheme = QuantScheme(kind="adaptive", k=3)
    dc = dc_run(m, scheme, seed=3)
    m.set_param_vector(ref)
    run = idc_run(m, scheme, outer_iters=1, seed=3)
    # with the exact L step the retrained net is the reference again, so
    # both quantizations coincide
    assert np.allclose(run.weights, dc.weights, atol=1e-12)


def test_idc_mlp_sits_between_dc_and_lc():
    data = gen_synthetic_classes(10, 32, 3000, seed=7, separation=3.0)
    m = MlpModel([32, 40, 10], data.images, data.labels, seed=7)
    m.train_reference(cfg=SgdConfig(lr0=0.1, epochs=20, seed=7),
                      rng=np.random.default_rng(7))
    ref = m.param_vector()
    scheme = QuantScheme(kind="adaptive", k=2)
    cfg = SgdConfig(lr0=0.1, epochs=4, seed=7)
    dc = dc_run(m, scheme, seed=7)
    m.set_param_vector(ref)
    idc = idc_run(m, scheme, outer_iters=40, lstep_cfg=cfg, seed=7)
    m.set_param_vector(ref)
    lc_result = lc_run(m, scheme,
                       PenaltySchedule(mu0=1e-3, growth=1.1,
                                       max_outer_iters=40),
                       lstep_cfg=cfg, seed=7)
    dc_loss = dc.trace[0].loss_train
    idc_loss = idc.trace[-1].loss_train
    lc_loss = m.loss_train()  # model left at the returned iterate
    assert np.array_equal(m.weight_vector(), lc_result.weights)
    assert lc_loss < idc_loss < dc_loss


# ---------------------------------------------------------------------------
# trace round-trips
# ---------------------------------------------------------------------------

def _sample_traces():
    m = make_linreg()
    reg = lc_run(m, QuantScheme(kind="adaptive", k=2),
                 PenaltySchedule(mu0=1.0, growth=1.3, max_outer_iters=4),
                 seed=0).trace
    clf = lc_run(make_mlp(seed=8), QuantScheme(kind="adaptive", k=2),
                 PenaltySchedule(mu0=1e-3, growth=1.2, max_outer_iters=3),
                 lstep_cfg=SgdConfig(lr0=0.05, epochs=1, seed=8),
                 seed=8).trace
    return reg, clf


def test_trace_csv_and_json_round_trip_losslessly(tmp_path):
    for i, trace in enumerate(_sample_traces()):
        csv_path = tmp_path / f"t{i}.csv"
        json_path = tmp_path / f"t{i}.json"
        trace.to_csv(csv_path)
        trace.to_json(json_path)
        for loaded in (Trace.from_csv(csv_path), Trace.from_json(json_path)):
            assert len(loaded) == len(trace)
            for a, b in zip(trace.rows, loaded.rows):
                assert a == b
