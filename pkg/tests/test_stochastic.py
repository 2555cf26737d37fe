"""Estimator tests: sample statistics, the empirical-cdf bound, windows."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtcontracts import stochastic as sto
from rtcontracts.stochastic import (
    EmptyBuffer,
    ExecTimeModel,
    InsufficientSamples,
    SampleBuffer,
    WrongBatchSize,
    empirical_cdf,
    estimate_bound,
    mean,
    std_dev,
)

from oracles import cdf_bound_reference, coverage_count, mean_fsum, std_two_pass


# --- mean / std_dev -------------------------------------------------------

def test_mean_basic():
    assert mean([1, 3]) == 2
    assert mean([5, 5, 5, 5]) == 5


def test_mean_empty():
    with pytest.raises(EmptyBuffer):
        mean([])


def test_mean_matches_compensated_sum_oracle():
    rng = np.random.default_rng(7)
    xs = list(rng.uniform(0.5, 2.0, 1000))
    assert mean(xs) == pytest.approx(mean_fsum(xs), rel=1e-12)


def test_std_dev_hand_values():
    assert std_dev([1, 3]) == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert std_dev([4, 4, 4]) == 0.0


def test_std_dev_requires_two():
    with pytest.raises(InsufficientSamples):
        std_dev([1])


def test_std_dev_matches_two_pass_oracle():
    rng = np.random.default_rng(11)
    xs = list(rng.lognormal(0.0, 0.4, 1000))
    assert std_dev(xs) == pytest.approx(std_two_pass(xs), rel=1e-9)


# --- empirical_cdf --------------------------------------------------------

def test_cdf_degenerate_constant_data():
    est = empirical_cdf([7, 7, 7, 7], 0.9)
    assert est.gamma == 0.0
    assert est.tau == 7.0


def test_cdf_grid_median():
    # 1..100 at pi=0.5: 10 bins of width 9.9, the edge 50.5 covers exactly
    # half the samples and equals the mean, so gamma is 0.
    data = [float(i) for i in range(1, 101)]
    est = empirical_cdf(data, 0.5)
    assert est.tau == pytest.approx(50.5, abs=0.0)
    assert est.gamma == 0.0
    assert est.mu == 50.5
    assert est.sd == pytest.approx(29.011491975882016, rel=1e-12)


def test_cdf_grid_tail():
    # Same grid at pi=0.95: edges 10.9, 20.8, ... 90.1 cover 10..90 samples;
    # only the last (clamped-to-max) edge reaches 0.95.
    data = [float(i) for i in range(1, 101)]
    est = empirical_cdf(data, 0.95)
    assert est.tau == pytest.approx(100.0, rel=1e-12)
    assert est.gamma == pytest.approx(1.706220419175636, rel=1e-12)


def test_cdf_matches_reference_bits():
    rng = np.random.default_rng(3)
    for n in (16, 100, 1000):
        xs = [int(v) for v in rng.lognormal(11.0, 0.35, n)]
        for pi in (0.5, 0.9, 0.95, 0.99):
            est = empirical_cdf(xs, pi)
            g_ref, t_ref = cdf_bound_reference(xs, pi)
            assert est.tau == t_ref
            assert est.gamma == pytest.approx(g_ref, rel=1e-12)


def test_cdf_rejects_bad_pi_and_short_data():
    with pytest.raises(ValueError):
        empirical_cdf([1, 2, 3], 1.5)
    with pytest.raises(InsufficientSamples):
        empirical_cdf([1], 0.5)


def test_cdf_does_not_reorder_input():
    xs = [5, 1, 9, 3, 3, 8]
    snapshot = list(xs)
    empirical_cdf(xs, 0.9)
    assert xs == snapshot


@given(
    st.lists(st.integers(min_value=0, max_value=10**9), min_size=2, max_size=400),
    st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=150, deadline=None)
def test_cdf_coverage_property(xs, pi):
    est = empirical_cdf(xs, pi)
    n = len(xs)
    assert coverage_count(xs, est.tau) / n >= pi


@given(st.integers(min_value=2, max_value=200), st.floats(0.0, 1.0))
@settings(max_examples=80, deadline=None)
def test_cdf_shift_scale_equivariance(n, pi):
    rng = np.random.default_rng(n)
    xs = list(rng.uniform(1.0, 2.0, n))
    base = empirical_cdf(xs, pi)
    d = 3.25
    shifted = empirical_cdf([x + d for x in xs], pi)
    assert shifted.gamma == pytest.approx(base.gamma, rel=1e-12, abs=1e-12)
    assert shifted.tau == pytest.approx(base.tau + d, rel=1e-12)
    c = 4.0  # power of two keeps the scaling exact
    scaled = empirical_cdf([x * c for x in xs], pi)
    assert scaled.gamma == pytest.approx(base.gamma, rel=1e-12, abs=1e-12)
    assert scaled.tau == pytest.approx(base.tau * c, rel=1e-12)


def test_estimate_bound():
    assert estimate_bound(0.0, 1.0, 2.0) == 2.0
    assert estimate_bound(17.5, 3.0, 0.0) == 17.5
    est = empirical_cdf([float(i) for i in range(1, 101)], 0.95)
    assert estimate_bound(est.mu, est.sd, est.gamma) == pytest.approx(100.0, rel=1e-12)


# --- SampleBuffer / ExecTimeModel -----------------------------------------

def test_buffer_fills_then_replaces_in_ring_order():
    buf = SampleBuffer(4)
    for v in (10, 20, 30, 40):
        buf.push(v)
    assert buf.full
    buf.replace_oldest([11, 21])
    assert buf.values() == [11, 21, 30, 40]
    buf.replace_oldest([31, 41, 12])
    assert buf.values() == [12, 21, 31, 41]


def test_buffer_push_past_capacity_rejected():
    buf = SampleBuffer(2)
    buf.push(1)
    buf.push(2)
    with pytest.raises(RuntimeError):
        buf.push(3)


def _trained_model(samples, pi=0.95, h=2):
    model = ExecTimeModel(capacity=len(samples), pi=pi, h=h)
    for v in samples:
        model.observe(v)
    return model


def test_train_full_buffer_and_eq3_identity():
    rng = np.random.default_rng(5)
    xs = [int(v) for v in rng.lognormal(11.0, 0.3, 100)]
    model = _trained_model(xs, pi=0.95, h=10)
    assert model.trained
    assert coverage_count(xs, model.tau) / 100 >= 0.95
    assert abs(model.tau - (model.mu + model.gamma * model.sd)) <= 1e-9 * max(1.0, abs(model.tau))


def test_train_constant_data_degenerate():
    model = _trained_model([500] * 10)
    assert model.gamma == 0.0
    assert model.tau == 500.0


def test_train_half_full_rejected():
    model = ExecTimeModel(capacity=10, pi=0.9, h=1)
    for v in range(5):
        model.buffer.push(v)
    with pytest.raises(InsufficientSamples):
        model.train()


def test_window_update_full_replacement():
    model = _trained_model([100, 200, 300, 400], pi=0.5, h=4)
    model.window_update([1000, 1000, 1000, 1000])
    assert model.mu == 1000.0
    assert model.sd == 0.0
    assert model.tau == 1000.0


def test_window_update_identical_samples_is_fixed_point():
    xs = [100, 200, 300, 400]
    model = _trained_model(xs, pi=0.5, h=2)
    mu, sd, tau = model.mu, model.sd, model.tau
    model.window_update([100, 200])  # same values replace themselves
    assert (model.mu, model.sd, model.tau) == (mu, sd, tau)


def test_window_update_wrong_batch_size():
    model = _trained_model([1, 2, 3, 4], h=2)
    with pytest.raises(WrongBatchSize):
        model.window_update([5])


def test_window_update_before_training_rejected():
    model = ExecTimeModel(capacity=4, pi=0.9, h=2)
    with pytest.raises(sto.UntrainedModel):
        model.window_update([1, 2])


def test_window_tracking_converges_with_fixed_gamma():
    rng = np.random.default_rng(42)
    ms = 1_000_000
    model = ExecTimeModel(capacity=1000, pi=0.95, h=100)
    for v in rng.normal(1.0 * ms, 0.05 * ms, 1000):
        model.observe(int(v))
    gamma0 = model.gamma
    for _ in range(10):
        batch = [int(v) for v in rng.normal(2.0 * ms, 0.05 * ms, 100)]
        model.window_update(batch)
        # full-recomputation oracle over the visible buffer
        vals = model.buffer.values()
        assert model.mu == pytest.approx(mean_fsum(vals), rel=1e-12)
        assert model.sd == pytest.approx(std_two_pass(vals), rel=1e-9)
        assert model.tau == model.mu + gamma0 * model.sd
    assert model.gamma == gamma0
    assert abs(model.mu - 2.0 * ms) / (2.0 * ms) < 0.05


def test_observe_accumulates_pending_and_auto_updates():
    model = _trained_model([10, 20, 30, 40], pi=0.5, h=2)
    model.observe(50)
    assert model.pending_count == 1
    model.observe(60)
    assert model.pending_count == 0  # window applied
    assert model.values_snapshot() == [50, 60, 30, 40]


def test_snapshot_schema():
    model = _trained_model([10, 20, 30, 40], pi=0.5, h=2)
    snap = model.snapshot("blk")
    assert set(snap) == {"block", "n", "pi", "gamma", "mu_ns", "s_ns", "tau_ns", "h"}
    assert snap["block"] == "blk"
    assert snap["n"] == 4
    assert snap["tau_ns"] == pytest.approx(snap["mu_ns"] + snap["gamma"] * snap["s_ns"])
