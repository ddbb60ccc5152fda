# -*- coding: utf-8 -*-
"""signal_model 单元测试"""

import math

import numpy as np
import pytest
from scipy import integrate, signal

from analytic_model import wrapped_concentration
from framework import (AccumulationParams, ChannelDomainError, ChannelParams, GridMismatchError,
                       InjectionParams, IntensityTrace, MixtureParams, NormalizationError,
                       TimeGrid, TraceKind)
from signal_model import (cumulative_injection, cumulative_integral, derivative, detect_t_acc,
                          injection_profile, injection_trace, mean_intensity, model_acc, model_dist,
                          model_dist_single, normalize_steady, split_phases, steady_state_gap,
                          stitch_phases, subtract_reference)

Q_MEAN = ChannelParams(d_eff=5e-6, v_eff=3.5e-3, l_eff=3.4e-2, d_rx=1.7e-2)
INJ = InjectionParams(t_w=3.0, t_0=1.0)
EGG_1 = MixtureParams((
    (0.88, ChannelParams(d_eff=7.6e-6, v_eff=2.9e-3, l_eff=2.6e-2, d_rx=0.64e-2)),
    (0.12, ChannelParams(d_eff=9.7e-7, v_eff=0.4e-3, l_eff=1.3e-2, d_rx=1.0e-2)),
))


def trace_of(values, dt=0.1, **kwargs):
    return IntensityTrace(dt=dt, samples=np.asarray(values, dtype=float), **kwargs)


# ==============================================================================
# 注射模型
# ==============================================================================

def test_injection_has_unit_mass():
    mass, _ = integrate.quad(lambda t: injection_profile(INJ, t), INJ.t_0, INJ.t_0 + INJ.t_w)
    assert mass == pytest.approx(1.0, abs=1e-9)


def test_injection_peak_and_support():
    assert injection_profile(INJ, INJ.t_0 + INJ.t_w / 2) == pytest.approx(2.0 / INJ.t_w)
    for t in (0.0, INJ.t_0, INJ.t_0 + INJ.t_w, 10.0):
        assert injection_profile(INJ, t) == 0.0


def test_cumulative_injection_matches_quadrature():
    for t in (0.5, 1.7, 2.5, 3.9, 6.0):
        mass, _ = integrate.quad(lambda s: injection_profile(INJ, s), 0.0, t,
                                 points=[INJ.t_0, INJ.t_0 + INJ.t_w])
        assert cumulative_injection(INJ, t) == pytest.approx(mass, abs=1e-9)
    assert cumulative_injection(INJ, 0.0) == 0.0
    assert cumulative_injection(INJ, 100.0) == 1.0


def test_injection_trace_kind():
    trace = injection_trace(INJ, TimeGrid.from_duration(0.04, 8.0))
    assert trace.kind is TraceKind.INJ
    assert trace.samples.max() == pytest.approx(2.0 / 3.0, rel=1e-3)


# ==============================================================================
# 色散阶段
# ==============================================================================

def test_single_component_mixture_is_bit_identical():
    grid = TimeGrid.from_duration(0.1, 60.0)
    a = model_dist(MixtureParams.single(Q_MEAN), INJ, grid)
    b = model_dist_single(Q_MEAN, INJ, grid)
    assert np.array_equal(a.samples, b.samples)


def test_mixture_is_convex_combination_before_normalization():
    grid = TimeGrid.from_duration(0.1, 80.0)
    mixed = model_dist(EGG_1, INJ, grid, normalize=False).samples
    parts = sum(a * model_dist_single(q, INJ, grid, normalize=False).samples
                for a, q in EGG_1.components)
    np.testing.assert_allclose(mixed, parts, rtol=1e-10, atol=1e-12)


def test_steady_state_reached_after_five_loop_times():
    grid = TimeGrid.from_duration(0.1, 150.0)
    trace = model_dist_single(Q_MEAN, INJ, grid)
    late = trace.times >= 5 * Q_MEAN.loop_time + INJ.t_0 + INJ.t_w
    np.testing.assert_allclose(trace.samples[late], 1.0, atol=1e-3)


def test_near_delta_injection_reproduces_kernel():
    dt = 0.1
    grid = TimeGrid.from_duration(dt, 60.0)
    pulse = InjectionParams(t_w=dt, t_0=dt / 2)
    times = grid.times.copy()
    times[0] = dt / 2
    kernel = wrapped_concentration(Q_MEAN, Q_MEAN.d_rx, times)
    shifted = np.concatenate([[0.0], kernel[:-1]])
    expected = shifted / shifted[-int(math.ceil(0.2 * grid.n - 1e-9)):].mean()
    np.testing.assert_allclose(model_dist_single(Q_MEAN, pulse, grid).samples, expected, rtol=1e-12)


def test_egg_one_mixture_has_no_secondary_peak():
    trace = model_dist(EGG_1, INJ, TimeGrid.from_duration(0.1, 80.0))
    peaks, _ = signal.find_peaks(trace.samples, prominence=0.05)
    assert len(peaks) <= 1
    assert trace.samples[-1] == pytest.approx(1.0, abs=0.02)


def test_grid_offset_slices_full_model():
    full = model_dist_single(Q_MEAN, INJ, TimeGrid(dt=0.1, n=600), normalize=False)
    late = model_dist_single(Q_MEAN, INJ, TimeGrid(dt=0.1, n=500, t_start=10.0), normalize=False)
    np.testing.assert_array_equal(late.samples, full.samples[100:])
    assert late.t_start == pytest.approx(10.0)


def test_model_dist_rejects_unaligned_grid():
    with pytest.raises(ChannelDomainError):
        model_dist_single(Q_MEAN, INJ, TimeGrid(dt=0.1, n=50, t_start=0.05))


# ==============================================================================
# 累积阶段
# ==============================================================================

def test_model_acc_examples():
    p = AccumulationParams(a=0.6, b=0.01)
    grid = TimeGrid(dt=1.0, n=1001)
    trace = model_acc(p, grid)
    assert trace.samples[0] == pytest.approx(0.4)
    assert np.all(np.diff(trace.samples) > 0)
    assert np.all(trace.samples < 1.0)
    t_half = math.log(2) / p.b
    half = model_acc(p, TimeGrid(dt=t_half, n=2)).samples[1]
    assert half == pytest.approx(1.0 - p.a / 2, rel=1e-12)
    assert model_acc(p, TimeGrid(dt=1e4, n=2)).samples[1] == pytest.approx(1.0, abs=1e-12)


def test_stitch_phases_concatenates_models():
    dist = model_dist_single(Q_MEAN, INJ, TimeGrid.from_duration(0.1, 60.0))
    acc = model_acc(AccumulationParams(a=0.1, b=0.05), TimeGrid(dt=0.1, n=200))
    full = stitch_phases(dist, acc)
    assert len(full) == len(dist) + len(acc)
    assert full.kind is TraceKind.RAW
    with pytest.raises(GridMismatchError):
        stitch_phases(dist, model_acc(AccumulationParams(a=0.1, b=0.05), TimeGrid(dt=1.0, n=5)))


# ==============================================================================
# 预处理
# ==============================================================================

def test_derivative_of_constant():
    d = derivative(trace_of([2.0] * 5, dt=0.5)).samples
    np.testing.assert_array_equal(d, [4.0, 0.0, 0.0, 0.0, 0.0])


def test_derivative_of_ramp():
    dt, k = 0.1, 3.0
    ramp = k * np.arange(50) * dt
    d = derivative(trace_of(ramp, dt=dt)).samples
    np.testing.assert_allclose(d[1:], k, rtol=1e-10)


@pytest.mark.parametrize("dt", [0.25, 0.0625, 2.0])
def test_derivative_inverts_cumulative_integral_exactly(dt):
    # 整数样本与 2 的幂次步长: 累加、缩放与差分全部无舍入
    rng = np.random.default_rng(5)
    trace = trace_of(rng.integers(-1000, 1000, size=300).astype(float), dt=dt)
    assert np.array_equal(derivative(cumulative_integral(trace)).samples, trace.samples)


def test_derivative_inverts_cumulative_integral_within_rounding():
    rng = np.random.default_rng(5)
    samples = rng.normal(size=300)
    trace = trace_of(samples, dt=0.04)
    recovered = derivative(cumulative_integral(trace)).samples
    # 误差只来自部分和的舍入: 每个样本不超过几个 ulp(部分和) / dt
    partial = np.abs(np.cumsum(samples)) * 0.04
    bound = 4 * np.spacing(np.maximum(partial, np.roll(partial, 1))) / 0.04 + 4 * np.spacing(np.abs(samples))
    assert np.all(np.abs(recovered - samples) <= bound)


def test_derivative_needs_two_samples():
    with pytest.raises(ChannelDomainError):
        derivative(trace_of([1.0]))


def test_normalize_steady_idempotent_and_scale_invariant():
    trace = model_dist_single(Q_MEAN, INJ, TimeGrid.from_duration(0.1, 60.0), normalize=False)
    once = normalize_steady(trace)
    np.testing.assert_allclose(normalize_steady(once).samples, once.samples, rtol=1e-12)
    scaled = trace.with_samples(trace.samples * 7.0)
    np.testing.assert_allclose(normalize_steady(scaled).samples, once.samples, rtol=1e-12)


def test_normalize_steady_errors():
    with pytest.raises(NormalizationError):
        normalize_steady(trace_of([1.0, 2.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ChannelDomainError):
        normalize_steady(trace_of([1.0, 2.0, 3.0]), tail_fraction=0.7)


def test_subtract_reference_examples():
    trace = trace_of([1.0, 1.2])
    np.testing.assert_allclose(subtract_reference(trace, trace_of([0.3, 0.3])).samples, [0.7, 0.9])
    np.testing.assert_array_equal(subtract_reference(trace, trace).samples, [0.0, 0.0])
    np.testing.assert_array_equal(subtract_reference(trace, trace_of([0.0, 0.0])).samples,
                                  trace.samples)
    np.testing.assert_allclose(subtract_reference(trace, trace_of([2.0, 0.2])).samples, [0.0, 1.0])
    with pytest.raises(GridMismatchError):
        subtract_reference(trace, trace_of([0.1, 0.1, 0.1]))


def test_split_phases_partition_and_tie_rule():
    trace = trace_of(np.arange(11, dtype=float), dt=1.0)
    dist, acc = split_phases(trace, 9.0)
    assert len(acc) == 1 and acc.kind is TraceKind.ACC
    assert dist.kind is TraceKind.DIST
    np.testing.assert_array_equal(np.concatenate([dist.samples, acc.samples]), trace.samples)

    dist, acc = split_phases(trace, 4.5)
    assert dist.samples[-1] == 4.0
    assert acc.samples[0] == 5.0
    assert acc.t_start == 0.0

    dist, _ = split_phases(trace, 4.0)
    assert dist.samples[-1] == 4.0


@pytest.mark.parametrize("t_acc", [0.0, 10.0, -1.0, 12.0])
def test_split_phases_rejects_out_of_range(t_acc):
    with pytest.raises(ChannelDomainError):
        split_phases(trace_of(np.arange(11, dtype=float), dt=1.0), t_acc)


def test_mean_intensity_averages_rois():
    a = trace_of([0.0, 1.0, 2.0], roi='1')
    b = trace_of([2.0, 3.0, 4.0], roi='2')
    mean = mean_intensity([a, b])
    np.testing.assert_allclose(mean.samples, [1.0, 2.0, 3.0])
    assert mean.roi is None
    with pytest.raises(GridMismatchError):
        mean_intensity([a, trace_of([1.0, 2.0])])
    with pytest.raises(ChannelDomainError):
        mean_intensity([])


def test_detect_t_acc_finds_second_rise():
    t = np.arange(0.0, 120.0, 0.1)
    values = np.clip((t - 1.0) / 5.0, 0.0, 1.0)
    values = values + np.where(t > 60.0, 0.5 * (1.0 - np.exp(-(t - 60.0) / 20.0)), 0.0)
    t_acc = detect_t_acc(trace_of(values), window=2.0, slope_threshold=0.005)
    assert t_acc is not None
    assert abs(t_acc - 60.0) <= 2.0


def test_detect_t_acc_returns_none_without_accumulation():
    t = np.arange(0.0, 120.0, 0.1)
    values = np.clip((t - 1.0) / 5.0, 0.0, 1.0)
    assert detect_t_acc(trace_of(values), slope_threshold=0.005) is None


def test_steady_state_gap():
    a = trace_of([0.0] * 8 + [1.0, 1.0])
    b = trace_of([0.0] * 8 + [0.8, 0.8])
    assert steady_state_gap(a, b) == pytest.approx(0.2)
    assert steady_state_gap(a, a) == 0.0
