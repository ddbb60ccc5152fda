# -*- coding: utf-8 -*-
"""analytic_model 单元测试"""

import math

import numpy as np
import pytest
from scipy import integrate

from analytic_model import (concentration_trace, dispersion_coefficient, normal_concentration,
                            peak_times, wrapped_concentration)
from framework import ChannelDomainError, ChannelParams, DispersionInputs, TimeGrid

L_EFF = 1e-3
V_EFF = 50e-6
R0 = 100e-6
D_SLOW = dispersion_coefficient(DispersionInputs(1.25e-9, R0, V_EFF))
D_FAST = dispersion_coefficient(DispersionInputs(5e-9, R0, V_EFF))


def ring(d_eff=D_SLOW, d_rx=0.39e-3, v_eff=V_EFF, l_eff=L_EFF):
    return ChannelParams(d_eff=d_eff, v_eff=v_eff, l_eff=l_eff, d_rx=d_rx)


def local_maxima(values, times):
    inner = (values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:])
    return times[np.nonzero(inner)[0] + 1]


# ==============================================================================
# 直管解
# ==============================================================================

def test_normal_peak_at_mean():
    q = ring()
    t = 3.0
    assert normal_concentration(q, q.v_eff * t, t) == pytest.approx(
        1.0 / math.sqrt(4.0 * math.pi * q.d_eff * t), rel=1e-14)


def test_normal_matches_direct_formula():
    q = ring()
    x, t = 0.39e-3, 7.16
    var = 2.0 * q.d_eff * t
    expected = math.exp(-(x - q.v_eff * t) ** 2 / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    assert normal_concentration(q, x, t) == pytest.approx(expected, rel=1e-12)


def test_normal_symmetric_about_mean():
    q = ring()
    t, delta = 4.0, 1e-4
    mu = q.v_eff * t
    assert normal_concentration(q, mu + delta, t) == pytest.approx(
        normal_concentration(q, mu - delta, t), rel=1e-13)


def test_normal_integrates_to_one():
    q = ring()
    t = 2.0
    mu, sd = q.v_eff * t, math.sqrt(2.0 * q.d_eff * t)
    mass, _ = integrate.quad(lambda x: normal_concentration(q, x, t), mu - 40 * sd, mu + 40 * sd,
                             points=[mu], limit=200)
    assert mass == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_normal_rejects_nonpositive_time(t):
    with pytest.raises(ChannelDomainError):
        normal_concentration(ring(), 0.1e-3, t)


# ==============================================================================
# 环形解
# ==============================================================================

@pytest.mark.parametrize("d_eff", [D_SLOW, D_FAST])
@pytest.mark.parametrize("t", [0.1, 1.0, 10.0, 100.0])
def test_wrapped_normalized_over_loop(d_eff, t):
    q = ring(d_eff=d_eff)
    mu = (q.v_eff * t) % q.l_eff
    points = [mu] if 1e-3 * q.l_eff < mu < 0.999 * q.l_eff else None
    mass, _ = integrate.quad(lambda x: wrapped_concentration(q, x, t), 0.0, q.l_eff,
                             points=points, limit=500, epsabs=1e-13, epsrel=1e-12)
    assert mass == pytest.approx(1.0, abs=1e-9)


def test_wrapped_tends_to_uniform():
    q = ring()
    x = np.linspace(0.0, q.l_eff, 11)
    values = wrapped_concentration(q, x, 1000.0)
    np.testing.assert_allclose(values, 1.0 / q.l_eff, rtol=1e-6)


def test_wrapped_matches_image_sum_when_narrow():
    q = ring()
    t = 1.0
    sigma_bar = q.lam * math.sqrt(2.0 * q.d_eff * t)
    assert sigma_bar <= 0.5
    x = np.linspace(0.0, q.l_eff, 41)
    images = sum(normal_concentration(q, x + k * q.l_eff, t) for k in (-1, 0, 1))
    np.testing.assert_allclose(wrapped_concentration(q, x, t), images, rtol=1e-10, atol=1e-12)


def test_wrapped_periodic_endpoints_identical():
    q = ring(d_eff=D_FAST)
    for t in (0.5, 3.0, 17.0):
        assert wrapped_concentration(q, 0.0, t) == wrapped_concentration(q, q.l_eff, t)


def test_wrapped_nonnegative():
    q = ring(d_eff=D_FAST)
    x, t = np.meshgrid(np.linspace(0, q.l_eff, 50), np.geomspace(1e-3, 500, 60))
    assert np.all(wrapped_concentration(q, x, t) >= 0.0)


def test_wrapped_pde_residual_is_second_order():
    q = ring()
    x0, t0 = 0.5e-3, 3.0

    def residual(hx, ht):
        p = lambda x, t: wrapped_concentration(q, x, t)
        p_t = (p(x0, t0 + ht) - p(x0, t0 - ht)) / (2 * ht)
        p_x = (p(x0 + hx, t0) - p(x0 - hx, t0)) / (2 * hx)
        p_xx = (p(x0 + hx, t0) - 2 * p(x0, t0) + p(x0 - hx, t0)) / hx ** 2
        return abs(p_t - q.d_eff * p_xx + q.v_eff * p_x)

    coarse = residual(2e-5, 0.02)
    fine = residual(1e-5, 0.01)
    assert 3.5 < coarse / fine < 4.5


@pytest.mark.parametrize("x", [-1e-6, L_EFF * 1.001])
def test_wrapped_rejects_positions_outside_loop(x):
    with pytest.raises(ChannelDomainError):
        wrapped_concentration(ring(), x, 1.0)


def test_wrapped_rejects_bad_time_and_tolerance():
    with pytest.raises(ChannelDomainError):
        wrapped_concentration(ring(), 0.1e-3, 0.0)
    with pytest.raises(ChannelDomainError):
        wrapped_concentration(ring(), 0.1e-3, 1.0, tol=0.0)


def test_wrapped_scalar_in_scalar_out():
    assert isinstance(wrapped_concentration(ring(), 0.2e-3, 2.0), float)


# ==============================================================================
# 峰值时间
# ==============================================================================

def test_peak_time_pure_drift_limit():
    q = ring(d_eff=D_SLOW * 1e-6)
    assert peak_times(q, 0)[0] == pytest.approx(q.d_rx / q.v_eff, rel=1e-3)


def test_peak_time_matches_numeric_argmax():
    q = ring()
    assert peak_times(q, 0)[0] == pytest.approx(7.16, abs=0.01)
    grid = TimeGrid.from_duration(1e-3, 12.0, t_start=1e-3)
    values = wrapped_concentration(q, q.d_rx, grid.times)
    t_numeric = grid.times[int(np.argmax(values))]
    assert abs(t_numeric - peak_times(q, 0)[0]) <= grid.dt


def test_peak_times_match_separated_local_maxima():
    q = ring(d_eff=1e-10)
    grid = TimeGrid.from_duration(1e-3, 55.0, t_start=0.5)
    values = wrapped_concentration(q, q.d_rx, grid.times)
    maxima = local_maxima(values, grid.times)
    predicted = peak_times(q, 2)
    assert len(maxima) >= 3
    for t_pred, t_num in zip(predicted, maxima[:3]):
        assert abs(t_pred - t_num) <= grid.dt


def test_peak_times_strictly_increasing():
    times = peak_times(ring(d_eff=D_FAST, d_rx=0.84e-3), 4)
    assert all(b > a for a, b in zip(times, times[1:]))


def test_peak_times_errors():
    with pytest.raises(ChannelDomainError):
        peak_times(ring(v_eff=0.0), 1)
    with pytest.raises(ChannelDomainError):
        peak_times(ring(), -1)


# ==============================================================================
# Aris-Taylor
# ==============================================================================

def test_dispersion_coefficient_values():
    assert D_SLOW == pytest.approx(1.25e-9 * (1 + 16 / 48), rel=1e-12)
    assert D_SLOW == pytest.approx(1.6667e-9, rel=1e-4)
    assert D_FAST == pytest.approx(5.104e-9, rel=1e-3)


def test_dispersion_vanishing_peclet_limit():
    d = dispersion_coefficient(DispersionInputs(1e-9, 1e-9, 1e-9))
    assert d == pytest.approx(1e-9, rel=1e-12)


@pytest.mark.parametrize("args", [(0.0, R0, V_EFF), (1e-9, -R0, V_EFF), (1e-9, R0, -1.0)])
def test_dispersion_rejects_nonpositive_inputs(args):
    with pytest.raises(ChannelDomainError):
        DispersionInputs(*args)


# ==============================================================================
# 参数规范化与序列
# ==============================================================================

def test_negative_velocity_mirrors_receiver():
    q = ChannelParams(d_eff=D_SLOW, v_eff=-V_EFF, l_eff=L_EFF, d_rx=0.39e-3)
    assert q.v_eff == V_EFF
    assert q.d_rx == pytest.approx(0.61e-3, rel=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(d_eff=0.0, v_eff=V_EFF, l_eff=L_EFF, d_rx=0.0),
    dict(d_eff=D_SLOW, v_eff=V_EFF, l_eff=0.0, d_rx=0.0),
    dict(d_eff=D_SLOW, v_eff=V_EFF, l_eff=L_EFF, d_rx=L_EFF),
    dict(d_eff=D_SLOW, v_eff=math.nan, l_eff=L_EFF, d_rx=0.0),
])
def test_channel_params_validation(kwargs):
    with pytest.raises(ChannelDomainError):
        ChannelParams(**kwargs)


def test_concentration_trace_carries_source():
    grid = TimeGrid.from_duration(0.1, 5.0, t_start=0.1)
    trace = concentration_trace(ring(), 0.39e-3, grid, model='normal')
    assert trace.extra['source'] == 'analytic-normal'
    assert len(trace) == grid.n
    assert trace.t_start == pytest.approx(0.1)
    with pytest.raises(ChannelDomainError):
        concentration_trace(ring(), 0.39e-3, grid, model='bessel')
