# -*- coding: utf-8 -*-
"""
analytic_model.py
环形信道解析模型 (Closed-form Channel Responses)

- normal_concentration:   无限长直管中的一维对流扩散高斯响应 p_n(x, t)
- wrapped_concentration:  周长 L_eff 的环形信道响应 p_wn(x, t)，即高斯像源求和
- peak_times:             第 k 圈峰值到达时间 t_max(k)
- dispersion_coefficient: Aris-Taylor 有效扩散系数

【更新说明】
环绕求和在 x 对 L_eff 取模、并把 (x_bar - mu_bar) 归约到 [0, 2pi) 之后计算，
因此 p_wn(0, t) 与 p_wn(L_eff, t) 逐位相等。sigma_bar 足够大时直接返回 1/L_eff。
"""

import logging
import math
from typing import List, Union

import numpy as np

from framework import (CONSTANTS, ChannelDomainError, ChannelParams,
                       DispersionInputs, IntensityTrace, TimeGrid, TraceKind)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

TWO_PI = 2.0 * math.pi

# 对偶 Fourier 级数的全部谐波 exp(-p^2 sigma_bar^2 / 2) 在 float64 中下溢
UNIFORM_SIGMA_BAR = 40.0


def _prepare(x, t):
    x_arr = np.asarray(x, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    scalar = x_arr.ndim == 0 and t_arr.ndim == 0
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr <= 0):
        raise ChannelDomainError("concentration is undefined for t <= 0")
    if not np.all(np.isfinite(x_arr)):
        raise ChannelDomainError("position must be finite")
    x_b, t_b = np.broadcast_arrays(x_arr, t_arr)
    return x_b, t_b, scalar


def _finish(values: np.ndarray, scalar: bool) -> ArrayLike:
    return float(values) if scalar else values


# ==============================================================================
# 1. 直管高斯响应
# ==============================================================================

def normal_concentration(q: ChannelParams, x: ArrayLike, t: ArrayLike) -> ArrayLike:
    """p_n(x, t) = N(x; v_eff t, 2 D_eff t)，单位 1/m"""
    x_b, t_b, scalar = _prepare(x, t)
    var = 2.0 * q.d_eff * t_b
    values = np.exp(-(x_b - q.v_eff * t_b) ** 2 / (2.0 * var)) / np.sqrt(TWO_PI * var)
    return _finish(values, scalar)


# ==============================================================================
# 2. 环形信道响应 (像源求和)
# ==============================================================================

def wrapped_concentration(q: ChannelParams, x: ArrayLike, t: ArrayLike,
                          tol: float = CONSTANTS['WRAP_TOL']) -> ArrayLike:
    """
    p_wn(x, t) = sqrt(2 pi) / (L sigma_bar) * sum_k exp(-(x_bar - mu_bar + 2 pi k)^2 / (2 sigma_bar^2))
    求和窗口 [-K, K] 从 ceil(4 sigma_bar / 2pi) + 2 起倍增，直到最外侧一对项
    小于 tol 乘以当前部分和。
    """
    if not (tol > 0):
        raise ChannelDomainError(f"tol must be > 0, got {tol}")
    x_b, t_b, scalar = _prepare(x, t)
    if np.any(x_b < 0) or np.any(x_b > q.l_eff):
        raise ChannelDomainError(f"position must lie in [0, {q.l_eff}]")

    lam = q.lam
    sig_bar = lam * np.sqrt(2.0 * q.d_eff * t_b)
    x_bar = lam * np.mod(x_b, q.l_eff)
    mu_bar = lam * q.v_eff * t_b
    delta = np.mod(x_bar - mu_bar, TWO_PI)

    flat_delta = delta.reshape(-1)
    flat_sig = sig_bar.reshape(-1)
    sums = np.zeros_like(flat_delta)

    uniform = flat_sig >= UNIFORM_SIGMA_BAR
    active = ~uniform
    if np.any(active):
        d_act = flat_delta[active]
        s_act = flat_sig[active]
        k_max = int(math.ceil(4.0 * float(s_act.max()) / TWO_PI)) + 2
        while True:
            ks = np.arange(-k_max, k_max + 1, dtype=np.float64)
            terms = np.exp(-(d_act[:, None] + TWO_PI * ks[None, :]) ** 2
                           / (2.0 * s_act[:, None] ** 2))
            partial = terms.sum(axis=1)
            outer = terms[:, 0] + terms[:, -1]
            if np.all(outer <= tol * partial):
                break
            k_max *= 2
        logger.debug("wrapped sum used %d image pairs for %d points", k_max, d_act.size)
        sums[active] = partial

    values = np.empty_like(flat_delta)
    values[active] = math.sqrt(TWO_PI) / (q.l_eff * flat_sig[active]) * sums[active]
    values[uniform] = 1.0 / q.l_eff
    return _finish(values.reshape(delta.shape), scalar)


# ==============================================================================
# 3. 峰值时间与色散
# ==============================================================================

def peak_times(q: ChannelParams, k_max: int) -> List[float]:
    """
    第 k 圈峰值时间 (k = 0..k_max)
    t_max = (D/v^2)(-1 + sqrt(1 + v^2 s^2 / D^2))，s = d_rx + k L_eff，
    以等价形式 s^2 / (D + sqrt(D^2 + v^2 s^2)) 计算以避免相消。
    """
    if q.v_eff <= 0:
        raise ChannelDomainError("peak times need v_eff > 0")
    if int(k_max) != k_max or k_max < 0:
        raise ChannelDomainError(f"k_max must be a non-negative integer, got {k_max}")
    d, v = q.d_eff, q.v_eff
    out = []
    for k in range(int(k_max) + 1):
        s = q.d_rx + k * q.l_eff
        out.append(s * s / (d + math.sqrt(d * d + v * v * s * s)))
    return out


def dispersion_coefficient(inputs: DispersionInputs) -> float:
    """Aris-Taylor: D_eff = D (1 + (r0 v / D)^2 / 48)"""
    pe = inputs.r0 * inputs.v_eff / inputs.d_molecular
    return inputs.d_molecular * (1.0 + pe * pe / 48.0)


# ==============================================================================
# 4. 序列化辅助
# ==============================================================================

def concentration_trace(q: ChannelParams, x: float, grid: TimeGrid,
                        model: str = 'wrapped',
                        tol: float = CONSTANTS['WRAP_TOL']) -> IntensityTrace:
    """在网格上采样解析浓度 (网格必须从 t > 0 开始)"""
    if model == 'wrapped':
        values = wrapped_concentration(q, x, grid.times, tol=tol)
    elif model == 'normal':
        values = normal_concentration(q, x, grid.times)
    else:
        raise ChannelDomainError(f"unknown analytic model {model!r}")
    return IntensityTrace(
        dt=grid.dt, samples=values, kind=TraceKind.RAW, t_start=grid.t_start,
        extra={'source': f'analytic-{model}', 'x': repr(float(x)),
               'd_eff': repr(q.d_eff), 'v_eff': repr(q.v_eff),
               'l_eff': repr(q.l_eff)},
    )
