# -*- coding: utf-8 -*-
"""
signal_model.py
荧光强度信号模型 (Intensity Signal Models)

- 升余弦注射曲线 I_inj(t) 及其累积形式
- 色散阶段: 注射曲线与环形信道响应的离散卷积 (可为 n 环混合)，按稳态尾部归一化
- 累积阶段: I_acc(t) = 1 - a exp(-b t)
- 预处理: 背景扣除、后向差分求导、按 t_acc 切分、多 ROI 平均
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from analytic_model import wrapped_concentration
from framework import (CONSTANTS, AccumulationParams, ChannelDomainError,
                       ChannelParams, GridMismatchError, InjectionParams,
                       IntensityTrace, MixtureParams, NormalizationError,
                       TimeGrid, TraceKind)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


# ==============================================================================
# 1. 注射模型
# ==============================================================================

def injection_profile(p: InjectionParams, t):
    """I_inj(t) = (1/t_w)(1 - cos(2 pi (t - t_0) / t_w))，仅在 t_0 < t < t_0 + t_w 内非零"""
    t_arr = np.asarray(t, dtype=np.float64)
    tau = t_arr - p.t_0
    inside = (tau > 0.0) & (tau < p.t_w)
    values = np.where(inside, (1.0 - np.cos(TWO_PI * tau / p.t_w)) / p.t_w, 0.0)
    return float(values) if t_arr.ndim == 0 else values


def cumulative_injection(p: InjectionParams, t):
    """累计注射量 (t - t_0)/t_w - sin(2 pi (t - t_0)/t_w) / (2 pi)，截断到 [0, 1]"""
    t_arr = np.asarray(t, dtype=np.float64)
    tau = np.clip(t_arr - p.t_0, 0.0, p.t_w)
    values = tau / p.t_w - np.sin(TWO_PI * tau / p.t_w) / TWO_PI
    values = np.where(t_arr - p.t_0 >= p.t_w, 1.0, values)
    return float(values) if t_arr.ndim == 0 else values


def injection_trace(p: InjectionParams, grid: TimeGrid) -> IntensityTrace:
    return IntensityTrace(dt=grid.dt, samples=injection_profile(p, grid.times),
                          kind=TraceKind.INJ, t_start=grid.t_start)


# ==============================================================================
# 2. 色散阶段模型
# ==============================================================================

def normalize_steady(trace: IntensityTrace,
                     tail_fraction: float = CONSTANTS['STEADY_TAIL_FRACTION']) -> IntensityTrace:
    """除以末尾 tail_fraction 样本的均值，使稳态约为 1"""
    values = _normalize_array(trace.samples, tail_fraction)
    return trace.with_samples(values)


def _tail_count(n: int, tail_fraction: float) -> int:
    if not (0.0 < tail_fraction <= 0.5):
        raise ChannelDomainError(f"tail_fraction must lie in (0, 0.5], got {tail_fraction}")
    return max(1, int(math.ceil(tail_fraction * n - 1e-9)))


def _normalize_array(values: np.ndarray, tail_fraction: float) -> np.ndarray:
    count = _tail_count(values.size, tail_fraction)
    tail_mean = float(np.mean(values[-count:]))
    if not math.isfinite(tail_mean) or tail_mean <= 0.0:
        raise NormalizationError(f"steady-state tail mean is {tail_mean}; cannot normalize")
    return values / tail_mean


def _model_grid(grid: TimeGrid):
    """卷积在从 t = 0 开始的网格上计算，返回 (全网格, 截取偏移)"""
    offset = int(round(grid.t_start / grid.dt))
    if abs(offset * grid.dt - grid.t_start) > 1e-9 * max(1.0, grid.t_start):
        raise ChannelDomainError("grid t_start must be an integer multiple of dt")
    return TimeGrid(dt=grid.dt, n=grid.n + offset), offset


def _kernel(q: ChannelParams, times: np.ndarray, dt: float) -> np.ndarray:
    t = times.copy()
    t[t <= 0.0] = dt / 2.0
    return wrapped_concentration(q, q.d_rx, t)


def _convolve(inj: InjectionParams, kernel: np.ndarray, times: np.ndarray, dt: float) -> np.ndarray:
    source = injection_profile(inj, times)
    return np.convolve(source, kernel)[:times.size] * dt


def model_dist_single(q: ChannelParams, inj: InjectionParams, grid: TimeGrid,
                      normalize: bool = True,
                      tail_fraction: float = CONSTANTS['STEADY_TAIL_FRACTION']) -> IntensityTrace:
    """单环色散模型: (I_inj * p_wn(d_rx, .))(t_i)，可选稳态归一化"""
    full, offset = _model_grid(grid)
    times = full.times
    values = _convolve(inj, _kernel(q, times, grid.dt), times, grid.dt)[offset:]
    if normalize:
        values = _normalize_array(values, tail_fraction)
    return IntensityTrace(dt=grid.dt, samples=values, kind=TraceKind.DIST, t_start=grid.t_start)


def model_dist(p: MixtureParams, inj: InjectionParams, grid: TimeGrid,
               normalize: bool = True,
               tail_fraction: float = CONSTANTS['STEADY_TAIL_FRACTION']) -> IntensityTrace:
    """
    n 环混合色散模型
    核函数按权重线性叠加后只做一次卷积；n = 1 时与 model_dist_single 逐位一致
    """
    full, offset = _model_grid(grid)
    times = full.times
    kernel = None
    for weight, q in p.components:
        part = weight * _kernel(q, times, grid.dt)
        kernel = part if kernel is None else kernel + part
    values = _convolve(inj, kernel, times, grid.dt)[offset:]
    if normalize:
        values = _normalize_array(values, tail_fraction)
    return IntensityTrace(dt=grid.dt, samples=values, kind=TraceKind.DIST, t_start=grid.t_start)


# ==============================================================================
# 3. 累积阶段模型
# ==============================================================================

def model_acc(p: AccumulationParams, grid: TimeGrid) -> IntensityTrace:
    values = 1.0 - p.a * np.exp(-p.b * grid.times)
    return IntensityTrace(dt=grid.dt, samples=values, kind=TraceKind.ACC, t_start=grid.t_start)


def stitch_phases(dist: IntensityTrace, acc: IntensityTrace) -> IntensityTrace:
    """把色散阶段与累积阶段的模型首尾拼接为完整序列"""
    if dist.dt != acc.dt:
        raise GridMismatchError(f"cannot stitch traces with dt {dist.dt} and {acc.dt}")
    values = np.concatenate([dist.samples, acc.samples])
    return dist.with_samples(values, kind=TraceKind.RAW)


# ==============================================================================
# 4. 预处理
# ==============================================================================

def derivative(trace: IntensityTrace) -> IntensityTrace:
    """后向差分 (I(t) - I(t - dt)) / dt，约定 I(-dt) = 0"""
    if len(trace) < 2:
        raise ChannelDomainError("derivative needs at least two samples")
    values = np.diff(trace.samples, prepend=0.0) / trace.dt
    return trace.with_samples(values)


def cumulative_integral(trace: IntensityTrace) -> IntensityTrace:
    """derivative 的离散逆: 累加和乘以 dt"""
    return trace.with_samples(np.cumsum(trace.samples) * trace.dt)


def subtract_reference(trace: IntensityTrace, reference: IntensityTrace) -> IntensityTrace:
    """背景扣除，负值截断为 0"""
    if not trace.same_grid(reference):
        raise GridMismatchError(
            f"trace grid (dt={trace.dt}, n={len(trace)}) differs from reference "
            f"(dt={reference.dt}, n={len(reference)})")
    return trace.with_samples(np.maximum(trace.samples - reference.samples, 0.0))


def split_phases(trace: IntensityTrace, t_acc: float):
    """
    在 t_acc 处切分: 色散段含 t_i <= t_acc 的样本，累积段为其余样本并重新以 t = 0 起算
    """
    t_first = trace.t_start
    t_last = trace.t_start + trace.duration
    if not (t_first < t_acc < t_last):
        raise ChannelDomainError(f"t_acc={t_acc} outside the open interval ({t_first}, {t_last})")
    cut = int(math.floor((t_acc - t_first) / trace.dt + 1e-9)) + 1
    dist = trace.with_samples(trace.samples[:cut], kind=TraceKind.DIST)
    acc = trace.with_samples(trace.samples[cut:], kind=TraceKind.ACC, t_start=0.0)
    return dist, acc


def mean_intensity(traces: Sequence[IntensityTrace]) -> IntensityTrace:
    """多个 ROI 序列逐点平均 (网格必须一致)"""
    if len(traces) == 0:
        raise ChannelDomainError("mean_intensity needs at least one trace")
    first = traces[0]
    for other in traces[1:]:
        if not first.same_grid(other):
            raise GridMismatchError("all traces must share the same time grid")
    stacked = np.vstack([tr.samples for tr in traces])
    return first.with_samples(stacked.mean(axis=0), roi=None)


def _first_sustained(mask: np.ndarray, start: int, width: int) -> Optional[int]:
    for i in range(start, mask.size - width + 1):
        if mask[i:i + width].all():
            return i
    return None


def detect_t_acc(trace: IntensityTrace, window: float = 2.0,
                 slope_threshold: Optional[float] = None) -> Optional[float]:
    """
    粗略估计累积阶段起点 (非规范，仅作建议值):
    滑动平均后按斜率划分 上升 -> 平台 -> 再上升，返回第二次持续上升的起点
    slope_threshold 缺省为 5 倍斜率绝对值中位数；找不到三段结构时返回 None
    """
    width = max(1, int(round(window / trace.dt)))
    if len(trace) < 4 * width:
        return None
    smooth = np.convolve(trace.samples, np.ones(width) / width, mode='valid')
    slope = np.gradient(smooth, trace.dt)
    if slope_threshold is None:
        slope_threshold = 5.0 * float(np.median(np.abs(slope))) + 1e-12
    rising = slope > slope_threshold
    flat = np.abs(slope) <= slope_threshold

    i_rise = _first_sustained(rising, 0, width)
    if i_rise is None:
        return None
    i_flat = _first_sustained(flat, i_rise, width)
    if i_flat is None:
        return None
    i_acc = _first_sustained(rising, i_flat, width)
    if i_acc is None:
        return None
    # 'valid' 卷积的第 j 个值以样本 j + (width - 1) / 2 为中心
    return float(trace.t_start + (i_acc + (width - 1) / 2.0) * trace.dt)


def steady_state_gap(a: IntensityTrace, b: IntensityTrace,
                     tail_fraction: float = CONSTANTS['STEADY_TAIL_FRACTION']) -> float:
    """两个序列尾部均值的相对差 |m_a - m_b| / max(|m_a|, |m_b|)"""
    ma = float(np.mean(a.samples[-_tail_count(len(a), tail_fraction):]))
    mb = float(np.mean(b.samples[-_tail_count(len(b), tail_fraction):]))
    scale = max(abs(ma), abs(mb))
    return 0.0 if scale == 0.0 else abs(ma - mb) / scale


__all__: List[str] = [
    'injection_profile', 'cumulative_injection', 'injection_trace',
    'normalize_steady', 'model_dist_single', 'model_dist', 'model_acc',
    'stitch_phases', 'derivative', 'cumulative_integral', 'subtract_reference',
    'split_phases', 'mean_intensity', 'detect_t_acc', 'steady_state_gap',
]
