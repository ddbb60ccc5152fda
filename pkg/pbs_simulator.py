# -*- coding: utf-8 -*-
"""
pbs_simulator.py
粒子布朗运动仿真器 (Particle-Based Simulation of a Looped Tube)

在半径 r0、周长 L_eff 的环形管中释放 N 个粒子：
  - 初始位置: 释放截面 (x = 0) 内均匀分布
  - 运动: Euler-Maruyama，轴向抛物线流 u(rho) = 2 v_eff (1 - rho^2 / r0^2) + 三维布朗增量
  - 侧壁: 径向镜面反射；轴向坐标对 L_eff 取模
  - 观测: 沿 x 等宽分箱计数，浓度 = 计数 / (N * bin_width)

【更新说明】
1. 每个实现 j 使用 SeedSequence([master_seed, j]) 派生的独立 PCG64 流，
   结果与线程数无关，按实现编号顺序整数累加。
2. 粒子步数超过预算时抛出 CapacityError，并给出可行的粒子数建议。
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from framework import (CONSTANTS, CapacityError, ChannelDomainError,
                       ConfigError, IntensityTrace, TraceKind)

logger = logging.getLogger(__name__)

NORMALIZATIONS = ('none', 'steady-state')


# ==============================================================================
# 1. 配置与结果
# ==============================================================================

@dataclass(frozen=True)
class PbsConfig:
    """PBS 仿真配置 (SI 单位)"""
    l_eff: float
    r0: float
    d_molecular: float
    v_eff: float
    n_particles: int
    dt: float
    t_end: float
    n_realizations: int = 20
    master_seed: int = CONSTANTS['DEFAULT_SEED']
    bin_width: Optional[float] = None
    sample_every: int = 100

    def __post_init__(self):
        if self.bin_width is None:
            object.__setattr__(self, 'bin_width', self.l_eff / 100.0)
        self.validate()

    def validate(self):
        for name in ('l_eff', 'r0', 'd_molecular', 'dt', 't_end', 'bin_width'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be > 0, got {value}")
        if not (math.isfinite(self.v_eff) and self.v_eff >= 0):
            raise ConfigError(f"v_eff must be >= 0, got {self.v_eff}")
        for name in ('n_particles', 'n_realizations', 'sample_every'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.t_end < self.dt:
            raise ConfigError("t_end must cover at least one step")
        n_bins = self.l_eff / self.bin_width
        if abs(n_bins - round(n_bins)) > 1e-6:
            raise ConfigError("bin_width must divide l_eff into an integer number of bins")
        # 单步轴向流动位移不超过半个分箱
        if self.v_eff > 0 and not (self.dt < self.bin_width / (2.0 * self.v_eff)):
            raise ConfigError(
                f"dt={self.dt} too large: need dt < bin_width / (2 v_eff) = "
                f"{self.bin_width / (2.0 * self.v_eff):.3g}")
        # 单步径向扩散偏移不超过管半径
        excursion = 6.0 * math.sqrt(2.0 * self.d_molecular * self.dt)
        if not (excursion < self.r0):
            raise ConfigError(
                f"dt={self.dt} too large: diffusive step 6*sqrt(2 D dt)={excursion:.3g} exceeds r0={self.r0}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def n_bins(self) -> int:
        return int(round(self.l_eff / self.bin_width))

    @property
    def n_samples(self) -> int:
        return self.n_steps // self.sample_every + 1

    @property
    def sample_dt(self) -> float:
        return self.dt * self.sample_every

    @property
    def particle_steps(self) -> int:
        return int(self.n_particles) * self.n_steps * int(self.n_realizations)


@dataclass(frozen=True, eq=False)
class PbsResult:
    """实现平均后的分箱浓度，times[i] = i * sample_dt"""
    times: np.ndarray
    concentration: np.ndarray   # (n_samples, n_bins) 1/m
    counts: np.ndarray          # (n_samples, n_bins) 全部实现的整数计数
    config: PbsConfig

    @property
    def bin_width(self) -> float:
        return self.config.bin_width

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.config.n_bins) + 0.5) * self.config.bin_width


def check_budget(cfg: PbsConfig, budget: int = CONSTANTS['PARTICLE_STEP_BUDGET']) -> int:
    """返回粒子步数；超出预算时抛出 CapacityError"""
    steps = cfg.particle_steps
    if steps > budget:
        suggested = max(1, budget // (cfg.n_steps * cfg.n_realizations))
        raise CapacityError(
            f"{steps:.3e} particle-steps exceed the budget of {budget:.1e}; "
            f"use at most {suggested} particles per realization",
            particle_steps=steps, suggested_particles=int(suggested))
    return steps


# ==============================================================================
# 2. 单粒子几何
# ==============================================================================

def _reflect_radial(y: np.ndarray, z: np.ndarray, r0: float):
    rho = np.hypot(y, z)
    outside = rho > r0
    if np.any(outside):
        scale = (2.0 * r0 - rho[outside]) / rho[outside]
        y = y.copy()
        z = z.copy()
        y[outside] *= scale
        z[outside] *= scale
    return y, z


def reflect_lateral(position, r0: float) -> np.ndarray:
    """
    侧壁镜面反射: rho > r0 时 rho -> 2 r0 - rho，方位角不变
    position 为 (x, y, z) 或 (N, 3)
    """
    if not (r0 > 0):
        raise ChannelDomainError(f"r0 must be > 0, got {r0}")
    pos = np.array(position, dtype=np.float64)
    flat = pos.reshape(-1, 3)
    y, z = _reflect_radial(flat[:, 1], flat[:, 2], r0)
    flat[:, 1] = y
    flat[:, 2] = z
    return flat.reshape(pos.shape)


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(index)])))


# ==============================================================================
# 3. 单次实现 (Worker)
# ==============================================================================

def _simulate_realization(task: Dict) -> Dict:
    """
    [Worker] 运行一次实现，返回各采样时刻的分箱计数
    不打印，只返回结果与错误
    """
    cfg: PbsConfig = task['config']
    index: int = task['index']
    output = {'index': index, 'counts': None, 'errors': []}
    try:
        rng = realization_rng(cfg.master_seed, index)
        n = int(cfg.n_particles)
        n_bins = cfg.n_bins
        length = cfg.l_eff

        radius = cfg.r0 * np.sqrt(rng.random(n))
        phi = 2.0 * math.pi * rng.random(n)
        x = np.zeros(n)
        y = radius * np.cos(phi)
        z = radius * np.sin(phi)

        sigma = math.sqrt(2.0 * cfg.d_molecular * cfg.dt)
        inv_r0_sq = 1.0 / (cfg.r0 * cfg.r0)
        counts = np.zeros((cfg.n_samples, n_bins), dtype=np.int64)
        counts[0] = _bin_counts(x, cfg.bin_width, n_bins)

        row = 1
        for step in range(1, cfg.n_steps + 1):
            noise = rng.standard_normal((3, n))
            flow = 2.0 * cfg.v_eff * (1.0 - (y * y + z * z) * inv_r0_sq)
            x = x + flow * cfg.dt + sigma * noise[0]
            y = y + sigma * noise[1]
            z = z + sigma * noise[2]
            y, z = _reflect_radial(y, z, cfg.r0)
            x = np.mod(x, length)
            x[x >= length] -= length
            if step % cfg.sample_every == 0:
                counts[row] = _bin_counts(x, cfg.bin_width, n_bins)
                row += 1
        output['counts'] = counts
    except Exception as e:
        output['errors'].append(f"Realization {index} failed: {str(e)}")
    return output


def _bin_counts(x: np.ndarray, bin_width: float, n_bins: int) -> np.ndarray:
    idx = np.floor(x / bin_width).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    return np.bincount(idx, minlength=n_bins)


# ==============================================================================
# 4. 对外接口
# ==============================================================================

def run_pbs(cfg: PbsConfig, threads: int = 1) -> PbsResult:
    """
    运行 n_realizations 次独立实现并平均
    threads > 1 时使用进程池；结果逐位独立于 threads
    """
    check_budget(cfg)
    tasks = [{'config': cfg, 'index': j} for j in range(cfg.n_realizations)]
    logger.info("PBS: %d realizations x %d particles x %d steps (%.3e particle-steps), threads=%d",
                cfg.n_realizations, cfg.n_particles, cfg.n_steps, cfg.particle_steps, threads)

    outputs: Dict[int, Dict] = {}
    if threads > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as executor:
            future_to_task = {executor.submit(_simulate_realization, t): t for t in tasks}
            for future in concurrent.futures.as_completed(future_to_task):
                data = future.result()
                outputs[data['index']] = data
    else:
        for t in tasks:
            data = _simulate_realization(t)
            outputs[data['index']] = data

    errors: List[str] = [err for j in sorted(outputs) for err in outputs[j]['errors']]
    if errors:
        raise RuntimeError("; ".join(errors))

    total = np.zeros((cfg.n_samples, cfg.n_bins), dtype=np.int64)
    for j in range(cfg.n_realizations):
        total += outputs[j]['counts']

    denom = float(cfg.n_realizations) * float(cfg.n_particles) * cfg.bin_width
    concentration = total / denom
    times = np.arange(cfg.n_samples) * cfg.sample_dt
    return PbsResult(times=times, concentration=concentration, counts=total, config=cfg)


def observe_bin(result: PbsResult, x: float, normalization: str = 'none') -> np.ndarray:
    """
    读取包含位置 x 的分箱随时间的浓度；x = L_eff 回绕到第 0 个分箱
    normalization='steady-state' 乘以 L_eff，使均匀稳态为 1
    """
    cfg = result.config
    if not (0.0 <= x <= cfg.l_eff):
        raise ChannelDomainError(f"x={x} outside [0, {cfg.l_eff}]")
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"unknown normalization {normalization!r}")
    idx = int(math.floor(x / cfg.bin_width)) % cfg.n_bins
    series = result.concentration[:, idx].copy()
    if normalization == 'steady-state':
        series *= cfg.l_eff
    return series


def pbs_result_to_trace(result: PbsResult, x: float, normalization: str = 'none') -> IntensityTrace:
    cfg = result.config
    return IntensityTrace(
        dt=cfg.sample_dt,
        samples=observe_bin(result, x, normalization),
        kind=TraceKind.RAW,
        extra={
            'source': 'pbs',
            'x': repr(float(x)),
            'normalization': normalization,
            'seed': str(cfg.master_seed),
            'n_particles': str(cfg.n_particles),
            'n_realizations': str(cfg.n_realizations),
            'bin_width': repr(cfg.bin_width),
        },
    )
