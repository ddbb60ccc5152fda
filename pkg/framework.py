# -*- coding: utf-8 -*-
"""
framework.py
闭环色散信道核心数据结构 (Closed-loop Channel Kernel Types)

该模块为整个工具链提供通用的数据结构、物理常量与异常体系：
信道参数 (ChannelParams)、Aris-Taylor 色散输入、注射/混合/累积模型参数，
以及均匀采样的强度序列 (IntensityTrace)。
所有容器只保存 SI 基本单位的数值，单位格式化仅在 cli 中进行。
"""

import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

# ==============================================================================
# 1. 异常体系
# ==============================================================================

class WnLoopError(Exception):
    """工具链所有可预期错误的基类"""


class ChannelDomainError(WnLoopError, ValueError):
    """参数或输入超出物理/数学定义域"""


class ConfigError(WnLoopError, ValueError):
    """仿真器或命令行配置不合法"""


class CapacityError(WnLoopError, RuntimeError):
    """粒子步数预算超限"""

    def __init__(self, message: str, particle_steps: int, suggested_particles: int):
        super().__init__(message)
        self.particle_steps = particle_steps
        self.suggested_particles = suggested_particles


class NormalizationError(WnLoopError, ValueError):
    """稳态尾部均值不可用于归一化"""


class GridMismatchError(WnLoopError, ValueError):
    """两个序列的时间网格不一致"""


class TraceParseError(WnLoopError, ValueError):
    """序列文件解析失败，携带行号与字段名"""

    def __init__(self, message: str, line_no: Optional[int] = None, field_name: Optional[str] = None):
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"{message}{where}")
        self.line_no = line_no
        self.field_name = field_name


class TraceValidationError(WnLoopError, ValueError):
    """序列内容违反不变量 (dt, 样本数, 非有限值)"""


class DatasetIOError(WnLoopError, OSError):
    """文件读写失败 (附带路径)"""


# ==============================================================================
# 2. 全局常量
# ==============================================================================

CONSTANTS = {
    'WRAP_TOL': 1e-12,                 # 环绕求和相对截断容差
    'PARTICLE_STEP_BUDGET': 10**11,    # PBS 粒子步数上限
    'STEADY_TAIL_FRACTION': 0.2,       # 稳态归一化尾部比例
    'TRACE_VERSION': 'v1',
    'DEFAULT_SEED': 2024,
    'SEED_ENV': 'WNLOOP_SEED',
    'TIMESTAMP_ENV': 'SOURCE_DATE_EPOCH',
    'WEIGHT_SUM_TOL': 1e-9,
}


def default_seed() -> int:
    """环境变量 WNLOOP_SEED 优先，否则使用 CONSTANTS 中的默认种子"""
    raw = os.environ.get(CONSTANTS['SEED_ENV'])
    if raw is None or raw.strip() == "":
        return CONSTANTS['DEFAULT_SEED']
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{CONSTANTS['SEED_ENV']} must be an integer, got {raw!r}") from exc


# ==============================================================================
# 3. 信道参数
# ==============================================================================

@dataclass(frozen=True)
class ChannelParams:
    """
    [环形信道参数] Q = {D_eff, v_eff, L_eff, d_rx}
    v_eff < 0 在构造时规范化为 v_eff >= 0，同时 d_rx -> L_eff - d_rx (环对称)。
    """
    d_eff: float   # 有效扩散系数 m^2/s
    v_eff: float   # 有效流速 m/s
    l_eff: float   # 环周长 m
    d_rx: float    # 接收点到释放点的弧长 m

    def __post_init__(self):
        for name in ('d_eff', 'v_eff', 'l_eff', 'd_rx'):
            if not math.isfinite(getattr(self, name)):
                raise ChannelDomainError(f"{name} must be finite")
        if self.d_eff <= 0:
            raise ChannelDomainError(f"d_eff must be > 0, got {self.d_eff}")
        if self.l_eff <= 0:
            raise ChannelDomainError(f"l_eff must be > 0, got {self.l_eff}")
        if not (0.0 <= self.d_rx < self.l_eff):
            raise ChannelDomainError(f"d_rx must lie in [0, l_eff), got {self.d_rx}")
        if self.v_eff < 0:
            object.__setattr__(self, 'v_eff', -self.v_eff)
            object.__setattr__(self, 'd_rx', (self.l_eff - self.d_rx) % self.l_eff)

    @property
    def lam(self) -> float:
        """圆周映射尺度 lambda = 2*pi / L_eff"""
        return 2.0 * math.pi / self.l_eff

    @property
    def loop_time(self) -> float:
        return self.l_eff / self.v_eff if self.v_eff > 0 else math.inf


@dataclass(frozen=True)
class DispersionInputs:
    """Aris-Taylor 色散输入: 分子扩散系数、管半径、平均流速"""
    d_molecular: float
    r0: float
    v_eff: float

    def __post_init__(self):
        for name in ('d_molecular', 'r0'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ChannelDomainError(f"{name} must be > 0, got {value}")
        if not (math.isfinite(self.v_eff) and self.v_eff >= 0):
            raise ChannelDomainError(f"v_eff must be >= 0, got {self.v_eff}")


# ==============================================================================
# 4. 参数模型
# ==============================================================================

@dataclass(frozen=True)
class InjectionParams:
    """升余弦注射模型 B = {t_w, t_0}"""
    t_w: float
    t_0: float

    def __post_init__(self):
        if not (math.isfinite(self.t_w) and self.t_w > 0):
            raise ChannelDomainError(f"t_w must be > 0, got {self.t_w}")
        if not (math.isfinite(self.t_0) and self.t_0 >= 0):
            raise ChannelDomainError(f"t_0 must be >= 0, got {self.t_0}")


@dataclass(frozen=True)
class MixtureParams:
    """多环混合 P^n: (权重 a^{n,j}, 信道参数 Q^{n,j}) 列表"""
    components: Tuple[Tuple[float, ChannelParams], ...]

    def __post_init__(self):
        comps = tuple((float(a), q) for a, q in self.components)
        object.__setattr__(self, 'components', comps)
        if len(comps) < 1:
            raise ChannelDomainError("mixture needs at least one component")
        for a, q in comps:
            if not isinstance(q, ChannelParams):
                raise ChannelDomainError("mixture components must carry ChannelParams")
            if not (0.0 <= a <= 1.0):
                raise ChannelDomainError(f"mixture weight {a} outside [0, 1]")
        total = sum(a for a, _ in comps)
        if abs(total - 1.0) > CONSTANTS['WEIGHT_SUM_TOL']:
            raise ChannelDomainError(f"mixture weights sum to {total}, expected 1")

    @classmethod
    def single(cls, q: ChannelParams) -> "MixtureParams":
        return cls(((1.0, q),))

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> Tuple[float, ...]:
        return tuple(a for a, _ in self.components)


@dataclass(frozen=True)
class AccumulationParams:
    """累积模型 C = {a, b}: I_acc(t) = 1 - a*exp(-b*t)"""
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.a <= 1.0):
            raise ChannelDomainError(f"a must lie in (0, 1], got {self.a}")
        if not (math.isfinite(self.b) and self.b > 0):
            raise ChannelDomainError(f"b must be > 0, got {self.b}")


# ==============================================================================
# 5. 时间序列
# ==============================================================================

class TraceKind(str, Enum):
    """序列类型标签"""
    RAW = 'raw'
    DIST = 'dist'
    ACC = 'acc'
    INJ = 'inj'


@dataclass(frozen=True)
class TimeGrid:
    """均匀时间网格 t_i = t_start + i*dt"""
    dt: float
    n: int
    t_start: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ChannelDomainError(f"grid dt must be > 0, got {self.dt}")
        if self.n < 1:
            raise ChannelDomainError(f"grid needs at least one sample, got {self.n}")
        if not (math.isfinite(self.t_start) and self.t_start >= 0):
            raise ChannelDomainError(f"grid t_start must be >= 0, got {self.t_start}")

    @classmethod
    def from_duration(cls, dt: float, t_end: float, t_start: float = 0.0) -> "TimeGrid":
        n = int(math.floor((t_end - t_start) / dt + 1e-9)) + 1
        return cls(dt=dt, n=n, t_start=t_start)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n) * self.dt


@dataclass(frozen=True, eq=False)
class IntensityTrace:
    """
    [强度序列] I(x_R, t_start + i*dt)
    样本保存为只读 float64 数组；元数据中未知字段保存在 extra 中原样往返。
    """
    dt: float
    samples: np.ndarray
    kind: TraceKind = TraceKind.RAW
    egg: Optional[str] = None
    roi: Optional[str] = None
    ded: Optional[int] = None
    d_inj: Optional[float] = None
    injection_duration: Optional[float] = None
    t_start: float = 0.0
    extra: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, 'samples', arr)
        object.__setattr__(self, 'kind', TraceKind(self.kind))
        object.__setattr__(self, 'extra', dict(self.extra))
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise TraceValidationError(f"dt must be > 0, got {self.dt}")
        if arr.size < 1:
            raise TraceValidationError("trace needs at least one sample")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(dt=self.dt, n=len(self), t_start=self.t_start)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt

    def same_grid(self, other: "IntensityTrace") -> bool:
        return (len(self) == len(other) and self.dt == other.dt
                and self.t_start == other.t_start)

    def with_samples(self, samples, **changes) -> "IntensityTrace":
        """保留元数据，替换样本 (以及可选的其它字段)"""
        return replace(self, samples=samples, **changes)
