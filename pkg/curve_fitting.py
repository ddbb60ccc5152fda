# -*- coding: utf-8 -*-
"""
curve_fitting.py
参数估计模块 (Multi-start Bounded Least Squares)

- fit_injection:  由平均强度的导数估计注射参数 B = {t_w, t_0}
- fit_dist:       在导数域上拟合 n 环混合色散模型 P^n
- fit_acc:        拟合累积阶段 C = {a, b}
- rmse / select_best / rmse_threshold: 评价与 15% 阈值筛选

【更新说明】
1. 局部求解器为 scipy.optimize.least_squares (trf, 有界)。
2. D_eff、v_eff、b 在对数空间中搜索；d_rx 以 [d_lo, L_eff) 内的比例参数化；
   混合权重以 stick-breaking 参数化，末项为剩余量，权重和恒为 1。
3. 多起点在进程池中独立求解，按 (目标值, 起点编号) 字典序归约，结果与线程数无关。
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from framework import (CONSTANTS, AccumulationParams, ChannelDomainError,
                       ChannelParams, GridMismatchError, InjectionParams,
                       IntensityTrace, MixtureParams, NormalizationError,
                       TimeGrid, TraceKind, default_seed)
from signal_model import injection_profile, model_acc, model_dist

logger = logging.getLogger(__name__)

# ==============================================================================
# 1. 搜索空间
# ==============================================================================

DEFAULT_BOUNDS: Dict[str, Tuple[float, float]] = {
    't_w': (0.1, 30.0),
    't_0': (0.0, 30.0),
    'd_eff': (1e-12, 1e-3),
    'v_eff': (1e-6, 0.1),
    'l_eff': (1e-3, 0.2),
    'd_rx': (1e-5, math.inf),   # 上界为各分量自身的 L_eff
    'weight': (0.0, 1.0),
    'a': (1e-3, 1.0),
    'b': (1e-6, 1.0),
}

LOG_PARAMS = frozenset({'d_eff', 'v_eff', 'b'})
POSITIVE_PARAMS = frozenset({'t_w', 'd_eff', 'v_eff', 'l_eff', 'd_rx', 'a', 'b'})

DEFAULT_STARTS = {'injection': 8, 'dist': 64, 'acc': 8}

D_RX_FRACTION_MAX = 1.0 - 1e-9
AT_BOUND_RTOL = 1e-6
MAX_NFEV_PER_DIM = 100

# 升余弦脉冲的标准差 = t_w * sqrt(1/12 - 1/(2 pi^2))
RAISED_COSINE_STD = math.sqrt(1.0 / 12.0 - 1.0 / (2.0 * math.pi ** 2))


@dataclass(frozen=True)
class SearchSpace:
    """各参数的闭区间 (lower, upper)；d_rx 的上界另受分量 L_eff 约束"""
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __post_init__(self):
        merged = dict(DEFAULT_BOUNDS)
        merged.update({k: (float(v[0]), float(v[1])) for k, v in dict(self.bounds).items()})
        object.__setattr__(self, 'bounds', merged)
        for name, (lo, hi) in merged.items():
            if name not in DEFAULT_BOUNDS:
                raise ChannelDomainError(f"unknown search-space parameter {name!r}")
            if not (lo < hi) or math.isnan(lo) or math.isnan(hi):
                raise ChannelDomainError(f"{name}: lower bound {lo} must be < upper bound {hi}")
            if name in POSITIVE_PARAMS and lo <= 0:
                raise ChannelDomainError(f"{name}: lower bound must be > 0, got {lo}")
            if name == 't_0' and lo < 0:
                raise ChannelDomainError("t_0: lower bound must be >= 0")
            if name == 'weight' and (lo < 0 or hi > 1):
                raise ChannelDomainError("weight bounds must lie in [0, 1]")
            if name == 'a' and hi > 1:
                raise ChannelDomainError("a: upper bound must be <= 1")
            if name != 'd_rx' and not math.isfinite(hi):
                raise ChannelDomainError(f"{name}: upper bound must be finite")
        if merged['d_rx'][0] >= merged['l_eff'][0]:
            raise ChannelDomainError("d_rx lower bound must be below the smallest l_eff")

    def interval(self, name: str) -> Tuple[float, float]:
        return self.bounds[name]

    def with_bounds(self, **overrides: Tuple[float, float]) -> "SearchSpace":
        merged = dict(self.bounds)
        merged.update(overrides)
        return SearchSpace(merged)


# ==============================================================================
# 2. 结果容器
# ==============================================================================

FitParams = Union[InjectionParams, MixtureParams, AccumulationParams]


@dataclass(frozen=True, eq=False)
class FitResult:
    """单次 (多起点) 拟合的结果"""
    kind: str                      # injection | dist | acc
    params: FitParams
    objective: float               # 残差平方和
    rmse: float
    n_starts: int
    converged: bool
    model: IntensityTrace
    seed: int
    best_start: int
    at_bound: Tuple[str, ...] = ()
    warnings: Tuple[str, ...] = ()

    @property
    def model_kind(self) -> str:
        if self.kind == 'dist':
            return f"dist-{self.params.n}"
        return self.kind


# ==============================================================================
# 3. 参数编码 (外部参数 <-> 求解器内部坐标)
# ==============================================================================

def _layout(kind: str, n: int = 1) -> List[Tuple[str, str]]:
    """返回 [(显示名, 边界键)]"""
    if kind == 'injection':
        return [('t_w', 't_w'), ('t_0', 't_0')]
    if kind == 'acc':
        return [('a', 'a'), ('b', 'b')]
    if kind == 'dist':
        names = []
        for j in range(1, n + 1):
            names += [(f'd_eff_{j}', 'd_eff'), (f'v_eff_{j}', 'v_eff'),
                      (f'l_eff_{j}', 'l_eff'), (f'd_rx_{j}', 'd_rx')]
        names += [(f'weight_{j}', 'weight') for j in range(1, n)]
        return names
    raise ChannelDomainError(f"unknown model kind {kind!r}")


def _internal_bounds(kind: str, n: int, space: SearchSpace) -> Tuple[np.ndarray, np.ndarray]:
    lower, upper = [], []
    for _, key in _layout(kind, n):
        lo, hi = space.interval(key)
        if key == 'd_rx':
            lo, hi = 0.0, D_RX_FRACTION_MAX
        elif key in LOG_PARAMS:
            lo, hi = math.log(lo), math.log(hi)
        lower.append(lo)
        upper.append(hi)
    return np.array(lower), np.array(upper)


def _clip(value: float, key: str, space: SearchSpace) -> float:
    lo, hi = space.interval(key)
    return min(max(value, lo), hi)


def _d_rx_range(l_eff: float, space: SearchSpace) -> Tuple[float, float]:
    lo, hi = space.interval('d_rx')
    return lo, min(hi, l_eff)


def decode(kind: str, x: np.ndarray, n: int, space: SearchSpace) -> FitParams:
    """内部坐标 -> 参数对象 (数值截断到搜索空间内)"""
    if kind == 'injection':
        return InjectionParams(t_w=_clip(x[0], 't_w', space), t_0=_clip(x[1], 't_0', space))
    if kind == 'acc':
        return AccumulationParams(a=_clip(x[0], 'a', space), b=_clip(math.exp(x[1]), 'b', space))

    channels = []
    for j in range(n):
        d_eff = _clip(math.exp(x[4 * j]), 'd_eff', space)
        v_eff = _clip(math.exp(x[4 * j + 1]), 'v_eff', space)
        l_eff = _clip(x[4 * j + 2], 'l_eff', space)
        frac = min(max(x[4 * j + 3], 0.0), D_RX_FRACTION_MAX)
        lo, hi = _d_rx_range(l_eff, space)
        d_rx = lo + frac * (hi - lo)
        channels.append(ChannelParams(d_eff=d_eff, v_eff=v_eff, l_eff=l_eff, d_rx=d_rx))

    weights = []
    remaining = 1.0
    for j in range(n - 1):
        s = _clip(x[4 * n + j], 'weight', space)
        w = remaining * s
        weights.append(w)
        remaining -= w
    weights.append(remaining)
    return MixtureParams(tuple(zip(weights, channels)))


def encode(kind: str, params: FitParams, n: int, space: SearchSpace) -> np.ndarray:
    """参数对象 -> 内部坐标 (用于构造指定起点)"""
    lower, upper = _internal_bounds(kind, n, space)
    if kind == 'injection':
        x = [params.t_w, params.t_0]
    elif kind == 'acc':
        x = [params.a, math.log(params.b)]
    else:
        comps = embed_mixture(params, n).components
        x = []
        for _, q in comps:
            lo, hi = _d_rx_range(q.l_eff, space)
            frac = (q.d_rx - lo) / (hi - lo) if hi > lo else 0.0
            x += [math.log(q.d_eff), math.log(q.v_eff), q.l_eff, frac]
        remaining = 1.0
        for a, _ in comps[:-1]:
            x.append(a / remaining if remaining > 0 else 0.0)
            remaining -= a
    return np.clip(np.array(x, dtype=np.float64), lower, upper)


def _flat_values(kind: str, params: FitParams) -> Dict[str, float]:
    if kind == 'injection':
        return {'t_w': params.t_w, 't_0': params.t_0}
    if kind == 'acc':
        return {'a': params.a, 'b': params.b}
    out = {}
    for j, (a, q) in enumerate(params.components, start=1):
        out.update({f'd_eff_{j}': q.d_eff, f'v_eff_{j}': q.v_eff,
                    f'l_eff_{j}': q.l_eff, f'd_rx_{j}': q.d_rx, f'weight_{j}': a})
    return out


# ==============================================================================
# 4. 目标函数
# ==============================================================================

def _backward_diff(values: np.ndarray, dt: float) -> np.ndarray:
    return np.diff(values, prepend=0.0) / dt


def _dist_values(mixture: MixtureParams, inj: InjectionParams, grid: TimeGrid) -> np.ndarray:
    try:
        return model_dist(mixture, inj, grid).samples
    except NormalizationError:
        # 网格内信号尚未到达接收点
        return np.zeros(grid.n)


def _model_values(kind: str, params: FitParams, grid: TimeGrid,
                  inj: Optional[InjectionParams]) -> np.ndarray:
    if kind == 'injection':
        return injection_profile(params, grid.times)
    if kind == 'acc':
        return model_acc(params, grid).samples
    return _dist_values(params, inj, grid)


def _residuals(x: np.ndarray, problem: Dict) -> np.ndarray:
    params = decode(problem['kind'], x, problem['n'], problem['space'])
    return _residuals_for(params, problem)


def _residuals_for(params: FitParams, problem: Dict) -> np.ndarray:
    grid = problem['grid']
    model = _model_values(problem['kind'], params, grid, problem['inj'])
    if problem['kind'] == 'dist':
        return problem['target'] - _backward_diff(model, grid.dt)
    return problem['target'] - model


def objective_for(kind: str, params: FitParams, trace: IntensityTrace,
                  inj: Optional[InjectionParams] = None) -> float:
    """由参数重新计算目标函数 (残差平方和)"""
    problem = _make_problem(kind, trace, params.n if kind == 'dist' else 1, SearchSpace(), inj)
    res = _residuals_for(params, problem)
    return float(np.dot(res, res))


def _make_problem(kind: str, trace: IntensityTrace, n: int, space: SearchSpace,
                  inj: Optional[InjectionParams]) -> Dict:
    grid = trace.grid
    target = np.asarray(trace.samples, dtype=np.float64)
    if kind == 'dist':
        target = _backward_diff(target, grid.dt)
    return {'kind': kind, 'n': n, 'space': space, 'grid': grid, 'inj': inj, 'target': target}


# ==============================================================================
# 5. 多起点求解 (Worker)
# ==============================================================================

def _solve_single_start(task: Dict) -> Dict:
    """
    [Worker] 从一个起点运行有界最小二乘
    求解器失败时保留起点本身的目标值
    """
    problem = task['problem']
    lower, upper = task['lower'], task['upper']
    x0 = np.clip(task['x0'], lower, upper)
    output = {'index': task['index'], 'x': x0, 'objective': math.inf,
              'converged': False, 'nfev': 0, 'errors': []}
    try:
        r0 = _residuals(x0, problem)
        obj0 = float(np.dot(r0, r0))
    except Exception as e:
        output['errors'].append(f"start {task['index']} not evaluable: {e}")
        return output
    output['objective'] = obj0 if math.isfinite(obj0) else math.inf

    try:
        sol = least_squares(_residuals, x0, bounds=(lower, upper), args=(problem,),
                            method='trf', x_scale='jac',
                            max_nfev=MAX_NFEV_PER_DIM * x0.size)
        x = np.clip(sol.x, lower, upper)
        res = _residuals(x, problem)
        obj = float(np.dot(res, res))
        output['nfev'] = int(sol.nfev)
        if math.isfinite(obj) and obj <= output['objective']:
            output['x'] = x
            output['objective'] = obj
            output['converged'] = bool(sol.status > 0)
    except Exception as e:
        output['errors'].append(f"start {task['index']} failed: {e}")
    return output


def _run_starts(problem: Dict, starts: Sequence[np.ndarray], lower: np.ndarray,
                upper: np.ndarray, threads: int) -> List[Dict]:
    tasks = [{'index': i, 'x0': x0, 'problem': problem, 'lower': lower, 'upper': upper}
             for i, x0 in enumerate(starts)]
    outputs = []
    if threads > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as executor:
            future_to_task = {executor.submit(_solve_single_start, t): t for t in tasks}
            for future in concurrent.futures.as_completed(future_to_task):
                outputs.append(future.result())
    else:
        outputs = [_solve_single_start(t) for t in tasks]
    outputs.sort(key=lambda o: o['index'])
    for o in outputs:
        for err in o['errors']:
            logger.debug(err)
    return outputs


def _random_starts(rng: np.random.Generator, lower: np.ndarray, upper: np.ndarray,
                   count: int) -> List[np.ndarray]:
    """内部坐标下均匀采样 (对数参数即对数均匀)；按行顺序生成，前缀与 count 无关"""
    if count <= 0:
        return []
    draws = rng.uniform(size=(count, lower.size))
    return [lower + row * (upper - lower) for row in draws]


def _at_bound(kind: str, x: np.ndarray, n: int, lower: np.ndarray, upper: np.ndarray) -> Tuple[str, ...]:
    flagged = []
    for (name, _), xi, lo, hi in zip(_layout(kind, n), x, lower, upper):
        tol = AT_BOUND_RTOL * (hi - lo)
        if xi - lo <= tol or hi - xi <= tol:
            flagged.append(name)
    return tuple(flagged)


def _finish(kind: str, trace: IntensityTrace, n: int, space: SearchSpace,
            inj: Optional[InjectionParams], starts: List[np.ndarray], threads: int,
            seed: int, warnings: List[str]) -> FitResult:
    problem = _make_problem(kind, trace, n, space, inj)
    lower, upper = _internal_bounds(kind, n, space)
    outputs = _run_starts(problem, starts, lower, upper, threads)
    best = min(outputs, key=lambda o: (o['objective'], o['index']))
    if not math.isfinite(best['objective']):
        raise ChannelDomainError(f"no start produced a finite objective for {kind} fit")
    if not any(o['converged'] for o in outputs):
        warnings.append("no start converged")

    params = decode(kind, best['x'], n, space)
    return _build_result(kind, params, problem, trace, n, space, len(starts),
                         bool(best['converged']), seed, int(best['index']), warnings)


def _build_result(kind: str, params: FitParams, problem: Dict, trace: IntensityTrace,
                  n: int, space: SearchSpace, n_starts: int, converged: bool, seed: int,
                  best_start: int, warnings: List[str]) -> FitResult:
    lower, upper = _internal_bounds(kind, n, space)
    res = _residuals_for(params, problem)
    objective = float(np.dot(res, res))
    model_values = _model_values(kind, params, trace.grid, problem['inj'])
    model_kind = {'injection': TraceKind.INJ, 'dist': TraceKind.DIST, 'acc': TraceKind.ACC}[kind]
    model = trace.with_samples(model_values, kind=model_kind)

    result = FitResult(
        kind=kind, params=params, objective=objective,
        rmse=rmse_values(trace.samples, model_values),
        n_starts=n_starts, converged=converged, model=model, seed=seed,
        best_start=best_start,
        at_bound=_at_bound(kind, encode(kind, params, n, space), n, lower, upper),
        warnings=tuple(warnings),
    )
    logger.info("%s fit: objective=%.6g rmse=%.6g best_start=%d/%d converged=%s",
                result.model_kind, objective, result.rmse, result.best_start,
                n_starts, converged)
    return result


def _check_trace(trace: IntensityTrace):
    if len(trace) < 2:
        raise ChannelDomainError("fitting needs a trace with at least two samples")
    if not np.all(np.isfinite(trace.samples)):
        raise ChannelDomainError("trace contains non-finite samples")


# ==============================================================================
# 6. 拟合接口
# ==============================================================================

def fit_injection(f_inj: IntensityTrace, space: Optional[SearchSpace] = None,
                  starts: int = DEFAULT_STARTS['injection'], seed: Optional[int] = None,
                  threads: int = 1) -> FitResult:
    """
    f_inj 为平均强度的导数；起点 0 由一阶/二阶矩估计
    """
    _check_trace(f_inj)
    space = space or SearchSpace()
    seed = default_seed() if seed is None else seed
    warnings: List[str] = []
    lower, upper = _internal_bounds('injection', 1, space)

    values = np.clip(f_inj.samples, 0.0, None)
    mass = float(values.sum())
    initial: List[np.ndarray] = []
    if mass > 0:
        times = f_inj.times
        mean = float(np.dot(values, times) / mass)
        std = math.sqrt(max(float(np.dot(values, (times - mean) ** 2) / mass), 0.0))
        t_w = max(std / RAISED_COSINE_STD, f_inj.dt)
        initial.append(np.clip(np.array([t_w, mean - t_w / 2.0]), lower, upper))
    else:
        warnings.append("degenerate input: trace has no positive mass")

    rng = np.random.default_rng(seed)
    start_list = (initial + _random_starts(rng, lower, upper, starts))[:max(starts, 1)]
    result = _finish('injection', f_inj, 1, space, None, start_list, threads, seed, warnings)
    if mass <= 0:
        result = replace(result, converged=False)
    return result


def fit_dist(trace: IntensityTrace, n: int, inj: InjectionParams,
             space: Optional[SearchSpace] = None, starts: int = DEFAULT_STARTS['dist'],
             seed: Optional[int] = None, threads: int = 1,
             nested_from: Optional[MixtureParams] = None) -> FitResult:
    """
    导数域拟合 n 环混合模型
    nested_from 给出较少分量的解时，以 "重复末分量、权重为 0" 的形式作为起点 0，
    保证 objective(n) <= objective(nested_from)
    """
    if int(n) != n or n < 1:
        raise ChannelDomainError(f"component count must be >= 1, got {n}")
    n = int(n)
    _check_trace(trace)
    space = space or SearchSpace()
    seed = default_seed() if seed is None else seed
    warnings: List[str] = []

    tail = trace.samples[-max(1, int(math.ceil(CONSTANTS['STEADY_TAIL_FRACTION'] * len(trace) - 1e-9))):]
    tail_mean = float(np.mean(tail))
    if not (abs(tail_mean - 1.0) <= 0.05):
        warnings.append(f"trace does not look steady-state normalized (tail mean {tail_mean:.4g})")

    lower, upper = _internal_bounds('dist', n, space)
    initial: List[np.ndarray] = []
    if nested_from is not None:
        initial.append(encode('dist', nested_from, n, space))
    initial += _informed_dist_starts(trace, inj, n, space)

    rng = np.random.default_rng(seed)
    start_list = (initial + _random_starts(rng, lower, upper, starts))[:max(starts, 1)]
    result = _finish('dist', trace, n, space, inj, start_list, threads, seed, list(warnings))
    if nested_from is None:
        return result

    # 嵌入解直接以参数对象求值，避免编码往返的舍入
    embedded = embed_mixture(nested_from, n)
    problem = _make_problem('dist', trace, n, space, inj)
    fallback = _build_result('dist', embedded, problem, trace, n, space, len(start_list),
                             result.converged, seed, 0,
                             warnings + ["nested start retained"])
    return fallback if _keep_nested(result, fallback) else result


def _keep_nested(result: FitResult, fallback: FitResult) -> bool:
    """
    嵌入解在导数域目标值或强度域 RMSE 任一项上更优时保留嵌入解
    目标值在导数域、RMSE 在原始序列上计算，两者排序可能不一致；
    保留嵌入解时 objective 与 rmse 都等于较小模型的值，两条嵌套关系同时成立
    """
    return fallback.objective < result.objective or fallback.rmse < result.rmse


def embed_mixture(mixture: MixtureParams, n: int) -> MixtureParams:
    """补齐到 n 个分量: 重复末分量并赋零权重，模型输出逐位不变"""
    comps = list(mixture.components)
    if len(comps) > n:
        raise ChannelDomainError(f"cannot embed {len(comps)} components into n={n}")
    while len(comps) < n:
        comps.append((0.0, comps[-1][1]))
    return MixtureParams(tuple(comps))


def _informed_dist_starts(trace: IntensityTrace, inj: InjectionParams, n: int,
                          space: SearchSpace, count: int = 4) -> List[np.ndarray]:
    """
    由导数峰值估计到达时间 t_arr，在 L_eff 区间内取几何等距的周长，
    设 d_rx = L/2、v = d_rx / t_arr、Peclet 约 20
    """
    deriv = _backward_diff(trace.samples, trace.dt)
    if deriv.size < 3:
        return []
    peak_t = float(trace.times[int(np.argmax(deriv[1:])) + 1])
    t_arr = max(peak_t - (inj.t_0 + inj.t_w / 2.0), 2.0 * trace.dt)
    l_lo, l_hi = space.interval('l_eff')
    out = []
    for l_eff in np.geomspace(l_lo, l_hi, count + 2)[1:-1]:
        d_lo, d_hi = _d_rx_range(l_eff, space)
        d_rx = min(max(0.5 * l_eff, d_lo), d_lo + D_RX_FRACTION_MAX * (d_hi - d_lo))
        v_eff = _clip(d_rx / t_arr, 'v_eff', space)
        d_eff = _clip(v_eff * d_rx / 20.0, 'd_eff', space)
        comps = []
        for j in range(n):
            q = ChannelParams(d_eff=d_eff, v_eff=_clip(v_eff / (4.0 ** j), 'v_eff', space),
                              l_eff=l_eff, d_rx=d_rx)
            comps.append(q)
        weights = [0.8] + [0.2 / (n - 1)] * (n - 1) if n > 1 else [1.0]
        mixture = MixtureParams(tuple(zip(weights, comps)))
        out.append(encode('dist', mixture, n, space))
    return out


def fit_acc(trace: IntensityTrace, space: Optional[SearchSpace] = None,
            starts: int = DEFAULT_STARTS['acc'], seed: Optional[int] = None,
            threads: int = 1) -> FitResult:
    """累积阶段拟合；输入应为 t_acc 之后、以 t = 0 起算的片段"""
    _check_trace(trace)
    space = space or SearchSpace()
    seed = default_seed() if seed is None else seed
    warnings: List[str] = []
    values = trace.samples
    if values[-1] < values[0]:
        warnings.append("accumulation trace decreases over the fitted window")

    lower, upper = _internal_bounds('acc', 1, space)
    a0 = _clip(1.0 - float(values[0]), 'a', space)
    half = 1.0 - a0 / 2.0
    above = np.nonzero(values >= half)[0]
    t_half = float(trace.times[above[0]]) if above.size and trace.times[above[0]] > 0 else trace.duration
    b0 = _clip(math.log(2.0) / max(t_half, trace.dt), 'b', space)
    initial = [np.clip(np.array([a0, math.log(b0)]), lower, upper)]

    rng = np.random.default_rng(seed)
    start_list = (initial + _random_starts(rng, lower, upper, starts))[:max(starts, 1)]
    result = _finish('acc', trace, 1, space, None, start_list, threads, seed, warnings)
    if warnings and 'a' not in result.at_bound:
        result = replace(result, converged=False)
    return result


# ==============================================================================
# 7. 评价与筛选
# ==============================================================================

def rmse_values(measured, modeled) -> float:
    """sqrt(sum_{i=0}^{N} (I_i - I_hat_i)^2 / N)，N = 样本数 - 1"""
    measured = np.asarray(measured, dtype=np.float64)
    modeled = np.asarray(modeled, dtype=np.float64)
    if measured.shape != modeled.shape:
        raise GridMismatchError(f"rmse needs equal lengths, got {measured.size} and {modeled.size}")
    if measured.size < 2:
        raise ChannelDomainError("rmse needs at least two samples")
    diff = measured - modeled
    return float(math.sqrt(float(np.dot(diff, diff)) / (measured.size - 1)))


def rmse(measured: IntensityTrace, modeled: IntensityTrace) -> float:
    if not measured.same_grid(modeled):
        raise GridMismatchError("measured and modeled traces are on different grids")
    return rmse_values(measured.samples, modeled.samples)


def rmse_threshold(values: Sequence[float], q: float) -> float:
    """q 分位阈值 tau: 升序第 ceil(q*M) 个值"""
    if len(values) == 0:
        raise ChannelDomainError("threshold needs at least one value")
    if not (0.0 < q <= 1.0):
        raise ChannelDomainError(f"quantile must lie in (0, 1], got {q}")
    ordered = sorted(float(v) for v in values)
    k = max(1, int(math.ceil(q * len(ordered) - 1e-9)))
    return ordered[k - 1]


def select_best(results: Sequence[FitResult], rule: str = 'min',
                q: float = 0.15) -> Union[FitResult, List[FitResult]]:
    """
    rule='min' 返回 rmse 最小的结果 (并列时取列表中靠前者)
    rule='quantile' 返回 rmse <= tau(q) 的全部结果，阈值处并列全部保留
    """
    if len(results) == 0:
        raise ChannelDomainError("select_best needs at least one result")
    if rule == 'min':
        return min(enumerate(results), key=lambda pair: (pair[1].rmse, pair[0]))[1]
    if rule == 'quantile':
        tau = rmse_threshold([r.rmse for r in results], q)
        return [r for r in results if r.rmse <= tau]
    raise ChannelDomainError(f"unknown selection rule {rule!r}")


__all__ = [
    'DEFAULT_BOUNDS', 'DEFAULT_STARTS', 'SearchSpace', 'FitResult',
    'fit_injection', 'fit_dist', 'fit_acc', 'objective_for',
    'rmse', 'rmse_values', 'rmse_threshold', 'select_best', 'decode', 'encode',
]
