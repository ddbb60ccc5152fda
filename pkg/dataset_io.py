# -*- coding: utf-8 -*-
"""
dataset_io.py
数据读写与合成数据集 (Trace Files, Fit Reports, Synthetic Datasets)

序列文件格式 (v1):
    # version: v1
    # dt: 0.04
    # kind: dist
    # egg: 12            (可选: egg, roi, DED, d_inj, injection_duration, t_start)
    # <其它键>: <值>       (未知键按字典序保存并原样往返)
    sample
    0.0
    0.0123...
全部数值为 SI 单位，浮点数以 repr 的最短往返十进制写出。
拟合报告为键排序的 JSON。
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from io import StringIO
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from framework import (CONSTANTS, AccumulationParams, ChannelDomainError,
                       ChannelParams, DatasetIOError, InjectionParams,
                       IntensityTrace, MixtureParams, TimeGrid, TraceKind,
                       TraceParseError, TraceValidationError)
from curve_fitting import rmse_values
from signal_model import injection_profile, model_acc, model_dist

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SAMPLE_COLUMN = 'sample'
# 固定字段顺序
HEADER_FIELDS: Tuple[str, ...] = (
    'version', 'dt', 'kind', 'egg', 'roi', 'DED', 'd_inj',
    'injection_duration', 't_start',
)
KNOWN_KEYS = frozenset(HEADER_FIELDS)


# ==============================================================================
# 1. 序列文件
# ==============================================================================

def _format_float(value: float) -> str:
    return repr(float(value))


def _validate_for_write(trace: IntensityTrace):
    if not (math.isfinite(trace.dt) and trace.dt > 0):
        raise TraceValidationError(f"dt must be > 0, got {trace.dt}")
    if len(trace) < 2:
        raise TraceValidationError(f"a trace file needs at least 2 samples, got {len(trace)}")
    bad = np.nonzero(~np.isfinite(trace.samples))[0]
    if bad.size:
        raise TraceValidationError(f"sample {int(bad[0])} is not finite ({trace.samples[bad[0]]})")
    for key in trace.extra:
        if key in KNOWN_KEYS or ':' in key or '\n' in key or not key.strip():
            raise TraceValidationError(f"invalid metadata key {key!r}")
    for value in trace.extra.values():
        if '\n' in str(value):
            raise TraceValidationError("metadata values must be single-line")


def format_trace(trace: IntensityTrace) -> str:
    """规范化文本 (写文件与字节比较共用)"""
    _validate_for_write(trace)
    lines = [f"# version: {CONSTANTS['TRACE_VERSION']}",
             f"# dt: {_format_float(trace.dt)}",
             f"# kind: {trace.kind.value}"]
    if trace.egg is not None:
        lines.append(f"# egg: {trace.egg}")
    if trace.roi is not None:
        lines.append(f"# roi: {trace.roi}")
    if trace.ded is not None:
        lines.append(f"# DED: {int(trace.ded)}")
    if trace.d_inj is not None:
        lines.append(f"# d_inj: {_format_float(trace.d_inj)}")
    if trace.injection_duration is not None:
        lines.append(f"# injection_duration: {_format_float(trace.injection_duration)}")
    if trace.t_start != 0.0:
        lines.append(f"# t_start: {_format_float(trace.t_start)}")
    for key in sorted(trace.extra):
        lines.append(f"# {key}: {trace.extra[key]}")
    body = pd.DataFrame({SAMPLE_COLUMN: [_format_float(v) for v in trace.samples]})
    return "\n".join(lines) + "\n" + body.to_csv(index=False, lineterminator="\n")


def write_trace(trace: IntensityTrace, path: PathLike) -> Path:
    """校验后写入；先写临时文件再替换，读者不会看到半写状态"""
    text = format_trace(trace)
    path = Path(path)
    tmp = path.with_name(path.name + '.tmp')
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, 'w', encoding='utf-8', newline='') as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise DatasetIOError(f"cannot write trace {path}: {exc}") from exc
    return path


def read_trace(path: PathLike) -> IntensityTrace:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8', newline='') as fh:
            lines = fh.read().split('\n')
    except OSError as exc:
        raise DatasetIOError(f"cannot read trace {path}: {exc}") from exc
    return parse_trace(lines, source=str(path))


def parse_trace(lines: Sequence[str], source: str = '<memory>') -> IntensityTrace:
    header: Dict[str, str] = {}
    n_header = 0
    for line in lines:
        if not line.startswith('#'):
            break
        n_header += 1
        content = line[1:].strip()
        key, sep, value = content.partition(':')
        key = key.strip()
        if not sep or not key:
            raise TraceParseError(f"{source}: malformed header entry {line!r}", line_no=n_header)
        if key in header:
            raise TraceParseError(f"{source}: duplicate header key {key!r}", line_no=n_header, field_name=key)
        header[key] = value.strip()

    for required in ('version', 'dt'):
        if required not in header:
            raise TraceParseError(f"{source}: missing header field {required!r}", field_name=required)
    if header['version'] != CONSTANTS['TRACE_VERSION']:
        raise TraceParseError(f"{source}: unsupported version {header['version']!r}",
                              line_no=_header_line(header, 'version'), field_name='version')

    def number(key: str, cast=float):
        try:
            return cast(header[key])
        except ValueError:
            raise TraceParseError(f"{source}: field {key!r} is not a number: {header[key]!r}",
                                  line_no=_header_line(header, key), field_name=key) from None

    dt = number('dt')
    if not (math.isfinite(dt) and dt > 0):
        raise TraceValidationError(f"{source}: dt must be > 0, got {dt}")
    try:
        kind = TraceKind(header.get('kind', TraceKind.RAW.value))
    except ValueError:
        raise TraceParseError(f"{source}: unknown kind {header['kind']!r}",
                              line_no=_header_line(header, 'kind'), field_name='kind') from None

    body_lines = list(lines[n_header:])
    if body_lines and body_lines[-1] == '':
        body_lines.pop()
    if not body_lines or body_lines[0].strip() != SAMPLE_COLUMN:
        raise TraceParseError(f"{source}: expected column header {SAMPLE_COLUMN!r}",
                              line_no=n_header + 1, field_name=SAMPLE_COLUMN)
    samples = _parse_body(body_lines, n_header, source)
    if samples.size < 2:
        raise TraceValidationError(f"{source}: a trace needs at least 2 samples, got {samples.size}")

    return IntensityTrace(
        dt=dt,
        samples=samples,
        kind=kind,
        egg=header.get('egg'),
        roi=header.get('roi'),
        ded=number('DED', int) if 'DED' in header else None,
        d_inj=number('d_inj') if 'd_inj' in header else None,
        injection_duration=number('injection_duration') if 'injection_duration' in header else None,
        t_start=number('t_start') if 't_start' in header else 0.0,
        extra={k: v for k, v in header.items() if k not in KNOWN_KEYS},
    )


def _header_line(header: Dict[str, str], key: str) -> int:
    return list(header).index(key) + 1


def _parse_body(body_lines: List[str], n_header: int, source: str) -> np.ndarray:
    frame = pd.read_csv(StringIO("\n".join(body_lines) + "\n"), dtype=str,
                        keep_default_na=False, skip_blank_lines=False)
    if list(frame.columns) != [SAMPLE_COLUMN]:
        raise TraceParseError(f"{source}: expected a single {SAMPLE_COLUMN!r} column",
                              line_no=n_header + 1, field_name=SAMPLE_COLUMN)
    values = np.empty(len(frame), dtype=np.float64)
    for i, raw in enumerate(frame[SAMPLE_COLUMN]):
        line_no = n_header + 2 + i
        try:
            values[i] = float(raw)
        except (TypeError, ValueError):
            raise TraceParseError(f"{source}: sample is not a number: {raw!r}",
                                  line_no=line_no, field_name=SAMPLE_COLUMN) from None
        if not math.isfinite(values[i]):
            raise TraceParseError(f"{source}: sample is not finite: {raw!r}",
                                  line_no=line_no, field_name=SAMPLE_COLUMN)
    return values


# ==============================================================================
# 2. 拟合报告
# ==============================================================================

@dataclass
class FitReport:
    """拟合结果的可序列化摘要"""
    trace_ref: str
    model_kind: str                  # injection | dist-n | acc
    parameters: Dict
    rmse: float
    objective: float
    seed: int
    n_starts: int
    converged: bool
    at_bound: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    injection: Optional[Dict[str, float]] = None
    timestamp: Optional[str] = None
    version: str = CONSTANTS['TRACE_VERSION']

    def __post_init__(self):
        if not (self.rmse >= 0):
            raise TraceValidationError(f"report rmse must be >= 0, got {self.rmse}")


def _params_dict(kind: str, params) -> Dict:
    if kind == 'injection':
        return {'t_w': params.t_w, 't_0': params.t_0}
    if kind == 'acc':
        return {'a': params.a, 'b': params.b}
    return {'components': [
        {'weight': a, 'd_eff': q.d_eff, 'v_eff': q.v_eff, 'l_eff': q.l_eff, 'd_rx': q.d_rx}
        for a, q in params.components]}


def report_timestamp(explicit: Optional[str] = None) -> Optional[str]:
    """显式时间戳优先；否则读取 SOURCE_DATE_EPOCH；都没有时为 None 以保持输出可复现"""
    if explicit:
        return explicit
    epoch = os.environ.get(CONSTANTS['TIMESTAMP_ENV'])
    if epoch:
        try:
            return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')
        except ValueError:
            logger.warning("ignoring malformed %s=%r", CONSTANTS['TIMESTAMP_ENV'], epoch)
    return None


def report_from_fit(result, trace_ref: str, inj: Optional[InjectionParams] = None,
                    timestamp: Optional[str] = None) -> FitReport:
    """FitResult -> FitReport；dist 报告同时记录所用的注射参数"""
    return FitReport(
        trace_ref=trace_ref,
        model_kind=result.model_kind,
        parameters=_params_dict(result.kind, result.params),
        rmse=result.rmse,
        objective=result.objective,
        seed=int(result.seed),
        n_starts=int(result.n_starts),
        converged=bool(result.converged),
        at_bound=list(result.at_bound),
        warnings=list(result.warnings),
        injection=_params_dict('injection', inj) if inj is not None else None,
        timestamp=timestamp,
    )


def format_report(report: FitReport) -> str:
    return json.dumps(asdict(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: FitReport, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as fh:
            fh.write(format_report(report))
    except OSError as exc:
        raise DatasetIOError(f"cannot write report {path}: {exc}") from exc
    return path


def read_report(path: PathLike) -> FitReport:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DatasetIOError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"{path}: invalid report JSON: {exc.msg}", line_no=exc.lineno) from None
    try:
        return FitReport(**data)
    except TypeError as exc:
        raise TraceParseError(f"{path}: report fields do not match: {exc}") from None


def params_from_report(report: FitReport):
    """FitReport -> (模型类别, 参数对象)"""
    p = report.parameters
    if report.model_kind == 'injection':
        return 'injection', InjectionParams(t_w=p['t_w'], t_0=p['t_0'])
    if report.model_kind == 'acc':
        return 'acc', AccumulationParams(a=p['a'], b=p['b'])
    if report.model_kind.startswith('dist-'):
        comps = tuple(
            (c['weight'], ChannelParams(d_eff=c['d_eff'], v_eff=c['v_eff'],
                                        l_eff=c['l_eff'], d_rx=c['d_rx']))
            for c in p['components'])
        return 'dist', MixtureParams(comps)
    raise TraceParseError(f"unknown model kind {report.model_kind!r}", field_name='model_kind')


def injection_from_report(report: FitReport) -> InjectionParams:
    """injection 报告取其参数；dist 报告取其记录的注射参数"""
    if report.model_kind == 'injection':
        return params_from_report(report)[1]
    if report.injection is None:
        raise TraceParseError(f"report for {report.trace_ref} carries no injection parameters",
                              field_name='injection')
    return InjectionParams(t_w=report.injection['t_w'], t_0=report.injection['t_0'])


def revalidate_report(report: FitReport, trace: IntensityTrace, atol: float = 1e-12) -> float:
    """由参数与原序列重新计算 rmse；偏差超过 atol 时抛出 TraceValidationError"""
    kind, params = params_from_report(report)
    grid = trace.grid
    if kind == 'injection':
        model = injection_profile(params, grid.times)
    elif kind == 'acc':
        model = model_acc(params, grid).samples
    else:
        model = model_dist(params, injection_from_report(report), grid).samples
    value = rmse_values(trace.samples, model)
    if abs(value - report.rmse) > atol:
        raise TraceValidationError(
            f"report rmse {report.rmse!r} does not match recomputed {value!r} for {report.trace_ref}")
    return value


# ==============================================================================
# 3. 合成数据集
# ==============================================================================

@dataclass(frozen=True)
class SynthEntry:
    """单条合成序列的真值与噪声设置"""
    name: str
    dt: float
    n_samples: int
    noise_level: float
    injection: Optional[InjectionParams] = None
    mixture: Optional[MixtureParams] = None
    accumulation: Optional[AccumulationParams] = None
    egg: Optional[str] = None
    roi: Optional[str] = None
    ded: Optional[int] = None
    d_inj: Optional[float] = None

    def __post_init__(self):
        if not self.name or '/' in self.name or '\\' in self.name:
            raise ChannelDomainError(f"invalid entry name {self.name!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ChannelDomainError(f"{self.name}: dt must be > 0")
        if self.n_samples < 2:
            raise ChannelDomainError(f"{self.name}: needs at least 2 samples")
        if not (math.isfinite(self.noise_level) and self.noise_level >= 0):
            raise ChannelDomainError(f"{self.name}: noise level must be >= 0")
        if (self.mixture is None) == (self.accumulation is None):
            raise ChannelDomainError(f"{self.name}: give exactly one of mixture or accumulation")
        if self.mixture is not None and self.injection is None:
            raise ChannelDomainError(f"{self.name}: distribution entries need injection parameters")

    @property
    def kind(self) -> TraceKind:
        return TraceKind.DIST if self.mixture is not None else TraceKind.ACC


@dataclass(frozen=True)
class SynthSpec:
    entries: Tuple[SynthEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, 'entries', tuple(self.entries))
        if not self.entries:
            raise ChannelDomainError("synthetic spec lists no entries")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ChannelDomainError("synthetic entry names must be unique")


@dataclass(frozen=True)
class SynthDataset:
    traces: Dict[str, IntensityTrace]
    truth: Dict[str, Dict]


def _truth_dict(entry: SynthEntry) -> Dict:
    out = {'kind': entry.kind.value, 'dt': entry.dt, 'n_samples': entry.n_samples,
           'noise_level': entry.noise_level}
    if entry.mixture is not None:
        out['injection'] = _params_dict('injection', entry.injection)
        out.update(_params_dict('dist', entry.mixture))
    else:
        out['accumulation'] = _params_dict('acc', entry.accumulation)
    for key in ('egg', 'roi', 'ded', 'd_inj'):
        value = getattr(entry, key)
        if value is not None:
            out[key] = value
    return out


def synth_dataset(spec: SynthSpec, seed: int) -> SynthDataset:
    """
    正演模型 + 高斯噪声；第 i 条序列使用 SeedSequence([seed, i]) 派生的独立随机流
    """
    traces: Dict[str, IntensityTrace] = {}
    truth: Dict[str, Dict] = {}
    for idx, entry in enumerate(spec.entries):
        grid = TimeGrid(dt=entry.dt, n=entry.n_samples)
        if entry.mixture is not None:
            clean = model_dist(entry.mixture, entry.injection, grid).samples
        else:
            clean = model_acc(entry.accumulation, grid).samples
        values = clean
        if entry.noise_level > 0:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), idx]))
            values = clean + rng.normal(0.0, entry.noise_level, size=clean.size)
        traces[entry.name] = IntensityTrace(
            dt=entry.dt, samples=values, kind=entry.kind,
            egg=entry.egg, roi=entry.roi, ded=entry.ded, d_inj=entry.d_inj,
            injection_duration=entry.injection.t_w if entry.injection is not None else None,
            extra={'synthetic': 'true', 'seed': str(int(seed))},
        )
        truth[entry.name] = _truth_dict(entry)
    logger.info("synthesized %d traces (seed=%d)", len(traces), seed)
    return SynthDataset(traces=traces, truth=truth)


# 各参数集的均值 (D_eff m^2/s, v_eff m/s, L_eff m, d_rx m)
PRIMARY_MEANS = (5.7e-6, 3.0e-3, 4.0e-2, 2.2e-2)
SECONDARY_MEANS = (4.8e-6, 1.6e-3, 3.5e-2, 1.4e-2)


def default_synth_spec(n_traces: int = 69, n_eggs: int = 25, seed: int = CONSTANTS['DEFAULT_SEED'],
                       noise_level: float = 0.01, dt: float = 0.1, duration: float = 80.0,
                       jitter: float = 0.25) -> SynthSpec:
    """
    桌面规模的数据集: 每条序列为两环混合，参数围绕数据集均值对数正态抖动，
    次分量权重 U[0.05, 0.35]，DED 取 8..15
    """
    if n_traces < 1 or n_eggs < 1:
        raise ChannelDomainError("need at least one trace and one egg")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    n_samples = int(round(duration / dt)) + 1
    eggs = [str(i + 1) for i in range(n_eggs)]
    egg_ded = {egg: int(rng.integers(8, 16)) for egg in eggs}
    roi_counter: Dict[str, int] = {}

    entries = []
    for i in range(n_traces):
        egg = eggs[i % n_eggs]
        roi_counter[egg] = roi_counter.get(egg, 0) + 1

        def draw(means):
            d_eff, v_eff, l_eff, d_frac = (
                means[0] * math.exp(jitter * rng.standard_normal()),
                means[1] * math.exp(jitter * rng.standard_normal()),
                means[2] * math.exp(jitter * rng.standard_normal()),
                min(max(means[3] / means[2] * math.exp(jitter * rng.standard_normal()), 0.1), 0.9),
            )
            return ChannelParams(d_eff=d_eff, v_eff=v_eff, l_eff=l_eff, d_rx=d_frac * l_eff)

        q1 = draw(PRIMARY_MEANS)
        q2 = draw(SECONDARY_MEANS)
        a2 = float(rng.uniform(0.05, 0.35))
        inj = InjectionParams(t_w=float(rng.uniform(1.0, 4.0)), t_0=float(rng.uniform(0.5, 2.0)))
        entries.append(SynthEntry(
            name=f"egg{egg}_roi{roi_counter[egg]}",
            dt=dt, n_samples=n_samples, noise_level=noise_level,
            injection=inj,
            mixture=MixtureParams(((1.0 - a2, q1), (a2, q2))),
            egg=egg, roi=str(roi_counter[egg]), ded=egg_ded[egg],
            d_inj=q1.d_rx * float(rng.uniform(0.6, 1.0)),
        ))
    return SynthSpec(tuple(entries))


def write_dataset(dataset: SynthDataset, out_dir: PathLike) -> List[Path]:
    """每条序列一个文件，真值写入 ground_truth.json"""
    out_dir = Path(out_dir)
    paths = [write_trace(trace, out_dir / f"{name}.csv") for name, trace in dataset.traces.items()]
    truth_path = out_dir / 'ground_truth.json'
    try:
        with open(truth_path, 'w', encoding='utf-8', newline='') as fh:
            fh.write(json.dumps(dataset.truth, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write {truth_path}: {exc}") from exc
    paths.append(truth_path)
    return paths


def read_ground_truth(path: PathLike) -> Dict[str, Dict]:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            return json.load(fh)
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
