# -*- coding: utf-8 -*-
"""
cli.py
命令行入口 (Command-line Front End)

子命令:
  analytic   写出位置 x 处的 p_n / p_wn 序列与峰值时间表
  simulate   运行 PBS 并写出包含 x 的分箱浓度序列
  fit        对序列拟合 injection / dist (n 环) / acc 模型，写出报告与模型序列
  compare    PBS 序列与解析曲线的偏差报告
  synth      生成带真值的合成数据集
  summarize  汇总一批拟合报告 (RMSE 统计、15% 阈值筛选、嵌套检查)

退出码: 0 成功，1 输入/定义域错误，2 用法错误，3 拟合未收敛 (报告仍写出)
数值参数接受 SI 单位及后缀，例如 0.39mm、50um/s、1ms。
"""

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from analytic_model import concentration_trace, dispersion_coefficient, peak_times
from curve_fitting import DEFAULT_BOUNDS, SearchSpace, rmse_values
from dataset_io import (default_synth_spec, injection_from_report, params_from_report,
                        read_report, read_trace, report_from_fit, report_timestamp,
                        synth_dataset, write_dataset, write_report, write_trace)
from framework import (ChannelDomainError, ChannelParams, DispersionInputs,
                       GridMismatchError, InjectionParams, TimeGrid, TraceKind,
                       WnLoopError, default_seed)
from Model_Config import model_entry
from pbs_simulator import PbsConfig, check_budget, pbs_result_to_trace, run_pbs
from signal_model import derivative, steady_state_gap
from Tool import FitAnalytics

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3

STEADY_MISMATCH_THRESHOLD = 0.25


class UsageError(WnLoopError):
    """解析后才能发现的参数组合错误"""


# ==============================================================================
# 1. 单位解析
# ==============================================================================

UNITS: Dict[str, Dict[str, float]] = {
    'length': {'': 1.0, 'm': 1.0, 'cm': 1e-2, 'mm': 1e-3, 'um': 1e-6, 'μm': 1e-6, 'µm': 1e-6},
    'time': {'': 1.0, 's': 1.0, 'ms': 1e-3, 'min': 60.0, 'h': 3600.0},
    'velocity': {'': 1.0, 'm/s': 1.0, 'cm/s': 1e-2, 'mm/s': 1e-3, 'um/s': 1e-6,
                 'μm/s': 1e-6, 'µm/s': 1e-6},
    'diffusivity': {'': 1.0, 'm2/s': 1.0, 'm^2/s': 1.0, 'm²/s': 1.0,
                    'mm2/s': 1e-6, 'um2/s': 1e-12, 'μm2/s': 1e-12},
}

_QUANTITY = re.compile(r'^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$')


def parse_quantity(text: str, dimension: str) -> float:
    """'0.39mm' -> 3.9e-4；未知单位抛出 ArgumentTypeError"""
    match = _QUANTITY.match(text)
    if not match:
        raise argparse.ArgumentTypeError(f"not a number with optional unit: {text!r}")
    value, unit = match.groups()
    table = UNITS[dimension]
    if unit not in table:
        allowed = ", ".join(u for u in table if u)
        raise argparse.ArgumentTypeError(f"unknown {dimension} unit {unit!r} in {text!r} (use {allowed})")
    return float(value) * table[unit]


def _quantity_type(dimension: str):
    def convert(text: str) -> float:
        return parse_quantity(text, dimension)
    convert.__name__ = dimension
    return convert


LENGTH = _quantity_type('length')
TIME = _quantity_type('time')
VELOCITY = _quantity_type('velocity')
DIFFUSIVITY = _quantity_type('diffusivity')


def _bound_override(text: str):
    """NAME=LO:HI (SI 数值)"""
    name, sep, rng = text.partition('=')
    lo, sep2, hi = rng.partition(':')
    if not sep or not sep2 or name not in DEFAULT_BOUNDS:
        raise argparse.ArgumentTypeError(
            f"bound must look like NAME=LO:HI with NAME in {sorted(DEFAULT_BOUNDS)}, got {text!r}")
    try:
        return name, (float(lo), float(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bound limits must be numbers: {text!r}") from None


# ==============================================================================
# 2. 参数定义
# ==============================================================================

def _add_common(p: argparse.ArgumentParser, threads: bool = False, seed: bool = False):
    p.add_argument('--verbose', action='store_true', help='debug logging')
    if threads:
        p.add_argument('--threads', type=int, default=os.cpu_count() or 1,
                       help='worker processes (default: available cores)')
    if seed:
        p.add_argument('--seed', type=int, default=None,
                       help='master seed (default: $WNLOOP_SEED or 2024)')


def _add_channel(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument('--l-eff', type=LENGTH, required=required, help='loop length, e.g. 1mm')
    p.add_argument('--v-eff', type=VELOCITY, required=required, help='mean flow velocity, e.g. 50um/s')
    p.add_argument('--d-eff', type=DIFFUSIVITY, help='effective diffusion coefficient m2/s')
    p.add_argument('--d-molecular', type=DIFFUSIVITY,
                   help='molecular diffusion coefficient (with --r0, D_eff from Aris-Taylor)')
    p.add_argument('--r0', type=LENGTH, help='tube radius')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='wnloop', description='Wrapped-normal closed-loop channel toolkit')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('analytic', help='write p_n and p_wn traces at position x')
    _add_channel(p)
    p.add_argument('--x', type=LENGTH, required=True, help='observation position along the loop')
    p.add_argument('--dt', type=TIME, default=1e-3)
    p.add_argument('--t-end', type=TIME, required=True)
    p.add_argument('--peaks', type=int, default=2, help='annotate peak times for k = 0..PEAKS')
    p.add_argument('--normalize', choices=['none', 'steady-state'], default='none')
    p.add_argument('--tol', type=float, default=None, help='image-sum truncation tolerance')
    p.add_argument('--out-dir', type=Path, required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_analytic)

    p = sub.add_parser('simulate', help='particle-based simulation of the loop')
    p.add_argument('--l-eff', type=LENGTH, required=True)
    p.add_argument('--r0', type=LENGTH, required=True)
    p.add_argument('--d-molecular', type=DIFFUSIVITY, required=True)
    p.add_argument('--v-eff', type=VELOCITY, required=True)
    p.add_argument('--particles', type=int, default=2000)
    p.add_argument('--dt', type=TIME, default=1e-3)
    p.add_argument('--t-end', type=TIME, required=True)
    p.add_argument('--realizations', type=int, default=20)
    p.add_argument('--bin-width', type=LENGTH, default=None, help='default: l_eff / 100')
    p.add_argument('--sample-every', type=int, default=100, help='record every N steps')
    p.add_argument('--x', type=LENGTH, action='append', required=True,
                   help='observation position (repeatable)')
    p.add_argument('--normalize', choices=['none', 'steady-state'], default='none')
    p.add_argument('--out-dir', type=Path, required=True)
    _add_common(p, threads=True, seed=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('fit', help='fit a model to a trace file')
    p.add_argument('--trace', type=Path, required=True)
    p.add_argument('--model', choices=['injection', 'dist', 'acc'], required=True)
    p.add_argument('--n', type=int, default=1, help='number of loops for --model dist')
    p.add_argument('--starts', type=int, default=None)
    p.add_argument('--inj-tw', type=TIME, default=None, help='injection duration for dist fits')
    p.add_argument('--inj-t0', type=TIME, default=None, help='injection start for dist fits')
    p.add_argument('--inj-report', type=Path, default=None,
                   help='take injection parameters from an injection or dist report')
    p.add_argument('--nested-report', type=Path, default=None,
                   help='dist report with fewer loops used as the duplicate-component start')
    p.add_argument('--differentiate', action='store_true',
                   help='fit the backward-difference derivative of the trace (mean intensity -> f_inj)')
    p.add_argument('--bound', type=_bound_override, action='append', default=[],
                   help='override a search interval, NAME=LO:HI in SI units')
    p.add_argument('--timestamp', default=None, help='report timestamp (default: $SOURCE_DATE_EPOCH or none)')
    p.add_argument('--out-dir', type=Path, default=None, help='default: directory of --trace')
    _add_common(p, threads=True, seed=True)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser('compare', help='deviation between a PBS trace and an analytic curve')
    p.add_argument('--pbs-trace', type=Path, required=True)
    p.add_argument('--analytic-trace', type=Path, default=None,
                   help='precomputed analytic trace instead of channel flags')
    _add_channel(p, required=False)
    p.add_argument('--x', type=LENGTH, default=None)
    p.add_argument('--reference', choices=['wrapped', 'normal'], default='wrapped')
    p.add_argument('--resample', action='store_true', help='interpolate the analytic trace onto the PBS grid')
    p.add_argument('--out-dir', type=Path, required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser('synth', help='generate a synthetic dataset with ground truth')
    p.add_argument('--n-traces', type=int, default=69)
    p.add_argument('--n-eggs', type=int, default=25)
    p.add_argument('--noise', type=float, default=0.01)
    p.add_argument('--dt', type=TIME, default=0.1)
    p.add_argument('--duration', type=TIME, default=80.0)
    p.add_argument('--out-dir', type=Path, required=True)
    _add_common(p, seed=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser('summarize', help='aggregate fit reports')
    p.add_argument('--report-dir', type=Path, required=True)
    p.add_argument('--q', type=float, default=0.15, help='screening quantile')
    p.add_argument('--out-dir', type=Path, required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_summarize)
    return parser


# ==============================================================================
# 3. 子命令
# ==============================================================================

def _resolve_d_eff(args) -> float:
    has_direct = args.d_eff is not None
    has_aris = args.d_molecular is not None or args.r0 is not None
    if has_direct and has_aris:
        raise UsageError("give either --d-eff or --d-molecular with --r0, not both")
    if has_direct:
        return args.d_eff
    if args.d_molecular is None or args.r0 is None:
        raise UsageError("the following arguments are required: --d-eff (or --d-molecular and --r0)")
    return dispersion_coefficient(DispersionInputs(args.d_molecular, args.r0, abs(args.v_eff)))


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def _observation_point(args):
    """(规范化后的信道, 观测位置)；反向流动时观测位置按环对称映射，与 ChannelParams 的规范化一致"""
    d_eff = _resolve_d_eff(args)
    q = ChannelParams(d_eff=d_eff, v_eff=args.v_eff, l_eff=args.l_eff, d_rx=0.0)
    if not (0.0 <= args.x <= args.l_eff):
        raise ChannelDomainError(f"--x={args.x} m lies outside [0, l_eff={args.l_eff} m]")
    x = args.x if args.v_eff >= 0 else (args.l_eff - args.x) % args.l_eff
    return q, x


def cmd_analytic(args) -> int:
    q, x = _observation_point(args)
    d_eff = q.d_eff
    grid = TimeGrid.from_duration(args.dt, args.t_end, t_start=args.dt)
    kwargs = {} if args.tol is None else {'tol': args.tol}
    pwn = concentration_trace(q, x, grid, model='wrapped', **kwargs)
    pn = concentration_trace(q, x, grid, model='normal')
    scale = q.l_eff if args.normalize == 'steady-state' else 1.0
    pwn = pwn.with_samples(pwn.samples * scale, extra=dict(pwn.extra, normalization=args.normalize))
    pn = pn.with_samples(pn.samples * scale, extra=dict(pn.extra, normalization=args.normalize))

    out = args.out_dir
    write_trace(pn, out / 'pn.csv')
    write_trace(pwn, out / 'pwn.csv')
    _write_frame(pd.DataFrame({'time': grid.times, 'pn': pn.samples, 'pwn': pwn.samples}),
                 out / 'analytic_overlay.csv')

    print(f"📈 D_eff = {d_eff:.4e} m^2/s | x = {args.x:.4e} m | {grid.n} samples")
    if q.v_eff > 0:
        peaks = peak_times(ChannelParams(d_eff, q.v_eff, q.l_eff, d_rx=x % q.l_eff), args.peaks)
        _write_frame(pd.DataFrame({'k': list(range(len(peaks))), 't_max': peaks}), out / 'peaks.csv')
        print("   peak times: " + ", ".join(f"k={k}: {t:.4f} s" for k, t in enumerate(peaks)))
    else:
        logger.warning("v_eff = 0: peak times are undefined, peaks.csv not written")
    print(f"   steady level 1/L_eff = {1.0 / q.l_eff:.6g} 1/m | files in {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    cfg = PbsConfig(
        l_eff=args.l_eff, r0=args.r0, d_molecular=args.d_molecular, v_eff=args.v_eff,
        n_particles=args.particles, dt=args.dt, t_end=args.t_end,
        n_realizations=args.realizations, master_seed=seed,
        bin_width=args.bin_width, sample_every=args.sample_every,
    )
    for x in args.x:
        if not (0.0 <= x <= cfg.l_eff):
            raise ChannelDomainError(f"--x={x} m lies outside [0, l_eff={cfg.l_eff} m]")
    print(f"🧮 particle-step budget: {cfg.particle_steps:.3e} "
          f"({cfg.n_particles} particles x {cfg.n_steps} steps x {cfg.n_realizations} realizations)")
    check_budget(cfg)
    result = run_pbs(cfg, threads=max(1, args.threads))
    for i, x in enumerate(args.x):
        path = write_trace(pbs_result_to_trace(result, x, args.normalize), args.out_dir / f"pbs_x{i}.csv")
        print(f"   x = {x:.4e} m -> {path}")
    return EXIT_OK


def _injection_for(args) -> InjectionParams:
    if args.inj_report is not None:
        if args.inj_tw is not None or args.inj_t0 is not None:
            raise UsageError("give --inj-report or --inj-tw/--inj-t0, not both")
        return injection_from_report(read_report(args.inj_report))
    if args.inj_tw is None or args.inj_t0 is None:
        raise UsageError("dist fits need --inj-tw and --inj-t0 (or --inj-report)")
    return InjectionParams(t_w=args.inj_tw, t_0=args.inj_t0)


def cmd_fit(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    try:
        entry = model_entry(args.model, args.n)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    if args.model != 'dist' and (args.n != 1 or args.nested_report is not None):
        raise UsageError("--n and --nested-report only apply to --model dist")

    trace = read_trace(args.trace)
    if args.differentiate:
        deriv = derivative(trace)
        trace = deriv.with_samples(deriv.samples, kind=TraceKind.INJ)
    space = SearchSpace(dict(args.bound))
    params = dict(entry["params"])
    if args.starts is not None:
        params["starts"] = args.starts

    inj = None
    kwargs = dict(space=space, seed=seed, threads=max(1, args.threads), **params)
    if args.model == 'dist':
        inj = _injection_for(args)
        kwargs['inj'] = inj
        if args.nested_report is not None:
            kind, nested = params_from_report(read_report(args.nested_report))
            if kind != 'dist' or nested.n >= args.n:
                raise UsageError("--nested-report must be a dist report with fewer loops than --n")
            kwargs['nested_from'] = nested
    result = entry["fit"](trace, **kwargs)

    out_dir = args.out_dir or args.trace.parent
    stem = args.trace.stem
    report = report_from_fit(result, trace_ref=args.trace.name, inj=inj,
                             timestamp=report_timestamp(args.timestamp))
    report_path = write_report(report, out_dir / f"{stem}.{result.model_kind}.report.json")
    model_path = write_trace(result.model, out_dir / f"{stem}.{result.model_kind}.model.csv")

    status = "✅ converged" if result.converged else "⚠️ not converged"
    print(f"{status} | {result.model_kind} | rmse = {result.rmse:.6g} | objective = {result.objective:.6g} "
          f"| starts = {result.n_starts} | seed = {seed}")
    for name in result.at_bound:
        print(f"   at bound: {name}")
    for warning in result.warnings:
        print(f"   warning: {warning}")
    print(f"   report -> {report_path}\n   model  -> {model_path}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_compare(args) -> int:
    pbs = read_trace(args.pbs_trace)
    if args.analytic_trace is not None:
        reference = read_trace(args.analytic_trace)
        if pbs.same_grid(reference):
            ref_values = reference.samples.copy()
        elif args.resample:
            ref_values = np.interp(pbs.times, reference.times, reference.samples)
        else:
            raise GridMismatchError(
                f"grids differ (dt {pbs.dt} vs {reference.dt}, n {len(pbs)} vs {len(reference)}); "
                f"pass --resample to interpolate")
        mask = np.ones(len(pbs), dtype=bool)
    else:
        if args.l_eff is None or args.v_eff is None or args.x is None:
            raise UsageError("without --analytic-trace, --l-eff, --v-eff and --x are required")
        q, x = _observation_point(args)
        # t = 0 时解析解为 delta 分布，不参与比较
        mask = pbs.times > 0
        ref_values = np.zeros(len(pbs))
        grid_times = pbs.times[mask]
        sub_grid = TimeGrid(dt=pbs.dt, n=int(mask.sum()), t_start=float(grid_times[0]))
        model = 'wrapped' if args.reference == 'wrapped' else 'normal'
        ref_values[mask] = concentration_trace(q, x, sub_grid, model=model).samples
        if pbs.extra.get('normalization') == 'steady-state':
            ref_values *= q.l_eff

    measured = pbs.samples[mask]
    analytic = ref_values[mask]
    peak = float(np.max(np.abs(analytic)))
    if peak <= 0.0:
        raise ChannelDomainError("analytic reference is identically zero; cannot normalize deviation")
    deviation = np.abs(measured - analytic)
    gap = steady_state_gap(pbs.with_samples(measured), pbs.with_samples(analytic))
    report = {
        'reference': args.reference if args.analytic_trace is None else 'trace',
        'n_samples': int(measured.size),
        'analytic_peak': peak,
        'max_abs_deviation': float(deviation.max()) / peak,
        'mean_abs_deviation': float(deviation.mean()) / peak,
        'rmse': rmse_values(measured, analytic) if measured.size > 1 else 0.0,
        'steady_state_gap': gap,
        'steady_state_mismatch': bool(gap > STEADY_MISMATCH_THRESHOLD),
    }
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / 'deviation.json', 'w', encoding='utf-8', newline='') as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    _write_frame(pd.DataFrame({'time': pbs.times[mask], 'pbs': measured, 'analytic': analytic}),
                 out / 'compare_overlay.csv')

    print(f"📊 max |dev| / peak = {report['max_abs_deviation']:.4f} | "
          f"mean |dev| / peak = {report['mean_abs_deviation']:.4f}")
    if report['steady_state_mismatch']:
        print(f"⚠️ steady-state mismatch: tail levels differ by {gap:.1%}")
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    spec = default_synth_spec(n_traces=args.n_traces, n_eggs=args.n_eggs, seed=seed,
                              noise_level=args.noise, dt=args.dt, duration=args.duration)
    dataset = synth_dataset(spec, seed)
    paths = write_dataset(dataset, args.out_dir)
    print(f"🧪 {len(dataset.traces)} traces + ground truth -> {args.out_dir} ({len(paths)} files)")
    return EXIT_OK


def cmd_summarize(args) -> int:
    report_paths = sorted(args.report_dir.glob('*.report.json'))
    if not report_paths:
        raise ChannelDomainError(f"no *.report.json files in {args.report_dir}")
    analytics = FitAnalytics()
    for path in report_paths:
        analytics.add_report(read_report(path))
    files = analytics.save_to_csv(args.out_dir, q=args.q)
    summary = analytics.rmse_summary(q=args.q)
    print(summary.to_string())
    nesting = analytics.nesting_table()
    if not nesting.empty and 'nested' in nesting:
        print(f"   nesting holds on {int(nesting['nested'].sum())}/{len(nesting)} traces")
    print(f"   {len(files)} files -> {args.out_dir}")
    return EXIT_OK


# ==============================================================================
# 4. 入口
# ==============================================================================

def _configure_logging(verbose: bool):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s - %(message)s', datefmt='%H:%M:%S')
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    _configure_logging(args.verbose)
    try:
        return args.handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WnLoopError, OSError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
