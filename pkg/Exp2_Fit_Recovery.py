# -*- coding: utf-8 -*-
"""
Exp2_Fit_Recovery.py
实验2：参数恢复测试 (多进程并行)

【实验设置】
三个拟合问题，每个重复 N_SEEDS 个噪声种子：
  injection : t_w = 3 s, t_0 = 1 s, dt = 0.04 s，噪声 5% 峰值
  dist-1    : Q = (5e-6 m^2/s, 3.5 mm/s, 3.4 cm, 1.7 cm)，注射 (3, 1)，dt = 0.1 s，60 s
  acc       : a = 0.6, b = 0.01 1/s，1 h，dt = 1 s，噪声 1%
dist 问题中 L_eff 的搜索区间固定在真值 +-5% (稳态归一化模型在 x, L, v ~ c, D ~ c^2
缩放下不变，单条序列不能同时辨识全部长度尺度)。
判据: 各参数相对误差的中位数 injection <= 10%, acc <= 5%, dist <= 10%。
"""

import logging
import os
import random
import time
import concurrent.futures
from typing import Dict

import numpy as np
import pandas as pd

from curve_fitting import SearchSpace, fit_acc, fit_dist, fit_injection
from framework import (AccumulationParams, ChannelParams, InjectionParams, MixtureParams,
                       TimeGrid)
from signal_model import injection_trace, model_acc, model_dist

N_SEEDS = 20
MAX_WORKERS = max(1, os.cpu_count() - 2)
OUTPUT_DIR = "Results_Exp2_Recovery"

TRUE_INJ = InjectionParams(t_w=3.0, t_0=1.0)
TRUE_Q = ChannelParams(d_eff=5e-6, v_eff=3.5e-3, l_eff=3.4e-2, d_rx=1.7e-2)
TRUE_ACC = AccumulationParams(a=0.6, b=0.01)

CASES = {
    'injection': {'noise': 0.05, 'limit': 0.10, 'starts': 8},
    'dist-1': {'noise': 0.01, 'limit': 0.10, 'starts': 16},
    'acc': {'noise': 0.01, 'limit': 0.05, 'starts': 8},
}

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(message)s', datefmt='%H:%M:%S')
logger = logging.getLogger("Exp2_Main")
logging.getLogger('curve_fitting').setLevel(logging.WARNING)


def _relative_errors(truth: Dict[str, float], fitted: Dict[str, float]) -> Dict[str, float]:
    return {f"err_{k}": abs(fitted[k] - v) / abs(v) for k, v in truth.items()}


def recovery_task(task: Dict) -> Dict:
    """
    【Worker 进程函数】生成带噪序列并拟合，只通过返回值汇报
    """
    case, seed = task['case'], task['seed']
    output = {'results': [], 'errors': []}
    try:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
        conf = CASES[case]
        if case == 'injection':
            clean = injection_trace(TRUE_INJ, TimeGrid.from_duration(0.04, 8.0))
            noisy = clean.with_samples(clean.samples + rng.normal(
                0.0, conf['noise'] * clean.samples.max(), size=len(clean)))
            fit = fit_injection(noisy, starts=conf['starts'], seed=seed)
            truth = {'t_w': TRUE_INJ.t_w, 't_0': TRUE_INJ.t_0}
            fitted = {'t_w': fit.params.t_w, 't_0': fit.params.t_0}
        elif case == 'dist-1':
            clean = model_dist(MixtureParams.single(TRUE_Q), TRUE_INJ, TimeGrid.from_duration(0.1, 60.0))
            noisy = clean.with_samples(clean.samples + rng.normal(0.0, conf['noise'], size=len(clean)))
            space = SearchSpace().with_bounds(l_eff=(TRUE_Q.l_eff * 0.95, TRUE_Q.l_eff * 1.05))
            fit = fit_dist(noisy, 1, TRUE_INJ, space=space, starts=conf['starts'], seed=seed)
            q = fit.params.components[0][1]
            truth = {'d_eff': TRUE_Q.d_eff, 'v_eff': TRUE_Q.v_eff, 'd_rx': TRUE_Q.d_rx}
            fitted = {'d_eff': q.d_eff, 'v_eff': q.v_eff, 'd_rx': q.d_rx}
        else:
            clean = model_acc(TRUE_ACC, TimeGrid.from_duration(1.0, 3600.0))
            noisy = clean.with_samples(clean.samples + rng.normal(0.0, conf['noise'], size=len(clean)))
            fit = fit_acc(noisy, starts=conf['starts'], seed=seed)
            truth = {'a': TRUE_ACC.a, 'b': TRUE_ACC.b}
            fitted = {'a': fit.params.a, 'b': fit.params.b}

        output['results'].append({
            'case': case, 'seed': seed, 'rmse': fit.rmse,
            'converged': fit.converged, 'n_at_bound': len(fit.at_bound),
            **{f"fit_{k}": v for k, v in fitted.items()},
            **_relative_errors(truth, fitted),
        })
    except Exception as e:
        output['errors'].append(f"{case} seed={seed} failed: {e}")
    return output


def run_parallel_experiment():
    print(f"\n{'=' * 60}")
    print("🚀 启动 Exp2: 参数恢复 (Parallel)")
    print(f"{'=' * 60}")
    print(f"⚙️  Worker: {MAX_WORKERS} | 种子数: {N_SEEDS} | 问题: {list(CASES)}")

    tasks = [{'case': c, 'seed': s} for c in CASES for s in range(N_SEEDS)]
    random.Random(0).shuffle(tasks)
    records, completed = [], 0
    start_time = time.time()

    with concurrent.futures.ProcessPoolExecutor(max_workers=MAX_WORKERS) as executor:
        future_to_task = {executor.submit(recovery_task, t): t for t in tasks}
        for future in concurrent.futures.as_completed(future_to_task):
            task_info = future_to_task[future]
            completed += 1
            try:
                data = future.result()
                for err in data['errors']:
                    logger.error(f"❌ {err}")
                records.extend(data['results'])
            except Exception as exc:
                logger.error(f"\n❌ System Error processing task {task_info}: {exc}")
            bar_len = 30
            filled = int(bar_len * completed // len(tasks))
            print(f"\r[{'█' * filled}{'-' * (bar_len - filled)}] {completed / len(tasks):6.1%}",
                  end="", flush=True)

    print(f"\n\n✅ 实验结束! 总耗时: {time.time() - start_time:.1f}s")
    os.makedirs(OUTPUT_DIR, exist_ok=True)
    df = pd.DataFrame(records).sort_values(['case', 'seed'])
    df.to_csv(os.path.join(OUTPUT_DIR, "00_Raw_Full_Data.csv"), index=False, lineterminator="\n")

    rows = []
    for case, group in df.groupby('case'):
        err_cols = [c for c in group.columns if c.startswith('err_') and group[c].notna().any()]
        medians = group[err_cols].median()
        rows.append({'case': case, 'runs': len(group),
                     **{f"median_{c}": v for c, v in medians.items()},
                     'passed': bool((medians <= CASES[case]['limit']).all())})
    summary = pd.DataFrame(rows)
    summary.to_csv(os.path.join(OUTPUT_DIR, "recovery_summary.csv"), index=False, lineterminator="\n")
    print(summary.to_string(index=False))


if __name__ == "__main__":
    run_parallel_experiment()
