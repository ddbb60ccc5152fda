# -*- coding: utf-8 -*-
"""
Exp3_Dataset_Nesting.py
实验3：合成数据集上的单环 / 双环拟合与嵌套检验 (多进程并行)

【流程】
1. default_synth_spec 生成 69 条两环混合序列 (25 个 egg)，写入 dataset/ (含 ground_truth.json)。
2. 每条序列: dist-1 拟合 -> 以其解为嵌套起点做 dist-2 拟合，报告写入 reports/。
3. FitAnalytics 汇总: RMSE 统计、tau(15%) 筛选后的参数均值、嵌套检验表。
4. 第一条序列另存 测量 / dist-1 / dist-2 叠加表，供 Exp3_Figure.py 使用。
"""

import logging
import os
import time
import concurrent.futures
from typing import Dict

import pandas as pd

from dataset_io import (default_synth_spec, read_trace, report_from_fit,
                        synth_dataset, write_dataset, write_report)
from framework import InjectionParams
from Model_Config import MODEL_LIBRARY, MODELS_TO_RUN
from Tool import FitAnalytics

N_TRACES = 69
N_EGGS = 25
SEED = 2024
SCREEN_Q = 0.15
MAX_WORKERS = max(1, os.cpu_count() - 2)
OUTPUT_DIR = "Results_Exp3_Dataset"

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(message)s', datefmt='%H:%M:%S')
logger = logging.getLogger("Exp3_Main")
logging.getLogger('curve_fitting').setLevel(logging.WARNING)


def fit_trace_task(task: Dict) -> Dict:
    """
    【Worker 进程函数】对一条序列依次运行 MODELS_TO_RUN，后一个模型嵌套在前一个的解上
    """
    output = {'name': task['name'], 'reports': [], 'overlay': None, 'errors': []}
    try:
        trace = read_trace(task['path'])
        inj = InjectionParams(**task['injection'])
        solved = {}
        overlay = {'time_s': trace.times, 'measured': trace.samples}
        for key in MODELS_TO_RUN:
            entry = MODEL_LIBRARY[key]
            params = dict(entry['params'])
            nested_on = entry.get('nested_on')
            nested = solved[nested_on].params if nested_on in solved else None
            result = entry['fit'](trace, inj=inj, seed=task['seed'], nested_from=nested, **params)
            solved[key] = result
            overlay[key] = result.model.samples
            output['reports'].append(report_from_fit(result, task['name'], inj=inj))
        if task['keep_overlay']:
            output['overlay'] = overlay
    except Exception as e:
        output['errors'].append(f"{task['name']} failed: {e}")
    return output


def run_dataset_experiment():
    print(f"\n{'=' * 60}")
    print("🚀 启动 Exp3: 合成数据集嵌套检验")
    print(f"{'=' * 60}")
    dataset_dir = os.path.join(OUTPUT_DIR, "dataset")
    report_dir = os.path.join(OUTPUT_DIR, "reports")
    summary_dir = os.path.join(OUTPUT_DIR, "summary")

    dataset = synth_dataset(default_synth_spec(N_TRACES, N_EGGS, seed=SEED), seed=SEED)
    write_dataset(dataset, dataset_dir)
    print(f"💾 {len(dataset.traces)} 条序列 -> {dataset_dir}")

    tasks = [{
        'name': name,
        'path': os.path.join(dataset_dir, f"{name}.csv"),
        'injection': dataset.truth[name]['injection'],
        'seed': SEED,
        'keep_overlay': idx == 0,
    } for idx, name in enumerate(sorted(dataset.traces))]

    analytics = FitAnalytics()
    completed = 0
    start_time = time.time()
    with concurrent.futures.ProcessPoolExecutor(max_workers=MAX_WORKERS) as executor:
        future_to_task = {executor.submit(fit_trace_task, t): t for t in tasks}
        for future in concurrent.futures.as_completed(future_to_task):
            task_info = future_to_task[future]
            completed += 1
            try:
                data = future.result()
                for err in data['errors']:
                    logger.error(f"❌ {err}")
                for report in data['reports']:
                    write_report(report, os.path.join(report_dir,
                                                      f"{report.trace_ref}.{report.model_kind}.report.json"))
                    analytics.add_report(report, truth=dataset.truth[report.trace_ref],
                                         meta={'egg': dataset.traces[report.trace_ref].egg})
                if data['overlay'] is not None:
                    os.makedirs(OUTPUT_DIR, exist_ok=True)
                    pd.DataFrame(data['overlay']).to_csv(
                        os.path.join(OUTPUT_DIR, "overlay_first_trace.csv"),
                        index=False, lineterminator="\n")
            except Exception as exc:
                logger.error(f"\n❌ System Error processing task {task_info['name']}: {exc}")
            elapsed = time.time() - start_time
            eta = elapsed / completed * (len(tasks) - completed)
            print(f"\r[{completed:3d}/{len(tasks)}] {task_info['name']:<14s} ETA: {eta:.0f}s ",
                  end="", flush=True)

    print(f"\n\n✅ 拟合结束! 总耗时: {time.time() - start_time:.1f}s")
    files = analytics.save_to_csv(summary_dir, q=SCREEN_Q)
    print(analytics.rmse_summary(q=SCREEN_Q).to_string())
    nesting = analytics.nesting_table()
    if not nesting.empty:
        held = int(nesting['nested'].sum())
        print(f"🔍 嵌套关系 rmse(dist-2) <= rmse(dist-1): {held}/{len(nesting)}")
        if held < len(nesting):
            logger.error("❌ nesting violated on %d traces", len(nesting) - held)
    print(f"💾 {len(files)} 个汇总文件 -> {summary_dir}")


if __name__ == "__main__":
    run_dataset_experiment()
