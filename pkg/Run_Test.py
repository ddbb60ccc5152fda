# -*- coding: utf-8 -*-
"""
Run_Test.py
确定性与健全性循环测试 (Robustness Loop)

【说明】
1. 多轮次循环，每轮使用独立种子，失败案例单独记录 (种子 / 线程数 / 原因)。
2. PBS: 同一配置在 1 / 2 / 全部线程下运行，计数数组的 SHA-256 必须一致。
3. 拟合: 同一序列在 1 / 2 / 全部线程下做 dist-1 与嵌套 dist-2 拟合，报告 JSON 的 SHA-256 必须一致，
   且 rmse(dist-2) <= rmse(dist-1)。
4. pandas 汇总表展示通过率与平均耗时。
"""

import hashlib
import logging
import os
import time
from typing import Dict, List

import numpy as np
import pandas as pd

from curve_fitting import fit_dist
from dataset_io import format_report, report_from_fit
from framework import ChannelParams, InjectionParams, MixtureParams, TimeGrid
from pbs_simulator import PbsConfig, run_pbs
from signal_model import model_dist

ROUND_COUNT = 5
BASE_SEED = 2024
THREAD_COUNTS = sorted({1, 2, os.cpu_count() or 1})

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(message)s', datefmt='%H:%M:%S')
logger = logging.getLogger(__name__)
logging.getLogger('pbs_simulator').setLevel(logging.WARNING)
logging.getLogger('curve_fitting').setLevel(logging.WARNING)


def _digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


class DeterminismTester:
    def __init__(self):
        self.results_summary: List[Dict] = []
        self.failed_cases: List[Dict] = []

    def _record(self, round_idx: int, seed: int, check: str, digests: Dict[int, str],
                elapsed: float, extra_ok: bool = True, reason: str = ""):
        is_pass = len(set(digests.values())) == 1 and extra_ok
        if not is_pass:
            self.failed_cases.append({
                "轮次": round_idx + 1, "检查": check, "种子(Seed)": seed,
                "错误原因": reason or f"digests differ: {digests}",
            })
            logger.warning(f"[{check}][R{round_idx + 1}] ❌ 失败 (Seed={seed})")
        else:
            logger.info(f"[{check}][R{round_idx + 1}] ✅ 通过 | {next(iter(digests.values()))} | "
                        f"{elapsed:.2f}s")
        self.results_summary.append({
            "检查": check, "轮次": round_idx + 1, "是否通过": int(is_pass), "耗时(s)": elapsed,
        })

    def run_pbs_check(self, round_idx: int, seed: int):
        cfg = PbsConfig(l_eff=1e-3, r0=100e-6, d_molecular=5e-9, v_eff=50e-6,
                        n_particles=200, dt=1e-3, t_end=2.0, n_realizations=4,
                        master_seed=seed, sample_every=100)
        digests, start = {}, time.time()
        try:
            for threads in THREAD_COUNTS:
                result = run_pbs(cfg, threads=threads)
                digests[threads] = _digest(result.counts.tobytes())
        except Exception as e:
            self._record(round_idx, seed, "PBS", {0: "crash"}, time.time() - start,
                         extra_ok=False, reason=f"CRASH: {e}")
            return
        self._record(round_idx, seed, "PBS", digests, time.time() - start)

    def run_fit_check(self, round_idx: int, seed: int):
        rng = np.random.default_rng(seed)
        inj = InjectionParams(t_w=3.0, t_0=1.0)
        truth = MixtureParams(((0.8, ChannelParams(5e-6, 3.5e-3, 3.4e-2, 1.7e-2)),
                               (0.2, ChannelParams(4.8e-6, 1.6e-3, 3.5e-2, 1.4e-2))))
        clean = model_dist(truth, inj, TimeGrid.from_duration(0.1, 60.0))
        trace = clean.with_samples(clean.samples + rng.normal(0.0, 0.01, size=len(clean)))

        digests, start = {}, time.time()
        nested_ok, reason = True, ""
        try:
            for threads in THREAD_COUNTS:
                one = fit_dist(trace, 1, inj, starts=8, seed=seed, threads=threads)
                two = fit_dist(trace, 2, inj, starts=8, seed=seed, threads=threads,
                               nested_from=one.params)
                if two.rmse > one.rmse:
                    nested_ok = False
                    reason = f"rmse(dist-2)={two.rmse:.6g} > rmse(dist-1)={one.rmse:.6g}"
                payload = (format_report(report_from_fit(one, 'trace', inj=inj))
                           + format_report(report_from_fit(two, 'trace', inj=inj)))
                digests[threads] = _digest(payload.encode('utf-8'))
        except Exception as e:
            self._record(round_idx, seed, "FIT", {0: "crash"}, time.time() - start,
                         extra_ok=False, reason=f"CRASH: {e}")
            return
        self._record(round_idx, seed, "FIT", digests, time.time() - start,
                     extra_ok=nested_ok, reason=reason)

    def print_summary(self):
        if not self.results_summary:
            return
        df = pd.DataFrame(self.results_summary)
        print("\n" + "=" * 80)
        print("                          测试结果报告 (Summary)")
        print("=" * 80)
        if self.failed_cases:
            print("\n⚠️  检测到测试失败 (Failed Cases Details):")
            print(pd.DataFrame(self.failed_cases).to_string(index=False))
        else:
            print(f"\n🎉  所有 {ROUND_COUNT} 轮测试全部通过 (All Passed)。\n")

        summary_df = df.groupby('检查').agg({'是否通过': ['count', 'sum'], '耗时(s)': 'mean'}).reset_index()
        summary_df.columns = ['检查', '总轮次', '通过数', '平均耗时(s)']
        summary_df['通过率'] = (summary_df['通过数'] / summary_df['总轮次']).apply(lambda x: f"{x:.1%}")
        summary_df['平均耗时(s)'] = summary_df['平均耗时(s)'].map('{:.2f}'.format)
        print(summary_df[['检查', '总轮次', '通过率', '平均耗时(s)']].to_string(index=False))
        print("=" * 80 + "\n")


if __name__ == "__main__":
    tester = DeterminismTester()
    print("🚀 启动确定性循环测试 (Determinism Loop Test)")
    print(f"⚙️  线程数: {THREAD_COUNTS}, 轮次={ROUND_COUNT}\n")
    start_all = time.time()
    for round_i in range(ROUND_COUNT):
        current_seed = BASE_SEED + round_i
        tester.run_pbs_check(round_i, current_seed)
        tester.run_fit_check(round_i, current_seed)
    print(f"⏳ 测试总耗时: {time.time() - start_all:.2f}s")
    tester.print_summary()
