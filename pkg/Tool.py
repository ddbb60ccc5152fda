# -*- coding: utf-8 -*-
"""
Tool.py - Fit Report Analytics Toolkit
拟合结果统计工具 (pandas)

【更新说明】
1. [Collect] add_report 将 FitReport 展平成一行记录 (混合分量展开为 d_eff_1, v_eff_1 ...)。
2. [Screen] rmse_summary / screened_parameter_means 以 tau_n(q) 分位阈值筛选可信参数集。
3. [Nesting] nesting_table 按序列配对单环 / 双环 RMSE，检查嵌套关系。
4. [Storage] save_to_csv 写出总表和每个指标的宽表 raw_{metric}.csv，直接对接 Science_Figure.py。
"""

import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from curve_fitting import rmse_threshold
from dataset_io import FitReport

logger = logging.getLogger(__name__)

PARAM_FIELDS = ('weight', 'd_eff', 'v_eff', 'l_eff', 'd_rx')
NESTING_RTOL = 1e-9


def flatten_parameters(model_kind: str, parameters: Dict, prefix: str = "") -> Dict[str, float]:
    """参数字典 -> 平铺列；混合分量按 1 起编号"""
    if 'components' not in parameters:
        return {f"{prefix}{k}": float(v) for k, v in parameters.items()}
    flat = {}
    for j, comp in enumerate(parameters['components'], start=1):
        for name in PARAM_FIELDS:
            flat[f"{prefix}{name}_{j}"] = float(comp[name])
    return flat


class FitAnalytics:
    def __init__(self):
        self.raw_data: List[Dict] = []
        self.param_columns: List[str] = []

    def add_report(self, report: FitReport, truth: Optional[Dict] = None,
                   meta: Optional[Dict] = None):
        """收集一份拟合报告；truth 为 ground_truth.json 中同名条目 (可选)"""
        record = {
            'trace_ref': report.trace_ref,
            'model_kind': report.model_kind,
            'rmse': report.rmse,
            'objective': report.objective,
            'converged': report.converged,
            'n_starts': report.n_starts,
            'seed': report.seed,
            'n_at_bound': len(report.at_bound),
            'n_warnings': len(report.warnings),
            **(meta or {}),
        }
        params = flatten_parameters(report.model_kind, report.parameters)
        self.param_columns.extend(c for c in params if c not in self.param_columns)
        record.update(params)
        if truth is not None:
            if report.model_kind.startswith('dist-') and 'components' in truth:
                record.update(flatten_parameters('dist', truth, prefix='true_'))
            elif report.model_kind == 'acc' and 'accumulation' in truth:
                record.update(flatten_parameters('acc', truth['accumulation'], prefix='true_'))
            elif report.model_kind == 'injection' and 'injection' in truth:
                record.update(flatten_parameters('injection', truth['injection'], prefix='true_'))
        self.raw_data.append(record)

    def get_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.raw_data) if self.raw_data else pd.DataFrame()

    def rmse_summary(self, q: float = 0.15) -> pd.DataFrame:
        """每个模型的 RMSE 均值 / 最小 / 最大 / tau(q) 与通过筛选的数量"""
        df = self.get_dataframe()
        if df.empty:
            return pd.DataFrame()
        rows = []
        for kind, group in df.groupby('model_kind', sort=True):
            tau = rmse_threshold(group['rmse'].tolist(), q)
            rows.append({
                'model_kind': kind,
                'count': len(group),
                'rmse_mean': group['rmse'].mean(),
                'rmse_min': group['rmse'].min(),
                'rmse_max': group['rmse'].max(),
                'tau': tau,
                'n_selected': int((group['rmse'] <= tau).sum()),
                'n_converged': int(group['converged'].sum()),
            })
        return pd.DataFrame(rows).set_index('model_kind')

    def screened_parameter_means(self, q: float = 0.15) -> pd.DataFrame:
        """
        [筛选层] rmse <= tau(q) 与 rmse > tau(q) 两组的参数均值
        行索引为 (model_kind, group)，group 取 'selected' / 'rejected'
        """
        df = self.get_dataframe()
        if df.empty:
            return pd.DataFrame()
        frames = []
        for kind, group in df.groupby('model_kind', sort=True):
            param_cols = [c for c in self.param_columns if c in group and group[c].notna().any()]
            tau = rmse_threshold(group['rmse'].tolist(), q)
            selected = group['rmse'] <= tau
            means = pd.DataFrame({
                'selected': group.loc[selected, param_cols].mean(),
                'rejected': group.loc[~selected, param_cols].mean(),
            }).T
            means['count'] = [int(selected.sum()), int((~selected).sum())]
            means.index = pd.MultiIndex.from_product([[kind], means.index],
                                                     names=['model_kind', 'group'])
            frames.append(means)
        return pd.concat(frames)

    def nesting_table(self, lower: str = 'dist-1', upper: str = 'dist-2') -> pd.DataFrame:
        """按 trace_ref 配对两个模型的 RMSE；nested 表示 rmse_upper <= rmse_lower"""
        df = self.get_dataframe()
        if df.empty or not {lower, upper} <= set(df['model_kind']):
            return pd.DataFrame()
        table = df.pivot_table(index='trace_ref', columns='model_kind', values='rmse',
                               aggfunc='min')[[lower, upper]].dropna()
        table['nested'] = table[upper] <= table[lower] * (1.0 + NESTING_RTOL)
        table['improvement'] = 1.0 - table[upper] / table[lower].where(table[lower] > 0, np.nan)
        return table

    def save_to_csv(self, output_dir: str = "fit_summary", q: float = 0.15) -> List[str]:
        """
        [存储层] 总表 + 汇总表 + 每个指标一张宽表 (行: trace_ref, 列: model_kind)
        """
        if not self.raw_data:
            return []
        os.makedirs(output_dir, exist_ok=True)
        df = self.get_dataframe()
        written = []

        def _save(frame: pd.DataFrame, name: str, index: bool):
            path = os.path.join(output_dir, name)
            frame.to_csv(path, index=index, lineterminator="\n")
            written.append(path)

        _save(df, "00_Raw_Full_Data.csv", index=False)
        _save(self.rmse_summary(q), "rmse_summary.csv", index=True)
        _save(self.screened_parameter_means(q), "screened_parameter_means.csv", index=True)
        nesting = self.nesting_table()
        if not nesting.empty:
            _save(nesting, "nesting.csv", index=True)

        for metric in ('rmse', 'objective'):
            pivot = df.pivot_table(index='trace_ref', columns='model_kind', values=metric,
                                   aggfunc='mean')
            pivot.reset_index(inplace=True)
            _save(pivot, f"raw_{metric}.csv", index=False)

        logger.info("wrote %d summary files to %s", len(written), output_dir)
        return written
