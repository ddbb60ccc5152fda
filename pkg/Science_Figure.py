# -*- coding: utf-8 -*-
"""
Science_Figure.py
科研绘图引擎 (Publication-Ready Plotting Engine)

【核心特性】
1. 固定几何布局: 每个子图物理尺寸一致 (英寸)，不依赖 tight_layout。
2. 统一图例: 顶部居中，文字颜色跟随线条。
3. 强度序列叠加 (PBS / p_wn / p_n / 拟合模型) 与 RMSE 柱状图 (含 tau 阈值线)。
4. seaborn: 参数两两散点 (按 tau 筛选着色)、参数恢复误差箱线图。
所有输入均为 cli / Exp 脚本写出的 CSV，绘图不参与命令行输出契约。
"""

import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from Model_Config import style_for

logger = logging.getLogger(__name__)

# ==============================================================================
# 0. 几何参数 (单位: 英寸)
# ==============================================================================
GEOMETRY_CONFIG = {
    'SUBPLOT_W': 3.5,
    'SUBPLOT_H': 2.8,
    'MARGIN_LEFT': 0.9,
    'MARGIN_RIGHT': 0.2,
    'MARGIN_BOTTOM': 0.7,
    'MARGIN_TOP': 0.6,
    'SPACE_W': 0.9,
    'SPACE_H': 0.9,
    'CAPTION_GAP': 0.65,    # 子图编号 (a) 到子图底边的距离
}

LAYOUT_GRID = {'single': (1, 1), 'double': (1, 2), 'triple': (1, 3), 'quad': (2, 2)}


def apply_science_style():
    plt.rcParams.update({
        'font.family': 'serif',
        'font.serif': ['Times New Roman', 'Liberation Serif', 'DejaVu Serif'],
        'mathtext.fontset': 'stix',
        'font.size': 14,
        'axes.labelsize': 14,
        'xtick.labelsize': 12,
        'ytick.labelsize': 12,
        'legend.fontsize': 12,
        'lines.linewidth': 1.5,
        'axes.linewidth': 1.2,
        'grid.linestyle': '--',
        'grid.alpha': 0.5,
        'savefig.dpi': 300,
    })


class SciencePlotter:
    def __init__(self, output_dir: str = "figures_pub"):
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)
        apply_science_style()

    @staticmethod
    def _load_data(csv_path: str, comment: Optional[str] = None) -> pd.DataFrame:
        if not os.path.exists(csv_path):
            print(f"⚠️ 警告: 文件未找到 -> {csv_path}")
            return pd.DataFrame()
        return pd.read_csv(csv_path, comment=comment)

    def _grid_geometry(self, layout_type: str) -> Tuple[Tuple[float, float], List[List[float]]]:
        """画布尺寸 + 每个子图的归一化矩形 [left, bottom, width, height]"""
        cfg = GEOMETRY_CONFIG
        rows, cols = LAYOUT_GRID.get(layout_type, (1, 1))
        total_w = (cfg['MARGIN_LEFT'] + cols * cfg['SUBPLOT_W']
                   + (cols - 1) * cfg['SPACE_W'] + cfg['MARGIN_RIGHT'])
        total_h = (cfg['MARGIN_BOTTOM'] + rows * cfg['SUBPLOT_H']
                   + (rows - 1) * cfg['SPACE_H'] + cfg['MARGIN_TOP'])
        rects = []
        for r in range(rows):
            for c in range(cols):
                x0 = cfg['MARGIN_LEFT'] + c * (cfg['SUBPLOT_W'] + cfg['SPACE_W'])
                y0 = cfg['MARGIN_BOTTOM'] + (rows - 1 - r) * (cfg['SUBPLOT_H'] + cfg['SPACE_H'])
                rects.append([x0 / total_w, y0 / total_h,
                              cfg['SUBPLOT_W'] / total_w, cfg['SUBPLOT_H'] / total_h])
        return (total_w, total_h), rects

    def _caption(self, fig, rect: Sequence[float], idx: int, total_h: float):
        fig.text(rect[0] + rect[2] / 2, rect[1] - GEOMETRY_CONFIG['CAPTION_GAP'] / total_h,
                 f"({chr(97 + idx)})", fontsize=14, fontweight='bold', ha='center', va='top')

    def _legend(self, fig, handles: Dict[str, object], total_h: float):
        if not handles:
            return
        y = 1.0 - (GEOMETRY_CONFIG['MARGIN_TOP'] / 2) / total_h
        leg = fig.legend(handles=list(handles.values()), labels=list(handles.keys()),
                         loc='center', bbox_to_anchor=(0.5, y), ncol=min(4, len(handles)),
                         frameon=False, columnspacing=1.5, handletextpad=0.5)
        for text, handle in zip(leg.get_texts(), handles.values()):
            color = handle.get_color() if hasattr(handle, 'get_color') else None
            if isinstance(color, str):
                text.set_color(color)

    def _save(self, fig, filename: str) -> str:
        pdf_path = os.path.join(self.output_dir, f"{filename}.pdf")
        png_path = os.path.join(self.output_dir, f"{filename}.png")
        fig.savefig(pdf_path, format='pdf')
        fig.savefig(png_path, format='png', dpi=300)
        plt.close(fig)
        print(f"✅ 图表已生成: {pdf_path}")
        return pdf_path

    # --------------------------------------------------------------------------
    # 1. 强度序列叠加
    # --------------------------------------------------------------------------
    def draw_trace_figure(self, tasks: List[Dict], layout_type: str = "single",
                          filename: str = "fig_traces") -> Optional[str]:
        """
        tasks: 每个子图一个字典
          file    : CSV 路径 (第一列或 x_col 为时间)
          x_col   : 时间列名，默认 'time_s'
          series  : [(列名, 样式键, 图例后缀)]，样式键见 Model_Config.style_for
          xlabel / ylabel / xlim / title
        """
        fig_size, rects = self._grid_geometry(layout_type)
        fig = plt.figure(figsize=fig_size)
        handles: Dict[str, object] = {}

        for idx, rect in enumerate(rects):
            if idx >= len(tasks):
                break
            task = tasks[idx]
            ax = fig.add_axes(rect)
            df = self._load_data(task['file'], comment='#')
            if df.empty:
                continue
            x_col = task.get('x_col', 'time_s')
            for column, style_key, suffix in task['series']:
                if column not in df.columns:
                    logger.warning("column %s missing in %s", column, task['file'])
                    continue
                style = style_for(style_key)
                style['label'] = f"{style['label']}{suffix}"
                markevery = task.get('markevery', max(1, len(df) // 60))
                line, = ax.plot(df[x_col], df[column], markevery=markevery, **style)
                handles.setdefault(style['label'], line)

            ax.set_xlabel(task.get('xlabel', r'Time $t$ (s)'))
            ax.set_ylabel(task.get('ylabel', r'Concentration (1/m)'))
            if 'xlim' in task:
                ax.set_xlim(*task['xlim'])
            if 'title' in task:
                ax.set_title(task['title'], fontsize=12)
            ax.grid(True)
            self._caption(fig, rect, idx, fig_size[1])

        self._legend(fig, handles, fig_size[1])
        return self._save(fig, filename)

    # --------------------------------------------------------------------------
    # 2. RMSE 柱状图 + tau 阈值线
    # --------------------------------------------------------------------------
    def draw_rmse_bars(self, rmse_csv: str, summary_csv: str,
                       models: Sequence[str] = ('dist-1', 'dist-2'),
                       filename: str = "fig_rmse") -> Optional[str]:
        """每条序列一组柱 (按 models 顺序)，虚线为各模型的 tau(q)"""
        df = self._load_data(rmse_csv)
        summary = self._load_data(summary_csv)
        if df.empty:
            return None
        models = [m for m in models if m in df.columns]
        df = df.sort_values(models[0]).reset_index(drop=True)

        fig_size, rects = self._grid_geometry('double')
        fig = plt.figure(figsize=fig_size)
        ax = fig.add_axes([rects[0][0], rects[0][1], rects[1][0] + rects[1][2] - rects[0][0],
                           rects[0][3]])
        width = 0.8 / max(1, len(models))
        handles: Dict[str, object] = {}
        for k, model in enumerate(models):
            style = style_for(model)
            bars = ax.bar(df.index + k * width, df[model], width=width,
                          color=style['color'], label=style['label'], alpha=0.85)
            handles[style['label']] = bars
            if not summary.empty and model in set(summary['model_kind']):
                tau = float(summary.loc[summary['model_kind'] == model, 'tau'].iloc[0])
                ax.axhline(tau, color=style['color'], linestyle='--', linewidth=1.0)
        ax.set_xlabel('Trace index (sorted)')
        ax.set_ylabel('RMSE')
        ax.grid(True, axis='y')
        fig.legend(handles=list(handles.values()), labels=list(handles.keys()), loc='upper center',
                   ncol=len(handles), frameon=False)
        return self._save(fig, filename)

    # --------------------------------------------------------------------------
    # 3. 参数两两散点 (seaborn)
    # --------------------------------------------------------------------------
    def draw_parameter_pairs(self, full_csv: str, model_kind: str = 'dist-2',
                             component: int = 1, tau: Optional[float] = None,
                             filename: str = "fig_parameter_pairs") -> Optional[str]:
        df = self._load_data(full_csv)
        if df.empty:
            return None
        df = df[df['model_kind'] == model_kind].copy()
        cols = [f"{name}_{component}" for name in ('d_eff', 'v_eff', 'l_eff', 'd_rx')]
        cols = [c for c in cols if c in df.columns]
        if df.empty or not cols:
            logger.warning("no %s parameters in %s", model_kind, full_csv)
            return None
        if tau is not None:
            df['group'] = ['selected' if r <= tau else 'rejected' for r in df['rmse']]
            hue = 'group'
        else:
            hue = None
        grid = sns.pairplot(df, vars=cols, hue=hue, corner=True, height=1.8,
                            plot_kws={'s': 18, 'edgecolor': 'none'})
        return self._save(grid.figure, filename)

    # --------------------------------------------------------------------------
    # 4. 参数恢复误差箱线图
    # --------------------------------------------------------------------------
    def draw_error_boxes(self, full_csv: str, limits: Dict[str, float],
                         filename: str = "fig_recovery") -> Optional[str]:
        """每个拟合问题一个子图，箱线为各参数相对误差，虚线为判据上限"""
        df = self._load_data(full_csv)
        if df.empty:
            return None
        cases = [c for c in limits if c in set(df['case'])]
        layout = {1: 'single', 2: 'double', 3: 'triple'}.get(len(cases), 'quad')
        fig_size, rects = self._grid_geometry(layout)
        fig = plt.figure(figsize=fig_size)

        for idx, (case, rect) in enumerate(zip(cases, rects)):
            ax = fig.add_axes(rect)
            group = df[df['case'] == case]
            err_cols = [c for c in group.columns if c.startswith('err_') and group[c].notna().any()]
            long = group.melt(value_vars=err_cols, var_name='parameter', value_name='error')
            long['parameter'] = long['parameter'].str.replace('err_', '', regex=False)
            sns.boxplot(data=long, x='parameter', y='error', ax=ax, color='#9ECAE1',
                        fliersize=2, linewidth=1.0)
            ax.axhline(limits[case], color='#D62728', linestyle='--', linewidth=1.0)
            ax.set_xlabel('')
            ax.set_ylabel('Relative error')
            ax.set_title(case, fontsize=12)
            ax.grid(True, axis='y')
            self._caption(fig, rect, idx, fig_size[1])
        return self._save(fig, filename)


if __name__ == "__main__":
    print("Science_Figure: plotting engine ready.")
