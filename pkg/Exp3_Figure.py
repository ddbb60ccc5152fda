# -*- coding: utf-8 -*-
"""
Exp3_Figure.py
实验3 绘图脚本: 单环 / 双环拟合叠加、RMSE 柱状图 (tau 阈值线)、双环主分量参数散点

【依赖关系】
1. 数据源: Results_Exp3_Dataset/ (由 Exp3_Dataset_Nesting.py 生成)
2. 绘图核: Science_Figure.py
"""

import os
import sys

import pandas as pd

from Science_Figure import SciencePlotter

INPUT_DIR = "Results_Exp3_Dataset"
SUMMARY_DIR = os.path.join(INPUT_DIR, "summary")
OUTPUT_DIR = "Pub_Figures/Exp3_Dataset"

if __name__ == "__main__":
    if not os.path.exists(SUMMARY_DIR):
        print(f"❌ 错误: 未找到数据目录 '{SUMMARY_DIR}'")
        print("   -> 请先运行 'Exp3_Dataset_Nesting.py' 生成数据。")
        sys.exit(1)

    plotter = SciencePlotter(output_dir=OUTPUT_DIR)
    print(f"🎨 启动绘图引擎，源数据: {INPUT_DIR}")

    # (1) 第一条序列的拟合叠加
    plotter.draw_trace_figure(
        tasks=[{
            'file': os.path.join(INPUT_DIR, "overlay_first_trace.csv"),
            'series': [('measured', 'measured', ''), ('dist-1', 'dist-1', ''), ('dist-2', 'dist-2', '')],
            'ylabel': r'Normalized intensity $\bar I(t)$',
        }],
        layout_type='single',
        filename="Fig_Exp3_Fit_Overlay",
    )

    # (2) RMSE 柱状图
    plotter.draw_rmse_bars(
        rmse_csv=os.path.join(SUMMARY_DIR, "raw_rmse.csv"),
        summary_csv=os.path.join(SUMMARY_DIR, "rmse_summary.csv"),
        filename="Fig_Exp3_RMSE",
    )

    # (3) 双环主分量参数散点，按 tau 分组着色
    summary = pd.read_csv(os.path.join(SUMMARY_DIR, "rmse_summary.csv"))
    tau = summary.loc[summary['model_kind'] == 'dist-2', 'tau']
    plotter.draw_parameter_pairs(
        full_csv=os.path.join(SUMMARY_DIR, "00_Raw_Full_Data.csv"),
        model_kind='dist-2',
        tau=float(tau.iloc[0]) if not tau.empty else None,
        filename="Fig_Exp3_Parameter_Pairs",
    )
    print(f"\n🎉 绘图完成！请查看文件夹: {OUTPUT_DIR}")
