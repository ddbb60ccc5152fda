# -*- coding: utf-8 -*-
"""
Exp1_Figure.py
实验1 绘图脚本: PBS 与解析解叠加 (两个扩散系数各一张子图)

【依赖关系】
1. 数据源: Results_Exp1_PBS/ (由 Exp1_PBS_Validation.py 生成)
2. 绘图核: Science_Figure.py
"""

import os
import sys

from Science_Figure import SciencePlotter

INPUT_DIR = "Results_Exp1_PBS"
OUTPUT_DIR = "Pub_Figures/Exp1_PBS"
D_VALUES = [1.25e-9, 5e-9]
X_TAGS = ["x0.39", "x0.84"]

if __name__ == "__main__":
    if not os.path.exists(INPUT_DIR):
        print(f"❌ 错误: 未找到数据目录 '{INPUT_DIR}'")
        print("   -> 请先运行 'Exp1_PBS_Validation.py' 生成数据。")
        sys.exit(1)

    plotter = SciencePlotter(output_dir=OUTPUT_DIR)
    print(f"🎨 启动绘图引擎，源数据: {INPUT_DIR}")

    tasks = []
    for d in D_VALUES:
        series = []
        for tag in X_TAGS:
            suffix = f" ({tag[1:]} mm)"
            series += [(f"pbs_{tag}", 'pbs', suffix),
                       (f"pwn_{tag}", 'pwn', suffix),
                       (f"pn_{tag}", 'pn', suffix)]
        tasks.append({
            'file': os.path.join(INPUT_DIR, f"traces_D{d:.3g}.csv"),
            'series': series,
            'title': rf"$D = {d:.3g}$ m$^2$/s",
            'ylabel': r'$p(x, t)$ (1/m)',
        })

    plotter.draw_trace_figure(tasks, layout_type='double', filename="Fig_Exp1_PBS_vs_Analytic")
    print(f"\n🎉 绘图完成！请查看文件夹: {OUTPUT_DIR}")
