# -*- coding: utf-8 -*-
"""
Exp2_Figure.py
实验2 绘图脚本: 三个拟合问题的参数相对误差箱线图

【依赖关系】
1. 数据源: Results_Exp2_Recovery/ (由 Exp2_Fit_Recovery.py 生成)
2. 绘图核: Science_Figure.py
"""

import os
import sys

from Science_Figure import SciencePlotter

INPUT_DIR = "Results_Exp2_Recovery"
OUTPUT_DIR = "Pub_Figures/Exp2_Recovery"
# 与 Exp2_Fit_Recovery.CASES 中的判据一致
LIMITS = {'injection': 0.10, 'dist-1': 0.10, 'acc': 0.05}

if __name__ == "__main__":
    full_csv = os.path.join(INPUT_DIR, "00_Raw_Full_Data.csv")
    if not os.path.exists(full_csv):
        print(f"❌ 错误: 未找到数据文件 '{full_csv}'")
        print("   -> 请先运行 'Exp2_Fit_Recovery.py' 生成数据。")
        sys.exit(1)

    plotter = SciencePlotter(output_dir=OUTPUT_DIR)
    print(f"🎨 启动绘图引擎，源数据: {INPUT_DIR}")
    plotter.draw_error_boxes(full_csv, LIMITS, filename="Fig_Exp2_Recovery_Errors")
    print(f"\n🎉 绘图完成！请查看文件夹: {OUTPUT_DIR}")
