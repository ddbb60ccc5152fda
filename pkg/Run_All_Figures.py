# -*- coding: utf-8 -*-
"""
Run_All_Figures.py
实验与绘图流水线调度器 (Experiment -> Figure Pipeline)

功能:
1. 按 PIPELINE 顺序执行: 若结果目录不存在则先运行数据脚本，再运行对应绘图脚本。
2. 每个脚本在独立子进程中运行，失败不影响后续任务。
3. 把 Pub_Figures 下生成的 PDF 汇总到 Pub_Figures/Paste。

用法:
    python Run_All_Figures.py            # 缺数据时自动补跑实验
    python Run_All_Figures.py --rerun    # 强制重跑全部实验
    python Run_All_Figures.py --only Exp1
"""

import argparse
import os
import shutil
import subprocess
import sys
import time

import pandas as pd


class Colors:
    HEADER = '\033[95m'
    OKBLUE = '\033[94m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'


# (名称, 数据脚本, 结果目录, 绘图脚本)
PIPELINE = [
    ('Exp1', 'Exp1_PBS_Validation.py', 'Results_Exp1_PBS', 'Exp1_Figure.py'),
    ('Exp2', 'Exp2_Fit_Recovery.py', 'Results_Exp2_Recovery', 'Exp2_Figure.py'),
    ('Exp3', 'Exp3_Dataset_Nesting.py', 'Results_Exp3_Dataset', 'Exp3_Figure.py'),
]

FIGURE_ROOT = "Pub_Figures"


def run_script(filename: str) -> tuple:
    print(f"{Colors.OKBLUE}   -> {filename} ...{Colors.ENDC}")
    start = time.time()
    try:
        subprocess.run([sys.executable, filename], check=True)
        status = "SUCCESS"
    except subprocess.CalledProcessError as exc:
        status = f"FAILED ({exc.returncode})"
    except OSError as exc:
        status = f"ERROR ({exc})"
    elapsed = time.time() - start
    color = Colors.OKGREEN if status == "SUCCESS" else Colors.FAIL
    print(f"{color}      {status} ({elapsed:.1f}s){Colors.ENDC}")
    return filename, status, elapsed


def collect_pdfs(source_root: str = FIGURE_ROOT, target_folder: str = "Paste") -> int:
    dest_path = os.path.join(source_root, target_folder)
    os.makedirs(dest_path, exist_ok=True)
    count = 0
    for root, _, files in os.walk(source_root):
        # 跳过目标目录自身
        if os.path.abspath(root) == os.path.abspath(dest_path):
            continue
        for name in files:
            if name.lower().endswith(".pdf"):
                shutil.copy2(os.path.join(root, name), os.path.join(dest_path, name))
                count += 1
    print(f"{Colors.OKGREEN}📂 已汇总 {count} 个 PDF -> {dest_path}{Colors.ENDC}")
    return count


def run_all(rerun: bool = False, only=None) -> bool:
    stages = [s for s in PIPELINE if not only or s[0] in only]
    print(f"{Colors.HEADER}{'=' * 60}")
    print(f"🚀 流水线启动 - {len(stages)} 个实验")
    print(f"{'=' * 60}{Colors.ENDC}")

    results = []
    for name, data_script, result_dir, figure_script in stages:
        print(f"\n[{name}]")
        if rerun or not os.path.isdir(result_dir):
            record = run_script(data_script)
            results.append((name, *record))
            if record[1] != "SUCCESS":
                print(f"{Colors.WARNING}⚠️  {name}: 数据脚本失败，跳过绘图{Colors.ENDC}")
                continue
        else:
            print(f"   ♻️  复用已有结果 {result_dir}")
        results.append((name, *run_script(figure_script)))

    summary = pd.DataFrame(results, columns=['实验', '脚本', '状态', '耗时(s)'])
    summary['耗时(s)'] = summary['耗时(s)'].map('{:.1f}'.format)
    print(f"\n{Colors.HEADER}📊 执行摘要{Colors.ENDC}")
    print(summary.to_string(index=False))

    ok = bool((summary['状态'] == "SUCCESS").all()) if not summary.empty else True
    if ok and os.path.isdir(FIGURE_ROOT):
        collect_pdfs()
    return ok


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="run experiment scripts and their figures")
    parser.add_argument('--rerun', action='store_true', help='rerun experiments even if results exist')
    parser.add_argument('--only', nargs='*', choices=[s[0] for s in PIPELINE], default=None)
    args = parser.parse_args()
    sys.exit(0 if run_all(rerun=args.rerun, only=args.only) else 1)
