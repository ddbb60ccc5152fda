# -*- coding: utf-8 -*-
"""
Model_Config.py
模型配置中心 (Model Registry & Plot Styles)

【修改说明】
1. MODEL_LIBRARY 以工厂表的形式登记各拟合模型: 拟合函数、默认参数、绘图样式。
2. PLOT_STYLE_PALETTE 为测量 / PBS / 解析曲线 / 各拟合模型定义可区分的线型。
"""

from curve_fitting import DEFAULT_STARTS, fit_acc, fit_dist, fit_injection

# =========================================================
# 1. 绘图样式库 (Look-up Table)
# =========================================================
PLOT_STYLE_PALETTE = [
    # Style 0: 测量值 / PBS 仿真，灰色空心圆点，无连线
    {
        "color": "#4D4D4D", "linestyle": "none", "linewidth": 0,
        "marker": "o", "markersize": 3, "markerfacecolor": "white",
        "markeredgecolor": "#4D4D4D", "markeredgewidth": 0.6, "zorder": 10,
    },
    # Style 1: 环形信道解析解 p_wn，红色实线
    {"color": "#D62728", "linestyle": "-", "linewidth": 1.5, "zorder": 100},
    # Style 2: 直管解析解 p_n，蓝色虚线
    {"color": "#1F77B4", "linestyle": "--", "linewidth": 1.2, "zorder": 90},
    # Style 3: 单环拟合，绿色点划线
    {"color": "#2CA02C", "linestyle": "-.", "linewidth": 1.2, "zorder": 80},
    # Style 4: 双环拟合，红色实线
    {"color": "#D62728", "linestyle": "-", "linewidth": 1.2, "zorder": 85},
    # Style 5: 累积模型，紫色点线
    {"color": "#9467BD", "linestyle": ":", "linewidth": 1.5, "zorder": 70},
    # Style 6: 注射模型，橙色虚线
    {"color": "#FF7F0E", "linestyle": "--", "linewidth": 1.2, "zorder": 60},
]

TRACE_STYLES = {
    'measured': {"style_id": 0, "label": "Measured"},
    'pbs': {"style_id": 0, "label": "PBS"},
    'pwn': {"style_id": 1, "label": r"$p_\mathrm{wn}$"},
    'pn': {"style_id": 2, "label": r"$p_\mathrm{n}$"},
}

# =========================================================
# 2. 实验激活控制
# =========================================================
MODELS_TO_RUN = [
    'dist-1',
    'dist-2',
]

# =========================================================
# 3. 拟合模型配置库 (Factory Pattern)
# =========================================================
MODEL_LIBRARY = {
    'injection': {
        "fit": fit_injection,
        "params": {"starts": DEFAULT_STARTS['injection']},
        "style_id": 6,
        "label": r"$\hat f_\mathrm{inj}$",
    },
    'dist-1': {
        "fit": fit_dist,
        "params": {"n": 1, "starts": DEFAULT_STARTS['dist']},
        "style_id": 3,
        "label": r"$\hat I_{\mathrm{dist},1}$",
    },
    'dist-2': {
        "fit": fit_dist,
        "params": {"n": 2, "starts": DEFAULT_STARTS['dist']},
        "nested_on": 'dist-1',       # 以单环最优解作为重复分量起点
        "style_id": 4,
        "label": r"$\hat I_{\mathrm{dist},2}$",
    },
    'acc': {
        "fit": fit_acc,
        "params": {"starts": DEFAULT_STARTS['acc']},
        "style_id": 5,
        "label": r"$\hat I_\mathrm{acc}$",
    },
}


def model_entry(kind: str, n: int = 1) -> dict:
    """由 (--model, --n) 组合找到配置；n > 2 时沿用 dist 配置并替换分量数"""
    key = f"dist-{n}" if kind == 'dist' else kind
    if key in MODEL_LIBRARY:
        return MODEL_LIBRARY[key]
    if kind == 'dist':
        entry = dict(MODEL_LIBRARY['dist-2'])
        entry["params"] = dict(entry["params"], n=n)
        entry["nested_on"] = f"dist-{n - 1}"
        return entry
    raise KeyError(f"unknown model {kind!r}")


def style_for(key: str) -> dict:
    """返回 matplotlib 关键字参数 (含 label)"""
    if key in MODEL_LIBRARY:
        entry = MODEL_LIBRARY[key]
    else:
        entry = TRACE_STYLES[key]
    style = dict(PLOT_STYLE_PALETTE[entry["style_id"]])
    style["label"] = entry["label"]
    return style
