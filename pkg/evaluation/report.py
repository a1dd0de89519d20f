"""
文字報表
把 EvalReport 排成對齊的文字表格：準確率（每位受試者一列 + 平均列）、逐類別 F1、
逐 seed 彙總、混淆矩陣與參數量；消融另有 full / conv-only 對照表
"""
from typing import List, Sequence

import numpy as np

from schemas.report import EvalReport, Summary

PROTOCOL_TITLES = {
    'within-subject': '受試者內評估（分層 7:3）',
    'loso': '留一受試者評估（LOSO）',
    'checkpoint': '檢查點評估',
}


def _pct(mean: float, std: float) -> str:
    return f"{100 * mean:5.1f} ± {100 * std:4.1f}"


def format_table(header: Sequence[str], rows: List[Sequence[str]]) -> str:
    """第一欄靠左、其餘靠右的對齊表格"""
    widths = [max(len(str(row[i])) for row in [header] + rows) for i in range(len(header))]

    def line(cells):
        return '  '.join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                         for i, (c, w) in enumerate(zip(cells, widths)))

    rule = '-' * (sum(widths) + 2 * (len(widths) - 1))
    return '\n'.join([line(header), rule] + [line(r) for r in rows])


def accuracy_table(report: EvalReport) -> str:
    label = '留出受試者' if report.protocol == 'loso' else '受試者'
    rows = [[s.subject, _pct(s.summary.accuracy_mean, s.summary.accuracy_std), str(s.summary.n)]
            for s in report.subjects]
    rows.append(['平均', _pct(report.macro.accuracy_mean, report.macro.accuracy_std), str(len(report.subjects))])
    return format_table([label, '準確率 (%)', 'n'], rows)


def f1_table(report: EvalReport) -> str:
    def cells(summary: Summary) -> List[str]:
        return [_pct(m, s) for m, s in zip(summary.f1_mean, summary.f1_std)] + \
               [_pct(summary.macro_f1_mean, summary.macro_f1_std)]

    header = ['受試者'] + [f'F1 {name}' for name in report.class_names] + [f'F1 {report.f1_averaging}']
    rows = [[s.subject] + cells(s.summary) for s in report.subjects]
    rows.append(['平均'] + cells(report.macro))
    return format_table(header, rows)


def seed_table(report: EvalReport) -> str:
    rows = []
    for seed in report.seeds:
        accuracies = [r.accuracy for s in report.subjects for r in s.runs if r.seed == seed]
        rows.append([f'seed {seed}', f"{100 * np.mean(accuracies):5.1f}"])
    summary = report.seed_summary
    rows.append(['mean ± std', _pct(summary.accuracy_mean, summary.accuracy_std)])
    return format_table(['執行', '準確率 (%)'], rows)


def confusion_block(report: EvalReport) -> str:
    blocks = []
    names = report.class_names
    for s in report.subjects:
        total = np.sum([r.confusion for r in s.runs], axis=0)
        rows = [[f'真實 {names[i]}'] + [str(v) for v in total[i]] for i in range(len(names))]
        predicted = np.sum([r.predicted_distribution for r in s.runs], axis=0)
        rows.append(['預測分布'] + [str(v) for v in predicted])
        blocks.append(f"[{s.subject}]（{s.summary.n} 次執行加總）\n" +
                      format_table([''] + [f'預測 {n}' for n in names], rows))
    return '\n\n'.join(blocks)


def render_report(report: EvalReport) -> str:
    """完整的人讀報表"""
    budget = report.parameters
    stages = ', '.join(f'{k}={v}' for k, v in budget.by_stage.items())
    parts = [
        f"# {PROTOCOL_TITLES.get(report.protocol, report.protocol)}：變體 {report.variant}",
        f"seeds: {', '.join(str(s) for s in report.seeds)}",
        f"可訓練參數: {budget.total:,}（參考架構約 {budget.reference_total:,}，比值 {budget.ratio_to_reference:.3f}）; {stages}",
        '',
        '## 準確率',
        accuracy_table(report),
        '',
        f'## 逐類別 F1（彙總採 {report.f1_averaging} 平均）',
        f1_table(report),
        '',
        '## 逐 seed 彙總',
        seed_table(report),
        '',
        '## 混淆矩陣',
        confusion_block(report),
    ]
    if report.event_census:
        rows = [[condition] + [str(counts.get(n, 0)) for n in report.class_names]
                for condition, counts in report.event_census.items()]
        parts += ['', '## 事件分布', format_table(['條件'] + list(report.class_names), rows)]
    return '\n'.join(parts) + '\n'


def render_ablation(full: EvalReport, conv_only: EvalReport) -> str:
    """full 與 conv-only 的準確率 / macro F1 對照"""
    conv_by_subject = {s.subject: s for s in conv_only.subjects}
    rows = []
    for s in full.subjects:
        other = conv_by_subject.get(s.subject)
        if other is None:
            continue
        delta = s.summary.accuracy_mean - other.summary.accuracy_mean
        rows.append([s.subject, _pct(s.summary.accuracy_mean, s.summary.accuracy_std),
                     _pct(other.summary.accuracy_mean, other.summary.accuracy_std), f"{100 * delta:+5.1f}",
                     f"{s.summary.macro_f1_mean:.3f}", f"{other.summary.macro_f1_mean:.3f}"])
    delta = full.macro.accuracy_mean - conv_only.macro.accuracy_mean
    rows.append(['平均', _pct(full.macro.accuracy_mean, full.macro.accuracy_std),
                 _pct(conv_only.macro.accuracy_mean, conv_only.macro.accuracy_std), f"{100 * delta:+5.1f}",
                 f"{full.macro.macro_f1_mean:.3f}", f"{conv_only.macro.macro_f1_mean:.3f}"])

    f1_rows = [[name, f"{a:.3f}", f"{b:.3f}"]
               for name, a, b in zip(full.class_names, full.macro.f1_mean, conv_only.macro.f1_mean)]
    return '\n'.join([
        f"# 消融：ESNNet vs conv-only（{PROTOCOL_TITLES.get(full.protocol, full.protocol)}）",
        f"可訓練參數: full {full.parameters.total:,} / conv-only {conv_only.parameters.total:,}",
        '',
        format_table(['受試者', 'ESNNet (%)', 'conv-only (%)', 'Δ', 'F1 ESNNet', 'F1 conv-only'], rows),
        '',
        '## 逐類別 F1（跨受試者平均）',
        format_table(['類別', 'ESNNet', 'conv-only'], f1_rows),
    ]) + '\n'
