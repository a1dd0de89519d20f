"""
驗收門檻
受試者內平均準確率，以及 full / conv-only 消融報告的完整性與高於機率水準的幅度
"""
import logging
from typing import List

from config import Config
from evaluation.report import render_ablation
from exceptions import AcceptanceError
from schemas.report import AcceptanceCheck, EvalReport

logger = logging.getLogger(__name__)

WITHIN_SUBJECT_THRESHOLD = 0.90
CHANCE_LEVEL = 1.0 / Config.N_CLASSES
CHANCE_MARGIN = 0.20


def check_within_subject(report: EvalReport, threshold: float = WITHIN_SUBJECT_THRESHOLD) -> List[AcceptanceCheck]:
    macro = report.macro
    return [AcceptanceCheck(
        name='within_subject_accuracy',
        passed=macro.accuracy_mean >= threshold,
        detail=f"平均準確率 {macro.accuracy_mean:.4f} ± {macro.accuracy_std:.4f}（門檻 {threshold:.2f}）",
    )]


def _report_gaps(report: EvalReport, seeds: List[int], subjects: List[str]) -> List[str]:
    gaps = []
    if report.seeds != seeds:
        gaps.append(f"seeds {report.seeds} ≠ {seeds}")
    found = [s.subject for s in report.subjects]
    if found != subjects:
        gaps.append(f"受試者 {found} ≠ {subjects}")
    for subject in report.subjects:
        run_seeds = sorted(r.seed for r in subject.runs)
        if run_seeds != sorted(seeds):
            gaps.append(f"{subject.subject} 的執行 seed {run_seeds} 不完整")
        for run in subject.runs:
            if len(run.f1) != Config.N_CLASSES or len(run.confusion) != Config.N_CLASSES:
                gaps.append(f"{subject.subject}/seed {run.seed} 缺少逐類別指標")
    if len(report.macro.f1_mean) != Config.N_CLASSES:
        gaps.append("平均列缺少逐類別 F1")
    return gaps


def check_ablation(full: EvalReport, conv_only: EvalReport,
                   margin: float = CHANCE_MARGIN) -> List[AcceptanceCheck]:
    """兩個變體都必須比機率水準高 margin；兩份報告的受試者、seed 與指標欄位必須齊全且一致"""
    checks = []
    floor = CHANCE_LEVEL + margin
    for expected, report in (('full', full), ('conv-only', conv_only)):
        accuracy = report.macro.accuracy_mean
        checks.append(AcceptanceCheck(
            name=f'{expected}_above_chance',
            passed=report.variant == expected and accuracy >= floor,
            detail=f"{report.variant}: 平均準確率 {accuracy:.4f}（門檻 {floor:.4f} = 機率 {CHANCE_LEVEL:.4f} + {margin:.2f}）",
        ))

    subjects = [s.subject for s in full.subjects]
    gaps = _report_gaps(full, full.seeds, subjects) + _report_gaps(conv_only, full.seeds, subjects)
    text = render_ablation(full, conv_only)
    missing_rows = [s for s in subjects + ['平均'] + list(full.class_names)
                    if not any(line.startswith(s) for line in text.splitlines())]
    if missing_rows:
        gaps.append(f"對照表缺少列 {missing_rows}")
    checks.append(AcceptanceCheck(
        name='ablation_report_complete',
        passed=not gaps,
        detail='；'.join(gaps) if gaps else f"{len(subjects)} 位受試者 × {len(full.seeds)} 個 seed，兩個變體齊全",
    ))
    return checks


def enforce(checks: List[AcceptanceCheck]) -> None:
    """
    逐項記錄結果；任何一項未通過即失敗

    Raises:
        AcceptanceError: 列出所有未通過的項目
    """
    for check in checks:
        level = logging.INFO if check.passed else logging.ERROR
        logger.log(level, f"驗收 {check.name}: {'通過' if check.passed else '未通過'}（{check.detail}）")
    failed = [c for c in checks if not c.passed]
    if failed:
        raise AcceptanceError('; '.join(f"{c.name}: {c.detail}" for c in failed))
