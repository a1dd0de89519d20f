"""
實驗流程
受試者內（分層 7:3）、LOSO 與消融（full vs conv-only），每個 (受試者/fold, seed) 為一次獨立執行
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from data.dataset import event_census, load_dataset, subjects_of
from data.preprocess import preprocess_trials, stack_segments
from data.synth import synth_generate
from evaluation.metrics import aggregate_runs, confusion_and_f1, macro_over_subjects, seed_summary
from evaluation.protocols import loso_folds, stratified_split
from evaluation.training import evaluate_model, train_model
from exceptions import DataError
from models import EsnNetModel, build, save_checkpoint
from nn.tensor import RngStream
from schemas.config import RunConfig
from schemas.report import EvalReport, ParameterBudget, RunReport, SubjectReport
from utils.artifacts import checkpoint_path, log_path

logger = logging.getLogger(__name__)


@dataclass
class PreparedData:
    """前處理後的切段陣列"""

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    census: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def subject_ids(self) -> List[str]:
        return list(dict.fromkeys(self.subjects.tolist()))

    def select(self, index: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.X[index], self.y[index]


def load_trials(config: RunConfig):
    """依設定讀取 manifest，未指定時即時產生合成資料"""
    if config.data.manifest:
        trials = load_dataset(config.data.manifest, channels=config.C)
    else:
        synth = config.data.synth
        trials = synth_generate(synth.n_per_class, synth.subjects, synth.seed, synth)
    if config.data.subjects is not None:
        missing = set(config.data.subjects) - set(subjects_of(trials))
        if missing:
            raise DataError(f"資料集中沒有受試者 {sorted(missing)}")
        trials = [t for t in trials if t.subject in config.data.subjects]
    return trials


def prepare_data(config: RunConfig) -> PreparedData:
    trials = load_trials(config)
    X, y, subjects = stack_segments(preprocess_trials(trials, config.preprocess))
    if len(X) == 0:
        raise DataError("資料集沒有任何事件")
    if X.shape[1:] != (config.C, config.T):
        raise DataError(f"切段形狀 {list(X.shape[1:])} 與模型設定 [{config.C}, {config.T}] 不符")
    return PreparedData(X, y, subjects, event_census(trials))


@dataclass
class RunTask:
    """一次獨立執行所需的全部輸入（可 pickle，供平行 worker 使用）"""

    config: RunConfig
    subject: str
    seed: int
    X_train: np.ndarray
    y_train: np.ndarray
    X_monitor: np.ndarray
    y_monitor: np.ndarray
    X_eval: np.ndarray
    y_eval: np.ndarray

    @property
    def name(self) -> str:
        return f"{self.config.model.variant}_{self.subject}_seed{self.seed}"


def run_task(task: RunTask) -> RunReport:
    """建立模型、訓練、寫檢查點並在 eval 集上評估"""
    config = task.config
    logger.info(f"開始執行 {task.name}: train={len(task.y_train)}, monitor={len(task.y_monitor)}, eval={len(task.y_eval)}")
    model = build(config.to_model_config(), task.seed)
    rng = RngStream(task.seed).spawn('train', task.subject)
    result = train_model(model, task.X_train, task.y_train, task.X_monitor, task.y_monitor,
                         config.train, config.augment, rng, log_path(config.output_dir, task.name))
    save_checkpoint(model, checkpoint_path(config.output_dir, task.name))

    _, _, predictions = evaluate_model(model, task.X_eval, task.y_eval)
    metrics = confusion_and_f1(predictions, task.y_eval)
    logger.info(f"完成 {task.name}: eval 準確率 {metrics.accuracy:.4f}（最佳 epoch {result.best_epoch}/{result.epochs_trained}）")
    return RunReport(
        **metrics.model_dump(),
        subject=task.subject,
        seed=task.seed,
        variant=config.model.variant,
        train_accuracy=result.train_accuracy,
        epochs_trained=result.epochs_trained,
        best_epoch=result.best_epoch,
        n_train=len(task.y_train),
        n_eval=len(task.y_eval),
        echo_state_divergence=result.echo_state_divergence,
    )


def execute(tasks: List[RunTask], jobs: int = 1) -> List[RunReport]:
    """依任務順序回傳結果；jobs > 1 時以多行程平行執行"""
    if jobs <= 1 or len(tasks) <= 1:
        return [run_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(run_task, tasks))


def within_subject_tasks(config: RunConfig, data: PreparedData) -> List[RunTask]:
    """
    受試者內協定：每位受試者、每個 seed 各做一次分層 7:3 切分

    驗證集同時作為提前停止的監控集。
    """
    tasks = []
    for subject in data.subject_ids():
        members = np.flatnonzero(data.subjects == subject)
        for seed in config.train.seeds:
            plan = stratified_split(data.y[members], config.train.eval_fraction, seed)
            X_train, y_train = data.select(members[plan.train])
            X_eval, y_eval = data.select(members[plan.eval])
            tasks.append(RunTask(config, subject, seed, X_train, y_train, X_eval, y_eval, X_eval, y_eval))
    return tasks


def loso_tasks(config: RunConfig, data: PreparedData) -> List[RunTask]:
    """
    LOSO 協定：留出受試者只用於最後評估

    提前停止的監控集只從訓練受試者分層切出。
    """
    tasks = []
    for fold in loso_folds(data.subjects):
        for seed in config.train.seeds:
            monitor_plan = stratified_split(data.y[fold.train], config.train.loso_monitor_fraction, seed)
            X_train, y_train = data.select(fold.train[monitor_plan.train])
            X_monitor, y_monitor = data.select(fold.train[monitor_plan.eval])
            X_eval, y_eval = data.select(fold.eval)
            tasks.append(RunTask(config, fold.held_out, seed, X_train, y_train, X_monitor, y_monitor, X_eval, y_eval))
    return tasks


def build_report(protocol: str, config: RunConfig, runs: List[RunReport],
                 budget: ParameterBudget, census: Dict[str, Dict[str, int]]) -> EvalReport:
    subjects = []
    for subject in dict.fromkeys(r.subject for r in runs):
        chosen = [r for r in runs if r.subject == subject]
        subjects.append(SubjectReport(subject=subject, runs=chosen, summary=aggregate_runs(chosen)))
    return EvalReport(
        protocol=protocol,
        variant=config.model.variant,
        seeds=sorted(dict.fromkeys(r.seed for r in runs)),
        parameters=budget,
        subjects=subjects,
        macro=macro_over_subjects([s.summary for s in subjects]),
        seed_summary=seed_summary(runs),
        event_census=census,
    )


def parameter_budget(config: RunConfig) -> ParameterBudget:
    return build(config.to_model_config(), config.train.seeds[0]).parameter_budget()


def run_experiment(config: RunConfig, data: Optional[PreparedData] = None,
                   jobs: Optional[int] = None) -> EvalReport:
    """依 config.protocol 執行完整實驗並彙總成報告"""
    data = data or prepare_data(config)
    if config.protocol == 'loso':
        tasks = loso_tasks(config, data)
    else:
        tasks = within_subject_tasks(config, data)
    logger.info(f"{config.protocol} 實驗（{config.model.variant}）: {len(tasks)} 次執行")
    runs = execute(tasks, jobs or config.train.jobs)
    report = build_report(config.protocol, config, runs, parameter_budget(config), data.census)
    logger.info(f"實驗完成: 平均準確率 {report.macro.accuracy_mean:.4f} ± {report.macro.accuracy_std:.4f}")
    return report


def run_ablation(config: RunConfig, data: Optional[PreparedData] = None,
                 jobs: Optional[int] = None) -> Tuple[EvalReport, EvalReport]:
    """
    消融：full 與 conv-only 使用相同資料、切分與 seed

    兩個變體的前端初始化在相同 seed 下完全一致；檢查點依變體名稱分開存放。
    """
    data = data or prepare_data(config)
    reports = []
    for variant in ('full', 'conv-only'):
        variant_config = config.model_copy(update={'model': config.model.model_copy(update={'variant': variant})})
        reports.append(run_experiment(variant_config, data, jobs))
    return reports[0], reports[1]


def evaluate_checkpoint(model: EsnNetModel, config: RunConfig,
                        data: Optional[PreparedData] = None) -> EvalReport:
    """以既有檢查點評估整個資料集，依受試者分列"""
    data = data or prepare_data(config)
    runs = []
    for subject in data.subject_ids():
        X, y = data.select(np.flatnonzero(data.subjects == subject))
        _, _, predictions = evaluate_model(model, X, y)
        metrics = confusion_and_f1(predictions, y)
        runs.append(RunReport(**metrics.model_dump(), subject=subject, seed=model.seed,
                              variant=model.variant, n_train=0, n_eval=len(y)))
    report = build_report('checkpoint', config, runs, model.parameter_budget(), data.census)
    return report.model_copy(update={'variant': model.variant})
