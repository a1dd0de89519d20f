"""
評估指標
混淆矩陣、逐類別 precision/recall/F1，以及跨 seed / 跨受試者彙總
"""
from typing import List, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from config import Config
from exceptions import DataError
from schemas.report import ClassificationMetrics, RunReport, Summary


def confusion_and_f1(predictions: Sequence[int], labels: Sequence[int],
                     classes: int = Config.N_CLASSES) -> ClassificationMetrics:
    """
    confusion[i][j]：真實類別 i 被預測為 j 的次數；P + R = 0 時 F1 記為 0

    Raises:
        DataError: 長度不同或類別超出範圍
    """
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if predictions.size != labels.size:
        raise DataError(f"預測數 {predictions.size} 與標籤數 {labels.size} 不同")
    for name, values in (('預測', predictions), ('標籤', labels)):
        if values.size and (values.min() < 0 or values.max() >= classes):
            raise DataError(f"{name}必須介於 0 與 {classes - 1} 之間")

    all_classes = list(range(classes))
    if labels.size == 0:
        confusion = np.zeros((classes, classes), dtype=np.int64)
        precision = recall = f1 = np.zeros(classes)
    else:
        confusion = confusion_matrix(labels, predictions, labels=all_classes)
        precision, recall, f1, _ = precision_recall_fscore_support(
            labels, predictions, labels=all_classes, average=None, zero_division=0)
    actual = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    total = int(confusion.sum())

    return ClassificationMetrics(
        confusion=confusion.astype(int).tolist(),
        accuracy=float(np.trace(confusion) / total) if total else 0.0,
        precision=[float(p) for p in precision],
        recall=[float(r) for r in recall],
        f1=[float(f) for f in f1],
        macro_f1=float(np.mean(f1)),
        support=[int(n) for n in actual],
        predicted_distribution=[int(n) for n in predicted],
    )


def _mean_std(values: np.ndarray):
    """沿第 0 軸的平均與樣本標準差（n−1）；n = 1 或全部相同時標準差為 0"""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros_like(mean)
    constant = np.all(values == values[0], axis=0)
    return np.where(constant, values[0], mean), np.where(constant, 0.0, std)


def summarize(accuracies: Sequence[float], f1s: Sequence[Sequence[float]]) -> Summary:
    accuracies = np.asarray(accuracies, dtype=np.float64)
    f1s = np.asarray(f1s, dtype=np.float64)
    if accuracies.size == 0:
        raise DataError("沒有可彙總的執行結果")
    accuracy_mean, accuracy_std = _mean_std(accuracies)
    f1_mean, f1_std = _mean_std(f1s)
    macro_mean, macro_std = _mean_std(f1s.mean(axis=1))
    return Summary(
        n=int(accuracies.size),
        accuracy_mean=float(accuracy_mean),
        accuracy_std=float(accuracy_std),
        f1_mean=f1_mean.tolist(),
        f1_std=f1_std.tolist(),
        macro_f1_mean=float(macro_mean),
        macro_f1_std=float(macro_std),
    )


def aggregate_runs(runs: List[ClassificationMetrics]) -> Summary:
    """跨 seed 彙總：準確率與逐類別 F1 的平均與樣本標準差"""
    return summarize([r.accuracy for r in runs], [r.f1 for r in runs])


def macro_over_subjects(summaries: List[Summary]) -> Summary:
    """報表的平均列：各受試者平均值的平均，標準差取跨受試者"""
    return summarize([s.accuracy_mean for s in summaries], [s.f1_mean for s in summaries])


def seed_summary(runs: List[RunReport]) -> Summary:
    """每個 seed 先對受試者（fold）取平均，再跨 seed 彙總"""
    seeds = list(dict.fromkeys(r.seed for r in runs))
    accuracies, f1s = [], []
    for seed in seeds:
        chosen = [r for r in runs if r.seed == seed]
        accuracies.append(float(np.mean([r.accuracy for r in chosen])))
        f1s.append(np.mean([r.f1 for r in chosen], axis=0).tolist())
    return summarize(accuracies, f1s)
