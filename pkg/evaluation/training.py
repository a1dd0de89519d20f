"""
訓練迴圈
小批次 Adam、每個 epoch 重新隨機增強訓練資料、以驗證準確率提前停止並還原最佳 epoch 的參數
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from data import augment as augmentation
from exceptions import StateError, TrainingError
from models import EsnNetModel, loss_and_grad, predict
from nn.layers import softmax_cross_entropy
from nn.optim import Adam, EarlyStopper, should_stop
from nn.reservoir import echo_state_probe
from nn.tensor import RngStream
from schemas.config import AugmentConfig, TrainSection
from utils.artifacts import append_jsonl, write_text

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 256


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    wall_time_s: float


@dataclass
class TrainResult:
    history: List[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    epochs_trained: int = 0
    train_accuracy: float = 0.0
    reservoir_fingerprint: Optional[str] = None
    echo_state_divergence: Optional[float] = None


def evaluate_model(model: EsnNetModel, X: np.ndarray, y: np.ndarray,
                   batch_size: int = EVAL_BATCH_SIZE) -> Tuple[float, float, np.ndarray]:
    """
    推論模式評估（不做資料增強）

    Returns:
        (平均交叉熵, 準確率, 預測類別)
    """
    if len(X) == 0:
        return 0.0, 0.0, np.zeros(0, dtype=np.int64)
    total_loss, predictions = 0.0, []
    for start in range(0, len(X), batch_size):
        logits = model.forward(X[start:start + batch_size], 'infer')
        batch_loss, _ = softmax_cross_entropy(logits, y[start:start + batch_size])
        total_loss += batch_loss * len(logits)
        predictions.append(predict(logits))
    predictions = np.concatenate(predictions)
    return total_loss / len(X), float(np.mean(predictions == y)), predictions


def _snapshot(model: EsnNetModel) -> Dict[str, np.ndarray]:
    state = {p.name: p.value.copy() for p in model.parameters()}
    state.update({name: value.copy() for name, value in model.buffers().items()})
    return state


def _restore(model: EsnNetModel, state: Dict[str, np.ndarray]) -> None:
    for p in model.parameters():
        p.assign(state[p.name])
    for name in model.buffers():
        model.set_buffer(name, state[name])


def train_model(model: EsnNetModel, X_train: np.ndarray, y_train: np.ndarray,
                X_val: np.ndarray, y_val: np.ndarray, train: TrainSection,
                augment: Optional[AugmentConfig], rng: RngStream,
                log_file: Optional[Path] = None) -> TrainResult:
    """
    訓練模型

    每個 epoch：以 rng 派生的排列打亂訓練資料、逐批增強後做一次 Adam 更新，
    之後在驗證集（推論模式、不增強）計算準確率並交給提前停止判斷。
    結束時還原驗證準確率最佳的 epoch 的參數與 BN 統計。

    Raises:
        TrainingError: 損失或梯度出現非有限值
        StateError: 固定儲備池 W 在訓練中被修改
    """
    fingerprint = model.reservoir_fingerprint()
    optimizer = Adam(model.trainable_parameters(), learning_rate=train.learning_rate)
    stopper = EarlyStopper(patience=train.patience)
    result = TrainResult(reservoir_fingerprint=fingerprint)
    best_state = _snapshot(model)
    if log_file is not None:
        write_text(log_file, '')

    n = len(X_train)
    for epoch in range(1, train.max_epochs + 1):
        started = time.perf_counter()
        order = rng.spawn('epoch', epoch).permutation(n)
        epoch_loss, correct = 0.0, 0
        for b, start in enumerate(range(0, n, train.batch_size)):
            index = order[start:start + train.batch_size]
            batch = X_train[index]
            if augment is not None:
                batch = augmentation.augment_batch(batch, augment, rng.spawn('augment', epoch, b))
            value, logits = loss_and_grad(model, batch, y_train[index], train.l2)
            if not np.isfinite(value):
                raise TrainingError(f"第 {epoch} 個 epoch 第 {b} 批的損失非有限值: {value}")
            optimizer.step()
            epoch_loss += value * len(index)
            correct += int(np.sum(predict(logits) == y_train[index]))

        val_loss, val_accuracy, _ = evaluate_model(model, X_val, y_val)
        log = EpochLog(epoch, epoch_loss / n, correct / n, val_loss, val_accuracy,
                       round(time.perf_counter() - started, 3))
        result.history.append(log)
        if log_file is not None:
            append_jsonl(log_file, asdict(log))
        logger.debug(f"epoch {epoch}: loss={log.train_loss:.4f} acc={log.train_accuracy:.3f} val_acc={val_accuracy:.3f}")

        improved_before = stopper.best_epoch
        stop = should_stop(stopper, val_accuracy)
        if stopper.best_epoch != improved_before:
            best_state = _snapshot(model)
        if stop:
            break

    _restore(model, best_state)
    result.epochs_trained = len(result.history)
    result.best_epoch = stopper.best_epoch
    result.best_val_accuracy = stopper.best

    if model.reservoir_fingerprint() != fingerprint:
        raise StateError("固定儲備池 W 在訓練過程中被修改")
    _, result.train_accuracy, _ = evaluate_model(model, X_train, y_train)
    result.echo_state_divergence = echo_state_divergence(model, X_val if len(X_val) else X_train, rng)
    return result


def echo_state_divergence(model: EsnNetModel, X: np.ndarray, rng: RngStream) -> Optional[float]:
    """
    以第一個樣本的前端輸出驅動儲備池，比較零初始狀態與隨機初始狀態的最終距離

    只記錄不判定；距離沒有縮小時記一筆警告。
    """
    if model.esn is None or len(X) == 0:
        return None
    reservoir = model.esn.reservoir
    drive = model.front_end(X[:1], 'infer')[0]
    h0_b = rng.spawn('echo-state').normal((reservoir.size,)).astype(drive.dtype)
    series = echo_state_probe(reservoir, drive, np.zeros(reservoir.size, dtype=drive.dtype), h0_b)
    if series[-1] >= float(np.linalg.norm(h0_b)):
        logger.warning(f"回聲狀態探測未收斂: 最終距離 {series[-1]:.3e}")
    return float(series[-1])
