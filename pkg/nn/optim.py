"""
最佳化模組
Adam（含偏差修正）與依驗證準確率的提前停止
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List

import numpy as np

from exceptions import NumericError
from nn.tensor import Parameter, Tensor, is_finite

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Adam 狀態：每個參數的一階/二階動差與步數"""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, Tensor] = field(default_factory=dict)
    v: Dict[str, Tensor] = field(default_factory=dict)


def adam_step(params: Iterable[Parameter], state: AdamState) -> None:
    """
    對所有可訓練參數做一次 Adam 更新（梯度取自 Parameter.grad）

    trainable=False 的參數直接略過（固定儲備池 W 永不被修改）。

    Raises:
        NumericError: 任一梯度含 NaN/Inf，訊息指出參數名稱
    """
    trainable = [p for p in params if p.trainable]
    for p in trainable:
        if not is_finite(p.grad):
            raise NumericError(f"參數 {p.name} 的梯度含非有限值")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p in trainable:
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m = state.m[p.name] = b1 * state.m[p.name] + (1.0 - b1) * p.grad
        v = state.v[p.name] = b2 * state.v[p.name] + (1.0 - b2) * p.grad ** 2
        update = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.value -= update.astype(p.value.dtype, copy=False)


class Adam:
    """持有參數清單與 AdamState 的最佳化器"""

    def __init__(self, params: List[Parameter], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(learning_rate, beta1, beta2, eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, self.state)


@dataclass
class EarlyStopper:
    """
    提前停止：以驗證準確率為指標（越大越好），嚴格變大才算進步，
    連續 patience 個 epoch 沒有進步即停止
    """

    patience: int = 8
    best: float = float('-inf')
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    epoch: int = 0

    def update(self, metric: float) -> bool:
        """記錄一個 epoch 的指標；回傳本 epoch 是否為新的最佳值"""
        if not np.isfinite(metric):
            raise NumericError(f"提前停止指標必須為有限值: {metric}")
        self.epoch += 1
        if metric > self.best:
            self.best = float(metric)
            self.best_epoch = self.epoch
            self.epochs_since_improvement = 0
            return True
        self.epochs_since_improvement += 1
        return False

    @property
    def stopped(self) -> bool:
        return self.epochs_since_improvement >= self.patience


def should_stop(stopper: EarlyStopper, metric: float) -> bool:
    """記錄指標並判斷是否停止訓練"""
    stopper.update(metric)
    if stopper.stopped:
        logger.info(f"提前停止: 連續 {stopper.patience} 個 epoch 未進步，最佳 {stopper.best:.4f} 於第 {stopper.best_epoch} 個 epoch")
        return True
    return False
