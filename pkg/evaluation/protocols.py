"""
切分協定
受試者內分層 7:3 切分與留一受試者（LOSO）fold
"""
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import numpy as np

from exceptions import DataError, ProtocolError
from nn.tensor import RngStream

logger = logging.getLogger(__name__)

Scheme = Literal['stratified-holdout', 'loso']


@dataclass
class SplitPlan:
    """一次切分：train 與 eval 的樣本索引（皆已排序、互斥）"""

    train: np.ndarray
    eval: np.ndarray
    scheme: Scheme
    seed: Optional[int] = None
    held_out: Optional[str] = None

    def __post_init__(self):
        if np.intersect1d(self.train, self.eval).size:
            raise ProtocolError("train 與 eval 索引重疊")


def stratified_split(labels: Sequence[int], eval_fraction: float = 0.3, seed: int = 0) -> SplitPlan:
    """
    分層切分：每個類別各自以 seed 打亂後切出 round(eval_fraction·n_c) 個驗證樣本

    round 為 .5 進位；每類至少留 1 個給 train、1 個給 eval。

    Raises:
        DataError: 某類別少於 2 個樣本
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not 0 < eval_fraction < 1:
        raise ValueError(f"eval_fraction 必須介於 (0, 1): {eval_fraction}")
    rng = RngStream(seed).spawn('split')

    train, evaluation = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n = members.size
        if n < 2:
            raise DataError(f"類別 {int(c)} 只有 {n} 個樣本，無法分層切分")
        n_eval = min(max(int(np.floor(eval_fraction * n + 0.5)), 1), n - 1)
        shuffled = members[rng.spawn(int(c)).permutation(n)]
        evaluation.append(shuffled[:n_eval])
        train.append(shuffled[n_eval:])

    return SplitPlan(np.sort(np.concatenate(train)), np.sort(np.concatenate(evaluation)),
                     'stratified-holdout', seed)


def loso_folds(subjects: Sequence[str]) -> List[SplitPlan]:
    """
    每位受試者一個 fold：該受試者全部樣本為 eval，其餘為 train

    Args:
        subjects: 每個樣本的受試者 ID

    Raises:
        ProtocolError: 少於兩位受試者
    """
    subjects = np.asarray(subjects, dtype=object)
    distinct = list(dict.fromkeys(subjects.tolist()))
    if len(distinct) < 2:
        raise ProtocolError(f"LOSO 需要至少兩位受試者，目前只有 {distinct}")
    folds = []
    for subject in distinct:
        held = subjects == subject
        folds.append(SplitPlan(np.flatnonzero(~held), np.flatnonzero(held), 'loso', held_out=subject))
    logger.debug(f"LOSO: {len(folds)} 個 fold")
    return folds
