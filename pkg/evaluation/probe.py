"""
線性探測
Welch 頻帶功率特徵 + 邏輯迴歸；在訓練 ESNNet 之前先確認資料集本身是可學的
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.signal import welch
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from config import Config
from evaluation.metrics import confusion_and_f1
from evaluation.protocols import stratified_split
from schemas.report import ClassificationMetrics

logger = logging.getLogger(__name__)

PROBE_BANDS_HZ: Tuple[Tuple[float, float], ...] = ((4, 7), (7, 10), (12, 16), (20, 25), (28, 38))
PROBE_THRESHOLD = 0.90


@dataclass
class ProbeResult:
    subject: str
    metrics: ClassificationMetrics
    n_train: int
    n_eval: int

    @property
    def passed(self) -> bool:
        return self.metrics.accuracy >= PROBE_THRESHOLD


def band_power_features(X: np.ndarray, fs: float = Config.SAMPLE_RATE,
                        bands: Sequence[Tuple[float, float]] = PROBE_BANDS_HZ) -> np.ndarray:
    """[N, C, T] → [N, C·len(bands)] 的 log 頻帶功率"""
    freqs, power = welch(X, fs=fs, nperseg=min(X.shape[-1], Config.SEGMENT_SAMPLES), axis=-1)
    features = []
    for low, high in bands:
        mask = (freqs >= low) & (freqs < high)
        features.append(np.log(power[..., mask].mean(axis=-1) + 1e-12))
    return np.concatenate(features, axis=1)


def linear_probe(X: np.ndarray, y: np.ndarray, seed: int = 0, eval_fraction: float = 0.3,
                 subject: str = 'all', fs: float = Config.SAMPLE_RATE) -> ProbeResult:
    """分層切分後以正規化邏輯迴歸分類頻帶功率特徵"""
    plan = stratified_split(y, eval_fraction, seed)
    features = band_power_features(X, fs)
    classifier = make_pipeline(StandardScaler(), LogisticRegression(C=1.0, max_iter=2000))
    classifier.fit(features[plan.train], y[plan.train])
    metrics = confusion_and_f1(classifier.predict(features[plan.eval]), y[plan.eval])
    result = ProbeResult(subject, metrics, len(plan.train), len(plan.eval))
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, f"線性探測 {subject}: 準確率 {metrics.accuracy:.4f}（門檻 {PROBE_THRESHOLD}）")
    return result
