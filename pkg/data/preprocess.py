"""
前處理模組
連續紀錄帶通濾波 → 依事件切段 → 每段逐通道 z-score
"""
import logging
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import signal

from config import Config
from exceptions import ConfigError, RangeError
from data.dataset import Segment, Trial
from schemas.config import PreprocessConfig

logger = logging.getLogger(__name__)

# 標準差低於此值的通道視為常數，z-score 後為全零
DEGENERATE_STD = 1e-8


def bandpass_sos(low: float, high: float, fs: float, order: int = 4) -> np.ndarray:
    """
    Butterworth 帶通濾波器（second-order sections）

    Raises:
        ConfigError: 不符合 0 < low < high < fs/2
    """
    nyquist = 0.5 * fs
    if not 0 < low < high < nyquist:
        raise ConfigError(f"帶通頻帶不合法: 需 0 < low ({low}) < high ({high}) < fs/2 ({nyquist})")
    return signal.butter(order, [low, high], btype='bandpass', fs=fs, output='sos')


def bandpass(x: np.ndarray, low: float = 1.0, high: float = 40.0, fs: float = Config.SAMPLE_RATE,
             order: int = 4) -> np.ndarray:
    """
    零相位帶通濾波（逐通道先正向再反向）

    Args:
        x: [C, N] 或 [N]
        order: 每個截止頻率的 Butterworth 階數；邊界以 3 倍濾波器階數的反射延伸處理

    Raises:
        ConfigError: 頻帶不合法
        RangeError: N 不足濾波器暖機長度
    """
    sos = bandpass_sos(low, high, fs, order)
    padlen = 3 * (2 * order)
    if x.shape[-1] <= padlen:
        raise RangeError(f"訊號長度 {x.shape[-1]} 不足濾波器暖機長度 {padlen}")
    return signal.sosfiltfilt(sos, np.asarray(x, dtype=np.float64), axis=-1, padtype='odd', padlen=padlen)


def zscore(segment: np.ndarray) -> np.ndarray:
    """逐通道減平均除標準差；標準差 < 1e-8 的通道輸出全零"""
    x = np.asarray(segment, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    degenerate = std < DEGENERATE_STD
    out = (x - mean) / np.where(degenerate, 1.0, std)
    return np.where(degenerate, 0.0, out)


def segment_bounds(onset_s: float, fs: float = Config.SAMPLE_RATE,
                   offset_s: float = Config.SEGMENT_OFFSET_S,
                   duration_s: float = Config.SEGMENT_DURATION_S) -> Tuple[int, int]:
    """切段的取樣點範圍 [start, stop)；start 以四捨五入（.5 進位）取整"""
    start = int(np.floor((onset_s + offset_s) * fs + 0.5))
    length = int(np.floor(duration_s * fs + 0.5))
    return start, start + length


def extract_segment(trial: Trial, onset_s: float, label: Optional[int] = None,
                    offset_s: float = Config.SEGMENT_OFFSET_S,
                    duration_s: float = Config.SEGMENT_DURATION_S) -> Segment:
    """
    取出 [onset + 0.2 s, onset + 0.7 s) 的切段（500 Hz 時恰好 250 點）

    Raises:
        RangeError: 時間窗超出紀錄
    """
    start, stop = segment_bounds(onset_s, trial.sample_rate, offset_s, duration_s)
    if start < 0 or stop > trial.n_samples:
        raise RangeError(
            f"{trial.subject}/{trial.condition}: onset {onset_s}s 的時間窗 [{start}, {stop}) 超出紀錄長度 {trial.n_samples}"
        )
    return Segment(trial.samples[:, start:stop], -1 if label is None else label,
                   trial.subject, trial.condition, onset_s)


def preprocess_trial(trial: Trial, config: Optional[PreprocessConfig] = None) -> List[Segment]:
    """單一試次的完整前處理；每個事件一個切段"""
    config = config or PreprocessConfig()
    filtered = replace(trial, samples=bandpass(trial.samples, config.low_hz, config.high_hz,
                                               trial.sample_rate, config.filter_order))
    segments = []
    for event in trial.events:
        segment = extract_segment(filtered, event.onset_s, event.label_index, config.offset_s, config.duration_s)
        segments.append(replace(segment, data=zscore(segment.data)))
    return segments


def preprocess_trials(trials: List[Trial], config: Optional[PreprocessConfig] = None) -> List[Segment]:
    """
    依試次順序前處理所有試次

    每個試次只依賴自身的資料，沒有跨試次或跨受試者的統計量。
    """
    segments = []
    for trial in trials:
        segments.extend(preprocess_trial(trial, config))
    logger.info(f"前處理完成: {len(trials)} 個試次 → {len(segments)} 個切段")
    return segments


def stack_segments(segments: List[Segment]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """切段清單 → (X [N, C, T], y [N], subjects [N])"""
    if not segments:
        return np.zeros((0, Config.N_CHANNELS, Config.SEGMENT_SAMPLES)), np.zeros(0, dtype=np.int64), np.array([], dtype=object)
    X = np.stack([s.data for s in segments])
    y = np.array([s.label for s in segments], dtype=np.int64)
    subjects = np.array([s.subject for s in segments], dtype=object)
    return X, y, subjects
