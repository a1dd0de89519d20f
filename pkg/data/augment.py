"""
資料增強模組（只用於訓練資料）
時間平移（零填補）、整段正負反轉、逐元素高斯雜訊
"""
from dataclasses import replace

import numpy as np

from data.dataset import Segment
from nn.tensor import RngStream
from schemas.config import AugmentConfig


def shift(x: np.ndarray, offset: int) -> np.ndarray:
    """沿時間軸平移 offset 點，空出的一端補零"""
    if offset == 0:
        return x.copy()
    out = np.zeros_like(x)
    if offset > 0:
        out[..., offset:] = x[..., :-offset]
    else:
        out[..., :offset] = x[..., -offset:]
    return out


def augment_array(x: np.ndarray, config: AugmentConfig, rng: RngStream) -> np.ndarray:
    """對單一 [C, T] 切段套用各項啟用的增強"""
    out = x
    if config.shift_enabled and config.max_shift_samples > 0:
        m = config.max_shift_samples
        out = shift(out, int(rng.integers(-m, m, endpoint=True)))
    if config.inversion_enabled and rng.random() < config.inversion_probability:
        out = -out
    if config.noise_enabled and config.noise_sigma > 0:
        out = out + rng.normal(out.shape, 0.0, config.noise_sigma)
    return out if out is not x else x.copy()


def augment(segment: Segment, config: AugmentConfig, rng: RngStream) -> Segment:
    return replace(segment, data=augment_array(segment.data, config, rng))


def augment_batch(X: np.ndarray, config: AugmentConfig, rng: RngStream) -> np.ndarray:
    """逐樣本增強 [B, C, T]；抽樣順序固定為樣本順序"""
    return np.stack([augment_array(x, config, rng) for x in X]).astype(X.dtype, copy=False)
