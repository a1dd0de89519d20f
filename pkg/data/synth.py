"""
合成資料集
三類動作各以 8 / 14 / 22 Hz 振盪經類別專屬的空間混合向量投影到 72 通道，
再疊加粉紅雜訊與白雜訊；每位受試者的混合向量另加隨機擾動以模擬受試者間差異。
"""
import logging
from typing import List, Optional

import numpy as np
from scipy import fft as sp_fft
from scipy.signal import windows

from config import Config
from data.dataset import Event, Trial
from nn.tensor import RngStream
from schemas.config import SynthSpec

logger = logging.getLogger(__name__)

CLASS_FREQUENCIES_HZ = (8.0, 14.0, 22.0)

# 每個試次檔最多放幾個事件（限制單一 payload 的大小）
EVENTS_PER_TRIAL = 60
LEAD_S = 1.0
TAIL_S = 1.0
BURST_DELAY_S = 0.1
BURST_DURATION_S = 0.7


def pink_noise(shape, rng: RngStream) -> np.ndarray:
    """1/f 功率譜的雜訊，沿最後一軸產生，每列標準差為 1"""
    n = shape[-1]
    spectrum = sp_fft.rfft(rng.normal(shape), axis=-1)
    freqs = np.arange(spectrum.shape[-1], dtype=np.float64)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    noise = sp_fft.irfft(spectrum * scale, n, axis=-1)
    std = noise.std(axis=-1, keepdims=True)
    return noise / np.where(std > 0, std, 1.0)


def _unit_rms(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(np.mean(v ** 2))


def mixing_vectors(spec: SynthSpec, subject: int) -> np.ndarray:
    """受試者 subject 的三個類別混合向量 [3, C]（每個向量 RMS 為 1）"""
    root = RngStream(spec.seed).spawn('synth')
    vectors = []
    for c in range(Config.N_CLASSES):
        base = _unit_rms(root.spawn('class', c).normal((spec.channels,)))
        perturbation = root.spawn('subject', subject, 'class', c).normal((spec.channels,))
        vectors.append(_unit_rms(base + spec.subject_variability * perturbation))
    return np.stack(vectors)


def _render_trial(labels: np.ndarray, mixing: np.ndarray, spec: SynthSpec, rng: RngStream) -> np.ndarray:
    fs = spec.sample_rate
    n = int(round((LEAD_S + len(labels) * spec.event_spacing_s + TAIL_S) * fs))
    noise = (pink_noise((spec.channels, n), rng.spawn('pink')) +
             rng.spawn('white').normal((spec.channels, n))) / np.sqrt(2.0)
    x = spec.noise_scale * noise

    burst_len = int(round(BURST_DURATION_S * fs))
    envelope = windows.tukey(burst_len, alpha=0.3)
    t = np.arange(burst_len) / fs
    phases = rng.spawn('phase').uniform((len(labels),), 0.0, 2.0 * np.pi)
    for j, label in enumerate(labels):
        onset = LEAD_S + j * spec.event_spacing_s
        start = int(round((onset + BURST_DELAY_S) * fs))
        burst = spec.signal_amplitude * envelope * np.sin(2.0 * np.pi * CLASS_FREQUENCIES_HZ[label] * t + phases[j])
        x[:, start:start + burst_len] += np.outer(mixing[label], burst)
    return x.astype(np.float32)


def synth_generate(n_per_class: int, subjects: int, seed: int = 0,
                   spec: Optional[SynthSpec] = None) -> List[Trial]:
    """
    產生合成試次

    每位受試者恰好 n_per_class 個事件／類別，事件順序隨機；事件分散到多個試次，
    試次輪流標記 laser / LED 條件。

    Args:
        n_per_class: 每位受試者每類的事件數
        subjects: 受試者數
        seed: 亂數種子
        spec: 其餘參數（雜訊強度、受試者差異…）；n_per_class/subjects/seed 以引數為準

    Returns:
        List[Trial]: 受試者 S0、S1… 的試次
    """
    if n_per_class < 1 or subjects < 1:
        raise ValueError(f"n_per_class 與 subjects 必須 ≥ 1: {n_per_class}, {subjects}")
    spec = (spec or SynthSpec()).model_copy(update={'n_per_class': n_per_class, 'subjects': subjects, 'seed': seed})
    root = RngStream(spec.seed).spawn('synth')

    trials = []
    for s in range(subjects):
        subject = f"S{s}"
        mixing = mixing_vectors(spec, s)
        labels = np.repeat(np.arange(Config.N_CLASSES), n_per_class)
        labels = labels[root.spawn('subject', s, 'order').permutation(labels.size)]

        for t, start in enumerate(range(0, labels.size, EVENTS_PER_TRIAL)):
            chunk = labels[start:start + EVENTS_PER_TRIAL]
            condition = Config.CONDITIONS[t % len(Config.CONDITIONS)]
            samples = _render_trial(chunk, mixing, spec, root.spawn('subject', s, 'trial', t))
            events = [Event(round(LEAD_S + j * spec.event_spacing_s, 6), Config.CLASS_NAMES[label])
                      for j, label in enumerate(chunk)]
            trials.append(Trial(subject, condition, spec.sample_rate, samples, events,
                                f"{subject}_{condition}_{t:03d}.f32"))

    logger.info(f"合成資料集: {subjects} 位受試者 × {n_per_class} 個事件/類別，共 {len(trials)} 個試次")
    return trials
