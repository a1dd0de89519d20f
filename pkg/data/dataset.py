"""
資料集模組
manifest（JSON）＋ 每個試次一個 little-endian float32、通道優先排列的二進位檔

payload 位元組配置：第 c 個通道第 n 個取樣點位於 byte offset 4·(c·N + n)。
"""
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from config import Config
from exceptions import ArtifactError, DataError
from schemas.manifest import DatasetManifest, EventEntry, TrialEntry

logger = logging.getLogger(__name__)

PAYLOAD_DTYPE = np.dtype('<f4')


@dataclass(frozen=True)
class Event:
    onset_s: float
    label: str

    @property
    def label_index(self) -> int:
        return Config.CLASS_NAMES.index(self.label)


@dataclass
class Trial:
    """一段連續紀錄；samples 為 [C, N]"""

    subject: str
    condition: str
    sample_rate: float
    samples: np.ndarray
    events: List[Event] = field(default_factory=list)
    source: str = ''

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class Segment:
    """一個 [C, T] 的切段與其類別索引"""

    data: np.ndarray
    label: int
    subject: str
    condition: str = ''
    onset_s: float = 0.0

    @property
    def label_name(self) -> str:
        return Config.CLASS_NAMES[self.label]


def _trial_lines(text: str) -> List[int]:
    """各試次（以 "file" 鍵定位）在 manifest 中的行號"""
    return [text.count('\n', 0, m.start()) + 1 for m in re.finditer(r'"file"\s*:', text)]


def _where(path: Path, lines: List[int], index: Optional[int]) -> str:
    if index is not None and index < len(lines):
        return f"{path}:{lines[index]}"
    return str(path)


def load_dataset(manifest_path: Union[str, Path], channels: Optional[int] = None,
                 sample_rate: Optional[float] = None) -> List[Trial]:
    """
    讀取並完整驗證資料集

    任何不一致都會讓整份 manifest 被拒絕，錯誤訊息帶 manifest 行號與試次。

    Args:
        manifest_path: manifest.json 路徑
        channels: 預期通道數（None 表示不檢查）
        sample_rate: 預期取樣率（None 表示不檢查）

    Raises:
        ArtifactError: manifest 無法讀取
        DataError: 格式錯誤、檔案缺失、通道數不符、事件超出紀錄、payload 含 NaN
    """
    path = Path(manifest_path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ArtifactError(f"無法讀取 manifest {path}: {e}") from e

    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{e.lineno}: JSON 格式錯誤: {e.msg}") from e

    lines = _trial_lines(text)
    try:
        manifest = DatasetManifest.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first['loc']
        index = loc[1] if len(loc) > 1 and loc[0] == 'trials' and isinstance(loc[1], int) else None
        key = '.'.join(str(p) for p in loc)
        raise DataError(f"{_where(path, lines, index)}: {key}: {first['msg']}") from e

    if manifest.version != Config.MANIFEST_VERSION:
        raise DataError(f"{path}:1: manifest 版本 {manifest.version} 不支援（預期 {Config.MANIFEST_VERSION}）")
    if sample_rate is not None and manifest.sample_rate != sample_rate:
        raise DataError(f"{path}: manifest 取樣率 {manifest.sample_rate} Hz，預期 {sample_rate} Hz")
    if not manifest.trials and channels is not None and manifest.channels != channels:
        raise DataError(f"{path}: manifest 宣告 {manifest.channels} 個通道，預期 {channels}")

    window_end = Config.SEGMENT_OFFSET_S + Config.SEGMENT_DURATION_S
    trials = []
    for i, entry in enumerate(manifest.trials):
        where = f"{_where(path, lines, i)}: trial[{i}] ({entry.file})"
        if channels is not None and manifest.channels != channels:
            raise DataError(f"{where}: manifest 宣告 {manifest.channels} 個通道，預期 {channels}")
        samples = _read_payload(path.parent / entry.file, manifest.channels, entry.n_samples, where)
        trial = Trial(entry.subject, entry.condition, manifest.sample_rate, samples,
                      [Event(e.onset_s, e.label) for e in entry.events], entry.file)
        for event in trial.events:
            if event.label not in Config.CLASS_NAMES:
                raise DataError(f"{where}: 未知標籤 {event.label!r}（允許 {', '.join(Config.CLASS_NAMES)}）")
            if event.onset_s + window_end > trial.duration_s + 1e-9:
                raise DataError(f"{where}: 事件 onset {event.onset_s}s + {window_end}s 超出紀錄長度 {trial.duration_s:.3f}s")
        trials.append(trial)

    census = event_census(trials)
    logger.info(f"資料集已載入: {path}，{len(trials)} 個試次，事件分布 {census}")
    return trials


def _read_payload(file: Path, channels: int, n_samples: int, where: str) -> np.ndarray:
    if not file.is_file():
        raise DataError(f"{where}: 找不到 payload 檔案 {file}")
    size = file.stat().st_size
    expected = channels * n_samples * PAYLOAD_DTYPE.itemsize
    if size != expected:
        raise DataError(f"{where}: 檔案大小 {size} bytes 與宣告的 {channels} 通道 × {n_samples} 點不符（應為 {expected}）")

    values = np.fromfile(file, dtype=PAYLOAD_DTYPE)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{where}: payload 含 NaN/Inf")
    return values.reshape(channels, n_samples)


def save_dataset(trials: List[Trial], directory: Union[str, Path]) -> Path:
    """
    把試次寫成 manifest + payload，回傳 manifest 路徑

    Raises:
        DataError: 試次的取樣率或通道數不一致
        ArtifactError: 寫入失敗
    """
    directory = Path(directory)
    if not trials:
        raise DataError("沒有可寫入的試次")
    rates = {t.sample_rate for t in trials}
    channel_counts = {t.channels for t in trials}
    if len(rates) != 1 or len(channel_counts) != 1:
        raise DataError(f"試次的取樣率 {sorted(rates)} 或通道數 {sorted(channel_counts)} 不一致")

    entries = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for i, trial in enumerate(trials):
            name = trial.source or f"{trial.subject}_{trial.condition or 'trial'}_{i:03d}.f32"
            np.ascontiguousarray(trial.samples, dtype=PAYLOAD_DTYPE).tofile(directory / name)
            entries.append(TrialEntry(
                file=name,
                subject=trial.subject,
                condition=trial.condition,
                n_samples=trial.n_samples,
                events=[EventEntry(onset_s=e.onset_s, label=e.label) for e in trial.events],
            ))
        manifest = DatasetManifest(sample_rate=rates.pop(), channels=channel_counts.pop(), trials=entries)
        manifest_path = directory / 'manifest.json'
        manifest_path.write_text(manifest.model_dump_json(indent=2) + '\n', encoding='utf-8')
    except OSError as e:
        raise ArtifactError(f"資料集寫入失敗 {directory}: {e}") from e

    logger.info(f"資料集已寫入: {manifest_path}（{len(entries)} 個試次）")
    return manifest_path


def event_census(trials: List[Trial]) -> Dict[str, Dict[str, int]]:
    """依 (條件, 標籤) 統計事件數"""
    counts: Dict[str, Counter] = {}
    for trial in trials:
        bucket = counts.setdefault(trial.condition or 'unspecified', Counter())
        bucket.update(e.label for e in trial.events)
    return {
        condition: {label: int(bucket.get(label, 0)) for label in Config.CLASS_NAMES}
        for condition, bucket in sorted(counts.items())
    }


def subjects_of(trials: List[Trial]) -> List[str]:
    """出現過的受試者（依首次出現順序）"""
    return list(dict.fromkeys(t.subject for t in trials))
