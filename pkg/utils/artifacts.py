"""
執行目錄 I/O
每次執行的輸出目錄結構：
    config.json            生效的完整設定
    report.json / .txt     評估報告（機器 / 人讀）
    checkpoints/<run>.ckpt 模型檢查點
    logs/<run>.jsonl       每個 epoch 一行的訓練紀錄
    dataset/manifest.json  synth 產生的資料集
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Union

from exceptions import ArtifactError

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.json'
REPORT_FILE = 'report.json'
REPORT_TEXT_FILE = 'report.txt'
CHECKPOINT_DIR = 'checkpoints'
LOG_DIR = 'logs'
DATASET_DIR = 'dataset'

PathLike = Union[str, Path]


def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"無法建立目錄 {path}: {e}") from e
    return path


def write_text(path: PathLike, text: str) -> Path:
    """先寫暫存檔再原子取代"""
    path = Path(path)
    ensure_dir(path.parent)
    tmp = path.with_suffix(path.suffix + '.tmp')
    try:
        tmp.write_text(text, encoding='utf-8')
        os.replace(tmp, path)
    except OSError as e:
        raise ArtifactError(f"寫入失敗 {path}: {e}") from e
    return path


def write_json(path: PathLike, document: Dict[str, Any]) -> Path:
    """排序鍵、2 空白縮排，相同內容永遠得到相同位元組"""
    return write_text(path, json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + '\n')


def read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ArtifactError(f"無法讀取 {path}: {e}") from e


def read_json(path: PathLike) -> Dict[str, Any]:
    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}:{e.lineno}: JSON 格式錯誤: {e.msg}") from e


def append_jsonl(path: PathLike, record: Dict[str, Any]) -> None:
    path = Path(path)
    ensure_dir(path.parent)
    try:
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, sort_keys=True) + '\n')
    except OSError as e:
        raise ArtifactError(f"寫入紀錄失敗 {path}: {e}") from e


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    return [json.loads(line) for line in read_text(path).splitlines() if line.strip()]


def checkpoint_path(output_dir: PathLike, run_name: str) -> Path:
    return Path(output_dir) / CHECKPOINT_DIR / f'{run_name}.ckpt'


def log_path(output_dir: PathLike, run_name: str) -> Path:
    return Path(output_dir) / LOG_DIR / f'{run_name}.jsonl'


def list_runs(root: PathLike) -> List[Path]:
    """root 底下含 config.json 的子目錄（依名稱排序）"""
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / CONFIG_FILE).is_file())
