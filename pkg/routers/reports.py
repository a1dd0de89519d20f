"""
實驗結果查詢端點
唯讀提供 Config.OUTPUT_DIR 底下各執行目錄的設定、報告與訓練紀錄
"""
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

from fastapi import APIRouter, HTTPException, Query
from fastapi.responses import PlainTextResponse

from config import Config
from evaluation.report import render_report
from schemas.report import EvalReport, RunListItem
from utils.artifacts import CONFIG_FILE, LOG_DIR, REPORT_FILE, list_runs, read_json, read_jsonl

router = APIRouter()

RUN_ID_PATTERN = re.compile(r'^[A-Za-z0-9._-]+$')


def results_root() -> Path:
    return Path(Config.OUTPUT_DIR)


def _run_dir(run_id: str) -> Path:
    if not RUN_ID_PATTERN.match(run_id) or run_id in ('.', '..'):
        raise HTTPException(status_code=400, detail=f"執行 ID 格式錯誤: {run_id}")
    path = results_root() / run_id
    if not (path / CONFIG_FILE).is_file():
        raise HTTPException(status_code=404, detail=f"查無資料，找不到執行 {run_id}")
    return path


def _load_report(run_id: str) -> EvalReport:
    path = _run_dir(run_id) / REPORT_FILE
    if not path.is_file():
        raise HTTPException(status_code=404, detail=f"尚無資料，執行 {run_id} 還沒有報告")
    return EvalReport.model_validate(read_json(path))


@router.get('/api/runs', response_model=List[RunListItem])
def list_run_items() -> List[RunListItem]:
    """
    列出所有執行目錄

    Returns:
        JSON: [{"run_id": "latest", "protocol": "loso", "accuracy_mean": 0.91, ...}]
    """
    try:
        items = []
        for path in list_runs(results_root()):
            report_path = path / REPORT_FILE
            if report_path.is_file():
                report = EvalReport.model_validate(read_json(report_path))
                items.append(RunListItem(run_id=path.name, protocol=report.protocol, variant=report.variant,
                                         accuracy_mean=report.macro.accuracy_mean,
                                         accuracy_std=report.macro.accuracy_std, has_report=True))
            else:
                items.append(RunListItem(run_id=path.name, has_report=False))
        return items
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"查詢失敗: {str(e)}")


@router.get('/api/runs/{run_id}/report', response_model=EvalReport)
def get_report(run_id: str) -> EvalReport:
    """查詢執行的完整評估報告"""
    try:
        return _load_report(run_id)
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"查詢失敗: {str(e)}")


@router.get('/api/runs/{run_id}/report/table', response_class=PlainTextResponse)
def get_report_table(run_id: str) -> str:
    """以文字表格呈現報告（與 report.txt 相同格式）"""
    try:
        return render_report(_load_report(run_id))
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"查詢失敗: {str(e)}")


@router.get('/api/runs/{run_id}/config')
def get_config(run_id: str) -> Dict[str, Any]:
    """查詢執行的生效設定"""
    try:
        return read_json(_run_dir(run_id) / CONFIG_FILE)
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"查詢失敗: {str(e)}")


@router.get('/api/runs/{run_id}/logs')
def get_logs(
    run_id: str,
    run: Optional[str] = Query(None, description="只回傳這次訓練的紀錄，例如 full_S0_seed0")
) -> Dict[str, List[Dict[str, Any]]]:
    """
    查詢每個 epoch 的訓練紀錄

    Returns:
        JSON: {"full_S0_seed0": [{"epoch": 1, "train_loss": 1.08, ...}, ...]}
    """
    try:
        log_dir = _run_dir(run_id) / LOG_DIR
        files = sorted(log_dir.glob('*.jsonl')) if log_dir.is_dir() else []
        if run is not None:
            files = [f for f in files if f.stem == run]
            if not files:
                raise HTTPException(status_code=404, detail=f"查無資料，找不到訓練紀錄 {run}")
        return {f.stem: read_jsonl(f) for f in files}
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"查詢失敗: {str(e)}")
