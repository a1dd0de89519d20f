"""
FastAPI 路由測試腳本
驗證所有端點是否正確註冊，並直接呼叫端點函式檢查回傳內容
"""
import pytest
from fastapi import HTTPException

from config import Config
from evaluation.metrics import confusion_and_f1
from evaluation.experiments import build_report
from main import app
from routers import reports
from schemas.config import RunConfig
from schemas.report import ParameterBudget, RunReport
from utils.artifacts import append_jsonl, write_text

# 預期的端點
EXPECTED_ENDPOINTS = {
    "實驗結果端點": [
        ("GET", "/api/runs"),
        ("GET", "/api/runs/{run_id}/report"),
        ("GET", "/api/runs/{run_id}/report/table"),
        ("GET", "/api/runs/{run_id}/config"),
        ("GET", "/api/runs/{run_id}/logs"),
    ],
    "系統端點": [
        ("GET", "/"),
        ("GET", "/health"),
    ]
}


def registered_routes():
    routes = []
    for route in app.routes:
        if hasattr(route, 'methods') and hasattr(route, 'path'):
            for method in route.methods:
                if method not in ['HEAD', 'OPTIONS']:  # 忽略 HEAD 和 OPTIONS
                    routes.append((method, route.path))
    return routes


def test_routes():
    """測試所有路由是否正確註冊"""
    print("=" * 80)
    print("ESNNet 實驗結果 API 路由測試")
    print("=" * 80)

    routes = registered_routes()
    total_expected = 0
    total_found = 0
    for category, endpoints in EXPECTED_ENDPOINTS.items():
        print(f"\n【{category}】")
        for method, path in endpoints:
            total_expected += 1
            if (method, path) in routes:
                print(f"  ✓ {method:6} {path}")
                total_found += 1
            else:
                print(f"  ✗ {method:6} {path} - 未找到")

    print("\n" + "=" * 80)
    print(f"測試結果：{total_found}/{total_expected} 個端點正確註冊")
    assert total_found == total_expected


@pytest.fixture
def results_dir(tmp_path, monkeypatch):
    """含一個完成的執行（latest）與一個只有設定的執行（pending）"""
    monkeypatch.setattr(Config, 'OUTPUT_DIR', str(tmp_path))
    config = RunConfig(output_dir=str(tmp_path / 'latest'))
    write_text(tmp_path / 'latest' / 'config.json', config.to_json())
    metrics = confusion_and_f1([0, 1, 2, 1], [0, 1, 2, 2])
    run = RunReport(**metrics.model_dump(), subject='S0', seed=0, variant='full', n_train=8, n_eval=4)
    budget = ParameterBudget(total=5119, by_stage={'head': 303}, ratio_to_reference=0.11)
    report = build_report('within-subject', config, [run], budget, {})
    write_text(tmp_path / 'latest' / 'report.json', report.to_json())
    append_jsonl(tmp_path / 'latest' / 'logs' / 'full_S0_seed0.jsonl', {'epoch': 1, 'val_accuracy': 0.75})
    write_text(tmp_path / 'pending' / 'config.json', RunConfig().to_json())
    return tmp_path


def test_list_runs(results_dir):
    items = reports.list_run_items()
    assert [item.run_id for item in items] == ['latest', 'pending']
    assert items[0].has_report and items[0].accuracy_mean == pytest.approx(0.75)
    assert not items[1].has_report


def test_report_and_table(results_dir):
    assert reports.get_report('latest').subjects[0].subject == 'S0'
    assert '平均' in reports.get_report_table('latest')
    assert reports.get_config('latest')['protocol'] == 'within-subject'


def test_logs(results_dir):
    assert reports.get_logs('latest', None) == {'full_S0_seed0': [{'epoch': 1, 'val_accuracy': 0.75}]}
    with pytest.raises(HTTPException) as excinfo:
        reports.get_logs('latest', 'full_S9_seed0')
    assert excinfo.value.status_code == 404


def test_missing_and_malformed_run_ids(results_dir):
    for run_id, status in (('nope', 404), ('pending', 404), ('..', 400), ('a b', 400)):
        with pytest.raises(HTTPException) as excinfo:
            reports.get_report(run_id)
        assert excinfo.value.status_code == status


if __name__ == "__main__":
    test_routes()
