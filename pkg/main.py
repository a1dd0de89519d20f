"""
ESNNet 實驗結果 API
唯讀查詢 CLI 產生的執行目錄（設定、評估報告、訓練紀錄）
"""
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from config import Config
from routers import reports

# 建立 FastAPI 應用
app = FastAPI(
    title="ESNNet 實驗結果 API",
    description="查詢 ESNNet 受試者內 / LOSO / 消融實驗的報告與訓練紀錄",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc"
)

# 設定 CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["GET"],
    allow_headers=["*"],
)

# 註冊路由
app.include_router(reports.router, tags=["實驗結果"])


@app.get("/")
def read_root():
    """
    首頁 - API 說明

    Returns:
        API 基本資訊和端點列表
    """
    return {
        "message": "ESNNet 實驗結果 API",
        "version": "1.0.0",
        "results_dir": Config.OUTPUT_DIR,
        "documentation": {
            "swagger_ui": "/docs",
            "redoc": "/redoc"
        },
        "endpoints": {
            "runs": "GET /api/runs - 列出所有執行",
            "report": "GET /api/runs/{run_id}/report - 評估報告 (JSON)",
            "report_table": "GET /api/runs/{run_id}/report/table - 評估報告（文字表格）",
            "config": "GET /api/runs/{run_id}/config - 生效設定",
            "logs": "GET /api/runs/{run_id}/logs - 每個 epoch 的訓練紀錄"
        }
    }


@app.get("/health")
def health_check():
    """
    健康檢查端點

    Returns:
        系統狀態
    """
    return {
        "status": "healthy",
        "service": "ESNNet results API",
        "time": Config.get_current_time().isoformat()
    }


# 如果直接執行此檔案，啟動開發伺服器
if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host=Config.API_HOST,
        port=Config.API_PORT,
        reload=True
    )
