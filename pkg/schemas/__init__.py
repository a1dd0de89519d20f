"""設定、資料集 manifest 與評估報告的 Pydantic 模型"""
