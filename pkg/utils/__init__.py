"""執行目錄讀寫工具"""
