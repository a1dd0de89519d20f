"""結果 API 路由"""
