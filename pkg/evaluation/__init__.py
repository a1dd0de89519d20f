"""評估模組：切分協定、指標、訓練迴圈、實驗流程與報表"""
