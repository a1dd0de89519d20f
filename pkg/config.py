"""
配置管理模組
統一管理執行環境參數與資料集常數
"""
import os
from datetime import datetime, timezone, timedelta


class Config:
    """應用程式配置類別"""

    # 時區設定 (台灣時間 UTC+8)
    TIMEZONE = timezone(timedelta(hours=8))

    @staticmethod
    def get_current_time():
        """取得台灣當前時間"""
        return datetime.now(Config.TIMEZONE)

    # 執行環境（可由環境變數覆寫）
    OUTPUT_DIR = os.getenv('ESNNET_OUTPUT_DIR', 'runs')
    LOG_LEVEL = os.getenv('ESNNET_LOG_LEVEL', 'INFO')
    JOBS = int(os.getenv('ESNNET_JOBS', '1'))
    API_HOST = os.getenv('ESNNET_API_HOST', '0.0.0.0')
    API_PORT = int(os.getenv('ESNNET_API_PORT', '8000'))

    # 資料集常數（滑板動作 EEG）
    SAMPLE_RATE = 500
    N_CHANNELS = 72
    SEGMENT_SAMPLES = 250
    SEGMENT_OFFSET_S = 0.2
    SEGMENT_DURATION_S = 0.5

    # 動作類別（索引即標籤值）
    CLASS_BACKSIDE = 'backside'
    CLASS_FRONTSIDE = 'frontside'
    CLASS_PUMPING = 'pumping'
    CLASS_NAMES = (CLASS_BACKSIDE, CLASS_FRONTSIDE, CLASS_PUMPING)
    N_CLASSES = len(CLASS_NAMES)

    # 實驗條件標記
    CONDITIONS = ('laser', 'LED')

    # 參考架構的可訓練參數量（僅供對照）
    REFERENCE_PARAMETER_COUNT = 46_000

    # 結束代碼
    EXIT_OK = 0
    EXIT_FAILURE = 1
    EXIT_CONFIG = 2
    EXIT_DATA = 3
    EXIT_NUMERIC = 4
    EXIT_IO = 5
    EXIT_ACCEPTANCE = 6

    # 檢查點格式
    CHECKPOINT_MAGIC = b'ESNNETCK'
    CHECKPOINT_VERSION = 1
    MANIFEST_VERSION = 1
