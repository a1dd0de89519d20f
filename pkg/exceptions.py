"""
錯誤分類模組
每個例外都帶有 CLI 結束代碼，API 端則轉為 HTTP 錯誤
"""
from config import Config


class EsnNetError(Exception):
    """所有 ESNNet 錯誤的基底類別"""

    exit_code = Config.EXIT_FAILURE
    category = 'error'


class ConfigError(EsnNetError):
    """設定檔或參數不合法"""

    exit_code = Config.EXIT_CONFIG
    category = 'config'


class DataError(EsnNetError):
    """資料內容或格式錯誤"""

    exit_code = Config.EXIT_DATA
    category = 'data'


class ShapeError(DataError, ValueError):
    """張量形狀不符（不做隱式 broadcast）"""


class RangeError(DataError):
    """索引或時間窗超出紀錄範圍"""


class ProtocolError(DataError):
    """評估流程前提不成立（例如 LOSO 只有一位受試者）"""


class NumericError(EsnNetError):
    """數值錯誤：NaN/Inf、發散等"""

    exit_code = Config.EXIT_NUMERIC
    category = 'numeric'


class TrainingError(NumericError):
    """訓練過程出現非有限值"""


class InitError(NumericError):
    """初始化失敗（需要換 seed）"""


class StateError(EsnNetError):
    """物件狀態不允許此操作（例如未執行 forward 就 backward）"""

    category = 'state'


class ArtifactError(EsnNetError):
    """檔案讀寫錯誤"""

    exit_code = Config.EXIT_IO
    category = 'io'


class CheckpointError(ArtifactError):
    """檢查點格式、版本或校驗碼錯誤"""


class AcceptanceError(EsnNetError):
    """驗收門檻未達成（準確率不足或報告不完整）"""

    exit_code = Config.EXIT_ACCEPTANCE
    category = 'acceptance'
