"""評估報告的 Pydantic 模型（文字報表的機器可讀形式）"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from config import Config


class ClassificationMetrics(BaseModel):
    """混淆矩陣與逐類別指標"""
    confusion: List[List[int]] = Field(..., description="confusion[i][j]：真實類別 i 被預測為 j 的次數")
    accuracy: float
    precision: List[float]
    recall: List[float]
    f1: List[float]
    macro_f1: float
    support: List[int]
    predicted_distribution: List[int]


class RunReport(ClassificationMetrics):
    """單一 (受試者/fold, seed) 執行的結果"""
    subject: str = Field(..., description="受試者內：該受試者；LOSO：被留出的受試者")
    seed: int
    variant: str
    train_accuracy: Optional[float] = None
    epochs_trained: Optional[int] = None
    best_epoch: Optional[int] = None
    n_train: int
    n_eval: int
    echo_state_divergence: Optional[float] = None


class Summary(BaseModel):
    """跨執行彙總：平均與樣本標準差（n−1；n = 1 時為 0）"""
    n: int
    accuracy_mean: float
    accuracy_std: float
    f1_mean: List[float]
    f1_std: List[float]
    macro_f1_mean: float
    macro_f1_std: float


class SubjectReport(BaseModel):
    subject: str
    runs: List[RunReport]
    summary: Summary


class ParameterBudget(BaseModel):
    """可訓練參數量與參考架構的對照"""
    total: int
    by_stage: Dict[str, int]
    reference_total: int = Config.REFERENCE_PARAMETER_COUNT
    ratio_to_reference: float


class EvalReport(BaseModel):
    """
    一次實驗的完整報告

    macro：各受試者平均值的平均 ± 跨受試者標準差（報表的平均列）
    seed_summary：每個 seed 先對受試者取平均，再跨 seed 彙總
    """
    protocol: Literal['within-subject', 'loso', 'checkpoint']
    variant: str
    class_names: List[str] = Field(default_factory=lambda: list(Config.CLASS_NAMES))
    f1_averaging: Literal['macro'] = 'macro'
    seeds: List[int]
    parameters: ParameterBudget
    subjects: List[SubjectReport]
    macro: Summary
    seed_summary: Summary
    event_census: Dict[str, Dict[str, int]] = Field(default_factory=dict)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + '\n'


class RunListItem(BaseModel):
    """API：執行目錄清單項目"""
    run_id: str
    protocol: Optional[str] = None
    variant: Optional[str] = None
    accuracy_mean: Optional[float] = None
    accuracy_std: Optional[float] = None
    has_report: bool


class AcceptanceCheck(BaseModel):
    """單一驗收項目"""
    name: str
    passed: bool
    detail: str
