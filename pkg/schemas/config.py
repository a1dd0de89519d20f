"""實驗設定的 Pydantic 模型"""
import json
import os
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import Config
from exceptions import ConfigError


class Section(BaseModel):
    """所有設定區段共用：拒絕未知欄位"""

    model_config = ConfigDict(extra='forbid', validate_assignment=True)


class ArchitectureSection(Section):
    """卷積前端與模型變體"""
    channels: int = Field(Config.N_CHANNELS, ge=1, description="EEG 通道數 C")
    samples: int = Field(Config.SEGMENT_SAMPLES, ge=1, description="每段取樣點數 T")
    filters: int = Field(16, ge=1, description="時間濾波器數 D")
    kernel_size: int = Field(125, ge=1, description="時間卷積核長度 k（奇數）")
    variant: Literal['full', 'conv-only'] = Field('full', description="full 或 conv-only 消融變體")
    bn_eps: float = Field(1e-5, gt=0)
    bn_momentum: float = Field(0.1, gt=0, le=1)

    @field_validator('kernel_size')
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel_size 必須為奇數")
        return value

    @model_validator(mode='after')
    def _kernel_fits(self):
        if self.kernel_size > self.samples:
            raise ValueError(f"kernel_size ({self.kernel_size}) 不可大於 samples ({self.samples})")
        return self


class EsnSection(Section):
    """儲備池超參數"""
    size: int = Field(100, ge=1, description="儲備池大小 H")
    rho: float = Field(0.99, gt=0, description="頻譜半徑 ρ")
    alpha: float = Field(0.1, gt=0, le=1, description="洩漏率 α")
    density: float = Field(0.1, gt=0, le=1, description="W 非零比例")


class TrainSection(Section):
    """訓練超參數"""
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(64, ge=1)
    max_epochs: int = Field(40, ge=1)
    patience: int = Field(8, ge=1)
    l2: float = Field(1e-4, ge=0, description="L2 係數 λ")
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    precision: Literal['float64', 'float32'] = 'float64'
    eval_fraction: float = Field(0.3, gt=0, lt=1, description="受試者內驗證集比例（7:3）")
    loso_monitor_fraction: float = Field(0.1, gt=0, lt=1, description="LOSO 提前停止監控集比例（僅取自訓練受試者）")
    jobs: int = Field(default_factory=lambda: Config.JOBS, ge=1, description="平行執行的 seed/fold 數（預設取 ESNNET_JOBS）")

    @field_validator('seeds')
    @classmethod
    def _unsigned_seeds(cls, value: List[int]) -> List[int]:
        if any(s < 0 or s >= 2 ** 64 for s in value):
            raise ValueError("seed 必須是 64 位元無號整數")
        return value


class ModelConfig(Section):
    """所有架構與訓練超參數"""
    model: ArchitectureSection = Field(default_factory=ArchitectureSection)
    esn: EsnSection = Field(default_factory=EsnSection)
    train: TrainSection = Field(default_factory=TrainSection)

    @classmethod
    def reference_budget(cls) -> 'ModelConfig':
        """D=152 的預設組，可訓練參數約 46k"""
        return cls(model=ArchitectureSection(filters=152))

    def with_variant(self, variant: str) -> 'ModelConfig':
        return self.model_copy(update={'model': self.model.model_copy(update={'variant': variant})}, deep=True)

    # 常用符號的捷徑
    @property
    def C(self) -> int:
        return self.model.channels

    @property
    def T(self) -> int:
        return self.model.samples

    @property
    def D(self) -> int:
        return self.model.filters

    @property
    def k(self) -> int:
        return self.model.kernel_size

    @property
    def H(self) -> int:
        return self.esn.size


class AugmentConfig(Section):
    """訓練期資料增強"""
    noise_sigma: float = Field(0.01, ge=0)
    max_shift_samples: int = Field(12, ge=0, lt=Config.SEGMENT_SAMPLES)
    inversion_probability: float = Field(0.5, ge=0, le=1)
    noise_enabled: bool = True
    shift_enabled: bool = True
    inversion_enabled: bool = True


class PreprocessConfig(Section):
    """帶通濾波與切段"""
    low_hz: float = Field(1.0, gt=0)
    high_hz: float = Field(40.0, gt=0)
    filter_order: int = Field(4, ge=1)
    offset_s: float = Field(Config.SEGMENT_OFFSET_S, ge=0)
    duration_s: float = Field(Config.SEGMENT_DURATION_S, gt=0)

    @model_validator(mode='after')
    def _band_order(self):
        if self.low_hz >= self.high_hz:
            raise ValueError(f"low_hz ({self.low_hz}) 必須小於 high_hz ({self.high_hz})")
        return self


class SynthSpec(Section):
    """合成資料集參數（真實 EEG 資料集的小規模替代品）"""
    n_per_class: int = Field(300, ge=1)
    subjects: int = Field(3, ge=1)
    seed: int = Field(0, ge=0)
    channels: int = Field(Config.N_CHANNELS, ge=1)
    sample_rate: float = Field(Config.SAMPLE_RATE, gt=0)
    noise_scale: float = Field(0.5, ge=0)
    signal_amplitude: float = Field(1.0, gt=0)
    subject_variability: float = Field(0.3, ge=0)
    event_spacing_s: float = Field(1.0, ge=0.8)


class DataSection(Section):
    """資料來源：manifest 路徑，未指定時使用合成資料"""
    manifest: Optional[str] = None
    synth: SynthSpec = Field(default_factory=SynthSpec)
    subjects: Optional[List[str]] = Field(None, description="只使用這些受試者（None 表示全部）")


class RunConfig(ModelConfig):
    """一次 CLI 執行的完整設定"""
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    data: DataSection = Field(default_factory=DataSection)
    protocol: Literal['within-subject', 'loso'] = 'within-subject'
    output_dir: str = Field(default_factory=lambda: os.path.join(Config.OUTPUT_DIR, 'latest'),
                            description="本次執行的輸出目錄")

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(model=self.model, esn=self.esn, train=self.train)

    def to_json(self) -> str:
        """固定格式序列化（排序鍵、2 空白縮排），供 config.json 與重現比對"""
        return json.dumps(self.model_dump(mode='json'), sort_keys=True, indent=2) + '\n'


def validation_message(error: ValidationError) -> str:
    """把 pydantic 錯誤整理成「鍵路徑: 原因」的清單"""
    lines = []
    for item in error.errors():
        path = '.'.join(str(part) for part in item['loc']) or '(root)'
        lines.append(f"{path}: {item['msg']}")
    return '; '.join(lines)


def apply_override(document: Dict[str, Any], dotted_key: str, raw_value: str) -> None:
    """
    以點號鍵覆寫設定（值以 JSON 解析，失敗時當作字串）

    Raises:
        ConfigError: 鍵為空或路徑中間不是物件
    """
    parts = [p for p in dotted_key.strip().split('.') if p]
    if not parts:
        raise ConfigError(f"覆寫鍵不可為空: {dotted_key!r}")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value

    node = document
    for i, part in enumerate(parts[:-1]):
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{'.'.join(parts[:i + 1])}: 不是設定區段，無法覆寫 {dotted_key}")
        node = child
    node[parts[-1]] = value


def build_run_config(document: Dict[str, Any]) -> RunConfig:
    """驗證設定文件；錯誤訊息帶鍵路徑"""
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"設定錯誤: {validation_message(e)}") from e
