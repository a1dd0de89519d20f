"""資料集 manifest 的 Pydantic 模型"""
from typing import List

from pydantic import BaseModel, ConfigDict, Field

from config import Config


class EventEntry(BaseModel):
    """單一事件（動作起始時間與標籤）"""
    model_config = ConfigDict(extra='forbid')

    onset_s: float = Field(..., ge=0, description="起始時間（秒）")
    label: str = Field(..., description="backside / frontside / pumping")


class TrialEntry(BaseModel):
    """單一試次：一個 little-endian float32、通道優先排列的二進位檔"""
    model_config = ConfigDict(extra='forbid')

    file: str = Field(..., description="相對於 manifest 的路徑")
    subject: str
    condition: str = ''
    n_samples: int = Field(..., ge=1, description="每個通道的取樣點數 N（用來核對檔案大小與通道數）")
    events: List[EventEntry] = Field(default_factory=list)


class DatasetManifest(BaseModel):
    """資料集 manifest"""
    model_config = ConfigDict(
        extra='forbid',
        json_schema_extra={
            "example": {
                "version": 1,
                "sample_rate": 500,
                "channels": 72,
                "trials": [
                    {
                        "file": "S0_laser.f32",
                        "subject": "S0",
                        "condition": "laser",
                        "n_samples": 250000,
                        "events": [{"onset_s": 1.5, "label": "pumping"}]
                    }
                ]
            }
        }
    )

    version: int = Field(Config.MANIFEST_VERSION)
    sample_rate: float = Field(..., gt=0)
    channels: int = Field(..., ge=1)
    trials: List[TrialEntry] = Field(default_factory=list)
