"""
ESNNet 模型定義
時間卷積 → 空間卷積 → ESN → GAP → 線性分類頭，以及損失、預測、參數計數與檢查點
"""
import hashlib
import json
import logging
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config import Config
from exceptions import CheckpointError, ShapeError
from nn.layers import (
    GlobalAveragePool,
    Head,
    Mode,
    SpatialConvLayer,
    TemporalConvLayer,
    softmax_cross_entropy,
    softmax_cross_entropy_backward,
)
from nn.reservoir import EsnLayer, init_reservoir
from nn.tensor import PRECISIONS, Parameter, RngStream, Tensor
from schemas.config import ModelConfig
from schemas.report import ParameterBudget

logger = logging.getLogger(__name__)


class EsnNetModel:
    """
    ESNNet（或 conv-only 消融變體）

    conv-only 以恆等映射取代 ESN，GAP 直接對 F_spatial [D, T] 的時間軸取平均，
    分類頭輸入維度變為 D；W 與 W_in 不存在。
    """

    def __init__(self, config: ModelConfig, seed: int, temporal: TemporalConvLayer,
                 spatial: SpatialConvLayer, esn: Optional[EsnLayer], head: Head):
        self.config = config
        self.seed = seed
        self.temporal = temporal
        self.spatial = spatial
        self.esn = esn
        self.pool = GlobalAveragePool()
        self.head = head

    @property
    def variant(self) -> str:
        return self.config.model.variant

    @property
    def dtype(self):
        return self.head.weight.value.dtype

    def _stages(self) -> list:
        stages = [self.temporal, self.spatial]
        if self.esn is not None:
            stages.append(self.esn)
        return stages + [self.pool, self.head]

    def parameters(self) -> List[Parameter]:
        """所有參數（含固定的 W），順序固定"""
        params = []
        for stage in self._stages():
            params.extend(stage.parameters())
        return params

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def buffers(self) -> Dict[str, Tensor]:
        buffers = {}
        for layer in (self.temporal, self.spatial):
            if layer.bn is not None:
                buffers.update(layer.bn.buffers())
        return buffers

    def set_buffer(self, name: str, value: Tensor) -> None:
        for layer in (self.temporal, self.spatial):
            if layer.bn is not None and name.startswith(layer.bn.name + '.'):
                attr = name[len(layer.bn.name) + 1:]
                setattr(layer.bn, attr, np.array(value, dtype=getattr(layer.bn, attr).dtype))
                return
        raise KeyError(name)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, batch: Tensor, mode: Mode = 'train') -> Tensor:
        """
        前向傳播

        Args:
            batch: [B, C, T]
            mode: train（BN 使用批次統計）或 infer（running 統計）

        Returns:
            Tensor: logits [B, 3]
        """
        cfg = self.config
        if batch.ndim != 3 or batch.shape[1:] != (cfg.C, cfg.T):
            raise ShapeError(f"輸入形狀 {list(batch.shape)} 與設定 [B, {cfg.C}, {cfg.T}] 不符")
        x = batch.astype(self.dtype, copy=False)
        for stage in self._stages():
            x = stage.forward(x, mode)
        return x

    def front_end(self, batch: Tensor, mode: Mode = 'infer') -> Tensor:
        """卷積前端的輸出 F_spatial [B, D, T]（ESN 的輸入）"""
        x = batch.astype(self.dtype, copy=False)
        return self.spatial.forward(self.temporal.forward(x, mode), mode)

    def backward(self, grad_logits: Tensor) -> Tensor:
        grad = grad_logits
        for stage in reversed(self._stages()):
            grad = stage.backward(grad)
        return grad

    def cast(self, dtype) -> None:
        for p in self.parameters():
            p.cast(dtype)
        for name, value in self.buffers().items():
            self.set_buffer(name, value.astype(dtype))

    def parameter_budget(self) -> ParameterBudget:
        """依階段統計可訓練參數量，並與參考架構的約 46k 對照"""
        stages = {
            'temporal_conv': self.temporal.kernels.size,
            'temporal_bn': sum(p.size for p in self.temporal.bn.parameters()) if self.temporal.bn else 0,
            'spatial_conv': self.spatial.weights.size,
            'spatial_bn': sum(p.size for p in self.spatial.bn.parameters()) if self.spatial.bn else 0,
            'reservoir_input': self.esn.reservoir.W_in.size if self.esn else 0,
            'head': self.head.weight.size + self.head.bias.size,
        }
        total = sum(p.size for p in self.trainable_parameters())
        return ParameterBudget(total=total, by_stage=stages,
                               ratio_to_reference=round(total / Config.REFERENCE_PARAMETER_COUNT, 4))

    def reservoir_fingerprint(self) -> Optional[str]:
        """固定儲備池 W 的 SHA-256（用來確認訓練前後 W 完全不變）"""
        if self.esn is None:
            return None
        return hashlib.sha256(self.esn.reservoir.W.value.tobytes()).hexdigest()


def build(config: ModelConfig, seed: int = 0) -> EsnNetModel:
    """
    依設定與 seed 建立模型（可重現）

    各階段使用由 seed 派生的獨立亂數串流，因此 full 與 conv-only 變體在相同 seed 下
    前端初始化完全相同。
    """
    config = ModelConfig(model=config.model, esn=config.esn, train=config.train)
    arch, esn_cfg = config.model, config.esn
    dtype = PRECISIONS[config.train.precision]
    root = RngStream(seed).spawn('model')

    temporal = TemporalConvLayer(arch.filters, arch.kernel_size, root.spawn('temporal'),
                                 bn_eps=arch.bn_eps, bn_momentum=arch.bn_momentum, dtype=dtype, input_grad=False)
    spatial = SpatialConvLayer(arch.filters, arch.channels, root.spawn('spatial'),
                               bn_eps=arch.bn_eps, bn_momentum=arch.bn_momentum, dtype=dtype)
    if arch.variant == 'full':
        reservoir = init_reservoir(esn_cfg.size, esn_cfg.density, esn_cfg.rho, arch.filters,
                                   root.spawn('reservoir'), alpha=esn_cfg.alpha, dtype=dtype)
        esn = EsnLayer(reservoir)
        head_inputs = esn_cfg.size
    else:
        esn = None
        head_inputs = arch.filters
    head = Head(head_inputs, Config.N_CLASSES, root.spawn('head'), dtype=dtype)

    model = EsnNetModel(config, seed, temporal, spatial, esn, head)
    logger.debug(f"建立模型: variant={arch.variant}, seed={seed}, 可訓練參數 {model.parameter_budget().total}")
    return model


def l2_penalty(model: EsnNetModel) -> float:
    """Σ‖θ‖²，只計可訓練參數（W 與 BN running 統計不計）"""
    return float(sum(np.sum(p.value.astype(np.float64) ** 2) for p in model.trainable_parameters()))


def loss(logits: Tensor, labels, model: EsnNetModel, l2: float) -> float:
    """batch 平均交叉熵 + λ·Σ‖θ‖²"""
    if l2 < 0:
        raise ValueError(f"λ 必須 ≥ 0: {l2}")
    cross_entropy, _ = softmax_cross_entropy(logits, labels)
    return cross_entropy + l2 * l2_penalty(model)


def loss_and_grad(model: EsnNetModel, batch: Tensor, labels, l2: float,
                  mode: Mode = 'train') -> Tuple[float, Tensor]:
    """
    前向、損失與反向傳播；梯度寫入各 Parameter.grad（含 L2 項 2λθ）

    Returns:
        (總損失, logits)
    """
    model.zero_grad()
    logits = model.forward(batch, mode)
    cross_entropy, probabilities = softmax_cross_entropy(logits, labels)
    model.backward(softmax_cross_entropy_backward(probabilities, labels))
    if l2 > 0:
        for p in model.trainable_parameters():
            p.grad = p.grad + 2.0 * l2 * p.value
    return cross_entropy + l2 * l2_penalty(model), logits


def predict(logits: Tensor) -> np.ndarray:
    """逐列 argmax；同分時取最小的類別索引"""
    return np.argmax(logits, axis=1)


class ModelLossFragment:
    """把模型與固定批次包成 grad_check 可用的片段；inputs 為 (batch, labels)"""

    def __init__(self, model: EsnNetModel, l2: float = 0.0, mode: Mode = 'train'):
        self.model = model
        self.l2 = l2
        self.mode = mode

    def parameters(self) -> List[Parameter]:
        return self.model.parameters()

    def loss(self, inputs) -> float:
        batch, labels = inputs
        return loss(self.model.forward(batch, self.mode), labels, self.model, self.l2)

    def loss_and_grad(self, inputs) -> float:
        batch, labels = inputs
        value, _ = loss_and_grad(self.model, batch, labels, self.l2, self.mode)
        return value


# ---------------------------------------------------------------------------
# 檢查點格式（little-endian）
#   [0:8)    magic  b'ESNNETCK'
#   [8:10)   uint16 版本
#   [10:14)  uint32 header 長度 L
#   [14:14+L)       header（UTF-8 JSON：config、seed、tensor 清單）
#   [14+L:46+L)     header 的 SHA-256（32 bytes）
#   之後             payload：各 tensor 依清單順序緊密排列，offset 相對於 payload 起點
# 每個 tensor 條目：name、kind(parameter|buffer)、trainable、dtype、shape、offset、nbytes、sha256
# ---------------------------------------------------------------------------
_PREAMBLE = struct.Struct('<8sHI')


def _tensor_items(model: EsnNetModel):
    for p in model.parameters():
        yield p.name, 'parameter', p.trainable, p.value
    for name, value in model.buffers().items():
        yield name, 'buffer', False, value


def save_checkpoint(model: EsnNetModel, path: Union[str, Path]) -> Path:
    """
    寫入檢查點（先寫暫存檔再原子取代）

    Raises:
        CheckpointError: 寫入失敗
    """
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, kind, trainable, value in _tensor_items(model):
        data = np.ascontiguousarray(value, dtype=value.dtype.newbyteorder('<')).tobytes()
        entries.append({
            'name': name,
            'kind': kind,
            'trainable': trainable,
            'dtype': value.dtype.newbyteorder('<').str,
            'shape': list(value.shape),
            'offset': offset,
            'nbytes': len(data),
            'sha256': hashlib.sha256(data).hexdigest(),
        })
        chunks.append(data)
        offset += len(data)

    header = json.dumps({
        'config': model.config.model_dump(mode='json'),
        'seed': model.seed,
        'tensors': entries,
    }, sort_keys=True).encode('utf-8')

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + '.tmp')
        with open(tmp, 'wb') as f:
            f.write(_PREAMBLE.pack(Config.CHECKPOINT_MAGIC, Config.CHECKPOINT_VERSION, len(header)))
            f.write(header)
            f.write(hashlib.sha256(header).digest())
            for chunk in chunks:
                f.write(chunk)
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"檢查點寫入失敗 {path}: {e}") from e

    logger.info(f"檢查點已寫入: {path} ({len(entries)} 個 tensor)")
    return path


def load_checkpoint(path: Union[str, Path]) -> EsnNetModel:
    """
    讀取檢查點並還原所有參數（含固定 W）、設定與 BN running 統計（逐位元一致）

    Raises:
        CheckpointError: 檔案不存在、magic/版本不符、截斷或校驗碼錯誤
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"無法讀取檢查點 {path}: {e}") from e

    if len(blob) < _PREAMBLE.size:
        raise CheckpointError(f"檢查點被截斷: {path}")
    magic, version, header_len = _PREAMBLE.unpack_from(blob, 0)
    if magic != Config.CHECKPOINT_MAGIC:
        raise CheckpointError(f"不是 ESNNet 檢查點（magic 錯誤）: {path}")
    if version != Config.CHECKPOINT_VERSION:
        raise CheckpointError(f"檢查點版本 {version} 不支援（預期 {Config.CHECKPOINT_VERSION}）: {path}")

    start = _PREAMBLE.size
    payload_start = start + header_len + 32
    if len(blob) < payload_start:
        raise CheckpointError(f"檢查點 header 被截斷: {path}")
    header_bytes = blob[start:start + header_len]
    if hashlib.sha256(header_bytes).digest() != blob[start + header_len:payload_start]:
        raise CheckpointError(f"檢查點 header 校驗碼錯誤: {path}")

    try:
        header = json.loads(header_bytes.decode('utf-8'))
        config = ModelConfig.model_validate(header['config'])
        model = build(config, int(header['seed']))
        entries = [(str(t['name']), int(t['offset']), int(t['nbytes']), str(t['sha256']),
                    np.dtype(t['dtype']), tuple(int(n) for n in t['shape'])) for t in header['tensors']]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"檢查點 header 無法解析: {path}: {e}") from e

    params = {p.name: p for p in model.parameters()}
    buffers = model.buffers()
    for name, offset, nbytes, digest, dtype, shape in entries:
        begin = payload_start + offset
        data = blob[begin:begin + nbytes]
        if offset < 0 or len(data) != nbytes:
            raise CheckpointError(f"檢查點 payload 被截斷（{name}）: {path}")
        if hashlib.sha256(data).hexdigest() != digest:
            raise CheckpointError(f"tensor {name} 校驗碼錯誤: {path}")
        try:
            value = np.frombuffer(data, dtype=dtype).reshape(shape)
        except ValueError as e:
            raise CheckpointError(f"tensor {name} 的 dtype/shape 與資料長度不符: {path}: {e}") from e
        if name not in params and name not in buffers:
            raise CheckpointError(f"檢查點含未知 tensor {name}: {path}")
        try:
            if name in params:
                params[name].assign(value)
            else:
                model.set_buffer(name, value)
        except ShapeError as e:
            raise CheckpointError(f"檢查點 tensor 與設定不符: {path}: {e}") from e

    logger.info(f"檢查點已載入: {path}")
    return model
