"""
張量核心模組
提供張量建立、可重現的亂數串流、可訓練參數與有限差分梯度檢查
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Literal, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from exceptions import NumericError, ShapeError

logger = logging.getLogger(__name__)

# 專案內的張量一律是 numpy 陣列（row-major）
Tensor = NDArray[np.floating]

# 全專案唯一的亂數演算法：Philox 4x64 計數器式產生器
RNG_ALGORITHM = 'philox4x64-10'

PRECISIONS = {'float64': np.float64, 'float32': np.float32}


class RngStream:
    """
    可重現的亂數串流

    相同 seed 在任何平台都產生相同序列；`spawn` 依 key 派生獨立子串流，
    讓各階段（卷積、儲備池、資料增強…）的抽樣互不干擾。
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, keys: Sequence[Union[int, str]] = ()):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError(f"seed 必須是 64 位元無號整數: {seed}")
        self.seed = int(seed)
        self.keys = tuple(keys)
        entropy = [self.seed] + [_key_to_int(k) for k in self.keys]
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def spawn(self, *keys: Union[int, str]) -> 'RngStream':
        """派生子串流（與父串流已消耗的抽樣數無關）"""
        return RngStream(self.seed, self.keys + tuple(keys))

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> Tensor:
        return self._generator.uniform(low, high, size=shape)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> Tensor:
        return self._generator.normal(mean, std, size=shape)

    def integers(self, low: int, high: int, size=None, endpoint: bool = False):
        return self._generator.integers(low, high, size=size, endpoint=endpoint)

    def random(self) -> float:
        return float(self._generator.random())

    def permutation(self, n: int) -> NDArray[np.int64]:
        return self._generator.permutation(n)

    def choice(self, n: int, size: int) -> NDArray[np.int64]:
        """不重複抽取 size 個 [0, n) 的索引"""
        return self._generator.choice(n, size=size, replace=False)

    def __repr__(self) -> str:
        return f"RngStream(algorithm={self.algorithm!r}, seed={self.seed}, keys={self.keys!r})"


def _key_to_int(key: Union[int, str]) -> int:
    if isinstance(key, int):
        return key
    return int.from_bytes(key.encode('utf-8'), 'little')


@dataclass(frozen=True)
class Draw:
    """亂數填值規格：uniform(a, b) 或 normal(a=mean, b=std)"""

    kind: Literal['uniform', 'normal']
    a: float = 0.0
    b: float = 1.0


def new_tensor(shape: Sequence[int], fill: Union[float, Draw] = 0.0,
               rng: Optional[RngStream] = None, dtype=np.float64) -> Tensor:
    """
    建立張量

    Args:
        shape: 各維長度（皆須 ≥ 1）
        fill: 常數，或 Draw 亂數規格（恰好消耗「元素數」個抽樣）
        rng: 使用 Draw 時的亂數串流
        dtype: float64（預設）或 float32

    Returns:
        Tensor: 指定形狀的陣列

    Raises:
        ShapeError: 任一維長度 ≤ 0
    """
    extents = tuple(int(s) for s in shape)
    if not extents or any(s < 1 for s in extents):
        raise ShapeError(f"張量各維長度必須 ≥ 1: {list(shape)}")

    if isinstance(fill, Draw):
        if rng is None:
            raise ValueError("亂數填值需要提供 rng")
        if fill.kind == 'uniform':
            values = rng.uniform(extents, fill.a, fill.b)
        else:
            values = rng.normal(extents, fill.a, fill.b)
        return values.astype(dtype, copy=False)

    return np.full(extents, float(fill), dtype=dtype)


def is_finite(tensor: Tensor) -> bool:
    """NaN/Inf 檢查"""
    return bool(np.all(np.isfinite(tensor)))


def check_shape(tensor: Tensor, expected: Sequence[Optional[int]], name: str) -> None:
    """
    形狀檢查（None 表示該維不限）

    Raises:
        ShapeError: 維度數或任一維長度不符
    """
    if tensor.ndim != len(expected) or any(
        e is not None and s != e for s, e in zip(tensor.shape, expected)
    ):
        raise ShapeError(f"{name} 形狀錯誤: 預期 {list(expected)}，實際 {list(tensor.shape)}")


@dataclass(eq=False)
class Parameter:
    """可訓練參數；trainable=False 的參數最佳化器永不修改（固定儲備池 W）"""

    name: str
    value: Tensor
    trainable: bool = True
    grad: Tensor = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def accumulate(self, grad: Tensor) -> None:
        if grad.shape != self.value.shape:
            raise ShapeError(f"{self.name} 梯度形狀 {grad.shape} 與參數 {self.value.shape} 不符")
        self.grad = self.grad + grad

    def assign(self, value: Tensor) -> None:
        if value.shape != self.value.shape:
            raise ShapeError(f"{self.name} 新值形狀 {value.shape} 與參數 {self.value.shape} 不符")
        self.value = np.array(value, dtype=self.value.dtype)
        self.grad = np.zeros_like(self.value)

    def cast(self, dtype) -> None:
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)

    @property
    def size(self) -> int:
        return int(self.value.size)


class Differentiable(Protocol):
    """grad_check 可檢查的模型片段"""

    def parameters(self) -> List[Parameter]:
        ...

    def loss(self, inputs) -> float:
        """只做 forward，回傳純量損失"""
        ...

    def loss_and_grad(self, inputs) -> float:
        """forward + backward，梯度寫入各 Parameter.grad"""
        ...


@dataclass
class GradCheckResult:
    """梯度檢查結果"""

    max_relative_error: float
    worst_parameter: str
    worst_index: Tuple[int, ...]
    checked: int


def grad_check(fragment: Differentiable, inputs, eps: float = 1e-6,
               parameters: Optional[Iterable[Parameter]] = None) -> float:
    """
    以中央差分比對解析梯度，回傳所有可訓練純量參數中最大的相對誤差

    相對誤差 = |analytic − numeric| / max(1e-8, |analytic| + |numeric|)

    Raises:
        NumericError: eps 不在 [1e-7, 1e-4]、非 float64，或擾動點損失非有限值
    """
    return grad_check_report(fragment, inputs, eps, parameters).max_relative_error


def grad_check_report(fragment: Differentiable, inputs, eps: float = 1e-6,
                      parameters: Optional[Iterable[Parameter]] = None) -> GradCheckResult:
    """grad_check 的完整版本，另回傳最差的參數位置"""
    if not 1e-7 <= eps <= 1e-4:
        raise NumericError(f"eps 必須介於 1e-7 與 1e-4 之間: {eps}")

    params = [p for p in (parameters if parameters is not None else fragment.parameters()) if p.trainable]
    for p in params:
        if p.value.dtype != np.float64:
            raise NumericError(f"梯度檢查必須使用 float64: {p.name} 為 {p.value.dtype}")

    for p in params:
        p.zero_grad()
    fragment.loss_and_grad(inputs)
    analytic = {p.name: p.grad.copy() for p in params}

    worst = GradCheckResult(0.0, '', (), 0)
    for p in params:
        if not p.value.flags.c_contiguous:
            p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            loss_plus = fragment.loss(inputs)
            flat[i] = original - eps
            loss_minus = fragment.loss(inputs)
            flat[i] = original
            if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
                raise NumericError(f"擾動參數 {p.name}[{i}] 時損失非有限值")

            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            exact = float(analytic[p.name].reshape(-1)[i])
            error = abs(exact - numeric) / max(1e-8, abs(exact) + abs(numeric))
            worst.checked += 1
            if error > worst.max_relative_error:
                index = tuple(int(j) for j in np.unravel_index(i, p.value.shape))
                worst = GradCheckResult(error, p.name, index, worst.checked)

    logger.debug(f"梯度檢查完成: {worst.checked} 個參數，最大相對誤差 {worst.max_relative_error:.3e} ({worst.worst_parameter})")
    return worst
