"""
網路層模組
時間卷積、空間卷積、批次正規化、全域平均池化與分類頭，各層皆提供 forward/backward
"""
import logging
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from exceptions import DataError, ShapeError, StateError
from nn.tensor import Draw, Parameter, RngStream, Tensor, check_shape, new_tensor

logger = logging.getLogger(__name__)

Mode = Literal['train', 'infer']
Activation = Literal['elu', 'identity']

# FFT 卷積一次處理的樣本數（限制 [B, D, C, F] 複數暫存的峰值記憶體）
FFT_CHUNK = 16


def elu(x: Union[float, Tensor]) -> Union[float, Tensor]:
    """ELU（α = 1）：x > 0 時為 x，否則 exp(x) − 1"""
    if np.isscalar(x):
        return float(x) if x > 0 else float(np.expm1(x))
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _activate(z: Tensor, activation: Activation) -> Tensor:
    return elu(z) if activation == 'elu' else z


def _activation_backward(grad: Tensor, y: Tensor, activation: Activation) -> Tensor:
    if activation == 'identity':
        return grad
    # y = exp(z) − 1 於負半軸，故導數為 y + 1
    return grad * np.where(y > 0, 1.0, y + 1.0)


def _feature_shape(ndim: int, features: int) -> Tuple[int, ...]:
    shape = [1] * ndim
    shape[1] = features
    return tuple(shape)


class BatchNorm:
    """
    逐特徵圖的批次正規化（特徵軸固定為 axis 1）

    訓練模式使用當前批次統計量並以 momentum 更新 running 統計；
    推論模式使用 running 統計。
    """

    def __init__(self, name: str, num_features: int, axes: Sequence[int],
                 eps: float = 1e-5, momentum: float = 0.1, dtype=np.float64):
        self.name = name
        self.num_features = num_features
        self.axes = tuple(axes)
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(f'{name}.gamma', np.ones(num_features, dtype=dtype))
        self.beta = Parameter(f'{name}.beta', np.zeros(num_features, dtype=dtype))
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self._cache = None

    def parameters(self) -> List[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> dict:
        """非訓練統計量（寫入檢查點）"""
        return {f'{self.name}.running_mean': self.running_mean, f'{self.name}.running_var': self.running_var}

    def forward(self, x: Tensor, mode: Mode = 'train') -> Tensor:
        if x.shape[1] != self.num_features:
            raise ShapeError(f"{self.name}: 特徵數 {x.shape[1]} 與設定 {self.num_features} 不符")
        shape = _feature_shape(x.ndim, self.num_features)

        if mode == 'train':
            mean = x.mean(axis=self.axes, keepdims=True)
            var = x.var(axis=self.axes, keepdims=True)
            count = x.size // self.num_features
            unbiased = var.reshape(-1) * (count / (count - 1) if count > 1 else 1.0)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean.reshape(-1)
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            mean = self.running_mean.reshape(shape)
            var = self.running_var.reshape(shape)
            count = x.size // self.num_features

        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std, mode, count)
        return self.gamma.value.reshape(shape) * x_hat + self.beta.value.reshape(shape)

    def backward(self, grad: Tensor) -> Tensor:
        if self._cache is None:
            raise StateError(f"{self.name}: backward 前必須先 forward")
        x_hat, inv_std, mode, count = self._cache
        shape = _feature_shape(grad.ndim, self.num_features)

        self.gamma.accumulate(np.sum(grad * x_hat, axis=self.axes))
        self.beta.accumulate(np.sum(grad, axis=self.axes))

        grad_hat = grad * self.gamma.value.reshape(shape)
        if mode != 'train':
            return grad_hat * inv_std

        sum_hat = np.sum(grad_hat, axis=self.axes, keepdims=True)
        sum_hat_x = np.sum(grad_hat * x_hat, axis=self.axes, keepdims=True)
        return inv_std / count * (count * grad_hat - sum_hat - x_hat * sum_hat_x)


class TemporalConvLayer:
    """
    時間卷積層：D 個長度 k 的核，共用於所有通道

    輸入 [B, C, T] → 輸出 [B, D, C, T]；兩側各補 (k−1)/2 個零以保持時間長度，
    之後接 BN（每個濾波器 d 一組，統計量跨 batch/通道/時間）與 ELU。
    """

    def __init__(self, filters: int, kernel_size: int, rng: Optional[RngStream] = None,
                 batch_norm: bool = True, activation: Activation = 'elu',
                 bn_eps: float = 1e-5, bn_momentum: float = 0.1, dtype=np.float64,
                 input_grad: bool = True):
        if kernel_size % 2 == 0:
            raise ShapeError(f"時間卷積核長度必須為奇數: {kernel_size}")
        self.filters = filters
        self.kernel_size = kernel_size
        self.activation = activation
        # 第一層的輸入是資料本身，不需要 dL/dx
        self.input_grad = input_grad
        bound = 1.0 / np.sqrt(kernel_size)
        init = new_tensor([filters, kernel_size], Draw('uniform', -bound, bound), rng or RngStream(0), dtype)
        self.kernels = Parameter('temporal.kernels', init)
        self.bn = BatchNorm('temporal.bn', filters, axes=(0, 2, 3), eps=bn_eps,
                            momentum=bn_momentum, dtype=dtype) if batch_norm else None
        self._cache = None

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    def parameters(self) -> List[Parameter]:
        return [self.kernels] + (self.bn.parameters() if self.bn else [])

    def forward(self, x: Tensor, mode: Mode = 'train') -> Tensor:
        check_shape(x, [None, None, None], 'temporal_conv 輸入')
        batch, channels, length = x.shape
        if length < self.kernel_size:
            raise ShapeError(f"時間長度 T={length} 小於核長度 k={self.kernel_size}")

        n_fft = sp_fft.next_fast_len(2 * length - 1, real=True)
        p = self.padding
        kernel_f = sp_fft.rfft(self.kernels.value[:, ::-1], n_fft, axis=-1)
        z = np.empty((batch, self.filters, channels, length), dtype=x.dtype)
        for start in range(0, batch, FFT_CHUNK):
            x_f = sp_fft.rfft(x[start:start + FFT_CHUNK], n_fft, axis=-1)
            full = sp_fft.irfft(x_f[:, None] * kernel_f[None, :, None], n_fft, axis=-1)
            z[start:start + FFT_CHUNK] = full[..., p:p + length]

        if self.bn is not None:
            z = self.bn.forward(z, mode)
        y = _activate(z, self.activation)
        self._cache = (x, y, n_fft)
        return y

    def backward(self, grad: Tensor) -> Optional[Tensor]:
        """
        dL/dw[d, j] = Σ g[t] x[t + j − p]：以 conj(G)·X 的循環互相關取 lag −p..p；
        n_fft ≥ 2T − 1，負 lag 不會與正 lag 重疊
        """
        if self._cache is None:
            raise StateError("temporal_conv: backward 前必須先 forward")
        x, y, n_fft = self._cache
        grad = _activation_backward(grad, y, self.activation)
        if self.bn is not None:
            grad = self.bn.backward(grad)

        batch, channels, length = x.shape
        p = self.padding
        kernel_f = sp_fft.rfft(self.kernels.value, n_fft, axis=-1) if self.input_grad else None
        grad_x = np.empty_like(x) if self.input_grad else None
        spectrum = np.zeros((self.filters, n_fft // 2 + 1), dtype=np.result_type(x.dtype, np.complex64))
        for start in range(0, batch, FFT_CHUNK):
            stop = start + FFT_CHUNK
            g_f = sp_fft.rfft(grad[start:stop], n_fft, axis=-1)
            x_f = sp_fft.rfft(x[start:stop], n_fft, axis=-1)
            spectrum += np.einsum('bcf,bdcf->df', x_f, g_f.conj(), optimize=True)
            if self.input_grad:
                grad_x[start:stop] = sp_fft.irfft(
                    np.einsum('bdcf,df->bcf', g_f, kernel_f, optimize=True), n_fft, axis=-1
                )[..., p:p + length]

        correlation = sp_fft.irfft(spectrum, n_fft, axis=-1)
        lags = np.arange(-p, p + 1) % n_fft
        self.kernels.accumulate(correlation[:, lags].astype(self.kernels.value.dtype))
        return grad_x


class SpatialConvLayer:
    """
    空間卷積層：每個濾波器 d 以權重 w[d, c] 線性組合通道（可學習的 CSP）

    輸入 [B, D, C, T] → 輸出 [B, D, T]
    """

    def __init__(self, filters: int, channels: int, rng: Optional[RngStream] = None,
                 batch_norm: bool = True, activation: Activation = 'elu',
                 bn_eps: float = 1e-5, bn_momentum: float = 0.1, dtype=np.float64):
        self.filters = filters
        self.channels = channels
        self.activation = activation
        bound = 1.0 / np.sqrt(channels)
        init = new_tensor([filters, channels], Draw('uniform', -bound, bound), rng or RngStream(0), dtype)
        self.weights = Parameter('spatial.weights', init)
        self.bn = BatchNorm('spatial.bn', filters, axes=(0, 2), eps=bn_eps,
                            momentum=bn_momentum, dtype=dtype) if batch_norm else None
        self._cache = None

    def parameters(self) -> List[Parameter]:
        return [self.weights] + (self.bn.parameters() if self.bn else [])

    def forward(self, x: Tensor, mode: Mode = 'train') -> Tensor:
        check_shape(x, [None, self.filters, self.channels, None], 'spatial_conv 輸入')
        z = np.einsum('dc,bdct->bdt', self.weights.value, x)
        if self.bn is not None:
            z = self.bn.forward(z, mode)
        y = _activate(z, self.activation)
        self._cache = (x, y)
        return y

    def backward(self, grad: Tensor) -> Tensor:
        if self._cache is None:
            raise StateError("spatial_conv: backward 前必須先 forward")
        x, y = self._cache
        grad = _activation_backward(grad, y, self.activation)
        if self.bn is not None:
            grad = self.bn.backward(grad)
        self.weights.accumulate(np.einsum('bdt,bdct->dc', grad, x))
        return np.einsum('dc,bdt->bdct', self.weights.value, grad)


class GlobalAveragePool:
    """沿時間軸取平均：[B, F, T] → [B, F]"""

    def __init__(self):
        self._length = None

    def parameters(self) -> List[Parameter]:
        return []

    def forward(self, x: Tensor, mode: Mode = 'train') -> Tensor:
        if x.ndim < 1 or x.shape[-1] < 1:
            raise ShapeError("GAP 的時間軸不可為空")
        self._length = x.shape[-1]
        return x.mean(axis=-1)

    def backward(self, grad: Tensor) -> Tensor:
        if self._length is None:
            raise StateError("gap: backward 前必須先 forward")
        return np.repeat(grad[..., None], self._length, axis=-1) / self._length


class Head:
    """線性分類頭：[B, F] → 三類 logits"""

    def __init__(self, in_features: int, classes: int = 3, rng: Optional[RngStream] = None, dtype=np.float64):
        self.in_features = in_features
        self.classes = classes
        bound = 1.0 / np.sqrt(in_features)
        init = new_tensor([classes, in_features], Draw('uniform', -bound, bound), rng or RngStream(0), dtype)
        self.weight = Parameter('head.weight', init)
        self.bias = Parameter('head.bias', np.zeros(classes, dtype=dtype))
        self._input = None

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor, mode: Mode = 'train') -> Tensor:
        check_shape(x, [None, self.in_features], 'head 輸入')
        self._input = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad: Tensor) -> Tensor:
        if self._input is None:
            raise StateError("head: backward 前必須先 forward")
        self.weight.accumulate(grad.T @ self._input)
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weight.value


def temporal_conv_forward(U: Tensor, layer: TemporalConvLayer, mode: Mode = 'train') -> Tensor:
    """時間卷積：[C, T] → [D, C, T]（也接受帶 batch 維的 [B, C, T]）"""
    if U.ndim == 2:
        return layer.forward(U[None], mode)[0]
    return layer.forward(U, mode)


def spatial_conv_forward(F: Tensor, layer: SpatialConvLayer, mode: Mode = 'train') -> Tensor:
    """空間卷積：[D, C, T] → [D, T]（也接受 [B, D, C, T]）"""
    if F.ndim == 3:
        return layer.forward(F[None], mode)[0]
    return layer.forward(F, mode)


def gap(states: Tensor) -> Tensor:
    """全域平均池化：[H, T] → [H]"""
    if states.shape[-1] < 1:
        raise ShapeError("GAP 的時間軸不可為空")
    return states.mean(axis=-1)


def _check_labels(labels, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f"標籤必須介於 0 與 {classes - 1} 之間: {labels.tolist()}")
    return labels


def softmax_cross_entropy(logits: Tensor, labels) -> Tuple[float, Tensor]:
    """
    數值穩定的 softmax 交叉熵

    Args:
        logits: [B, K]
        labels: 長度 B 的類別索引

    Returns:
        (batch 平均損失, softmax 機率 [B, K])

    Raises:
        DataError: 標籤超出範圍
    """
    check_shape(logits, [None, None], 'logits')
    labels = _check_labels(labels, logits.shape[1])
    if labels.size != logits.shape[0]:
        raise ShapeError(f"標籤數 {labels.size} 與 logits 批次 {logits.shape[0]} 不符")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -float(np.mean(log_probs[np.arange(labels.size), labels]))
    return loss, np.exp(log_probs)


def softmax_cross_entropy_backward(probabilities: Tensor, labels) -> Tensor:
    """dL/dlogits = (softmax − one-hot) / B"""
    labels = _check_labels(labels, probabilities.shape[1])
    grad = probabilities.copy()
    grad[np.arange(labels.size), labels] -= 1.0
    return grad / labels.size
