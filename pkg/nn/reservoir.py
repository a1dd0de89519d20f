"""
回聲狀態網路（ESN）儲備池模組
稀疏隨機遞迴矩陣 W（固定）、可訓練輸入映射 W_in、洩漏積分狀態更新與 BPTT
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from exceptions import InitError, ShapeError, StateError
from nn.tensor import Draw, Parameter, RngStream, Tensor, check_shape, new_tensor

logger = logging.getLogger(__name__)

# Krylov 擬合中，近似特徵對的相對殘差低於此值才視為真實特徵值
RITZ_TOLERANCE = 1e-6


@dataclass
class SpectralEstimate:
    """頻譜半徑估計結果"""

    value: float
    converged: bool
    iterations: int
    residual: float


def estimate_spectral_radius(W: Tensor, tol: float = 1e-12, max_iter: int = 20000,
                             check_every: int = 10, seed: int = 0) -> SpectralEstimate:
    """
    以範數成長（Gelfand）迭代估計 max |eigenvalue|

    每一步 v ← W v / ‖W v‖ 並累積 log 成長率；每隔 check_every 步在 {v, Wv, W²v}
    張成的 Krylov 子空間擬合 W²v = c₀ v + c₁ W v，λ² − c₁λ − c₀ = 0 的根給出主導特徵值
    （實根或共軛複數對皆可）。擬合殘差小於 tol 時收斂；未收斂時回傳最後的估計值。

    Raises:
        ShapeError: 非方陣
    """
    check_shape(W, [None, None], 'W')
    n = W.shape[0]
    if W.shape[1] != n:
        raise ShapeError(f"頻譜半徑需要方陣: {list(W.shape)}")
    if n == 1:
        return SpectralEstimate(abs(float(W[0, 0])), True, 0, 0.0)

    W = W.astype(np.float64)
    v = RngStream(seed).normal((n,))
    v /= np.linalg.norm(v)
    log_growth = 0.0
    best = SpectralEstimate(0.0, False, 0, np.inf)

    for step in range(1, max_iter + 1):
        w = W @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # 冪零方向：W^m v = 0
            return SpectralEstimate(0.0, True, step, 0.0)
        log_growth += np.log(norm)
        v = w / norm

        if step % check_every == 0:
            radius, residual = _krylov_radius(W, v)
            if residual < tol:
                return SpectralEstimate(radius, True, step, residual)
            if residual <= best.residual:
                best = SpectralEstimate(radius, False, step, residual)

    gelfand = float(np.exp(log_growth / max_iter))
    value = best.value if np.isfinite(best.value) and best.value > 0.0 else gelfand
    logger.warning(f"頻譜半徑估計未收斂: 殘差 {best.residual:.2e}，估計 {value:.6f}（成長率 {gelfand:.6f}）")
    return SpectralEstimate(value, False, max_iter, best.residual)


def _krylov_radius(W: Tensor, v: Tensor):
    """
    在 span{v, Wv} 擬合 W²v = c₀ v + c₁ W v

    根 λ_a 對應的近似特徵向量為 z_a = Wv − λ_b v。v 已收斂到實數主特徵向量時
    z_b 只剩擬合雜訊，因此只在兩個根的特徵殘差都小時才取較大的模長，
    否則取殘差較小的根。
    """
    wv = W @ v
    wwv = W @ wv
    scale = max(np.linalg.norm(wwv), np.linalg.norm(wv), 1e-300)

    # 一維：W v = μ v
    mu = float(v @ wv)
    residual_1d = np.linalg.norm(wv - mu * v) / max(np.linalg.norm(wv), 1e-300)
    if residual_1d < 1e-13:
        return abs(mu), residual_1d

    basis = np.column_stack([v, wv])
    coef, *_ = np.linalg.lstsq(basis, wwv, rcond=None)
    residual = np.linalg.norm(basis @ coef - wwv) / scale
    roots = np.roots([1.0, -coef[1], -coef[0]])
    if roots.size < 2:
        return float(np.abs(roots).max(initial=0.0)), float(residual)

    ritz = []
    for a, b in ((0, 1), (1, 0)):
        z = wv - roots[b] * v
        z_norm = np.linalg.norm(z)
        modulus = abs(roots[a])
        if z_norm == 0.0:
            ritz.append((np.inf, modulus))
            continue
        error = np.linalg.norm(W @ z - roots[a] * z) / (z_norm * max(modulus, 1e-300))
        ritz.append((float(error), float(modulus)))

    if max(e for e, _ in ritz) < RITZ_TOLERANCE:
        return max(m for _, m in ritz), float(residual)
    return min(ritz)[1], float(residual)


def spectral_radius(W: Tensor, tol: float = 1e-12, max_iter: int = 20000) -> float:
    """頻譜半徑估計值（收斂旗標見 estimate_spectral_radius）"""
    return estimate_spectral_radius(W, tol, max_iter).value


class Reservoir:
    """
    ESN 儲備池

    W [H, H] 固定不訓練（trainable=False），W_in [H, D] 參與端到端訓練。
    """

    def __init__(self, W: Tensor, W_in: Tensor, rho: float, alpha: float, density: float,
                 seed: Optional[int] = None):
        check_shape(W, [W.shape[0], W.shape[0]], 'W')
        check_shape(W_in, [W.shape[0], None], 'W_in')
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"leak rate α 必須介於 0 與 1: {alpha}")
        self.W = Parameter('reservoir.W', W, trainable=False)
        self.W_in = Parameter('reservoir.W_in', W_in)
        self.rho = rho
        self.alpha = alpha
        self.density = density
        self.seed = seed

    @property
    def size(self) -> int:
        return self.W.value.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_in.value.shape[1]

    def parameters(self) -> List[Parameter]:
        return [self.W, self.W_in]

    def nonzero_fraction(self) -> float:
        return float(np.count_nonzero(self.W.value)) / self.W.value.size


def init_reservoir(H: int, density: float, rho: float, D: int,
                   seed: Union[int, RngStream] = 0, alpha: float = 0.1, dtype=np.float64) -> Reservoir:
    """
    初始化儲備池

    支撐集恰好取 round(density·H²) 個位置（不重複抽樣），其值取 uniform(−1, 1)，
    再縮放使頻譜半徑等於 rho；W_in 取 uniform(−1, 1)/√D。

    Raises:
        InitError: 支撐集為空或原始矩陣頻譜半徑為 0（請換 seed 或提高 density）
    """
    if H < 1 or D < 1:
        raise ValueError(f"H 與 D 必須 ≥ 1: H={H}, D={D}")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density 必須介於 (0, 1]: {density}")
    if rho <= 0:
        raise ValueError(f"rho 必須 > 0: {rho}")

    rng = seed if isinstance(seed, RngStream) else RngStream(seed)
    recurrent_rng = rng.spawn('recurrent')
    nnz = int(np.floor(density * H * H + 0.5))
    if nnz == 0:
        raise InitError(f"儲備池支撐集為空 (H={H}, density={density})，請換 seed 或提高 density")

    positions = recurrent_rng.choice(H * H, nnz)
    values = recurrent_rng.uniform((nnz,), -1.0, 1.0)
    W = np.zeros(H * H, dtype=np.float64)
    W[positions] = values
    W = W.reshape(H, H)

    estimate = estimate_spectral_radius(W)
    if estimate.value <= 0.0:
        raise InitError(f"儲備池頻譜半徑為 0 (H={H}, density={density})，請換 seed")
    W *= rho / estimate.value

    W_in = new_tensor([H, D], Draw('uniform', -1.0, 1.0), rng.spawn('input')) / np.sqrt(D)
    logger.debug(f"儲備池初始化: H={H}, nnz={nnz}, 原始頻譜半徑 {estimate.value:.4f} → {rho}")
    seed_value = rng.seed if isinstance(seed, RngStream) else int(seed)
    return Reservoir(W.astype(dtype), W_in.astype(dtype), rho, alpha, density, seed_value)


@dataclass
class StateTrajectory:
    """狀態軌跡；states[b, :, t] 為 h_{t+1}，activations 供 BPTT 使用"""

    states: Tensor
    h0: Tensor
    inputs: Optional[Tensor] = None
    activations: Optional[Tensor] = None
    reservoir: Optional[Reservoir] = None


def esn_forward(inputs: Tensor, res: Reservoir, h0: Optional[Tensor] = None,
                keep_cache: bool = True) -> StateTrajectory:
    """
    洩漏積分 ESN：h_{t+1} = (1−α) h_t + α tanh(W h_t + W_in u_t)

    Args:
        inputs: [D, T] 或 [B, D, T]，u_t 為第 t 欄
        res: 儲備池
        h0: [H] 或 [B, H]；None 表示零初始狀態

    Returns:
        StateTrajectory，states 形狀與 inputs 批次維一致：[H, T] 或 [B, H, T]
    """
    single = inputs.ndim == 2
    u = inputs[None] if single else inputs
    check_shape(u, [None, None, None], 'ESN 輸入')
    if u.shape[1] != res.input_dim:
        raise ShapeError(f"ESN 輸入維度 {u.shape[1]} 與 W_in 欄數 {res.input_dim} 不符")

    batch, _, length = u.shape
    H = res.size
    if h0 is None:
        h = np.zeros((batch, H), dtype=u.dtype)
    elif h0.ndim == 1:
        check_shape(h0, [H], 'h0')
        h = np.tile(h0.astype(u.dtype), (batch, 1))
    else:
        check_shape(h0, [batch, H], 'h0')
        h = h0.astype(u.dtype)
    start = h.copy()

    alpha = res.alpha
    W_t = res.W.value.T
    drive = np.einsum('hd,bdt->bht', res.W_in.value, u)
    states = np.empty((batch, H, length), dtype=u.dtype)
    activations = np.empty_like(states) if keep_cache else None
    for t in range(length):
        a = np.tanh(h @ W_t + drive[:, :, t])
        h = (1.0 - alpha) * h + alpha * a
        states[:, :, t] = h
        if keep_cache:
            activations[:, :, t] = a

    if single:
        return StateTrajectory(states[0], start[0], inputs if keep_cache else None,
                               activations[0] if keep_cache else None, res if keep_cache else None)
    return StateTrajectory(states, start, u if keep_cache else None, activations, res if keep_cache else None)


@dataclass
class EsnGradients:
    w_in: Tensor
    inputs: Tensor
    h0: Tensor


def esn_backward(trajectory: StateTrajectory, grad_states: Tensor, accumulate: bool = True) -> EsnGradients:
    """
    完整（不截斷）BPTT

    Args:
        trajectory: esn_forward 的輸出（須保留快取）
        grad_states: dL/dh_t，形狀同 trajectory.states
        accumulate: 是否累加到 W_in.grad（W 永不接收梯度）

    Raises:
        StateError: 軌跡沒有保留 forward 快取
    """
    if trajectory.activations is None or trajectory.inputs is None or trajectory.reservoir is None:
        raise StateError("ESN 軌跡沒有保留 forward 快取，無法反向傳播")
    res = trajectory.reservoir
    single = trajectory.states.ndim == 2
    a = trajectory.activations[None] if single else trajectory.activations
    u = trajectory.inputs[None] if single else trajectory.inputs
    g = grad_states[None] if single else grad_states
    check_shape(g, list(a.shape), 'dL/dh')

    alpha = res.alpha
    W = res.W.value
    batch, H, length = a.shape
    grad_pre = np.empty_like(a)
    carry = np.zeros((batch, H), dtype=a.dtype)
    for t in range(length - 1, -1, -1):
        grad_h = g[:, :, t] + carry
        dz = grad_h * alpha * (1.0 - a[:, :, t] ** 2)
        grad_pre[:, :, t] = dz
        carry = (1.0 - alpha) * grad_h + dz @ W

    grad_w_in = np.einsum('bht,bdt->hd', grad_pre, u)
    grad_inputs = np.einsum('hd,bht->bdt', res.W_in.value, grad_pre)
    if accumulate:
        res.W_in.accumulate(grad_w_in.astype(res.W_in.value.dtype))
    if single:
        return EsnGradients(grad_w_in, grad_inputs[0], carry[0])
    return EsnGradients(grad_w_in, grad_inputs, carry)


def echo_state_probe(res: Reservoir, inputs: Tensor, h0_a: Tensor, h0_b: Tensor) -> List[float]:
    """
    回聲狀態性質探測：相同輸入、不同初始狀態下 ‖h_t^(a) − h_t^(b)‖₂ 的序列（t = 1..T）
    """
    pair = np.stack([inputs, inputs])
    h0 = np.stack([np.asarray(h0_a, dtype=inputs.dtype), np.asarray(h0_b, dtype=inputs.dtype)])
    states = esn_forward(pair, res, h0, keep_cache=False).states
    return np.linalg.norm(states[0] - states[1], axis=0).tolist()


class EsnLayer:
    """把儲備池包成與其他層一致的 forward/backward 介面；每個樣本 h_0 = 0"""

    def __init__(self, reservoir: Reservoir):
        self.reservoir = reservoir
        self._trajectory = None

    def parameters(self) -> List[Parameter]:
        return self.reservoir.parameters()

    def forward(self, x: Tensor, mode: str = 'train') -> Tensor:
        self._trajectory = esn_forward(x, self.reservoir)
        return self._trajectory.states

    def backward(self, grad: Tensor) -> Tensor:
        if self._trajectory is None:
            raise StateError("ESN: backward 前必須先 forward")
        return esn_backward(self._trajectory, grad).inputs
