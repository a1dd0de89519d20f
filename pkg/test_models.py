"""ESNNet 模型：建立、前向、損失、參數量與檢查點"""
import hashlib
import json
import math
import struct

import numpy as np
import pytest

from exceptions import CheckpointError, ShapeError
from models import ModelLossFragment, build, l2_penalty, load_checkpoint, loss, loss_and_grad, predict, save_checkpoint
from nn.tensor import RngStream, grad_check
from schemas.config import ArchitectureSection, EsnSection, ModelConfig


def micro_config(variant='full'):
    return ModelConfig(
        model=ArchitectureSection(channels=4, samples=20, filters=2, kernel_size=3, variant=variant),
        esn=EsnSection(size=8, density=0.5, rho=0.9, alpha=0.3),
    )


def micro_batch(seed=0, batch=3):
    return RngStream(seed).spawn('batch').normal((batch, 4, 20))


def test_forward_shape_and_rejects_wrong_channels():
    model = build(micro_config(), seed=0)
    assert model.forward(micro_batch(), 'infer').shape == (3, 3)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((3, 5, 20)))


@pytest.mark.parametrize('seed', range(10))
def test_full_model_gradients(seed):
    model = build(micro_config(), seed=seed)
    inputs = (micro_batch(seed), np.array([0, 1, 2]))
    assert grad_check(ModelLossFragment(model, l2=1e-3), inputs, eps=1e-5) < 1e-4


def test_conv_only_gradients():
    model = build(micro_config('conv-only'), seed=1)
    inputs = (micro_batch(2), np.array([2, 2, 0]))
    assert grad_check(ModelLossFragment(model), inputs, eps=1e-5) < 1e-4


def test_zero_input_gives_head_bias():
    model = build(micro_config(), seed=3)
    model.head.bias.assign(np.array([0.1, -0.2, 0.3]))
    logits = model.forward(np.zeros((2, 4, 20)), 'infer')
    np.testing.assert_allclose(logits, [[0.1, -0.2, 0.3]] * 2, atol=1e-15)


def test_identical_samples_identical_logits():
    model = build(micro_config(), seed=4)
    sample = micro_batch(4, batch=1)
    logits = model.forward(np.repeat(sample, 5, axis=0), 'infer')
    for row in logits[1:]:
        np.testing.assert_array_equal(row, logits[0])


def test_conv_only_parameter_count():
    config = micro_config()
    full = build(config, seed=0).parameter_budget().total
    conv_only = build(config.with_variant('conv-only'), seed=0).parameter_budget().total
    H, D = config.H, config.D
    assert conv_only == full - H * D - 3 * (H - D)


def test_default_parameter_budget():
    budget = build(ModelConfig(), seed=0).parameter_budget()
    assert budget.total == 5119
    assert budget.by_stage['temporal_conv'] == 16 * 125
    assert budget.by_stage['spatial_conv'] == 16 * 72
    assert budget.by_stage['reservoir_input'] == 100 * 16
    assert budget.by_stage['head'] == 303


def test_reference_budget_preset_is_in_reported_range():
    total = build(ModelConfig.reference_budget(), seed=0).parameter_budget().total
    assert total == 46055
    assert 32_000 <= total <= 60_000


def test_same_seed_byte_identical_models():
    a = build(micro_config(), seed=9)
    b = build(micro_config(), seed=9)
    for p, q in zip(a.parameters(), b.parameters()):
        assert p.name == q.name
        assert p.value.tobytes() == q.value.tobytes()
    assert a.reservoir_fingerprint() == b.reservoir_fingerprint()
    c = build(micro_config(), seed=10)
    assert a.reservoir_fingerprint() != c.reservoir_fingerprint()


def test_variants_share_front_end_initialisation():
    full = build(micro_config(), seed=5)
    conv_only = build(micro_config('conv-only'), seed=5)
    np.testing.assert_array_equal(full.temporal.kernels.value, conv_only.temporal.kernels.value)
    np.testing.assert_array_equal(full.spatial.weights.value, conv_only.spatial.weights.value)
    assert conv_only.esn is None
    assert conv_only.reservoir_fingerprint() is None


def test_reservoir_is_frozen():
    model = build(micro_config(), seed=0)
    frozen = [p.name for p in model.parameters() if not p.trainable]
    assert frozen == ['reservoir.W']


def test_float32_precision():
    config = micro_config()
    config.train.precision = 'float32'
    model = build(config, seed=0)
    assert model.dtype == np.float32
    assert model.forward(micro_batch(), 'infer').dtype == np.float32


def test_loss_uniform_logits_without_penalty():
    model = build(micro_config(), seed=0)
    assert abs(loss(np.zeros((3, 3)), [0, 1, 2], model, 0.0) - math.log(3)) < 1e-9


def test_loss_with_l2_penalty():
    model = build(micro_config(), seed=0)
    squares = sum(float(np.sum(p.value ** 2)) for p in model.parameters() if p.trainable)
    assert l2_penalty(model) == pytest.approx(squares)
    assert loss(np.zeros((2, 3)), [1, 1], model, 0.01) == pytest.approx(math.log(3) + 0.01 * squares)
    with pytest.raises(ValueError):
        loss(np.zeros((2, 3)), [1, 1], model, -0.1)


def test_l2_gradient_term():
    model = build(micro_config(), seed=6)
    batch, labels = micro_batch(6), np.array([0, 1, 2])
    loss_and_grad(model, batch, labels, 0.0)
    plain = {p.name: p.grad.copy() for p in model.trainable_parameters()}
    loss_and_grad(model, batch, labels, 0.05)
    for p in model.trainable_parameters():
        np.testing.assert_allclose(p.grad - plain[p.name], 0.1 * p.value, atol=1e-12)
    assert np.all(model.esn.reservoir.W.grad == 0.0)


def test_predict_tie_break_and_shift_invariance():
    np.testing.assert_array_equal(predict(np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])), [0, 1])
    logits = np.random.default_rng(0).normal(size=(20, 3))
    np.testing.assert_array_equal(predict(logits), predict(logits + 7.5))


def test_checkpoint_round_trip(tmp_path):
    model = build(micro_config(), seed=7)
    batch = micro_batch(7)
    model.forward(batch, 'train')
    path = save_checkpoint(model, tmp_path / 'ckpt' / 'model.bin')
    restored = load_checkpoint(path)

    assert restored.config == model.config
    for p, q in zip(model.parameters(), restored.parameters()):
        assert p.value.tobytes() == q.value.tobytes()
        assert p.trainable == q.trainable
    for name, value in model.buffers().items():
        assert restored.buffers()[name].tobytes() == value.tobytes()
    np.testing.assert_array_equal(model.forward(batch, 'infer'), restored.forward(batch, 'infer'))
    assert not (tmp_path / 'ckpt' / 'model.bin.tmp').exists()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = save_checkpoint(build(micro_config(), seed=0), tmp_path / 'model.bin')
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation_and_corruption(tmp_path):
    path = save_checkpoint(build(micro_config(), seed=0), tmp_path / 'model.bin')
    blob = path.read_bytes()

    truncated = tmp_path / 'truncated.bin'
    truncated.write_bytes(blob[:-10])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)

    corrupted = tmp_path / 'corrupted.bin'
    flipped = bytearray(blob)
    flipped[-1] ^= 0x01
    corrupted.write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError):
        load_checkpoint(corrupted)

    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'missing.bin')


def rewrite_header(path, edit):
    """改寫檢查點 header 並重算其校驗碼，payload 原樣保留"""
    blob = path.read_bytes()
    magic, version, length = struct.unpack_from('<8sHI', blob, 0)
    start = struct.calcsize('<8sHI')
    header = json.loads(blob[start:start + length])
    edit(header)
    encoded = json.dumps(header).encode('utf-8')
    payload = blob[start + length + 32:]
    path.write_bytes(struct.pack('<8sHI', magic, version, len(encoded)) + encoded
                     + hashlib.sha256(encoded).digest() + payload)


@pytest.mark.parametrize('edit', [
    lambda h: h.pop('tensors'),
    lambda h: h['tensors'][0].pop('sha256'),
    lambda h: h['tensors'][0].update(shape=[999]),
    lambda h: h['tensors'][0].update(dtype='not-a-dtype'),
])
def test_checkpoint_malformed_header_entries(tmp_path, edit):
    path = save_checkpoint(build(micro_config(), seed=0), tmp_path / 'model.bin')
    rewrite_header(path, edit)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
