"""張量核心：建立、亂數串流與梯度檢查"""
import numpy as np
import pytest

from exceptions import NumericError, ShapeError
from nn.tensor import Draw, Parameter, RngStream, check_shape, grad_check, grad_check_report, is_finite, new_tensor


class Quadratic:
    """loss = Σ a·w² + b·w，解析梯度 2a·w + b"""

    def __init__(self, w, a=1.5, b=-0.3, wrong=False):
        self.w = Parameter('w', np.array(w, dtype=np.float64))
        self.a, self.b, self.wrong = a, b, wrong

    def parameters(self):
        return [self.w]

    def loss(self, inputs):
        return float(np.sum(self.a * self.w.value ** 2 + self.b * self.w.value * inputs))

    def loss_and_grad(self, inputs):
        scale = 3.0 if self.wrong else 2.0
        self.w.accumulate(scale * self.a * self.w.value + self.b * inputs)
        return self.loss(inputs)


def test_new_tensor_constant_fill():
    t = new_tensor([2, 3], 0.5)
    assert t.shape == (2, 3)
    assert np.all(t == 0.5)


def test_new_tensor_rejects_empty_extent():
    with pytest.raises(ShapeError):
        new_tensor([3, 0])


def test_same_seed_same_draws():
    a = new_tensor([4, 5], Draw('uniform', -1, 1), RngStream(7))
    b = new_tensor([4, 5], Draw('uniform', -1, 1), RngStream(7))
    np.testing.assert_array_equal(a, b)
    assert a.min() >= -1 and a.max() < 1


def test_spawned_streams_are_independent_of_parent_consumption():
    root = RngStream(3)
    before = root.spawn('head').uniform((5,))
    root.uniform((100,))
    after = root.spawn('head').uniform((5,))
    np.testing.assert_array_equal(before, after)
    assert not np.array_equal(before, root.spawn('temporal').uniform((5,)))


def test_float32_precision():
    t = new_tensor([2], Draw('normal', 0, 1), RngStream(0), dtype=np.float32)
    assert t.dtype == np.float32


def test_check_shape():
    check_shape(np.zeros((2, 3)), [None, 3], 'x')
    with pytest.raises(ShapeError):
        check_shape(np.zeros((2, 3)), [2, 4], 'x')


def test_parameter_accumulate_checks_shape():
    p = Parameter('p', np.zeros(3))
    p.accumulate(np.ones(3))
    p.accumulate(np.ones(3))
    np.testing.assert_array_equal(p.grad, [2, 2, 2])
    with pytest.raises(ShapeError):
        p.accumulate(np.ones(4))


def test_grad_check_correct_gradient():
    fragment = Quadratic([0.4, -1.2, 2.0])
    error = grad_check(fragment, np.array([1.0, 2.0, -0.5]), eps=1e-6)
    assert error < 1e-7


def test_grad_check_detects_wrong_gradient():
    fragment = Quadratic([0.4, -1.2, 2.0], wrong=True)
    report = grad_check_report(fragment, np.array([1.0, 2.0, -0.5]), eps=1e-6)
    assert report.max_relative_error > 1e-2
    assert report.worst_parameter == 'w'
    assert report.checked == 3


def test_grad_check_rejects_bad_eps_and_float32():
    with pytest.raises(NumericError):
        grad_check(Quadratic([1.0]), np.array([1.0]), eps=1e-2)
    fragment = Quadratic([1.0])
    fragment.w.cast(np.float32)
    with pytest.raises(NumericError):
        grad_check(fragment, np.array([1.0]))


def test_grad_check_skips_frozen_parameters():
    fragment = Quadratic([1.0, 2.0])
    fragment.w.trainable = False
    assert grad_check_report(fragment, np.array([0.0, 0.0])).checked == 0


def test_is_finite():
    assert is_finite(np.zeros((2, 3)))
    assert not is_finite(np.array([1.0, np.nan]))
    assert not is_finite(np.array([[np.inf]]))
