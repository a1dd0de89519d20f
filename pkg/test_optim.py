"""Adam 與提前停止"""
import numpy as np
import pytest

from exceptions import NumericError
from nn.optim import Adam, AdamState, EarlyStopper, adam_step, should_stop
from nn.tensor import Parameter


def test_first_step_is_learning_rate_times_sign():
    p = Parameter('p', np.array([1.0, -2.0, 0.5]))
    p.grad = np.array([0.3, -4.0, 1e-3])
    adam_step([p], AdamState(learning_rate=0.01))
    np.testing.assert_allclose(p.value, [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01], atol=1e-6)


def test_zero_gradient_leaves_parameters_unchanged():
    p = Parameter('p', np.array([0.25, -0.75]))
    state = AdamState()
    for _ in range(3):
        p.zero_grad()
        adam_step([p], state)
    np.testing.assert_array_equal(p.value, [0.25, -0.75])
    assert state.step == 3


def test_quadratic_converges():
    p = Parameter('p', np.array([0.0]))
    optimizer = Adam([p], learning_rate=0.05)
    for _ in range(500):
        optimizer.zero_grad()
        p.accumulate(2.0 * (p.value - 3.0))
        optimizer.step()
    assert abs(p.value[0] - 3.0) < 1e-3


def test_frozen_parameter_never_moves():
    frozen = Parameter('W', np.eye(2), trainable=False)
    frozen.grad = np.ones((2, 2))
    live = Parameter('W_in', np.zeros(2))
    live.grad = np.ones(2)
    state = AdamState()
    adam_step([frozen, live], state)
    np.testing.assert_array_equal(frozen.value, np.eye(2))
    assert 'W' not in state.m
    assert np.all(live.value < 0)


def test_l2_only_gradient_shrinks_toward_zero():
    p = Parameter('p', np.array([2.0, -2.0]))
    optimizer = Adam([p], learning_rate=0.01)
    for _ in range(10):
        optimizer.zero_grad()
        p.accumulate(2.0 * 0.1 * p.value)
        optimizer.step()
    assert np.all(np.abs(p.value) < 2.0)
    assert p.value[0] > 0 > p.value[1]


def test_non_finite_gradient_is_rejected_with_name():
    p = Parameter('head.weight', np.zeros(2))
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(NumericError, match='head.weight'):
        adam_step([p], AdamState())


def test_should_stop_after_patience_without_improvement():
    stopper = EarlyStopper(patience=2)
    decisions = [should_stop(stopper, m) for m in (0.5, 0.6, 0.6, 0.55)]
    assert decisions == [False, False, False, True]
    assert stopper.best == 0.6
    assert stopper.best_epoch == 2


def test_improvement_resets_patience():
    stopper = EarlyStopper(patience=2)
    decisions = [should_stop(stopper, m) for m in (0.5, 0.4, 0.7, 0.6, 0.6)]
    assert decisions == [False, False, False, False, True]
    assert stopper.best_epoch == 3


def test_early_stopper_rejects_nan():
    with pytest.raises(NumericError):
        EarlyStopper().update(float('nan'))
