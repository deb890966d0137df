"""Tensor primitives, recorded gradients and the finite-difference checker."""

import numpy as np
import pytest

from numerics.gradcheck import check_named_gradients, finite_diff_check, relative_error, sample_coordinates
from numerics.tensor import (
    ComputationRecord,
    DomainError,
    ShapeError,
    Tensor,
    abs_,
    backward,
    clip,
    concat,
    exp,
    log,
    matmul,
    mean,
    reshape,
    sigmoid,
    slice_,
    softmax,
    square,
    stack,
    sum_,
    tanh,
    transpose,
)

SMOOTH_OPS = [
    ("tanh", lambda x: sum_(tanh(x))),
    ("sigmoid", lambda x: sum_(sigmoid(x))),
    ("exp", lambda x: sum_(exp(x * 0.5))),
    ("square", lambda x: mean(square(x))),
    ("softmax", lambda x: sum_(square(softmax(x, axis=-1)))),
    ("log", lambda x: sum_(log(square(x) + 1.0))),
    ("matmul", lambda x: sum_(tanh(matmul(x, np.arange(12.0).reshape(4, 3) / 10.0)))),
    ("reshape", lambda x: sum_(square(reshape(x, (4, 3))) * np.arange(12.0).reshape(4, 3))),
    ("transpose", lambda x: sum_(transpose(x) * np.arange(12.0).reshape(4, 3))),
    ("slice", lambda x: sum_(square(slice_(x, (slice(None), slice(1, 3)))))),
    ("concat", lambda x: sum_(square(concat([x, x * 2.0], axis=0)))),
    ("stack", lambda x: sum_(tanh(stack([x, square(x)], axis=1)))),
]


@pytest.mark.parametrize("name,function", SMOOTH_OPS, ids=[name for name, _ in SMOOTH_OPS])
def test_recorded_gradient_matches_central_differences(name, function):
    """Every smooth primitive agrees with finite differences to 1e-6."""
    point = np.random.default_rng(0).standard_normal((3, 4))
    report = finite_diff_check(function, point, step=1e-5, tolerance=1e-6)
    assert report.passed, f"{name}: {report.failures}"
    assert len(report.checks) == point.size


def test_sum_and_mean_with_axes():
    """Reductions over an axis route the gradient back with the right shape."""
    x_data = np.arange(6.0).reshape(2, 3)
    with ComputationRecord() as record:
        x = Tensor(x_data, requires_grad=True)
        y = sum_(mean(x, axis=0) * np.array([1.0, 2.0, 3.0]))
    grads = backward(record, y)
    np.testing.assert_allclose(grads[x], np.array([[0.5, 1.0, 1.5], [0.5, 1.0, 1.5]]))


def test_softmax_rows_sum_to_one_for_large_inputs():
    """Softmax is shifted by the row max and stays finite."""
    out = softmax(np.array([[1000.0, 1001.0, 999.0], [-5.0, 0.0, 5.0]]))
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0)
    assert np.all(np.isfinite(out.data))


def test_log_rejects_non_positive_input():
    """log of zero or a negative value is a domain error."""
    with pytest.raises(DomainError):
        log(np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        log(np.array([-1.0]))


def test_matmul_shape_mismatch_raises():
    """Inner dimensions must agree."""
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_broadcast_mismatch_raises():
    """Elementwise ops refuse shapes numpy cannot broadcast."""
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))


def test_zero_size_tensor_is_rejected():
    """Tensors need strictly positive dimensions."""
    with pytest.raises(ShapeError):
        Tensor(np.zeros((0, 3)))


def test_backward_needs_scalar_output():
    """backward refuses non-scalar outputs."""
    with ComputationRecord() as record:
        x = Tensor(np.ones(3), requires_grad=True)
        y = square(x)
    with pytest.raises(ShapeError):
        backward(record, y)


def test_no_recording_outside_a_computation_record():
    """Evaluation code outside a record builds no graph."""
    x = Tensor(np.ones(3), requires_grad=True)
    y = sum_(square(x))
    assert not y.requires_grad
    with ComputationRecord() as record:
        sum_(square(Tensor(np.ones(3))))
    assert len(record) == 0


def test_gradients_accumulate_across_passes():
    """A leaf reused in two passes accumulates until zero_grad."""
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    for _ in range(2):
        with ComputationRecord() as record:
            y = sum_(square(x))
        backward(record, y)
    np.testing.assert_allclose(x.grad, 2 * 2 * np.array([1.0, 2.0]))
    x.zero_grad()
    np.testing.assert_allclose(x.grad, 0.0)


def test_replay_reproduces_forward_values():
    """Re-running the recorded forwards gives the same outputs."""
    with ComputationRecord() as record:
        x = Tensor(np.array([0.3, -0.7]), requires_grad=True)
        y = sum_(tanh(x) * 2.0)
    replayed = record.replay()
    np.testing.assert_array_equal(replayed[-1], y.data)


def test_kink_is_flagged_for_abs_at_zero():
    """One-sided slopes disagree at |x| = 0."""
    report = finite_diff_check(lambda x: sum_(abs_(x)), np.array([0.0, 1.0]), step=1e-5, tolerance=1e-6)
    assert report.checks[0].kink_suspect
    assert not report.checks[0].passed
    assert report.checks[1].passed


def test_clip_gradient_is_zero_outside_the_range():
    with ComputationRecord() as record:
        x = Tensor(np.array([-2.0, 0.5, 3.0]), requires_grad=True)
        y = sum_(clip(x, -1.0, 1.0))
    grads = backward(record, y)
    np.testing.assert_array_equal(grads[x], np.array([0.0, 1.0, 0.0]))


def test_check_named_gradients_on_a_linear_model():
    """Named checks label coordinates as name[index]."""
    rng = np.random.default_rng(3)
    arrays = {"w": rng.standard_normal((3, 2)), "b": rng.standard_normal(2)}
    inputs = rng.standard_normal((5, 3))

    def loss(tensors):
        return mean(square(tanh(matmul(inputs, tensors["w"]) + tensors["b"])))

    coords = sample_coordinates(arrays, 4, np.random.default_rng(0))
    report = check_named_gradients(loss, arrays, coords, step=1e-5, tolerance=1e-6)
    assert report.passed
    assert [c.label for c in report.checks] == [f"{name}[{index}]" for name, index in coords]


def test_sample_coordinates_are_distinct_and_in_range():
    arrays = {"a": np.zeros((2, 2)), "b": np.zeros(3)}
    coords = sample_coordinates(arrays, 10, np.random.default_rng(1))
    assert len(coords) == 7
    assert len(set(coords)) == 7
    for name, index in coords:
        assert 0 <= index < arrays[name].size


def test_relative_error_uses_a_floor_for_tiny_values():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)
