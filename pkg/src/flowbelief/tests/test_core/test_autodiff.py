# Copyright 2026 The flowbelief Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Unit tests for the reverse-mode autodiff engine."""

import numpy as np
import pytest

from flowbelief.core import autodiff
from flowbelief.core import rng as rng_lib


def _check_gradient(fn, x, tol=1e-6):
  """Compares the tape gradient of fn at x with central differences."""
  leaf = autodiff.Tensor(x, requires_grad=True)
  with autodiff.Tape():
    loss = fn(leaf)
  analytic = autodiff.backward(loss, wrt=[leaf])[leaf]
  numeric = autodiff.numerical_gradient(
      lambda v: fn(autodiff.Tensor(v)).item(), x
  )
  assert autodiff.relative_error(analytic, numeric) < tol


class TestGradients:
  """Analytic gradients agree with finite differences."""

  @pytest.fixture
  def values(self):
    return rng_lib.Rng(7).normal((3, 4))

  def test_elementwise_chain(self, values):
    """tanh, sigmoid, exp, softplus and square compose correctly."""
    _check_gradient(
        lambda x: autodiff.sum(
            autodiff.tanh(x) * autodiff.sigmoid(x)
            + autodiff.softplus(x) * autodiff.exp(0.1 * x)
            - autodiff.square(x)
        ),
        values,
    )

  def test_matmul_and_broadcast(self, values):
    """matmul plus a trailing-dimension bias broadcast."""
    weight = rng_lib.Rng(8).normal((4, 2))
    bias = np.array([0.5, -0.5])
    _check_gradient(
        lambda x: autodiff.mean(
            autodiff.tanh(autodiff.matmul(x, weight) + bias)
        ),
        values,
    )

  def test_division_and_log(self, values):
    """div and log on strictly positive inputs."""
    _check_gradient(
        lambda x: autodiff.sum(
            autodiff.log(autodiff.square(x) + 1.0) / (autodiff.abs(x) + 2.0)
        ),
        values,
    )

  def test_slices_concat_and_reductions(self, values):
    """slice, concat, reshape, transpose and axis reductions."""

    def fn(x):
      left, right = x[:, :2], x[:, 2:]
      joined = autodiff.concat([right, left * 2.0], axis=-1)
      flat = autodiff.reshape(autodiff.transpose(joined), (12,))
      return autodiff.sum(autodiff.mean(joined, axis=0)) + autodiff.sum(
          autodiff.square(flat[3:7])
      )

    _check_gradient(fn, values)

  def test_solve_triangular(self):
    """Gradients flow into both the triangular factor and the rows."""
    r = rng_lib.Rng(9)
    rows = r.normal((3, 3))
    factor = np.triu(r.normal((3, 3)), 1) + np.diag([1.5, -2.0, 1.2])

    _check_gradient(
        lambda a: autodiff.sum(
            autodiff.square(autodiff.solve_triangular(a, rows, lower=False))
        ),
        factor,
        tol=1e-5,
    )
    _check_gradient(
        lambda b: autodiff.sum(
            autodiff.solve_triangular(factor, b, lower=False)
        ),
        rows,
    )

  def test_conv2d(self):
    """Strided valid cross-correlation with respect to the input."""
    r = rng_lib.Rng(10)
    kernel = r.normal((2, 1, 3, 3))
    images = r.normal((1, 1, 7, 7))
    _check_gradient(
        lambda x: autodiff.sum(
            autodiff.square(autodiff.conv2d(x, kernel, stride=2))
        ),
        images,
        tol=1e-5,
    )

  def test_maximum_floor(self):
    """Entries below the floor receive no gradient."""
    x = autodiff.Tensor([0.5, 2.0, 4.0], requires_grad=True)
    with autodiff.Tape():
      loss = autodiff.sum(autodiff.maximum(x, 1.0))
    grads = autodiff.backward(loss, wrt=[x])
    np.testing.assert_array_equal(grads[x], [0.0, 1.0, 1.0])

  def test_fan_out_accumulates(self):
    """A tensor used twice receives the sum of both contributions."""
    x = autodiff.Tensor(3.0, requires_grad=True)
    with autodiff.Tape():
      loss = x * x + x
    assert autodiff.backward(loss, wrt=[x])[x] == pytest.approx(7.0)


class TestTape:
  """Recording rules of the tape."""

  def test_no_tape_records_nothing(self):
    """Outside a tape results are plain values."""
    x = autodiff.Tensor([1.0, 2.0], requires_grad=True)
    y = autodiff.square(x)
    assert y.node is None
    assert not y.requires_grad

  def test_constants_are_not_recorded(self):
    """Operations on constants only stay off the tape."""
    with autodiff.Tape() as tape:
      autodiff.add(np.ones(2), np.ones(2))
    assert len(tape) == 0

  def test_nodes_in_append_order(self):
    """Node ids follow the order of the operations."""
    x = autodiff.Tensor([1.0], requires_grad=True)
    with autodiff.Tape() as tape:
      a = x * 2.0
      b = autodiff.exp(a)
    assert a.node_id == 0
    assert b.node_id == 1
    assert len(tape) == 2

  def test_stop_gradient(self):
    """stop_gradient keeps the value and cuts the path."""
    x = autodiff.Tensor([2.0], requires_grad=True)
    with autodiff.Tape():
      frozen = autodiff.stop_gradient(x * 3.0)
      loss = autodiff.sum(frozen * x)
    np.testing.assert_allclose(frozen.value, [6.0])
    np.testing.assert_allclose(autodiff.backward(loss, wrt=[x])[x], [6.0])

  def test_unreachable_gets_zeros(self):
    """Requested leaves outside the graph get zero gradients."""
    x = autodiff.Tensor([1.0, 2.0], requires_grad=True)
    unused = autodiff.Tensor(np.ones((2, 2)), requires_grad=True)
    with autodiff.Tape():
      loss = autodiff.sum(x)
    grads = autodiff.backward(loss, wrt=[x, unused])
    np.testing.assert_array_equal(grads[unused], np.zeros((2, 2)))

  def test_nested_tape_restores_outer(self):
    """Leaving an inner tape reactivates the outer one."""
    with autodiff.Tape() as outer:
      with autodiff.Tape() as inner:
        assert autodiff.active_tape() is inner
      assert autodiff.active_tape() is outer
    assert autodiff.active_tape() is None


class TestErrors:
  """Shape and numeric failures."""

  def test_backward_needs_scalar(self):
    """A non-scalar loss is rejected."""
    x = autodiff.Tensor([1.0, 2.0], requires_grad=True)
    with autodiff.Tape():
      y = x * 2.0
    with pytest.raises(autodiff.GradientError):
      autodiff.backward(y)

  def test_matmul_shape_mismatch(self):
    """Inner dimensions must agree."""
    with pytest.raises(autodiff.ShapeError) as excinfo:
      autodiff.matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert excinfo.value.kind == "matmul"

  def test_only_trailing_broadcast(self):
    """Leading-dimension broadcasting is not supported."""
    with pytest.raises(autodiff.ShapeError):
      autodiff.add(np.ones((2, 3)), np.ones((2, 1)))

  def test_non_finite_output(self):
    """Division by zero surfaces as a NumericError."""
    with pytest.raises(autodiff.NumericError):
      autodiff.div(1.0, 0.0)

  def test_unknown_kind(self):
    """Unregistered kinds raise ValueError."""
    with pytest.raises(ValueError):
      autodiff.forward_op("cosine", 1.0)

  def test_numpy_defers_to_tensor(self):
    """ndarray on the left still produces a Tensor."""
    result = np.ones(2) + autodiff.Tensor([1.0, 2.0])
    assert isinstance(result, autodiff.Tensor)
    np.testing.assert_array_equal(result.value, [2.0, 3.0])
