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

"""Unit tests for parameters, Adam and gradient clipping."""

import numpy as np
import pytest

from flowbelief.core import autodiff
from flowbelief.core import optim


class TestClipGradNorm:
  """Global-norm clipping."""

  def test_within_limit_unchanged(self):
    """Gradients under the limit are returned as they are."""
    param = optim.Parameter.create(np.zeros(2))
    grads = {param: np.array([3.0, 4.0])}
    clipped = optim.clip_grad_norm(grads, max_norm=10.0)
    np.testing.assert_array_equal(clipped[param], [3.0, 4.0])

  def test_rescales_to_limit(self):
    """Gradients above the limit are scaled to exactly the limit."""
    a = optim.Parameter.create(np.zeros(1))
    b = optim.Parameter.create(np.zeros(1))
    clipped = optim.clip_grad_norm(
        {a: np.array([3.0]), b: np.array([4.0])}, max_norm=1.0
    )
    assert optim.global_norm(clipped.values()) == pytest.approx(1.0)
    assert clipped[a][0] == pytest.approx(0.6)

  def test_rejects_non_positive_limit(self):
    """The limit must be positive."""
    with pytest.raises(ValueError):
      optim.clip_grad_norm({}, max_norm=0.0)


class TestAdam:
  """Bias-corrected Adam updates."""

  def test_first_step_moves_by_learning_rate(self):
    """The first bias-corrected step has magnitude lr per coordinate."""
    param = optim.Parameter.create(np.array([1.0, -1.0]))
    optimizer = optim.Adam([param], lr=0.1, max_grad_norm=None)
    report = optimizer.step({param: np.array([2.0, -0.5])})
    assert report.applied
    np.testing.assert_allclose(param.value, [0.9, -0.9], atol=1e-6)

  def test_minimises_quadratic(self):
    """Repeated steps drive a quadratic toward its minimum."""
    param = optim.Parameter.create(np.array([3.0, -2.0]))
    optimizer = optim.Adam([param], lr=0.1)
    for _ in range(300):
      with autodiff.Tape():
        loss = autodiff.sum(autodiff.square(param.tensor - 1.0))
      optimizer.step(autodiff.backward(loss, wrt=optimizer.params))
    np.testing.assert_allclose(param.value, [1.0, 1.0], atol=0.1)

  def test_non_finite_gradient_skips_group(self):
    """A NaN anywhere in the group leaves every parameter untouched."""
    a = optim.Parameter.create(np.array([1.0]), name="a")
    b = optim.Parameter.create(np.array([2.0]), name="b")
    optimizer = optim.Adam([a, b], lr=0.1)
    report = optimizer.step({a: np.array([1.0]), b: np.array([np.nan])})
    assert not report.applied
    assert report.non_finite == ["b"]
    np.testing.assert_array_equal(a.value, [1.0])
    assert a.step_count == 0

  def test_reports_clipping(self):
    """Large gradients are flagged as clipped."""
    param = optim.Parameter.create(np.zeros(1))
    optimizer = optim.Adam([param], lr=0.1, max_grad_norm=1.0)
    report = optimizer.step({param: np.array([5.0])})
    assert report.clipped
    assert report.grad_norm == pytest.approx(5.0)


class TestParameter:
  """In-place assignment."""

  def test_assign_keeps_identity(self):
    """assign writes into the existing leaf tensor."""
    param = optim.Parameter.create(np.zeros((2, 2)))
    tensor = param.tensor
    param.assign(np.ones((2, 2)))
    assert param.tensor is tensor
    np.testing.assert_array_equal(tensor.value, np.ones((2, 2)))

  def test_assign_rejects_shape_change(self):
    """A differently shaped value is refused."""
    param = optim.Parameter.create(np.zeros(3))
    with pytest.raises(autodiff.ShapeError):
      param.assign(np.zeros(4))
