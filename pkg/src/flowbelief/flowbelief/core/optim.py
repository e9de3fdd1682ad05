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

"""Trainable parameters, Adam and global gradient-norm clipping."""

import dataclasses
import logging
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from flowbelief.core import autodiff

logger = logging.getLogger(__name__)

MODEL_LEARNING_RATE = 5e-4
CRITIC_LEARNING_RATE = 8e-5
ACTOR_LEARNING_RATE = 8e-5
DEFAULT_MAX_GRAD_NORM = 100.0


@dataclasses.dataclass(eq=False)
class Parameter:
  """A leaf tensor with its Adam state.

  Attributes:
    tensor: The trainable leaf tensor.
    first_moment: Running mean of gradients.
    second_moment: Running mean of squared gradients.
    step_count: Number of optimizer steps applied.
    name: Hierarchical name used in checkpoints.
  """

  tensor: autodiff.Tensor
  first_moment: np.ndarray = dataclasses.field(init=False)
  second_moment: np.ndarray = dataclasses.field(init=False)
  step_count: int = 0
  name: str = ""

  def __post_init__(self):
    self.tensor.requires_grad = True
    self.first_moment = np.zeros_like(self.tensor.value)
    self.second_moment = np.zeros_like(self.tensor.value)

  @classmethod
  def create(cls, value: np.ndarray, name: str = "") -> "Parameter":
    return cls(tensor=autodiff.Tensor(value, requires_grad=True), name=name)

  @property
  def value(self) -> np.ndarray:
    return self.tensor.value

  @property
  def shape(self) -> tuple[int, ...]:
    return self.tensor.shape

  def assign(self, value: np.ndarray) -> None:
    """Overwrites the values in place, keeping the shape."""
    value = np.asarray(value, dtype=np.float64)
    if value.shape != self.shape:
      raise autodiff.ShapeError("assign", [self.shape, value.shape])
    np.copyto(self.tensor.value, value)

  def reset_moments(self) -> None:
    self.first_moment[...] = 0.0
    self.second_moment[...] = 0.0
    self.step_count = 0


@dataclasses.dataclass
class StepReport:
  """Outcome of one optimizer step.

  Attributes:
    applied: Whether the update was applied.
    grad_norm: Global L2 norm before clipping.
    clipped: Whether the gradients were rescaled.
    non_finite: Names of parameters whose gradient was not finite.
  """

  applied: bool
  grad_norm: float
  clipped: bool
  non_finite: list[str] = dataclasses.field(default_factory=list)


def global_norm(grads: Iterable[np.ndarray]) -> float:
  return float(np.sqrt(np.sum([np.sum(np.square(g)) for g in grads])))


def clip_grad_norm(
    grads: Mapping[Parameter, np.ndarray],
    max_norm: float = DEFAULT_MAX_GRAD_NORM,
) -> dict[Parameter, np.ndarray]:
  """Rescales gradients whose global L2 norm exceeds `max_norm`.

  Args:
    grads: Gradient per parameter.
    max_norm: Largest allowed global norm, must be positive.

  Returns:
    A new mapping; unchanged values when the norm is within the limit.

  Raises:
    ValueError: If max_norm is not positive.
  """
  if max_norm <= 0:
    raise ValueError(f"max_norm must be positive, got {max_norm}")
  norm = global_norm(grads.values())
  if norm <= max_norm:
    return dict(grads)
  scale = max_norm / norm
  return {param: grad * scale for param, grad in grads.items()}


def adam_step(
    params: Sequence[Parameter],
    grads: Mapping[Parameter, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> list[str]:
  """Applies one bias-corrected Adam update in place.

  A group with any non-finite gradient is left untouched and reported.

  Args:
    params: The parameter group.
    grads: Gradient per parameter; must match shapes.
    lr: Learning rate.
    beta1: First-moment decay.
    beta2: Second-moment decay.
    eps: Denominator offset.

  Returns:
    Names of parameters with non-finite gradients; empty when applied.

  Raises:
    autodiff.ShapeError: If a gradient does not match its parameter.
  """
  for param in params:
    grad = grads[param]
    if grad.shape != param.shape:
      raise autodiff.ShapeError("adam_step", [param.shape, grad.shape])
  non_finite = [
      param.name or repr(param)
      for param in params
      if not np.all(np.isfinite(grads[param]))
  ]
  if non_finite:
    logger.warning(
        "Skipping Adam update: non-finite gradients in %s", non_finite
    )
    return non_finite
  for param in params:
    grad = grads[param]
    param.step_count += 1
    param.first_moment *= beta1
    param.first_moment += (1.0 - beta1) * grad
    param.second_moment *= beta2
    param.second_moment += (1.0 - beta2) * grad * grad
    m_hat = param.first_moment / (1.0 - beta1**param.step_count)
    v_hat = param.second_moment / (1.0 - beta2**param.step_count)
    param.tensor.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
  return []


class Adam:
  """An Adam optimizer bound to one parameter group."""

  def __init__(
      self,
      params: Sequence[Parameter],
      lr: float,
      max_grad_norm: Optional[float] = DEFAULT_MAX_GRAD_NORM,
      beta1: float = 0.9,
      beta2: float = 0.999,
      eps: float = 1e-8,
      name: str = "",
  ):
    self.params = list(params)
    self.lr = lr
    self.max_grad_norm = max_grad_norm
    self.beta1 = beta1
    self.beta2 = beta2
    self.eps = eps
    self.name = name

  def step(self, grads: Mapping[Parameter, np.ndarray]) -> StepReport:
    """Clips and applies the gradients of this group."""
    group = {param: grads[param] for param in self.params}
    norm = global_norm(group.values())
    clipped = False
    if self.max_grad_norm is not None and np.isfinite(norm):
      clipped = norm > self.max_grad_norm
      group = clip_grad_norm(group, self.max_grad_norm)
    non_finite = adam_step(
        self.params, group, self.lr, self.beta1, self.beta2, self.eps
    )
    if non_finite:
      logger.warning("Optimizer group %r skipped this step.", self.name)
    return StepReport(
        applied=not non_finite,
        grad_norm=norm,
        clipped=clipped,
        non_finite=non_finite,
    )
