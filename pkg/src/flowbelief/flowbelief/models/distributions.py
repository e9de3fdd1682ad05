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

"""Diagonal Gaussian primitives.

All densities are over the last axis; leading axes are batch axes, so
`log_prob` of a [B, D] input returns [B].
"""

import dataclasses
from typing import Callable

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import rng as rng_lib

Tensor = autodiff.Tensor

LOG_2PI = float(np.log(2.0 * np.pi))
DEFAULT_MIN_STD = 1e-4


@dataclasses.dataclass
class DiagonalGaussian:
  """Independent Gaussian per coordinate.

  Attributes:
    mean: [..., D] means.
    std: [..., D] strictly positive standard deviations.
  """

  mean: Tensor
  std: Tensor

  def __post_init__(self):
    self.mean = autodiff.as_tensor(self.mean)
    self.std = autodiff.as_tensor(self.std)
    if self.mean.shape != self.std.shape:
      raise autodiff.ShapeError(
          "DiagonalGaussian", [self.mean.shape, self.std.shape]
      )

  @classmethod
  def from_raw(
      cls, mean: Tensor, raw_std: Tensor, min_std: float = DEFAULT_MIN_STD
  ) -> "DiagonalGaussian":
    """Builds the distribution with std = softplus(raw_std) + min_std."""
    return cls(mean=mean, std=autodiff.softplus(raw_std) + min_std)

  @classmethod
  def standard(cls, shape: tuple[int, ...]) -> "DiagonalGaussian":
    return cls(mean=np.zeros(shape), std=np.ones(shape))

  @property
  def dim(self) -> int:
    return self.mean.shape[-1]

  def sample_reparam(self, rng: rng_lib.Rng) -> Tensor:
    """Draws mean + std * eps with eps ~ N(0, I); differentiable."""
    eps = rng.normal(self.mean.shape)
    return self.mean + self.std * eps

  def log_prob(self, x) -> Tensor:
    """Sum over the last axis of the per-coordinate Gaussian log-density."""
    z = (autodiff.as_tensor(x) - self.mean) / self.std
    per_dim = -0.5 * autodiff.square(z) - autodiff.log(self.std) - 0.5 * LOG_2PI
    return autodiff.sum(per_dim, axis=-1)

  def detach(self) -> "DiagonalGaussian":
    return DiagonalGaussian(
        mean=autodiff.stop_gradient(self.mean),
        std=autodiff.stop_gradient(self.std),
    )

  def tile(self, copies: int) -> "DiagonalGaussian":
    """Stacks `copies` of the batch along axis 0, copy-major."""
    return DiagonalGaussian(
        mean=autodiff.concat([self.mean] * copies, axis=0),
        std=autodiff.concat([self.std] * copies, axis=0),
    )


def analytic_kl(q: DiagonalGaussian, p: DiagonalGaussian) -> Tensor:
  """Closed-form KL(q || p), summed over the last axis.

  Raises:
    autodiff.ShapeError: If the two distributions differ in shape.
  """
  if q.mean.shape != p.mean.shape:
    raise autodiff.ShapeError("analytic_kl", [q.mean.shape, p.mean.shape])
  var_ratio = autodiff.square(q.std / p.std)
  mean_term = autodiff.square((q.mean - p.mean) / p.std)
  per_dim = 0.5 * (var_ratio + mean_term - 1.0) - autodiff.log(q.std / p.std)
  return autodiff.sum(per_dim, axis=-1)


def monte_carlo_kl(
    q_log_prob: Callable[[Tensor], Tensor],
    p_log_prob: Callable[[Tensor], Tensor],
    samples: Tensor,
) -> Tensor:
  """Mean over the leading sample axis of log q(s) - log p(s).

  Args:
    q_log_prob: Log-density of the distribution the samples came from.
    p_log_prob: Log-density of the reference distribution.
    samples: [N, ..., D] draws from q.

  Returns:
    The unbiased single-batch KL estimate, shape [...].
  """
  return autodiff.mean(q_log_prob(samples) - p_log_prob(samples), axis=0)
