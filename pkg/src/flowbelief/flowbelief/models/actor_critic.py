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

"""Policy and value networks over belief features concat(s, z)."""

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import nn
from flowbelief.core import rng as rng_lib

Tensor = autodiff.Tensor

# Keeps squashed actions strictly inside the box.
SQUASH_MARGIN = 1e-6
DEFAULT_ACTOR_MIN_STD = 1e-3


class Actor(nn.Module):
  """Tanh-squashed diagonal Gaussian policy."""

  def __init__(
      self,
      feature_dim: int,
      action_low: np.ndarray,
      action_high: np.ndarray,
      hidden_dim: int,
      rng: rng_lib.Rng,
      min_std: float = DEFAULT_ACTOR_MIN_STD,
  ):
    self.action_low = np.asarray(action_low, dtype=np.float64)
    self.action_high = np.asarray(action_high, dtype=np.float64)
    self.action_dim = self.action_low.shape[0]
    self.min_std = min_std
    self.net = nn.MLP(
        feature_dim, [hidden_dim, hidden_dim], 2 * self.action_dim, rng
    )

  def _squash(self, pre: Tensor) -> Tensor:
    center = 0.5 * (self.action_high + self.action_low)
    half_range = 0.5 * (self.action_high - self.action_low)
    return autodiff.tanh(pre) * ((1.0 - SQUASH_MARGIN) * half_range) + center

  def distribution(self, features: Tensor) -> tuple[Tensor, Tensor]:
    """Pre-squash mean and std."""
    out = self.net(features)
    mean = out[..., : self.action_dim]
    std = autodiff.softplus(out[..., self.action_dim :]) + self.min_std
    return mean, std

  def sample(self, features: Tensor, rng: rng_lib.Rng) -> tuple[Tensor, Tensor]:
    """Reparameterised squashed action and the pre-squash std."""
    mean, std = self.distribution(features)
    pre = mean + std * rng.normal(mean.shape)
    return self._squash(pre), std

  def mode(self, features: Tensor) -> Tensor:
    """Squashed distribution mean, used for evaluation."""
    mean, _ = self.distribution(features)
    return self._squash(mean)


class Critic(nn.Module):
  """Scalar state-value estimate."""

  def __init__(self, feature_dim: int, hidden_dim: int, rng: rng_lib.Rng):
    self.net = nn.MLP(feature_dim, [hidden_dim, hidden_dim], 1, rng)

  def __call__(self, features: Tensor, detach: bool = False) -> Tensor:
    return self.net(features, detach=detach)[..., 0]
