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

"""Conditional invertible transformations and flow distributions.

Inputs are row batches [B, D]; the context, when present, is [B, C]. Every
layer returns its output together with a per-row log-determinant [B] (or a
scalar when the layer does not depend on the input, as for LU layers).
"""

import logging
from typing import Callable, Literal, Optional

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import nn
from flowbelief.core import optim
from flowbelief.core import rng as rng_lib
from flowbelief.models import distributions

logger = logging.getLogger(__name__)

Tensor = autodiff.Tensor

DEFAULT_MAX_LOG_SCALE = 5.0
SINGULARITY_THRESHOLD = 1e-8

Permutation = Literal["identity", "random"]


class Error(Exception):
  """Base error for the flows module."""


class FlowError(Error):
  """Raised when a flow layer is used outside its domain."""


class SingularityError(FlowError):
  """Raised when an LU layer's diagonal is numerically zero."""


class AffineCouplingLayer(nn.Module):
  """Affine coupling with a residual conditioner.

  The identity half passes through unchanged; the other half is scaled by
  exp(log_scale) and shifted, both computed from the identity half and the
  context. Parity 0 keeps the first ⌊D/2⌋ coordinates fixed, parity 1 keeps
  the last ⌈D/2⌉.
  """

  def __init__(
      self,
      dim: int,
      context_dim: int,
      hidden_dim: int,
      parity: int,
      rng: rng_lib.Rng,
      max_log_scale: float = DEFAULT_MAX_LOG_SCALE,
  ):
    if dim < 2:
      raise FlowError(f"Affine coupling needs D >= 2, got D={dim}")
    self.dim = dim
    self.split = dim // 2
    self.parity = parity % 2
    self.max_log_scale = max_log_scale
    if self.parity == 0:
      identity_dim, transformed_dim = self.split, dim - self.split
    else:
      identity_dim, transformed_dim = dim - self.split, self.split
    self.conditioner: Callable[
        [Tensor, Optional[Tensor]], tuple[Tensor, Tensor]
    ] = nn.ResidualConditioner(
        identity_dim + context_dim, transformed_dim, hidden_dim, rng
    )

  def _halves(self, x: Tensor) -> tuple[Tensor, Tensor]:
    first, second = x[..., : self.split], x[..., self.split :]
    return (first, second) if self.parity == 0 else (second, first)

  def _join(self, identity: Tensor, transformed: Tensor) -> Tensor:
    if self.parity == 0:
      return autodiff.concat([identity, transformed], axis=-1)
    return autodiff.concat([transformed, identity], axis=-1)

  def _check(self, x: Tensor) -> None:
    if x.shape[-1] != self.dim:
      raise autodiff.ShapeError("coupling", [x.shape], f"expects D={self.dim}")

  def effective_log_scale(self, raw: Tensor) -> Tensor:
    """Bounds the raw log-scale to (-max, max); 0 disables the bound."""
    if self.max_log_scale <= 0:
      return raw
    return autodiff.tanh(raw) * self.max_log_scale

  def forward(
      self, x: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, Tensor]:
    x = autodiff.as_tensor(x)
    self._check(x)
    identity, transformed = self._halves(x)
    raw, shift = self.conditioner(identity, context)
    log_scale = self.effective_log_scale(raw)
    y = transformed * autodiff.exp(log_scale) + shift
    return self._join(identity, y), autodiff.sum(log_scale, axis=-1)

  def inverse(
      self, y: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, Tensor]:
    y = autodiff.as_tensor(y)
    self._check(y)
    identity, transformed = self._halves(y)
    raw, shift = self.conditioner(identity, context)
    log_scale = self.effective_log_scale(raw)
    x = (transformed - shift) * autodiff.exp(-log_scale)
    return self._join(identity, x), -autodiff.sum(log_scale, axis=-1)


class LULinearLayer(nn.Module):
  """Invertible linear map W = P L U acting on column vectors.

  P is a frozen permutation, L is unit lower triangular and U is upper
  triangular with a directly parameterised diagonal. Rows x of a batch are
  mapped to (W x^T)^T.
  """

  def __init__(
      self,
      dim: int,
      rng: rng_lib.Rng,
      permutation: Permutation = "identity",
      random_init: bool = False,
  ):
    self.dim = dim
    perm_rng, factor_rng = rng.split(2)
    order = (
        perm_rng.permutation(dim) if permutation == "random" else np.arange(dim)
    )
    self.permutation = np.eye(dim)[:, order]
    self._strict_lower = np.tril(np.ones((dim, dim)), -1)
    self._strict_upper = np.triu(np.ones((dim, dim)), 1)
    if random_init:
      lower = factor_rng.normal((dim, dim)) * 0.3
      upper = factor_rng.normal((dim, dim)) * 0.3
      signs = np.where(factor_rng.uniform(0.0, 1.0, dim) < 0.5, -1.0, 1.0)
      diag = signs * factor_rng.uniform(0.5, 1.5, dim)
    else:
      lower = np.zeros((dim, dim))
      upper = np.zeros((dim, dim))
      diag = np.ones(dim)
    self.lower = optim.Parameter.create(lower * self._strict_lower)
    self.upper = optim.Parameter.create(upper * self._strict_upper)
    self.diagonal = optim.Parameter.create(diag)

  def factors(self) -> tuple[Tensor, Tensor]:
    """Returns the masked (L, U) factors as tensors."""
    eye = np.eye(self.dim)
    lower = self.lower.tensor * self._strict_lower + eye
    upper = self.upper.tensor * self._strict_upper + eye * self.diagonal.tensor
    return lower, upper

  def weight(self) -> np.ndarray:
    """The assembled matrix W = P L U, for inspection."""
    lower, upper = self.factors()
    return self.permutation @ lower.value @ upper.value

  def log_abs_det(self) -> Tensor:
    """Σ log|diag U|.

    Raises:
      SingularityError: If any |diag U| is below the singularity threshold.
    """
    smallest = float(np.min(np.abs(self.diagonal.value)))
    if smallest < SINGULARITY_THRESHOLD:
      raise SingularityError(
          f"LU layer diagonal magnitude {smallest:.3e} is below"
          f" {SINGULARITY_THRESHOLD:.0e}"
      )
    return autodiff.sum(autodiff.log(autodiff.abs(self.diagonal.tensor)))

  def _check(self, x: Tensor) -> None:
    if x.shape[-1] != self.dim:
      raise autodiff.ShapeError("lu", [x.shape], f"expects D={self.dim}")

  def forward(
      self, x: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, Tensor]:
    del context
    x = autodiff.as_tensor(x)
    self._check(x)
    logdet = self.log_abs_det()
    lower, upper = self.factors()
    y = autodiff.matmul(x, autodiff.transpose(upper))
    y = autodiff.matmul(y, autodiff.transpose(lower))
    y = autodiff.matmul(y, self.permutation.T)
    return y, logdet

  def inverse(
      self, y: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, Tensor]:
    del context
    y = autodiff.as_tensor(y)
    self._check(y)
    logdet = self.log_abs_det()
    lower, upper = self.factors()
    v = autodiff.matmul(y, self.permutation)
    v = autodiff.solve_triangular(lower, v, lower=True, unit_diagonal=True)
    x = autodiff.solve_triangular(upper, v, lower=False)
    return x, -logdet


FlowLayer = AffineCouplingLayer | LULinearLayer


class FlowStack(nn.Module):
  """Alternating coupling layers with LU layers between them.

  With depth K the layout is coupling, LU, coupling, ..., coupling: K
  coupling layers and K - 1 LU layers. A one-dimensional state cannot be
  split, so the stack is then a single LU layer (a learned scalar scale).
  """

  def __init__(
      self,
      dim: int,
      context_dim: int,
      depth: int,
      hidden_dim: int,
      rng: rng_lib.Rng,
      max_log_scale: float = DEFAULT_MAX_LOG_SCALE,
      permutation: Permutation = "identity",
      random_init: bool = False,
  ):
    self.dim = dim
    self.depth = depth
    streams = rng.split(max(2 * depth, 1))
    self.layers: list[FlowLayer] = []
    if depth and dim == 1:
      logger.info("State dimension 1: flow stack reduces to one LU layer.")
      self.layers.append(
          LULinearLayer(1, streams[0], permutation, random_init=random_init)
      )
      return
    for i in range(depth):
      self.layers.append(
          AffineCouplingLayer(
              dim,
              context_dim,
              hidden_dim,
              parity=i,
              rng=streams[2 * i],
              max_log_scale=max_log_scale,
          )
      )
      if i < depth - 1:
        self.layers.append(
            LULinearLayer(
                dim,
                streams[2 * i + 1],
                permutation,
                random_init=random_init,
            )
        )

  def __len__(self) -> int:
    return len(self.layers)

  def forward_trace(
      self, x: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, list[Tensor]]:
    """Pushes x through every layer, returning the per-layer logdets."""
    logdets = []
    for layer in self.layers:
      x, logdet = layer.forward(x, context)
      logdets.append(logdet)
    return autodiff.as_tensor(x), logdets

  def forward(
      self, x: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, Tensor]:
    y, logdets = self.forward_trace(x, context)
    return y, _total(logdets)

  def inverse(
      self, y: Tensor, context: Optional[Tensor] = None
  ) -> tuple[Tensor, Tensor]:
    logdets = []
    for layer in reversed(self.layers):
      y, logdet = layer.inverse(y, context)
      logdets.append(logdet)
    return autodiff.as_tensor(y), _total(logdets)


def _total(logdets: list[Tensor]) -> Tensor:
  total = autodiff.as_tensor(0.0)
  for logdet in logdets:
    total = total + logdet
  return total


class FlowDistribution:
  """A base diagonal Gaussian pushed through a conditional flow stack.

  Attributes:
    base: The base distribution over [B, S].
    stack: The flow stack; None or empty means the base itself.
    context: [B, C] conditioning input shared by every layer.
  """

  def __init__(
      self,
      base: distributions.DiagonalGaussian,
      stack: Optional[FlowStack] = None,
      context: Optional[Tensor] = None,
  ):
    self.base = base
    self.stack = stack
    self.context = context

  @property
  def has_flow(self) -> bool:
    return self.stack is not None and len(self.stack) > 0

  def sample(self, rng: rng_lib.Rng) -> tuple[Tensor, Tensor]:
    """Reparameterised sample and its log-density from the forward path."""
    s0 = self.base.sample_reparam(rng)
    log_base = self.base.log_prob(s0)
    if not self.has_flow:
      return s0, log_base
    s, logdet = self.stack.forward(s0, self.context)
    return s, log_base - logdet

  def log_prob(self, s: Tensor) -> Tensor:
    """Exact log-density via the inverse path.

    Raises:
      SingularityError: If an LU layer is singular.
    """
    if not self.has_flow:
      return self.base.log_prob(s)
    s0, logdet = self.stack.inverse(s, self.context)
    return self.base.log_prob(s0) + logdet

  def detach(self) -> "FlowDistribution":
    """Stops gradients into the base parameters and the context."""
    context = None
    if self.context is not None:
      context = autodiff.stop_gradient(self.context)
    return FlowDistribution(self.base.detach(), self.stack, context)

  def tile(self, copies: int) -> "FlowDistribution":
    """Repeats the batch `copies` times along axis 0, copy-major."""
    context = None
    if self.context is not None:
      context = autodiff.concat([self.context] * copies, axis=0)
    return FlowDistribution(self.base.tile(copies), self.stack, context)
