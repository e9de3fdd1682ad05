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

"""Network building blocks on top of the autodiff engine."""

import logging
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import optim
from flowbelief.core import rng as rng_lib

logger = logging.getLogger(__name__)

Tensor = autodiff.Tensor

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": autodiff.relu,
    "tanh": autodiff.tanh,
    "softplus": autodiff.softplus,
}


class Module:
  """Base class; parameters are discovered from instance attributes."""

  def named_parameters(
      self, prefix: str = ""
  ) -> Iterator[tuple[str, optim.Parameter]]:
    for attr, value in vars(self).items():
      name = f"{prefix}{attr}"
      if isinstance(value, optim.Parameter):
        if not value.name:
          value.name = name
        yield name, value
      elif isinstance(value, Module):
        yield from value.named_parameters(f"{name}.")
      elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
          if isinstance(item, Module):
            yield from item.named_parameters(f"{name}.{i}.")

  def parameters(self) -> list[optim.Parameter]:
    return [param for _, param in self.named_parameters()]


def _use(param: optim.Parameter, detach: bool) -> Tensor:
  return autodiff.stop_gradient(param.tensor) if detach else param.tensor


class Linear(Module):
  """Affine map `x @ W + b` with Glorot-uniform initialisation."""

  def __init__(
      self,
      in_dim: int,
      out_dim: int,
      rng: rng_lib.Rng,
      zero_init: bool = False,
  ):
    self.in_dim = in_dim
    self.out_dim = out_dim
    if zero_init:
      weight = np.zeros((in_dim, out_dim))
    else:
      limit = np.sqrt(6.0 / max(in_dim + out_dim, 1))
      weight = rng.uniform(-limit, limit, (in_dim, out_dim))
    self.weight = optim.Parameter.create(weight)
    self.bias = optim.Parameter.create(np.zeros(out_dim))

  def __call__(self, x: Tensor, detach: bool = False) -> Tensor:
    return autodiff.matmul(x, _use(self.weight, detach)) + _use(
        self.bias, detach
    )


class MLP(Module):
  """Fully connected network with a shared hidden activation."""

  def __init__(
      self,
      in_dim: int,
      hidden: Sequence[int],
      out_dim: int,
      rng: rng_lib.Rng,
      activation: str = "relu",
      zero_init_output: bool = False,
  ):
    if activation not in ACTIVATIONS:
      raise ValueError(f"Unknown activation {activation!r}")
    self.activation = activation
    sizes = [in_dim, *hidden]
    streams = rng.split(len(hidden) + 1)
    self.layers = [
        Linear(sizes[i], sizes[i + 1], streams[i]) for i in range(len(hidden))
    ]
    self.output = Linear(
        sizes[-1], out_dim, streams[-1], zero_init=zero_init_output
    )

  def __call__(self, x: Tensor, detach: bool = False) -> Tensor:
    act = ACTIVATIONS[self.activation]
    for layer in self.layers:
      x = act(layer(x, detach))
    return self.output(x, detach)


class GRUCell(Module):
  """Gated recurrent unit in the reset-after formulation."""

  def __init__(self, input_dim: int, hidden_dim: int, rng: rng_lib.Rng):
    self.hidden_dim = hidden_dim
    input_rng, hidden_rng = rng.split(2)
    self.input_map = Linear(input_dim, 3 * hidden_dim, input_rng)
    self.hidden_map = Linear(hidden_dim, 3 * hidden_dim, hidden_rng)

  def gates(self, h: Tensor, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Returns the reset gate, update gate and candidate state."""
    n = self.hidden_dim
    gi = self.input_map(x)
    gh = self.hidden_map(h)
    reset = autodiff.sigmoid(gi[..., :n] + gh[..., :n])
    update = autodiff.sigmoid(gi[..., n : 2 * n] + gh[..., n : 2 * n])
    candidate = autodiff.tanh(gi[..., 2 * n :] + reset * gh[..., 2 * n :])
    return reset, update, candidate

  def __call__(self, h: Tensor, x: Tensor) -> Tensor:
    _, update, candidate = self.gates(h, x)
    return (1.0 - update) * candidate + update * h


class ResidualConditioner(Module):
  """Coupling parameter network: dense, one residual block, dense.

  Maps the identity half concatenated with the context to the raw log-scale
  and shift of the transformed half. The output layer starts at zero so the
  coupling starts as the identity map.
  """

  def __init__(
      self,
      in_dim: int,
      out_dim: int,
      hidden_dim: int,
      rng: rng_lib.Rng,
  ):
    streams = rng.split(4)
    self.out_dim = out_dim
    self.input_layer = Linear(in_dim, hidden_dim, streams[0])
    self.block_first = Linear(hidden_dim, hidden_dim, streams[1])
    self.block_second = Linear(hidden_dim, hidden_dim, streams[2])
    self.output_layer = Linear(
        hidden_dim, 2 * out_dim, streams[3], zero_init=True
    )

  def __call__(
      self, identity_half: Tensor, context: Optional[Tensor]
  ) -> tuple[Tensor, Tensor]:
    x = identity_half
    if context is not None:
      x = autodiff.concat([identity_half, context], axis=-1)
    h = autodiff.relu(self.input_layer(x))
    h = h + self.block_second(autodiff.relu(self.block_first(h)))
    out = self.output_layer(autodiff.relu(h))
    return out[..., : self.out_dim], out[..., self.out_dim :]


class ConvEncoder(Module):
  """Stride-2 convolution stack followed by a dense projection."""

  def __init__(
      self,
      image_shape: tuple[int, int, int],
      out_dim: int,
      rng: rng_lib.Rng,
      depth: int = 16,
      kernel: int = 4,
      max_layers: int = 4,
  ):
    height, width, channels = image_shape
    self.image_shape = image_shape
    self.kernel = kernel
    streams = rng.split(max_layers + 1)
    self.kernels = []
    in_channels = channels
    for i in range(max_layers):
      if min(height, width) < kernel:
        logger.info(
            "Image %s supports %d of %d convolution layers.",
            image_shape,
            i,
            max_layers,
        )
        break
      out_channels = depth * 2**i
      fan_in = in_channels * kernel * kernel
      limit = np.sqrt(6.0 / (fan_in + out_channels * kernel * kernel))
      self.kernels.append(
          _ConvKernel(
              streams[i].uniform(
                  -limit, limit, (out_channels, in_channels, kernel, kernel)
              ),
              np.zeros(out_channels),
          )
      )
      height = (height - kernel) // 2 + 1
      width = (width - kernel) // 2 + 1
      in_channels = out_channels
    self.flat_dim = in_channels * height * width
    self.projection = Linear(self.flat_dim, out_dim, streams[-1])

  def __call__(self, flat_images: Tensor) -> Tensor:
    height, width, channels = self.image_shape
    batch = flat_images.shape[0]
    x = autodiff.reshape(flat_images, (batch, height, width, channels))
    x = autodiff.transpose(x, (0, 3, 1, 2))
    for kernel in self.kernels:
      # Channels move last so the bias broadcasts over trailing dimensions.
      y = autodiff.conv2d(x, kernel.weight.tensor, stride=2)
      y = autodiff.transpose(y, (0, 2, 3, 1)) + kernel.bias.tensor
      x = autodiff.transpose(autodiff.relu(y), (0, 3, 1, 2))
    x = autodiff.reshape(x, (batch, self.flat_dim))
    return autodiff.relu(self.projection(x))


class _ConvKernel(Module):

  def __init__(self, weight: np.ndarray, bias: np.ndarray):
    self.weight = optim.Parameter.create(weight)
    self.bias = optim.Parameter.create(bias)
