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

"""Binary checkpoints of the model, actor, critic and observation statistics.

Layout: the magic line, an 8-byte little-endian header length, the JSON
header, then every tensor as little-endian float64 in header order.
"""

import dataclasses
import logging
import pathlib
import struct
from typing import Optional

import numpy as np
import pydantic

from flowbelief.models import actor_critic
from flowbelief.models import belief_model as belief_model_lib

logger = logging.getLogger(__name__)

MAGIC = b"flowbelief-checkpoint\n"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


class Error(Exception):
  """Base error for checkpoint handling."""


class CheckpointError(Error):
  """Raised for unreadable or corrupt checkpoint files."""


class CheckpointMismatchError(Error):
  """Raised when a checkpoint does not fit the config or the networks."""


class TensorEntry(pydantic.BaseModel):
  """Location of one tensor in the data section, in elements."""

  name: str
  shape: list[int]
  offset: int


class CheckpointHeader(pydantic.BaseModel):
  version: int = FORMAT_VERSION
  config_hash: str
  step: int
  tensors: list[TensorEntry]


@dataclasses.dataclass
class Checkpoint:
  header: CheckpointHeader
  arrays: dict[str, np.ndarray]

  @property
  def step(self) -> int:
    return self.header.step


def _modules(model, actor, critic):
  return (("model", model), ("actor", actor), ("critic", critic))


def collect_state(
    model: belief_model_lib.BeliefModel,
    actor: Optional[actor_critic.Actor] = None,
    critic: Optional[actor_critic.Critic] = None,
) -> dict[str, np.ndarray]:
  """Named arrays of every network and the observation statistics."""
  state = {}
  for prefix, module in _modules(model, actor, critic):
    if module is None:
      continue
    for name, param in module.named_parameters():
      state[f"{prefix}.{name}"] = param.value.copy()
  for key, value in model.normalizer.state().items():
    state[f"normalizer.{key}"] = np.array(value)
  return state


def encode(
    state: dict[str, np.ndarray], config_hash: str, step: int
) -> bytes:
  entries = []
  offset = 0
  for name, value in state.items():
    entries.append(
        TensorEntry(name=name, shape=list(value.shape), offset=offset)
    )
    offset += int(value.size)
  header = CheckpointHeader(
      config_hash=config_hash, step=step, tensors=entries
  ).model_dump_json()
  header_bytes = header.encode("utf-8")
  data = b"".join(
      np.ascontiguousarray(value, dtype=_DTYPE).tobytes()
      for value in state.values()
  )
  return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + data


def decode(payload: bytes, source: str = "<bytes>") -> Checkpoint:
  """Parses checkpoint bytes.

  Raises:
    CheckpointError: On a bad magic line, header or data section.
  """
  if not payload.startswith(MAGIC):
    raise CheckpointError(f"{source}: not a flowbelief checkpoint")
  cursor = len(MAGIC)
  if len(payload) < cursor + _LENGTH.size:
    raise CheckpointError(f"{source}: truncated header length")
  (header_length,) = _LENGTH.unpack_from(payload, cursor)
  cursor += _LENGTH.size
  try:
    header = CheckpointHeader.model_validate_json(
        payload[cursor : cursor + header_length]
    )
  except pydantic.ValidationError as e:
    raise CheckpointError(f"{source}: malformed header: {e}") from e
  if header.version != FORMAT_VERSION:
    raise CheckpointError(
        f"{source}: unsupported version {header.version}"
    )
  data = np.frombuffer(payload[cursor + header_length :], dtype=_DTYPE)
  arrays = {}
  for entry in header.tensors:
    size = int(np.prod(entry.shape, dtype=np.int64))
    if entry.offset + size > data.size:
      raise CheckpointError(f"{source}: data truncated at {entry.name!r}")
    arrays[entry.name] = (
        data[entry.offset : entry.offset + size]
        .astype(np.float64)
        .reshape(entry.shape)
    )
  return Checkpoint(header=header, arrays=arrays)


def save_checkpoint(
    path: str | pathlib.Path,
    model: belief_model_lib.BeliefModel,
    actor: Optional[actor_critic.Actor],
    critic: Optional[actor_critic.Critic],
    config_hash: str,
    step: int,
) -> pathlib.Path:
  path = pathlib.Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_bytes(
      encode(collect_state(model, actor, critic), config_hash, step)
  )
  logger.info("Saved checkpoint :: step: %d | path: %s", step, path)
  return path


def read_checkpoint(path: str | pathlib.Path) -> Checkpoint:
  path = pathlib.Path(path)
  try:
    payload = path.read_bytes()
  except OSError as e:
    raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
  return decode(payload, source=str(path))


def restore_state(
    checkpoint: Checkpoint,
    model: belief_model_lib.BeliefModel,
    actor: Optional[actor_critic.Actor] = None,
    critic: Optional[actor_critic.Critic] = None,
    expected_hash: Optional[str] = None,
) -> None:
  """Copies checkpoint arrays into the networks in place.

  Raises:
    CheckpointMismatchError: On a config hash mismatch, missing tensors or
      shape mismatches.
  """
  if expected_hash is not None and checkpoint.header.config_hash != (
      expected_hash
  ):
    raise CheckpointMismatchError(
        f"Checkpoint config hash {checkpoint.header.config_hash[:12]} does"
        f" not match the resolved config {expected_hash[:12]}"
    )
  for prefix, module in _modules(model, actor, critic):
    if module is None:
      continue
    for name, param in module.named_parameters():
      key = f"{prefix}.{name}"
      if key not in checkpoint.arrays:
        raise CheckpointMismatchError(f"Checkpoint lacks tensor {key!r}")
      value = checkpoint.arrays[key]
      if value.shape != param.shape:
        raise CheckpointMismatchError(
            f"Shape mismatch for {key!r}: checkpoint {value.shape}, network"
            f" {param.shape}"
        )
      param.assign(value)
  model.normalizer.load_state(
      {
          key.split(".", 1)[1]: value
          for key, value in checkpoint.arrays.items()
          if key.startswith("normalizer.")
      }
  )
