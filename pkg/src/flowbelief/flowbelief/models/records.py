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

"""Data records exchanged between environments, buffers and learners.

Time alignment used throughout: `actions[t]` is the action taken *before*
`observations[t]` was emitted (zeros at t=0) and `rewards[t]` is the reward
received together with `observations[t]`.
"""

import dataclasses
from typing import Literal

import numpy as np

Preprocessing = Literal["none", "standardize", "bit_depth_5", "unit_pixels"]


@dataclasses.dataclass(frozen=True)
class ObservationSpec:
  """Shape and preprocessing of an environment's observations.

  Attributes:
    kind: 'vector' for flat observations, 'image' for H x W x C frames.
    shape: (n,) for vectors, (H, W, C) for images.
    preprocessing: How raw observations map to model inputs.
  """

  kind: Literal["vector", "image"]
  shape: tuple[int, ...]
  preprocessing: Preprocessing = "none"

  def __post_init__(self):
    """Validates the shape against the kind.

    Raises:
      ValueError: If the shape does not match the kind.
    """
    if self.kind == "vector" and len(self.shape) != 1:
      raise ValueError(f"Vector observations need shape (n,), got {self.shape}")
    if self.kind == "image" and len(self.shape) != 3:
      raise ValueError(f"Image observations need (H, W, C), got {self.shape}")

  @property
  def flat_dim(self) -> int:
    return int(np.prod(self.shape))

  def preprocess(self, raw: np.ndarray) -> np.ndarray:
    """Applies the stateless part of preprocessing to flat observations."""
    raw = np.asarray(raw, dtype=np.float64)
    if self.preprocessing == "bit_depth_5":
      # Raw pixels in [0, 255] reduced to 32 levels centred on zero.
      return np.floor(raw / 8.0) / 32.0 - 0.5
    if self.preprocessing == "unit_pixels":
      return raw / 255.0 - 0.5
    return raw


@dataclasses.dataclass(frozen=True)
class EnvStep:
  """One environment transition result."""

  observation: np.ndarray
  reward: float
  done: bool


@dataclasses.dataclass
class Episode:
  """A complete time-indexed trajectory.

  Attributes:
    observations: [T, obs_dim] flat observations.
    actions: [T, act_dim] actions preceding each observation.
    rewards: [T] rewards received with each observation.
    dones: [T] episode-end flags; only the last may be set.
  """

  observations: np.ndarray
  actions: np.ndarray
  rewards: np.ndarray
  dones: np.ndarray

  def __post_init__(self):
    """Normalises dtypes and checks time alignment.

    Raises:
      ValueError: If the arrays disagree on length or the episode is empty.
    """
    self.observations = np.asarray(self.observations, dtype=np.float64)
    self.actions = np.asarray(self.actions, dtype=np.float64)
    self.rewards = np.asarray(self.rewards, dtype=np.float64)
    self.dones = np.asarray(self.dones, dtype=bool)
    if self.actions.ndim == 1:
      self.actions = self.actions.reshape(len(self.actions), -1)
    lengths = {
        len(self.observations),
        len(self.actions),
        len(self.rewards),
        len(self.dones),
    }
    if len(lengths) != 1:
      raise ValueError(f"Episode arrays are misaligned: lengths {lengths}")
    if not len(self.observations):
      raise ValueError("Episode must contain at least one step.")

  def __len__(self) -> int:
    return len(self.observations)

  @property
  def total_reward(self) -> float:
    return float(self.rewards.sum())

  def window(self, start: int, length: int) -> "Episode":
    end = start + length
    return Episode(
        observations=self.observations[start:end],
        actions=self.actions[start:end],
        rewards=self.rewards[start:end],
        dones=self.dones[start:end],
    )


@dataclasses.dataclass
class SequenceBatch:
  """Aligned fixed-length subsequences.

  Attributes:
    observations: [B, L, obs_dim].
    actions: [B, L, act_dim].
    rewards: [B, L].
    dones: [B, L].
  """

  observations: np.ndarray
  actions: np.ndarray
  rewards: np.ndarray
  dones: np.ndarray

  def __post_init__(self):
    """Checks that every array shares the leading [B, L] dimensions.

    Raises:
      ValueError: If dimensions disagree or are empty.
    """
    lead = self.observations.shape[:2]
    if len(lead) != 2 or min(lead) <= 0:
      raise ValueError(f"Batch needs B, L > 0, got {self.observations.shape}")
    for name in ("actions", "rewards", "dones"):
      if getattr(self, name).shape[:2] != lead:
        raise ValueError(
            f"{name} shape {getattr(self, name).shape} does not match {lead}"
        )

  @property
  def batch_size(self) -> int:
    return self.observations.shape[0]

  @property
  def length(self) -> int:
    return self.observations.shape[1]

  @classmethod
  def from_episodes(cls, episodes: list[Episode]) -> "SequenceBatch":
    """Stacks equal-length episodes into a batch."""
    return cls(
        observations=np.stack([e.observations for e in episodes]),
        actions=np.stack([e.actions for e in episodes]),
        rewards=np.stack([e.rewards for e in episodes]),
        dones=np.stack([e.dones for e in episodes]),
    )

  def repeat(self, copies: int) -> "SequenceBatch":
    """Repeats every sequence `copies` times along the batch axis."""
    return SequenceBatch(
        observations=np.repeat(self.observations, copies, axis=0),
        actions=np.repeat(self.actions, copies, axis=0),
        rewards=np.repeat(self.rewards, copies, axis=0),
        dones=np.repeat(self.dones, copies, axis=0),
    )
