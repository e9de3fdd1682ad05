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

"""Seeded, splittable random streams threaded through stochastic code."""

from typing import Sequence

import numpy as np


class Rng:
  """A random stream that can be split into independent child streams.

  Every stochastic function takes an `Rng` explicitly; nothing reads a global
  generator, so results are a pure function of the root seed.
  """

  def __init__(self, seed: int | np.random.SeedSequence):
    if isinstance(seed, np.random.SeedSequence):
      self._seed_sequence = seed
    else:
      self._seed_sequence = np.random.SeedSequence(int(seed))
    self.generator = np.random.default_rng(self._seed_sequence)

  def split(self, count: int = 2) -> list["Rng"]:
    """Returns `count` independent child streams."""
    return [Rng(child) for child in self._seed_sequence.spawn(count)]

  def child(self) -> "Rng":
    """Returns one fresh child stream."""
    return self.split(1)[0]

  def normal(self, shape: Sequence[int]) -> np.ndarray:
    return self.generator.standard_normal(tuple(shape))

  def uniform(
      self, low: float | np.ndarray, high: float | np.ndarray, shape=None
  ) -> np.ndarray:
    return self.generator.uniform(low, high, size=shape)

  def integers(self, low: int, high: int, shape=None) -> np.ndarray | int:
    return self.generator.integers(low, high, size=shape)

  def permutation(self, n: int) -> np.ndarray:
    return self.generator.permutation(n)

  def replica(self) -> "Rng":
    """A new stream that replays this one, children included, from the start."""
    seq = self._seed_sequence
    return Rng(
        np.random.SeedSequence(
            seq.entropy, spawn_key=seq.spawn_key, pool_size=seq.pool_size
        )
    )
