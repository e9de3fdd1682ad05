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

"""Episode store with fixed-length subsequence sampling."""

import collections
import logging

from flowbelief.core import rng as rng_lib
from flowbelief.models import records

logger = logging.getLogger(__name__)


class Error(Exception):
  """Base error for the replay buffer."""


class InsufficientDataError(Error):
  """Raised when no stored episode is long enough to sample from."""


class ReplayBuffer:
  """FIFO store of whole episodes.

  Windows are drawn inside a single episode, never across boundaries.
  """

  def __init__(self, capacity: int = 1000):
    if capacity <= 0:
      raise ValueError(f"capacity must be positive, got {capacity}")
    self.capacity = capacity
    self._episodes: collections.deque[records.Episode] = collections.deque(
        maxlen=capacity
    )

  def __len__(self) -> int:
    return len(self._episodes)

  @property
  def episodes(self) -> list[records.Episode]:
    return list(self._episodes)

  @property
  def lengths(self) -> list[int]:
    return [len(episode) for episode in self._episodes]

  @property
  def num_steps(self) -> int:
    return sum(self.lengths)

  def add(self, episode: records.Episode) -> None:
    if len(self._episodes) == self.capacity:
      logger.debug("Buffer full; evicting the oldest episode.")
    self._episodes.append(episode)

  def sample(
      self, batch_size: int, length: int, rng: rng_lib.Rng
  ) -> records.SequenceBatch:
    """Draws an episode uniformly, then a start offset uniformly, per row.

    Raises:
      InsufficientDataError: If no episode has at least `length` steps.
    """
    eligible = [e for e in self._episodes if len(e) >= length]
    if not eligible:
      raise InsufficientDataError(
          f"No episode with at least {length} steps among {len(self)} stored"
          f" (longest {max(self.lengths, default=0)}); collect more data or"
          " shorten sequence_length."
      )
    windows = []
    for index in rng.integers(0, len(eligible), batch_size):
      episode = eligible[int(index)]
      start = int(rng.integers(0, len(episode) - length + 1))
      windows.append(episode.window(start, length))
    return records.SequenceBatch.from_episodes(windows)
